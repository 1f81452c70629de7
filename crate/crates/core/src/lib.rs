//! Simulation and verification kernels for anisotropic d-parameter
//! fractional Brownian sheets.
//!
//! The crate covers exact lattice sampling of the sheet and its standardized
//! increments, generalized and power variations with regime-dependent
//! rescaling, closed-form limit constants, an exact diagram-formula moment
//! oracle, and a Monte Carlo harness that checks the central and
//! non-central limit behaviour of the variations at desk scale.

// `!(x > 0.0)` guards are meant to reject NaN; `is_multiple_of` is newer than the MSRV.
#![allow(clippy::neg_cmp_op_on_partial_ord, unknown_lints, clippy::manual_is_multiple_of)]

pub mod error;
pub mod fgn;
pub mod harness;
pub mod hermite;
pub mod lattice;
pub mod limits;
pub mod moments;
pub mod numerics;
pub mod rng;
pub mod variations;

pub use error::{Error, Result};
pub use fgn::{
    fbs_covariance, fgn_autocovariance, sample_fbs_lattice, sample_increment_field, FactorMethod,
    FgnFactor, FieldSampler, HurstVector, SamplerOptions,
};
pub use hermite::{gaussian_moment, hermite_poly, power_expansion, HermiteExpansion};
pub use lattice::{Anchor, LatticeField, LatticeShape, MultiIndex, Rect};
pub use limits::{AxisClass, Regime, RegimeReport};
pub use moments::Diagram;
pub use rng::SeedSpec;
pub use variations::{EvalMode, Functional, VariationKind, VariationProcess};
