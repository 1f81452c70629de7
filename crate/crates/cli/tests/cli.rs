use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sheetvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheetvar"))
        .args(args)
        .env_remove("SHEETVAR_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_deterministic_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    for out in [&a, &b] {
        let o = sheetvar(&[
            "simulate", "--kind", "fbs", "--hurst", "0.3,0.7", "--shape", "64,64", "--seed", "42", "--out", path_str(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let summary = stdout_json(&o);
        assert_eq!(summary["shape"], serde_json::json!([64, 64]));
        assert!((summary["implied_corner_variance"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let csv = dir.path().join("z.csv");
    let o = sheetvar(&[
        "simulate", "--kind", "increments", "--hurst", "0.6", "--shape", "8", "--seed", "1", "--out", path_str(&csv),
        "--format", "csv",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 9);
}

#[test]
fn invalid_hurst_names_the_axis() {
    let o = sheetvar(&["simulate", "--hurst", "1.2,0.5", "--shape", "4,4", "--seed", "1", "--out", "/dev/null"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("axis 0"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&sheetvar(&["simulate", "--hurst", "0.5", "--shape", "4", "--out", "x"])), 2);
    assert_eq!(code(&sheetvar(&["constants", "--hurst", "0.5", "--functional", "Pk:2", "--bogus"])), 2);
    assert_eq!(code(&sheetvar(&["constants", "--hurst", "0.5", "--functional", "cubic"])), 2);
    assert_eq!(code(&sheetvar(&[])), 2);
}

#[test]
fn constants_examples() {
    let o = sheetvar(&["constants", "--hurst", "0.9", "--functional", "Pk:2", "--shape", "100"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["regime"], "NCLT");
    assert!((v["Lambda"].as_f64().unwrap() - 2.16).abs() < 1e-12);
    assert!((v["H_tilde"][0].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!(v["c"]["product"].as_f64().unwrap() > 0.0);

    let v = stdout_json(&sheetvar(&["constants", "--hurst", "0.5", "--functional", "Pk:2"]));
    assert!((v["Lambda"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(v["H_tilde"][0].as_f64().unwrap(), 0.5);

    let v = stdout_json(&sheetvar(&["constants", "--hurst", "0.4", "--functional", "power:3"]));
    assert_eq!(v["rank"], 1);
}

#[test]
fn constants_reads_expansion_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    fs::write(&f, r#"{"coeffs":{"2":1.0,"4":0.5}}"#).unwrap();
    let spec = format!("json:{}", f.display());
    let v = stdout_json(&sheetvar(&["constants", "--hurst", "0.3,0.4", "--functional", &spec]));
    assert_eq!(v["rank"], 2);
    assert_eq!(v["regime"], "CLT");
}

#[test]
fn oracle_reports_moment_and_bound() {
    let o = sheetvar(&["oracle", "--hurst", "0.75", "--lattice", "3", "--functional", "Pk:2", "--p", "4"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let exact = v["exact_moment"].as_f64().unwrap();
    assert!(exact > 0.0 && exact <= v["bound_rhs"].as_f64().unwrap());
    assert_eq!(v["diagram_count"].as_f64().unwrap(), 60.0);
    assert_eq!(v["lattice"], serde_json::json!([3]));

    let o = sheetvar(&["oracle", "--hurst", "0.3,0.3", "--lattice", "4,4", "--functional", "power:4", "--p", "4", "--guard-cap", "10"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn variations_and_interpolate_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let o = sheetvar(&[
        "variations", "--hurst", "0.3,0.6", "--shape", "8,8", "--seed", "3", "--functional", "power:2", "--kind",
        "fluctuation", "--out", path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout_json(&o)["value_at_one"].is_number());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 81);

    let grid = dir.path().join("t.csv");
    fs::write(&grid, "0.5,0.5\n0.7,0.2\n").unwrap();
    let trace = dir.path().join("trace.csv");
    let o = sheetvar(&[
        "interpolate", "--hurst", "0.3,0.6", "--shape", "8,8", "--seed", "3", "--power", "2", "--t-grid",
        path_str(&grid), "--out", path_str(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 3);

    let o = sheetvar(&[
        "interpolate", "--hurst", "0.3", "--shape", "8", "--seed", "3", "--power", "2", "--points", "5", "--out",
        path_str(&trace),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["points"], 5);
}

#[test]
fn smoke_experiment_passes_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("clt_smoke.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = sheetvar(&["experiment", "--config", path_str(&cfg), "--threads", threads, "--out", path_str(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    }
    let strip = |p: PathBuf| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v["provenance"]["wall_time_s"] = Value::from(0.0);
        v
    };
    assert_eq!(strip(a.join("clt_smoke.json")), strip(b.join("clt_smoke.json")));
    let csv = fs::read_to_string(a.join("clt_smoke.csv")).unwrap();
    assert!(csv.starts_with("experiment,name,empirical,target,se,z,rule,verdict"));
}

#[test]
fn threads_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("acceptance_beta.json");
    let o = Command::new(env!("CARGO_BIN_EXE_sheetvar"))
        .args(["experiment", "--config", path_str(&cfg), "--out", path_str(dir.path())])
        .env("SHEETVAR_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn malformed_config_points_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"name":"x","kind":"clt","hurst":[0.3],"shapes":[[8]],"seed":"soon"}"#).unwrap();
    let o = sheetvar(&["experiment", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/seed"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn regime_mismatch_exits_4_and_failed_verdict_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nclt_as_clt.json");
    fs::write(&cfg, r#"{"name":"x","kind":"clt","hurst":[0.9],"shapes":[[16]],"functional":{"power":2},"seed":1}"#).unwrap();
    let o = sheetvar(&["experiment", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 4);

    let cfg = dir.path().join("strict.json");
    fs::write(
        &cfg,
        r#"{"name":"strict","kind":"flln","hurst":[0.6],"shapes":[[16],[32]],"functional":{"power":2},
            "replications":20,"seed":1,"tolerances":{"flln":[1e-9,1e-9]}}"#,
    )
    .unwrap();
    let o = sheetvar(&["experiment", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 5);
    assert!(dir.path().join("strict.json").exists() && dir.path().join("strict.csv").exists());
}

#[test]
fn io_failure_exits_1() {
    let o = sheetvar(&["simulate", "--hurst", "0.5", "--shape", "4", "--seed", "1", "--out", "/nonexistent/dir/z.bin"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn schema_validates_bundled_configs() {
    let o = sheetvar(&["schema"]);
    assert_eq!(code(&o), 0);
    let schema = stdout_json(&o);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{}: {errors:?}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 8);
    let bad = serde_json::json!({"name": "x", "kind": "clt", "hurst": [0.3], "seed": 1, "typo": true});
    assert!(!validator.is_valid(&bad));
}
