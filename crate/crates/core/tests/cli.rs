use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cryptofactor(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cryptofactor"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("CRYPTOFACTOR_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{"inputs": {"prices": "data/prices.csv", "meta": "data/meta.csv", "followers": "data/followers.csv", "riskfree": "data/riskfree.csv"},
    "min_years": 1, "synth": {"n_coins": 40, "n_days": 500, "seed": 5}}"#;

#[test]
fn synth_then_all_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = cryptofactor(&["synth"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("data/truth.json").is_file());

    let o = cryptofactor(&["all"], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["returns.csv", "factors.csv", "ivol.csv", "panel.csv", "panel_capm.csv", "results.csv", "vif.csv", "ingest_log.csv", "report.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("Truth versus estimate"));
    assert!(report.contains("Dependent variable: IVOL from the CAPM model"));
    let factors = fs::read_to_string(out.join("factors.csv")).unwrap();
    assert!(factors.starts_with("# stage: factors\n"));
    assert!(factors.contains("\"mcap_floor\":1000000.0"));
    assert!(factors.lines().any(|l| l == "date,mrkt,smb,wml,rf_daily"));
}

#[test]
fn single_stage_runs_upstream_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(cryptofactor(&["synth"], &cfg).status.success());
    let o = cryptofactor(&["vif", "--out", dir.path().join("v").to_str().unwrap()], &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = fs::read_dir(dir.path().join("v")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"vif.csv".to_string()));
    assert!(!names.contains(&"factors.csv".to_string()));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(cryptofactor(&["synth"], &cfg).status.success());
    let a = fs::read(dir.path().join("data/prices.csv")).unwrap();
    assert!(cryptofactor(&["synth", "--seed", "6"], &cfg).status.success());
    let b = fs::read(dir.path().join("data/prices.csv")).unwrap();
    assert_ne!(a, b);
    assert!(cryptofactor(&["synth", "--seed", "5"], &cfg).status.success());
    assert_eq!(a, fs::read(dir.path().join("data/prices.csv")).unwrap());
}

#[test]
fn missing_prices_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"inputs": {"prices": "nowhere/prices.csv"}}"#);
    let o = cryptofactor(&["ingest"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nowhere/prices.csv"), "{err}");
}

#[test]
fn malformed_prices_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(cryptofactor(&["synth"], &cfg).status.success());
    let p = dir.path().join("data/prices.csv");
    let mut text = fs::read_to_string(&p).unwrap();
    text.push_str("2020-01-01,c00,abc,1,1\n");
    fs::write(&p, text).unwrap();
    let o = cryptofactor(&["ingest"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("abc"));
}

#[test]
fn report_without_outputs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = cryptofactor(&["report"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("factors.csv"));
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"mcap_floor": "lots"}"#);
    assert_eq!(cryptofactor(&["all"], &cfg).status.code(), Some(2));
    let cfg = write_config(dir.path(), r#"{"synth": {"n_coins": 1}}"#);
    assert_eq!(cryptofactor(&["synth"], &cfg).status.code(), Some(2));
    assert_eq!(cryptofactor(&["all"], &dir.path().join("absent.json")).status.code(), Some(2));
}

#[test]
fn too_few_coins_is_an_estimation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"inputs": {"prices": "d/prices.csv", "meta": "d/meta.csv", "followers": "d/followers.csv", "riskfree": "d/riskfree.csv"},
            "synth": {"n_coins": 5, "n_days": 120}}"#,
    );
    assert!(cryptofactor(&["synth"], &cfg).status.success());
    let o = cryptofactor(&["factors"], &cfg);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
