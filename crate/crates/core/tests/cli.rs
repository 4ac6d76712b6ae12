use std::fs;
use std::path::Path;

use aklt::cli::{exit, resolve, run, Flags};
use aklt::protocol::Method;

fn aklt(args: &[&str], out: &Path) -> i32 {
    let mut argv = vec!["aklt"];
    argv.extend_from_slice(args);
    let out = out.to_str().unwrap();
    argv.extend_from_slice(&["--out", out]);
    run(argv)
}

#[test]
fn string_order_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["string-order", "--N", "6", "--prep", "fusion", "--shots", "100000", "--seed", "7"];
    assert_eq!(aklt(&args, &dir.path().join("a")), exit::OK);
    assert_eq!(aklt(&args, &dir.path().join("b")), exit::OK);
    let a = fs::read(dir.path().join("a/string_order.csv")).unwrap();
    let b = fs::read(dir.path().join("b/string_order.csv")).unwrap();
    assert_eq!(a, b);

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# aklt "));
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["method", "N", "i", "ℓ", "value", "stderr", "shots", "seed"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    let full: f64 = rows[4][4].parse().unwrap();
    assert!((full + 4.0 / 9.0).abs() < 0.01, "{full}");
}

#[test]
fn exact_spectrum_fit() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aklt(&["spectrum", "--prep", "fusion", "--lmax", "8", "--exact"], dir.path()), exit::OK);
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum_fit.json")).unwrap()).unwrap();
    let xi = fit["xi"].as_f64().unwrap();
    assert!((xi - 0.9102).abs() / 0.9102 < 5e-3, "{xi}");
    assert_eq!(fit["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(fit["config"]["lmax"], 8);
}

#[test]
fn prepare_reports_forced_outcomes_and_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let code = aklt(&["prepare", "--N", "5", "--prep", "fusion", "--forced-outcomes", "Phi+,Psi-", "--seed", "3"], dir.path());
    assert_eq!(code, exit::OK);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("prepare.json")).unwrap()).unwrap();
    assert_eq!(rep["fusion_outcomes"][0]["outcome"], "Phi+");
    assert_eq!(rep["defects"][0]["pauli"], "Y");
    assert!((rep["fidelity_to_reference"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(rep["seed"], 3);
    let circ: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("circuit.json")).unwrap()).unwrap();
    assert!(circ["circuit"]["instructions"].as_array().unwrap().len() > 10);

    // Two fusions at N=5; a single forced outcome is a config error.
    assert_eq!(aklt(&["prepare", "--N", "5", "--forced-outcomes", "Phi+"], dir.path()), exit::INVALID_CONFIG);
}

#[test]
fn teleport_and_variants_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aklt(&["teleport", "--N", "3", "--prep", "sequential", "--shots", "50"], dir.path()), exit::OK);
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("teleport.json")).unwrap()).unwrap();
    assert!((t["raw_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    let hist = t["lambda_histogram"].as_object().unwrap();
    assert_eq!(hist.values().map(|v| v.as_u64().unwrap()).sum::<u64>(), 50);

    assert_eq!(aklt(&["variants", "--kind", "ghz", "--N", "6", "--seed", "1"], dir.path()), exit::OK);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("variants.json")).unwrap()).unwrap();
    assert!((v["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"N": 3, "prep": "sequential", "shots": 500}"#).unwrap();
    let flags = Flags { config: Some(cfg.clone()), n: Some(5), ..Flags::default() };
    let c = resolve("string-order", &flags).unwrap();
    assert_eq!((c.n, c.prep, c.shots), (5, Method::Sequential, 500));

    fs::write(&cfg, r#"{"N": 3, "colour": "red"}"#).unwrap();
    assert!(resolve("string-order", &Flags { config: Some(cfg.clone()), ..Flags::default() }).is_err());
    assert_eq!(aklt(&["prepare", "--config", cfg.to_str().unwrap()], dir.path()), exit::INVALID_CONFIG);

    let noise = dir.path().join("noise.json");
    fs::write(&noise, r#"{"p2": 1.5}"#).unwrap();
    assert_eq!(aklt(&["string-order", "--noise", noise.to_str().unwrap()], dir.path()), exit::INVALID_CONFIG);
    assert_eq!(aklt(&["prepare", "--prep", "magic"], dir.path()), exit::INVALID_CONFIG);
    assert_eq!(aklt(&["prepare", "--N", "0"], dir.path()), exit::INVALID_CONFIG);
}

#[test]
fn noisy_string_order_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let noise = dir.path().join("noise.json");
    fs::write(&noise, r#"{"p2": 0.01, "p_ro": 0.02}"#).unwrap();
    let n = noise.to_str().unwrap();
    assert_eq!(aklt(&["string-order", "--N", "4", "--shots", "4000", "--noise", n], dir.path()), exit::OK);
    let args = ["noise-sweep", "--N", "3", "--shots", "1000", "--lmax", "3", "--p2-values", "0,0.02", "--noise", n];
    assert_eq!(aklt(&args, dir.path()), exit::OK);
    let text = fs::read_to_string(dir.path().join("noise_sweep.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 4);
}

#[test]
fn selftest_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aklt(&["selftest", "--only", "2,6,7,12"], dir.path()), exit::OK);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("selftest.json")).unwrap()).unwrap();
    assert_eq!(rep["passed"], true);
    assert_eq!(rep["criteria"].as_array().unwrap().len(), 4);
}
