//! Runs the `sapx` binary on the fixtures in `tests/fixtures`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sapx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sapx")).args(args).output().expect("binary runs")
}

fn run(cmd: &str, input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    sapx(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn spectrum_lists_canonical_terms() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s");
    let o = run("spectrum", &fixture("poly.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            vec![cells[0].parse().unwrap(), cells[2].parse().unwrap()]
        })
        .collect();
    assert_eq!(rows, vec![vec![1.0, 1.0], vec![std::f64::consts::SQRT_2, 2.0]]);
}

#[test]
fn seeded_fixtures_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("r{i}"))).collect();
    for (out, seed) in outs.iter().zip(["7", "7", "8"]) {
        let o = sapx(&["kernel", "--seed", seed, "--epsilon", "0.1", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: &PathBuf| fs::read_to_string(p.join("dampings.csv")).unwrap();
    assert_eq!(read(&outs[0]), read(&outs[1]));
    assert_ne!(read(&outs[0]), read(&outs[2]));
}

#[test]
fn kernel_bound_covers_measured_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("k");
    let o = run("kernel", &fixture("poly.json"), &out, &["--epsilon", "0.05"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    let m = &r["result"]["members"][0];
    assert!(m["measured_sup"].as_f64().unwrap() <= m["certified"].as_f64().unwrap());
    assert!(r["result"]["max_certified"].as_f64().unwrap() <= 0.05);
}

#[test]
fn extension_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e");
    let o = run("extend", &fixture("strip_pair.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert!(r["result"]["max_error"].as_f64().unwrap() < 1e-6);
    let rows = fs::read_to_string(out.join("extension.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + r["result"]["points"].as_u64().unwrap() as usize);
}

#[test]
fn sap_verify_pass_and_designed_failure() {
    let dir = TempDir::new().unwrap();
    let good = dir.path().join("good");
    assert_eq!(run("sap-verify", &fixture("sap_match.json"), &good, &[]).status.code(), Some(0));
    assert_eq!(report(&good)["pass"], true);

    let bad = dir.path().join("bad");
    assert_eq!(run("sap-verify", &fixture("sap_mismatch.json"), &bad, &[]).status.code(), Some(2));
    let r = report(&bad);
    assert_eq!(r["pass"], false);
    assert!(r["error"].as_str().unwrap().contains("no trial scale"));
    assert!(bad.join("trials.csv").exists());
}

#[test]
fn pipeline_generator_fixture() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p");
    let fields = dir.path().join("fields");
    let o = run("pipeline", &fixture("generator.json"), &out, &["--epsilon", "0.05", "--fields-dir", fields.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let res = &r["result"];
    let c_hat = res["constants"]["C_hat"].as_f64().unwrap();
    assert!(c_hat <= 20.0);
    assert!(res["sup_error"].as_f64().unwrap() <= c_hat * 0.05 * (1.0 + 1e-12));
    assert!(res["dbar_residual"].as_f64().unwrap() < res["dbar_threshold"].as_f64().unwrap());
    for name in ["f", "h", "H", "f_eps", "c", "g", "G", "F_eps"] {
        assert!(fields.join(format!("{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn reports_are_byte_identical_and_echo_config() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, r#"{"glue": {"grid_nodes": 129}, "max_constant": 15.0}"#);
    let mut texts = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("p{i}"));
        let o = run("pipeline", &fixture("generator.json"), &out, &["--epsilon", "0.2", "--config", config.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        texts.push(fs::read_to_string(out.join("report.json")).unwrap().replace(out.to_str().unwrap(), "OUT"));
    }
    assert_eq!(texts[0], texts[1]);
    let r: Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(r["config"]["max_constant"], 15.0);
    assert_eq!(r["config"]["glue"]["grid_nodes"], 129);
    // unspecified fields are echoed with their defaults
    assert_eq!(r["config"]["glue"]["corrective_power"], 3);
}

#[test]
fn tensor_with_file_factors() {
    let dir = TempDir::new().unwrap();
    let kept = dir.path().join("kept");
    assert_eq!(run("tensor", &fixture("tensor.json"), &kept, &[]).status.code(), Some(0));
    assert_eq!(report(&kept)["result"]["total_bound"], 0.0);

    let config = write_config(&dir, r#"{"glue": {"grid_nodes": 129}, "keep_closed_forms": false}"#);
    let forced = dir.path().join("forced");
    let fields = dir.path().join("fields");
    let o = run(
        "tensor",
        &fixture("tensor.json"),
        &forced,
        &["--config", config.to_str().unwrap(), "--fields-dir", fields.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &report(&forced)["result"];
    let measured = r["measured_error"].as_f64().unwrap();
    assert!(measured > 0.0 && measured <= r["total_bound"].as_f64().unwrap());
    assert!(fields.join("factor_0_1.csv").exists());
}

#[test]
fn input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let missing = dir.path().join("missing.json");
    assert_eq!(run("spectrum", &missing, &out, &[]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"basis\": [1.0],\n  \"terms\": [{\"coeff\": [[1.0, 0.0]], \"freq\": [\"x\"]}]\n}\n").unwrap();
    let o = run("spectrum", &bad, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("terms[0].freq"), "{err}");

    fs::write(&bad, "{\n  \"basis\": [1.0],\n  \"terms\": [{\"coeff\": 3}]\n}\n").unwrap();
    let o = run("spectrum", &bad, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("terms[0].coeff") && err.contains("line 3"), "{err}");

    let o = run("kernel", &fixture("poly.json"), &out, &["--epsilon", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(sapx(&["spectrum", "--out", out.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(sapx(&["spectrum", "--bogus"]).status.code(), Some(1));
}
