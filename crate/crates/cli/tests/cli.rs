use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phaseloc_cli::run::{FileFormat, RunManifest};
use serde_json::Value;
use tempfile::TempDir;

const WH: &str = r#"{
  "schema": 1,
  "construction": {"kind": "wh", "d": 4, "fiducial": {"label": "basis", "index": 0}},
  "analyses": ["validate", "covariance", "norm1"],
  "seed": 7
}"#;

const SHARP: &str = r#"{"schema": 1, "construction": {"kind": "sharp", "d": 4}, "analyses": ["validate", "norm1"]}"#;

fn phaseloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseloc"))
        .args(args)
        .env_remove("PHASELOC_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config, "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    phaseloc(&args)
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join("manifest.json")).unwrap()
}

fn passed(m: &RunManifest, analysis: &str) -> bool {
    m.outputs.iter().find(|o| o.analysis == analysis).unwrap().passed
}

#[test]
fn wh_norm1_fails_by_design() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "wh.json", WH);
    let out = tmp.path().join("run");
    let o = run("check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert!(passed(&m, "validate"));
    assert!(passed(&m, "covariance"));
    assert!(!passed(&m, "norm1"));
    assert_eq!(m.exit_code, 1);
    let norm1: Value = serde_json::from_str(&fs::read_to_string(out.join("norm1.json")).unwrap()).unwrap();
    assert_eq!(norm1["result"]["verdict"], "fails");
    assert_eq!(norm1["config_hash"], m.config_hash.as_str());
}

#[test]
fn sharp_pvm_passes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sharp.json", SHARP);
    let out = tmp.path().join("run");
    let o = run("check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(manifest(&out).summary.all_passed);
}

#[test]
fn malformed_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{\"schema\": 1,");
    let o = run("check", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write(tmp.path(), "bad2.json", &WH.replace("\"d\": 4", "\"d\": -4"));
    let o = run("check", &cfg, &tmp.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad2.json:3:"), "{err}");
    let o = run("check", "/nonexistent/config.json", &tmp.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_tolerance_flag_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sharp.json", SHARP);
    let o = run("check", &cfg, &tmp.path().join("run"), &["--tol", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run("check", &cfg, &tmp.path().join("run"), &["--tol", "equality=1e-9"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn threshold_breach_exits_1_with_payload() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "coh.json",
        r#"{"schema": 1, "construction": {"kind": "coherent", "N": 24, "L": 4, "h": 0.4}, "analyses": ["validate"]}"#,
    );
    let out = tmp.path().join("run");
    let o = run("check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("truncation-inadequate"), "{err}");
    let payload: Value =
        serde_json::from_str(&fs::read_to_string(out.join("construction_error.json")).unwrap()).unwrap();
    assert!(payload["suggested_half_width"].as_f64().unwrap() > 4.0);
    assert_eq!(manifest(&out).exit_code, 1);
}

#[test]
fn same_seed_gives_identical_reports_and_empty_diff() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "wh.json", WH);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run("check", &cfg, &a, &[]);
    run("check", &cfg, &b, &[]);
    for o in &manifest(&a).outputs {
        for f in &o.files {
            assert_eq!(fs::read(a.join(&f.path)).unwrap(), fs::read(b.join(&f.path)).unwrap(), "{}", f.path);
        }
    }
    let o = phaseloc(&["report-diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let diff: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(diff["differences"], serde_json::json!([]));
}

#[test]
fn different_seeds_differ_only_in_random_events() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "wh.json", WH);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run("check", &cfg, &a, &["--seed", "1"]);
    run("check", &cfg, &b, &["--seed", "2"]);
    let o = phaseloc(&["report-diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let diff: Value = serde_json::from_slice(&o.stdout).unwrap();
    let diffs = diff["differences"].as_array().unwrap();
    assert!(!diffs.is_empty());
    let norm1: Value = serde_json::from_str(&fs::read_to_string(a.join("norm1.json")).unwrap()).unwrap();
    let records = norm1["result"]["records"].as_array().unwrap();
    for d in diffs {
        assert_eq!(d["file"], "norm1.json", "{d}");
        let path = d["path"].as_str().unwrap();
        let index: usize = path
            .strip_prefix("result.records[")
            .and_then(|r| r.split(']').next())
            .and_then(|i| i.parse().ok())
            .unwrap_or_else(|| panic!("diff outside records: {path}"));
        assert_eq!(records[index]["origin"], "random", "{path}");
    }
}

#[test]
fn different_dimension_is_a_selection_mismatch() {
    let tmp = TempDir::new().unwrap();
    let c4 = write(tmp.path(), "wh4.json", WH);
    let c3 = write(tmp.path(), "wh3.json", &WH.replace("\"d\": 4", "\"d\": 3"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run("check", &c4, &a, &[]);
    run("check", &c3, &b, &[]);
    let o = phaseloc(&["report-diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_files_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "full.json",
        r#"{
  "schema": 1,
  "construction": {"kind": "wh", "d": 3, "fiducial": {"label": "gaussian", "width": 0.8}},
  "analyses": ["validate", "covariance", "norm1", "necessary-condition", "refinement",
               "marginals", "kernel-identity", "joint-bound"],
  "joint": {"q": [0, 1], "p": [2]},
  "seed": 3
}"#,
    );
    let out = tmp.path().join("run");
    run("check", &cfg, &out, &[]);
    let m = manifest(&out);
    assert_eq!(m.outputs.len(), 8);
    for entry in &m.outputs {
        for f in &entry.files {
            let text = fs::read_to_string(out.join(&f.path)).unwrap();
            match f.format {
                FileFormat::Json => {
                    let v: Value = serde_json::from_str(&text).unwrap();
                    let again: Value =
                        serde_json::from_str(&phaseloc_core::serial::to_json_string(&v).unwrap()).unwrap();
                    assert_eq!(v, again, "{}", f.path);
                }
                FileFormat::Csv => {
                    assert!(!text.contains('\r'));
                    if f.path.starts_with("kernel_") {
                        let k = phaseloc_core::MarkovKernel::read_csv(text.as_bytes()).unwrap();
                        assert_eq!(k.to_csv_string().unwrap(), text);
                    } else {
                        let width = text.lines().next().unwrap().split(',').count();
                        assert!(text.lines().all(|l| l.split(',').count() == width));
                    }
                }
            }
        }
    }
}

#[test]
fn build_writes_a_loadable_povm() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "wh.json", WH);
    let out = tmp.path().join("run");
    let o = run("build", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let povm = phaseloc_core::serial::povm_from_json(&fs::read_to_string(out.join("povm.json")).unwrap()).unwrap();
    assert_eq!(povm.space().len(), 16);
}

#[test]
fn marginal_writes_kernels() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "wh.json", WH);
    let out = tmp.path().join("run");
    let o = run("marginal", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let k = phaseloc_core::MarkovKernel::read_csv(fs::File::open(out.join("kernel_q.csv")).unwrap()).unwrap();
    assert_eq!(k.max_entry_distance(&phaseloc_core::MarkovKernel::identity(4).unwrap()).unwrap(), 0.0);
    let cfg = write(tmp.path(), "sharp.json", SHARP);
    assert_eq!(run("marginal", &cfg, &tmp.path().join("x"), &[]).status.code(), Some(2));
}

#[test]
fn sweep_runs_each_value() {
    let tmp = TempDir::new().unwrap();
    let text = SHARP.replace("}, \"analyses\"", "}, \"sweep\": {\"parameter\": \"d\", \"values\": [2, 3]}, \"analyses\"");
    let cfg = write(tmp.path(), "sweep.json", &text);
    let out = tmp.path().join("sweep");
    let o = run("sweep", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out.join("d=3")).selection.dims, vec![3]);
    assert!(out.join("sweep.json").exists());
}

#[test]
fn output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sharp.json", SHARP);
    let out = tmp.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_phaseloc"))
        .args(["check", "--config", &cfg, "--quiet"])
        .env("PHASELOC_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("manifest.json").exists());
}
