use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn scrapcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scrapcomp"))
        .args(args)
        .output()
        .expect("run scrapcomp")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn read_summary(path: &Path) -> Vec<(String, String)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let row: Vec<String> = rdr
        .records()
        .next()
        .unwrap()
        .unwrap()
        .iter()
        .map(String::from)
        .collect();
    header.into_iter().zip(row).collect()
}

#[test]
fn kalman_fit_reproduces_golden_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let config = fixture("cu_small.json");
    let heats = fixture("cu_small_heats.csv");
    let noise = fixture("cu_small_noise.json");
    let truth = fixture("cu_small_truth.csv");
    let base = [
        "--config",
        s(&config),
        "--heats",
        s(&heats),
        "--noise",
        s(&noise),
        "--out",
        out,
    ];
    let fit: Vec<&str> = ["fit", "--mode", "kalman"]
        .iter()
        .chain(base.iter())
        .copied()
        .collect();
    assert!(scrapcomp(&fit).status.success());
    let eval: Vec<&str> = ["evaluate", "--truth", s(&truth)]
        .iter()
        .chain(base.iter())
        .copied()
        .collect();
    let r = scrapcomp(&eval);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let got = read_summary(&dir.path().join("summary.csv"));
    let golden = read_summary(&fixture("cu_small_golden_summary.csv"));
    assert_eq!(got.len(), golden.len());
    for ((gh, gv), (wh, wv)) in got.iter().zip(&golden) {
        assert_eq!(gh, wh);
        match (gv.parse::<f64>(), wv.parse::<f64>()) {
            (Ok(a), Ok(b)) => assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{gh}: {a} vs {b}"),
            _ => assert_eq!(gv, wv, "{gh}"),
        }
    }
    assert!(dir.path().join("evaluate.manifest.json").exists());
    assert!(dir.path().join("fit.manifest.json").exists());
}

#[test]
fn derive_params_from_half_life() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"element": "Cu", "n_scrap": 3, "noise": {"half_life_heats": 1000}}"#,
    )
    .unwrap();
    let r = scrapcomp(&["derive-params", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let noise: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("noise.json")).unwrap())
            .unwrap();
    let gamma = noise["gamma"].as_f64().unwrap();
    assert!((gamma - 6.93147e-4).abs() < 5e-10, "{gamma}");
    assert_eq!(noise["q_ppm"].as_array().unwrap().len(), 3);

    let manifest: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("derive-params.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "derive-params");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0], "noise.json");
}

#[test]
fn unknown_flag_exits_with_usage() {
    let r = scrapcomp(&["fit", "--no-such-flag"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("Usage"));
}

#[test]
fn missing_input_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let r = scrapcomp(&[
        "fit",
        "--element",
        "Cu",
        "--heats",
        s(&missing),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let e = error_json(&r);
    assert_eq!(e["error"], "io");
    assert!(e["details"]["path"]
        .as_str()
        .unwrap()
        .ends_with("absent.csv"));
}

#[test]
fn bad_rows_are_listed_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let heats = dir.path().join("heats.csv");
    std::fs::write(
        &heats,
        "heat_index,m_scrap_a,m_hm,f_hm,m_steel,f_steel,m_slag,f_feon_slag\n\
         1,100,0,0,90,200,0,\n\
         2,-5,0,0,90,200,0,\n\
         3,100,0,0,0,200,0,\n",
    )
    .unwrap();
    let r = scrapcomp(&[
        "fit",
        "--element",
        "Cu",
        "--heats",
        s(&heats),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let e = error_json(&r);
    assert_eq!(e["error"], "parse");
    let lines: Vec<u64> = e["details"]["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["line"].as_u64().unwrap())
        .collect();
    assert_eq!(lines, vec![3, 4]);
}

#[test]
fn filter_mode_must_match_element() {
    let dir = tempfile::tempdir().unwrap();
    let heats = fixture("cu_small_heats.csv");
    let r = scrapcomp(&[
        "fit",
        "--element",
        "Cr",
        "--mode",
        "kalman",
        "--heats",
        s(&heats),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_json(&r)["error"], "config");
}

#[test]
fn conflicting_recipe_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"element": "Cu", "noise": {"gamma": 0.001, "half_life_heats": 1000}}"#,
    )
    .unwrap();
    let r = scrapcomp(&["derive-params", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
    let e = error_json(&r);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("half_life_heats"));
}
