use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(sub: &str, config: &str, out: &Path) -> i32 {
    let dir = out.parent().unwrap();
    let cfg = dir.join(format!("{sub}.toml"));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_qpwaves"))
        .args([sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn twist_summary_has_expected_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("twist");
    assert_eq!(run("twist", "[twist]\nsites = [1, 2]\n", &out), 0);
    let s = read_json(&out.join("summary.json"));
    let a: Vec<Vec<f64>> = serde_json::from_value(s["twist_times_2pi"].clone()).unwrap();
    for (row, want) in a.iter().zip([[1.0, 4.0], [4.0, 8.0]]) {
        for (x, w) in row.iter().zip(want) {
            assert!((x - w).abs() < 1e-14);
        }
    }
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["exit_code"], 0);
}

#[test]
fn three_wave_resonances_are_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("res");
    assert_eq!(run("resonances", "[resonances]\nn = 3\nbound = 300\n", &out), 0);
    assert_eq!(read_json(&out.join("summary.json"))["count"], 0);
    let csv = fs::read_to_string(out.join("resonances.csv")).unwrap();
    assert_eq!(csv, "sites,signs,trivial,bf_lambda,bf_b\n");
}

#[test]
fn malformed_config_exits_3_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, bad) in ["[twist\nsites = [1, 2]", "[twist]\nsites = [1, 2]\ncolour = 3\n", "[twist]\nsites = [0]\n"]
        .iter()
        .enumerate()
    {
        let out = tmp.path().join(format!("bad{i}"));
        assert_eq!(run("twist", bad, &out), 3, "{bad}");
        assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
    }
}

#[test]
fn summaries_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[measure]\nsites = [1, 2]\neps = [0.1]\nsamples = 300\nlmax = 10\n";
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("measure", cfg, &a), 0);
    assert_eq!(run("measure", cfg, &b), 0);
    for f in ["summary.json", "measure.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("measure.csv")).unwrap();
    assert!(!csv.contains('\r'));
}

#[test]
fn numerical_failure_writes_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fail");
    let cfg = "[solve-qp]\neps = [0.02]\nschedule = [8]\nmax_iter = 1\nmax_halvings = 0\n";
    assert_eq!(run("solve-qp", cfg, &out), 2);
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, ["manifest.json"]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["exit_code"], 2);
    assert!(m["error"].is_string());
}

#[test]
fn json_floats_carry_17_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    assert_eq!(run("twist", "[twist]\nsites = [1, 2]\n", &out), 0);
    let text = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(text.contains("1.5915494309189535e-1"), "{text}");
}
