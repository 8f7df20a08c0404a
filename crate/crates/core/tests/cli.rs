use std::path::Path;
use std::process::{Command, Output};

use semipar::NormalMixture;

fn semipar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semipar"))
        .args(args)
        .env_remove("SEMIPAR_CATALOG")
        .output()
        .expect("binary runs")
}

fn write_sample(dir: &Path, n: usize, seed: u64) -> String {
    let s = NormalMixture::standard_normal().sample(n, seed).unwrap();
    let text: String = s.values().iter().map(|v| format!("{v}\n")).collect();
    let p = dir.join("data.txt");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn fit_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_sample(dir.path(), 120, 5);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = semipar(&["fit", "--input", &input, "--method", "et3", "--h", "0.4", "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = ta.lines().collect();
    assert_eq!(lines[0], "x,fhat,fhat_prime");
    assert_eq!(lines.len(), 202);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
}

#[test]
fn et1_sidecar_has_zero_beta() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_sample(dir.path(), 80, 6);
    let out = dir.path().join("fit.csv");
    let o = semipar(&["fit", "--input", &input, "--method", "et1", "--h", "0.5", "--grid", "-2:2:11", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    let beta = side["beta"].as_array().unwrap();
    assert_eq!(beta.len(), 1);
    assert!(beta[0].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(side["n"], 80);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 12);
}

#[test]
fn auto_bandwidth_records_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_sample(dir.path(), 60, 7);
    let out = dir.path().join("fit.csv");
    let o = semipar(&["fit", "--input", &input, "--method", "kernel", "--h", "auto", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["bandwidth_selection"]["selector"], "lscv");
    assert_eq!(side["bandwidth_selection"]["curve"].as_array().unwrap().len(), 25);
}

#[test]
fn parse_error_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.txt");
    std::fs::write(&input, "0.5\n1.5\nnot-a-number\n").unwrap();
    let out = dir.path().join("o.csv");
    let o = semipar(&["fit", "--input", input.to_str().unwrap(), "--method", "kernel", "--h", "0.3", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn usage_and_io_exit_codes() {
    let o = semipar(&["fit", "--method", "et7"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let input = write_sample(dir.path(), 30, 8);
    let out = dir.path().join("o.csv");
    let o = semipar(&["fit", "--input", &input, "--method", "local2", "--kernel", "epanechnikov", "--h", "0.3", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = semipar(&["fit", "--input", "/nonexistent/data.txt", "--method", "kernel", "--h", "0.3", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn help_documents_exit_codes() {
    let o = semipar(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Exit codes") && text.contains("5  I/O error"));
}

#[test]
fn bench_table_normal_row_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let o = semipar(&["bench-table", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0], "density,et2,et3,et4,jones,hg,local1,local2");
    let normal: Vec<f64> = rows[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(normal.len(), 7);
    assert!(normal.iter().all(|v| v.abs() < 1e-12));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.8064"));
}

#[test]
fn bench_table_honours_catalog_override() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("cat.json");
    std::fs::write(&cat, r#"[{"name": "pair", "weights": [0.5, 0.5], "means": [-1, 1], "sds": [0.5, 0.5]}]"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_semipar"))
        .args(["bench-table"])
        .env("SEMIPAR_CATALOG", &cat)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("pair") && !text.contains("claw"));
    std::fs::write(&cat, r#"[{"name": "broken", "weights": [0.7], "means": [0], "sds": [1]}]"#).unwrap();
    let o = semipar(&["bench-table", "--catalog", cat.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bench_mc_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = semipar(&[
            "bench-mc", "--method", "et2", "--n", "80", "--h", "0.4", "--reps", "20", "--seed", seed, "--grid", "-1:1:5",
            "--output", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("3", "a.csv");
    assert_eq!(a, run("3", "b.csv"));
    assert_ne!(a, run("4", "c.csv"));
    assert!(a.starts_with("x,empirical_bias,predicted_bias,empirical_var,predicted_var,z_bias,z_var\n"));
}

#[test]
fn bandwidth_selectors() {
    let o = semipar(&["bandwidth", "--selector", "amise", "--density", "normal", "--n", "100"]);
    assert!(o.status.success());
    let h: f64 = String::from_utf8_lossy(&o.stdout).lines().next().unwrap().parse().unwrap();
    assert!((h / (1.0592 * 100f64.powf(-0.2)) - 1.0).abs() < 1e-3);

    let dir = tempfile::tempdir().unwrap();
    let input = write_sample(dir.path(), 100, 9);
    let curve = dir.path().join("curve.csv");
    let o = semipar(&["bandwidth", "--selector", "lscv", "--input", &input, "--h-grid", "0.1:1.0:10", "--output", curve.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(curve).unwrap();
    assert_eq!(text.lines().count(), 11);

    let o = semipar(&["bandwidth", "--selector", "amise", "--density", "no-such", "--n", "100"]);
    assert_eq!(o.status.code(), Some(2));
}
