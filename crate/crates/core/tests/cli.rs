use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ttess(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttess"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = ttess(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = out.to_str().unwrap();
    ok(&["simulate", "--burnin", "300", "--period", "50", "--replicates", "2", "--seed", "4", "--out", o]);
    let sample = json(&out.join("sample_0001.json"));
    assert_eq!(sample["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(sample["config"]["command"], "simulate");
    assert_eq!(sample["config"]["seed"], 4);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert!(lines.next().unwrap().starts_with("# ttess "));
    assert!(lines.next().unwrap().starts_with("# config {"));
    assert_eq!(
        lines.next().unwrap(),
        "iteration,energy,nseint,nnbseint,nbseint,accepted_move_type"
    );
    assert_eq!(lines.count(), 350);

    let est = dir.path().join("est");
    let input = out.join("sample_0001.json");
    ok(&["estimate", "--input", input.to_str().unwrap(), "--out", est.to_str().unwrap()]);
    let e = json(&est.join("estimate.json"));
    assert_eq!(e["estimate"]["method"], "closed-form");
    let (nnb, u) = (e["nnbseint"].as_f64().unwrap(), e["u"].as_f64().unwrap());
    let th = e["estimate"]["theta_hat"][0].as_f64().unwrap();
    assert!((th - (nnb * std::f64::consts::PI / u).ln()).abs() < 1e-12);

    let est2 = dir.path().join("est2");
    ok(&[
        "estimate", "--input", input.to_str().unwrap(), "--method", "nois", "--out",
        est2.to_str().unwrap(),
    ]);
    let e2 = json(&est2.join("estimate.json"));
    assert!((e2["estimate"]["theta_hat"][0].as_f64().unwrap() - th).abs() < 1e-4);
    assert!(fs::read_to_string(est2.join("nois_trace.csv")).unwrap().contains("iteration,theta1,lpl"));
}

#[test]
fn study_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "study", "--burnin", "300", "--period", "40", "--replicates", "5", "--chains", "2",
            "--seed", "11", "--out", out.to_str().unwrap(),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let strip = |p: &Path| {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    for f in ["replicates.csv", "summary.csv"] {
        assert_eq!(strip(&a.join(f)), strip(&b.join(f)));
    }
    let s = json(&a.join("summary.json"));
    let q = &s["parameters"][0]["summary"];
    for k in ["min", "d1", "q1", "median", "q3", "d9", "max"] {
        assert!(q[k].is_f64(), "{k}");
    }
    assert_eq!(s["replicates"], 5);
    let reps = fs::read_to_string(a.join("replicates.csv")).unwrap();
    let ids: Vec<&str> = reps
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ids, ["0", "1", "2", "3", "4"]);
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    let args = ["simulate", "--burnin", "200", "--period", "30", "--replicates", "2", "--out", o];
    ok(&args);
    let first = fs::read(out.join("sample_0001.json")).unwrap();
    let trace = fs::read(out.join("trace.csv")).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(out.join("sample_0001.json")).unwrap());
    assert_eq!(trace, fs::read(out.join("trace.csv")).unwrap());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("p.csv");
    fs::write(&pts, "x,y\n0.1,0.2\n0.5,0.5\n").unwrap();
    let p = pts.to_str().unwrap();
    assert_eq!(ttess(&["ppfit", "--input", p]).status.code(), Some(2));
    assert_eq!(ttess(&["simulate", "--theta", "1", "2"]).status.code(), Some(2));
    assert_eq!(ttess(&["simulate", "--model", "hexagon"]).status.code(), Some(2));
    assert_eq!(ttess(&["frobnicate"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"domain": [[0,0],[1,0],[1,1],[0,1]], "segments": [{"alpha": 0.0, "p": 0.5, "endpoints": [[0.5, 0.2], [0.5, 1.0]]}]}"#).unwrap();
    let o = ttess(&["estimate", "--input", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"replicates": 0}"#).unwrap();
    assert_eq!(ttess(&["study", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("o");
    fs::write(
        &cfg,
        format!(r#"{{"seed": 77, "replicates": 1, "burnin": 100, "out": {:?}}}"#, out.to_str().unwrap()),
    )
    .unwrap();
    ok(&["simulate", "--seed", "1", "--replicates", "5", "--config", cfg.to_str().unwrap()]);
    let s = json(&out.join("sample_0000.json"));
    assert_eq!(s["config"]["seed"], 77);
    assert!(!out.join("sample_0001.json").exists());
}

#[test]
fn ppfit_reports_poisson_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("p.csv");
    let mut text = String::from("x,y\n");
    for i in 0..7 {
        for j in 0..7 {
            text.push_str(&format!("{},{}\n", (i as f64 + 0.3) / 7.0, (j as f64 + 0.6) / 7.0));
        }
    }
    fs::write(&pts, text).unwrap();
    let out = dir.path().join("fit");
    ok(&[
        "ppfit", "--input", pts.to_str().unwrap(), "--rho", "4900", "--out", out.to_str().unwrap(),
    ]);
    let f = json(&out.join("ppfit.json"));
    let bench = f["poisson_benchmark"]["log_n_over_area"].as_f64().unwrap();
    assert!((bench - 49f64.ln()).abs() < 1e-12);
    assert!(f["poisson_benchmark"]["difference"].as_f64().unwrap().abs() < 0.1);
    let q = f["quadrature_fit"]["theta"][0].as_f64().unwrap();
    assert!((q - bench).abs() < 1e-10);

    // Spacing 1/7 < r, so every point has close neighbours and the fit is finite.
    let out = dir.path().join("strauss");
    ok(&[
        "ppfit", "--input", pts.to_str().unwrap(), "--rho", "2000", "--pp-model", "strauss",
        "--radius", "0.2", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(json(&out.join("ppfit.json"))["theta_hat"].as_array().unwrap().len(), 2);
}

#[test]
fn period_prints_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let s = ok(&["period", "--burnin", "2000", "--seed", "3", "--out", out.to_str().unwrap()]);
    let p: u64 = s.trim().parse().unwrap();
    let r = json(&out.join("period.json"));
    assert_eq!(r["report"]["period"], p);
    assert!(r["report"]["renewal"].as_f64().unwrap() >= 0.75);
}
