//! End-to-end tests of the `motb` binary: spec parsing, report emission,
//! exit codes and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn motb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motb"))
}

fn write_uniform_curve(dir: &Path) -> PathBuf {
    let n = 2000;
    let strikes: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let prices: Vec<f64> = strikes.iter().map(|&k| (1.0 - k) * (1.0 - k) / 2.0).collect();
    let spec = serde_json::json!({"type": "call_curve", "strikes": strikes, "prices": prices});
    let path = dir.join("uniform.json");
    fs::write(&path, spec.to_string()).unwrap();
    path
}

fn write_json(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, value.to_string()).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn bound_uniform_reports_three_quarters() {
    let tmp = tempfile::tempdir().unwrap();
    let marginal = write_uniform_curve(tmp.path());
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let out = tmp.path().join("out");
    let res = run(motb()
        .args(["bound", "--marginal"])
        .arg(&marginal)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let bound = report["bound"].as_f64().unwrap();
    assert!((bound - 0.75).abs() < 1e-6, "bound {bound}");
    for csv in ["lambda_star.csv", "barycenter.csv", "beta.csv"] {
        let text = fs::read_to_string(out.join(csv)).unwrap();
        assert!(text.starts_with("x,value\n"), "{csv} missing header");
        assert!(text.lines().count() > 10, "{csv} too short");
    }
}

#[test]
fn bound_dirac_is_payoff_at_spot() {
    let tmp = tempfile::tempdir().unwrap();
    let marginal = write_json(
        tmp.path(),
        "dirac.json",
        serde_json::json!({"type": "atoms", "atoms": [[0.5, 1.0]]}),
    );
    let payoff = write_json(
        tmp.path(),
        "payoff.json",
        serde_json::json!({"type": "power", "p": 2.0}),
    );
    let out = tmp.path().join("out");
    let res = run(motb()
        .arg("bound")
        .arg("--marginal")
        .arg(&marginal)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out));
    assert!(res.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((report["bound"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn malformed_spec_exits_2_with_field_pointer() {
    let tmp = tempfile::tempdir().unwrap();
    let marginal = write_json(
        tmp.path(),
        "bad.json",
        serde_json::json!({"type": "atoms", "atoms": [[0.5, -1.0], [1.0, 2.0]]}),
    );
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let res = run(motb()
        .arg("bound")
        .arg("--marginal")
        .arg(&marginal)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(tmp.path().join("out")));
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("atoms[0].mass"), "stderr: {stderr}");
}

#[test]
fn forward_identical_marginals_gives_price() {
    let tmp = tempfile::tempdir().unwrap();
    let marginal = write_json(
        tmp.path(),
        "two_point.json",
        serde_json::json!({"type": "atoms", "atoms": [[0.0, 0.5], [1.0, 0.5]]}),
    );
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let out = tmp.path().join("out");
    let res = run(motb()
        .arg("forward")
        .arg("--marginal")
        .arg(&marginal)
        .arg("--marginal")
        .arg(&marginal)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((report["bound"].as_f64().unwrap() - 0.5).abs() < 1e-8);
    assert!(out.join("psi2_star.csv").exists());
}

#[test]
fn forward_dirac_matches_bound_on_uniform() {
    let tmp = tempfile::tempdir().unwrap();
    let uniform = write_uniform_curve(tmp.path());
    let dirac = write_json(
        tmp.path(),
        "dirac.json",
        serde_json::json!({"type": "atoms", "atoms": [[0.5, 1.0]]}),
    );
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));

    let out_f = tmp.path().join("fwd");
    assert!(run(motb()
        .arg("forward")
        .arg("--marginal")
        .arg(&dirac)
        .arg("--marginal")
        .arg(&uniform)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out_f))
    .status
    .success());
    let out_b = tmp.path().join("bnd");
    assert!(run(motb()
        .arg("bound")
        .arg("--marginal")
        .arg(&uniform)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out_b))
    .status
    .success());
    let fwd: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_f.join("report.json")).unwrap()).unwrap();
    let bnd: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_b.join("report.json")).unwrap()).unwrap();
    let diff = (fwd["bound"].as_f64().unwrap() - bnd["bound"].as_f64().unwrap()).abs();
    assert!(diff < 1e-6, "forward vs bound differ by {diff}");
}

#[test]
fn forward_order_violation_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let uniform = write_uniform_curve(tmp.path());
    let dirac = write_json(
        tmp.path(),
        "dirac.json",
        serde_json::json!({"type": "atoms", "atoms": [[0.5, 1.0]]}),
    );
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let res = run(motb()
        .arg("forward")
        .arg("--marginal")
        .arg(&uniform)
        .arg("--marginal")
        .arg(&dirac)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(tmp.path().join("out")));
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("convex order violated"), "stderr: {stderr}");
    assert!(stderr.contains("0.5"), "witness missing: {stderr}");
}

#[test]
fn verify_uniform_passes_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let uniform = write_uniform_curve(tmp.path());
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let args = |out: &Path| {
        let mut c = motb();
        c.arg("verify")
            .arg("--marginal")
            .arg(&uniform)
            .arg("--payoff")
            .arg(&payoff)
            .arg("--out")
            .arg(out)
            .args(["--paths", "100000", "--dt", "1e-4", "--seed", "9"]);
        c
    };
    let out1 = tmp.path().join("v1");
    let res = run(&mut args(&out1));
    assert!(
        res.status.success(),
        "verify failed: {}\n{}",
        String::from_utf8_lossy(&res.stdout),
        fs::read_to_string(out1.join("diagnostics.json")).unwrap_or_default()
    );
    let out2 = tmp.path().join("v2");
    assert!(run(&mut args(&out2)).status.success());
    // byte-identical artifacts for a fixed seed
    assert_eq!(
        fs::read(out1.join("samples.csv")).unwrap(),
        fs::read(out2.join("samples.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out1.join("diagnostics.json")).unwrap(),
        fs::read(out2.join("diagnostics.json")).unwrap()
    );
    // diagnostics re-parse under the schema
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["schema_version"], 1);
    assert_eq!(diag["all_passed"], true);
}

#[test]
fn verify_coarse_dt_flags_bias_and_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let uniform = write_uniform_curve(tmp.path());
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let out = tmp.path().join("out");
    let res = run(motb()
        .arg("verify")
        .arg("--marginal")
        .arg(&uniform)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out)
        .args(["--paths", "20000", "--dt", "0.05", "--seed", "3"]));
    assert_eq!(res.status.code(), Some(1));
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["all_passed"], false);
    let failed: Vec<&str> = diag["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"dt_bias"), "failed checks: {failed:?}");
}

#[test]
fn verify_artifacts_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let uniform = write_uniform_curve(tmp.path());
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let run_with = |threads: &str, out: &Path| {
        let mut c = motb();
        c.env("MOTB_THREADS", threads)
            .arg("verify")
            .arg("--marginal")
            .arg(&uniform)
            .arg("--payoff")
            .arg(&payoff)
            .arg("--out")
            .arg(out)
            .args(["--paths", "4000", "--dt", "1e-3", "--seed", "123"]);
        run(&mut c)
    };
    let out1 = tmp.path().join("t1");
    let out2 = tmp.path().join("t2");
    // exit status may be 0 or 1 at this tiny budget; the artifacts must be
    // byte-identical across worker counts either way
    run_with("1", &out1);
    run_with("2", &out2);
    assert_eq!(
        fs::read(out1.join("samples.csv")).unwrap(),
        fs::read(out2.join("samples.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out1.join("diagnostics.json")).unwrap(),
        fs::read(out2.join("diagnostics.json")).unwrap()
    );
}

#[test]
fn dual_uniform_gap_is_small() {
    let tmp = tempfile::tempdir().unwrap();
    let uniform = write_uniform_curve(tmp.path());
    let payoff = write_json(tmp.path(), "payoff.json", serde_json::json!({"type": "identity"}));
    let out = tmp.path().join("out");
    let res = run(motb()
        .arg("dual")
        .arg("--marginal")
        .arg(&uniform)
        .arg("--payoff")
        .arg(&payoff)
        .arg("--out")
        .arg(&out)
        .args(["--grid", "200", "--knots", "16"]));
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["gap"].as_f64().unwrap().abs() < 0.02);
    assert!((report["value_at_lambda_star"].as_f64().unwrap() - 0.75).abs() < 0.01);
    for artifact in ["value_surface.csv", "exercise_boundary.csv", "minimize_trace.jsonl"] {
        assert!(out.join(artifact).exists(), "{artifact} missing");
    }
    // trace lines parse as JSON
    for line in fs::read_to_string(out.join("minimize_trace.jsonl")).unwrap().lines() {
        let _: serde_json::Value = serde_json::from_str(line).unwrap();
    }
}
