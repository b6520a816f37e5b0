use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nested-flow"));
    c.env_remove("NESTED_FLOW_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.next().unwrap_or("").to_string())
        })
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{report}"))
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn thresholds_reports_worked_examples() {
    let o = run(&["thresholds", "--problem", "quad-bilevel"]);
    assert!(o.status.success());
    let r = stdout(&o);
    assert_eq!(field(&r, "delta0"), "0.18");
    assert_eq!(field(&r, "eta0"), "0.5");
    assert_eq!(field(&r, "C_y_lambda"), "0.6");
    assert_eq!(field(&r, "c1"), "0.125");

    let k = stdout(&run(&["thresholds", "--problem", "quad-bilevel", "--kappa", "1.0"]));
    for key in ["C_y_lambda", "C_z", "delta0", "eta0", "c1", "K_y", "K_z", "mu_lambda"] {
        assert_eq!(field(&r, key), field(&k, key), "{key}");
    }

    let m = stdout(&run(&["thresholds", "--problem", "quad-minimax"]));
    assert_eq!(field(&m, "gamma0"), "1.25");

    let mmm = stdout(&run(&["thresholds", "--problem", "quad-minminmax"]));
    assert_eq!(field(&mmm, "delta0"), "4.5");
    assert_eq!(field(&mmm, "eta0"), "0.375");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["run", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--h", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["check-grad", "--problem", "hyperclean", "--split", "1.0"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--problem", "quad-minimax", "--flow", "bilevel"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--flow", "ideal", "--problem", "quad-bilevel", "--diag"]).status.code(), Some(2));
}

#[test]
fn bad_dataset_exits_three_with_location() {
    let dir = TempDir::new().unwrap();
    let bad = p(&dir, "bad.csv");
    std::fs::write(&bad, "f0,f1,label\n1,2,0\n3,x,1\n").unwrap();
    let o = run(&["estimate", "--problem", "hyperclean", "--data", &bad]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");
    let missing = p(&dir, "missing.csv");
    assert_eq!(run(&["estimate", "--problem", "hyperclean", "--data", &missing]).status.code(), Some(3));
}

#[test]
fn ideal_flow_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "ideal.csv");
    let o = run(&[
        "run", "--problem", "quad-bilevel", "--flow", "ideal", "--x0", "1", "--h", "1e-3", "--steps", "2000",
        "--scheme", "rk4", "--out", &out,
    ]);
    assert!(o.status.success());
    for row in data_rows(Path::new(&out)) {
        assert!((row[1] - (-0.25 * row[0]).exp()).abs() < 1e-10, "{row:?}");
    }
}

#[test]
fn bilevel_diagnostics_above_threshold_dissipate() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "diag.csv");
    let o = run(&[
        "run", "--problem", "quad-bilevel", "--lambda", "10", "--delta", "0.36", "--eta", "1", "--h", "1e-3",
        "--steps", "5000", "--diag", "--out", &out,
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == "t,W,grad_phi_sq,r_y_sq,r_z_sq,d_y_sq,d_z_sq"));
    let rows = data_rows(Path::new(&out));
    assert_eq!(rows.len(), 5001);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-12));
}

#[test]
fn divergence_is_reported_not_fatal() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "div.csv");
    let o = run(&["run", "--problem", "quad-minimax", "--h", "10", "--steps", "200", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == "# @diverged=true"));
}

fn replay_same(name: &str, args: &[&str]) {
    let dir = TempDir::new().unwrap();
    let first = p(&dir, "first.csv");
    let second = p(&dir, "second.csv");
    let mut a: Vec<&str> = args.to_vec();
    a.extend(["--out", &first]);
    assert!(run(&a).status.success(), "{name}");
    let o = run(&["--replay", &first, args[0], "--out", &second]);
    assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap(), "{name}");
}

#[test]
fn replay_reproduces_bytes() {
    replay_same(
        "run",
        &["run", "--problem", "quad-minminmax", "--delta", "9", "--eta", "0.75", "--steps", "300", "--diag", "--states", "--seed", "4"],
    );
    replay_same("track", &["track", "--T", "1", "--lambdas", "1,5", "--case", "both"]);
    replay_same(
        "sweep",
        &["sweep", "--problem", "quad-bilevel", "--delta-n", "3", "--eta-n", "2", "--steps", "100"],
    );
}

#[test]
fn replay_rejects_other_command() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "t.csv");
    assert!(run(&["track", "--T", "0.5", "--lambdas", "1", "--out", &out]).status.success());
    assert_eq!(run(&["--replay", &out, "run"]).status.code(), Some(2));
}

#[test]
fn explicit_flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "run.cfg");
    std::fs::write(&cfg, "# settings\nproblem=quad-bilevel\ndelta=0.5\nsteps=3\n").unwrap();
    let out = p(&dir, "c.csv");
    assert!(run(&["run", "--config", &cfg, "--steps", "4", "--out", &out]).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    for line in ["# problem=quad-bilevel", "# delta=0.5", "# steps=4"] {
        assert!(text.lines().any(|l| l == line), "{line}");
    }
    assert_eq!(data_rows(Path::new(&out)).len(), 5);
}

#[test]
fn thread_count_does_not_change_sweep_bytes() {
    let dir = TempDir::new().unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "2"] {
        let out = p(&dir, &format!("s{threads}.csv"));
        let o = bin()
            .env("NESTED_FLOW_THREADS", threads)
            .args(["sweep", "--problem", "quad-minminmax", "--delta-n", "4", "--eta-n", "3", "--steps", "200", "--out", &out])
            .output()
            .unwrap();
        assert!(o.status.success());
        outs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn dumped_dataset_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "blobs.csv");
    let e1 = p(&dir, "e1.csv");
    let e2 = p(&dir, "e2.csv");
    let o = run(&["estimate", "--problem", "hyperclean", "--synthetic", "40,2,2", "--dump-data", &data, "--csv", &e1]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&data).unwrap().starts_with("f0,f1,label\n"));
    assert!(run(&["estimate", "--problem", "hyperclean", "--data", &data, "--csv", &e2]).status.success());
    let body = |f: &str| {
        std::fs::read_to_string(f)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(&e1), body(&e2));
}

#[test]
fn check_grad_passes_for_every_problem() {
    for problem in ["quad-minimax", "quad-bilevel", "quad-minminmax"] {
        assert_eq!(run(&["check-grad", "--problem", problem, "--dim", "2"]).status.code(), Some(0), "{problem}");
    }
    let o = run(&["check-grad", "--problem", "hyperclean", "--synthetic", "30,2,2", "--points", "5"]);
    assert_eq!(o.status.code(), Some(0));
}
