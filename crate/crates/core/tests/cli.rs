use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ifosmondi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifosmondi"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Header and rows of a CSV written by the tool, after the metadata line.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# ifosmondi"));
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn list_methods() {
    let o = ifosmondi(&["list-methods"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for m in ["fixed-point", "newtonls", "anderson", "ngmres", "ngmres-ls"] {
        assert!(out.contains(m));
    }
}

#[test]
fn contractant_run_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = ifosmondi(&[
        "run",
        "--model",
        "msd",
        "--dd",
        "4",
        "--method",
        "newtonls",
        "--dt-ref",
        "0.1",
        "--out-dir",
        d,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    let err: f64 = out
        .split("error=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 0.01);

    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(
        header,
        ["t", "v_L", "x_L", "x_D", "u_v_C", "u_x_C", "u_f_C", "y_f_C", "y_v_C", "y_x_C"]
    );
    assert_eq!(rows.len(), 100);
    assert_eq!(rows.last().unwrap()[0].parse::<f64>().unwrap(), 10.0);
    let (header, rows) = read_csv(&dir.path().join("steps.csv"));
    assert_eq!(
        header,
        ["N", "t_N", "dt", "iterations", "residual_evals", "outcome"]
    );
    assert!(rows.iter().all(|r| r[5] == "converged"));
}

#[test]
fn fixed_point_on_non_contractant_case_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ifosmondi(&[
        "run",
        "--dd",
        "0.64",
        "--method",
        "fixed-point",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("diverged at t=0"));
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(
        ifosmondi(&["run", "--method", "bisection"]).status.code(),
        Some(2)
    );
    assert_eq!(ifosmondi(&["run", "--dd", "-1"]).status.code(), Some(2));
    assert_eq!(
        ifosmondi(&["run", "--model", "pendulum"]).status.code(),
        Some(2)
    );
    assert_eq!(
        ifosmondi(&["run", "--solver-opt", "snes_max_it"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ifosmondi(&["run", "--config", "/nonexistent.toml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ifosmondi(&["sweep-dt", "--dt-ref", "0.1"]).status.code(),
        Some(2)
    );
    assert_eq!(ifosmondi(&["frobnicate"]).status.code(), Some(2));
}

fn sweep_dt(dd: &str, dir: &Path) -> Vec<Vec<String>> {
    let o = ifosmondi(&[
        "sweep-dt",
        "--dd",
        dd,
        "--method",
        "fixed-point,newtonls,anderson,ngmres",
        "--dt-ref",
        "0.2,0.1,0.05,0.025",
        "--parallel",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&dir.join("sweep_dt.csv"));
    assert_eq!(
        header,
        [
            "method",
            "dt_ref",
            "error",
            "total_iterations",
            "total_integrations",
            "outcome"
        ]
    );
    assert_eq!(rows.len(), 16);
    rows
}

#[test]
fn dt_sweep_contractant() {
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep_dt("4", dir.path());
    assert!(rows.iter().all(|r| r[5] == "converged"));
    let newton: Vec<f64> = rows
        .iter()
        .filter(|r| r[0] == "newtonls")
        .map(|r| r[2].parse().unwrap())
        .collect();
    let inversions = newton.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(inversions <= 1, "{newton:?}");
}

#[test]
fn dt_sweep_non_contractant() {
    let dir = tempfile::tempdir().unwrap();
    for r in sweep_dt("0.64", dir.path()) {
        if r[0] == "fixed-point" {
            assert!(r[5].starts_with("diverged") && r[2].is_empty());
        } else {
            assert_eq!(r[5], "converged");
        }
    }
}

#[test]
fn rho_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = ifosmondi(&[
        "sweep-rho",
        "--method",
        "fixed-point,ngmres,ngmres-ls",
        "--t-end",
        "1",
        "--parallel",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("sweep_rho.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains("dt_ref=1e-2"));
    let (header, rows) = read_csv(&dir.path().join("sweep_rho.csv"));
    assert_eq!(
        header,
        [
            "D_D",
            "rho",
            "method",
            "total_iterations",
            "total_integrations",
            "error",
            "outcome"
        ]
    );
    assert_eq!(rows.len(), 8 * 3);
    let rhos: Vec<f64> = rows
        .iter()
        .step_by(3)
        .map(|r| r[1].parse().unwrap())
        .collect();
    let expected = [0.5, 0.6324555320336759, 0.8, 1.0, 1.25, 2.0, 5.0, 10.0];
    for (a, b) in rhos.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    for r in &rows {
        let rho: f64 = r[1].parse().unwrap();
        let done = r[6] == "converged";
        match r[2].as_str() {
            "fixed-point" => assert_eq!(done, rho < 1.0, "{r:?}"),
            "ngmres" if rho == 10.0 => assert!(!done),
            "ngmres-ls" => assert!(done),
            _ => {}
        }
    }
}

#[test]
fn reruns_are_byte_identical_and_flags_beat_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "[model]\npreset = \"msd\"\nD_D = 2.5\nt_end = 2\n[solver]\nmethod = \"anderson\"\ndt_ref = 0.05\n",
    )
    .unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = ifosmondi(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--method",
            "ngmres",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("method=ngmres D_D=2.5 dt_ref=0.05"));
        fs::read(out.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
