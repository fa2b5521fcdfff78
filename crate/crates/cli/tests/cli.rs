use std::process::{Command, Output};

fn forchheimer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forchheimer"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn small_run_succeeds() {
    let out = forchheimer(&[
        "run", "--scheme", "gradp", "--case", "ex1fa", "--n", "8", "--alpha", "10",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("converged=true nbr="), "{text}");
}

#[test]
fn incompatible_scheme_and_case_is_an_argument_error() {
    let out = forchheimer(&["run", "--scheme", "gradp", "--case", "ex1sa", "--n", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn malformed_arguments_exit_with_two() {
    assert_eq!(forchheimer(&["run", "--scheme", "gradp"]).status.code(), Some(2));
    assert_eq!(
        forchheimer(&["run", "--scheme", "fem", "--case", "ex1fa"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        forchheimer(&["run", "--scheme", "mixed", "--case", "ex1sa", "--n", "0"])
            .status
            .code(),
        Some(2)
    );
    let two_ns = forchheimer(&["convergence", "--scheme", "mixed", "--case", "ex1sa", "--ns", "4,8"]);
    assert_eq!(two_ns.status.code(), Some(2));
}

#[test]
fn capped_run_reports_non_convergence() {
    let out = forchheimer(&[
        "run",
        "--scheme",
        "mixed",
        "--case",
        "ex2sa",
        "--n",
        "8",
        "--preset",
        "t1",
        "--alpha",
        "0.001",
        "--max-iter",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("log10_err=div"));
}

#[test]
fn sweep_csv_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for path in &paths {
        let out = forchheimer(&[
            "sweep-alpha",
            "--scheme",
            "mixed",
            "--case",
            "ex1sa",
            "--n",
            "6",
            "--preset",
            "t3",
            "--alphas",
            "1,10,100",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("alpha,nbr,log10_err"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn convergence_writes_plot_data() {
    let out = forchheimer(&["convergence", "--scheme", "gradp", "--case", "ex1fa", "--ns", "4,8,16"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# slope = "));
    assert_eq!(lines.count(), 4);
}
