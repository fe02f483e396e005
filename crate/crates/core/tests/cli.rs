use std::process::Command;

fn tentkit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tentkit"))
        .args(args)
        .output()
        .expect("run tentkit")
}

#[test]
fn tableau_check_exit_status() {
    let ok = tentkit(&["tableau", "check", "sark3-heun"]);
    assert!(ok.status.success());
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.contains("attained order 3"));
    assert!(text.contains("r3 0e0 0e0 0e0 0e0 0e0 0e0 0e0"));

    // sark2-heun only reaches order 2 at any tolerance below its third-order defect
    let loose = tentkit(&["tableau", "check", "sark2-heun", "--tol", "10"]);
    assert_eq!(loose.status.code(), Some(1));

    let unknown = tentkit(&["tableau", "check", "sark7"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("sark2-ralston"));
}

#[test]
fn tableau_check_oracle() {
    let out = tentkit(&["tableau", "check", "sark2-ralston", "--oracle", "--seed", "9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let slope: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("local error slope "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 3.0).abs() < 0.2);
}

#[test]
fn converge_writes_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let plot = dir.path().join("plot.gp");
    for path in [&a, &b] {
        let out = tentkit(&[
            "converge",
            "--levels",
            "0..1",
            "--scheme",
            "sark2-ralston",
            "--out",
            path.to_str().unwrap(),
            "--gnuplot",
            plot.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,h,elements,dof,error,eoc"));
    assert!(lines.next().unwrap().starts_with("0,1.00000000000000e-1,10,30,"));
    // the second run overwrote the script
    assert!(std::fs::read_to_string(&plot).unwrap().contains("b.csv"));
}

#[test]
fn json_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "advection1d", "scheme": "sark2-heun", "cmax": 2.0, "tmax": 0.3, "r-list": [4, 8]}"#).unwrap();
    let out = tentkit(&["stability", "--config", cfg.to_str().unwrap(), "--p", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "r,p,s,scheme,cbar");
    assert!(rows[1].starts_with("4,3,2,sark2-heun,"));
    assert!(rows[2].starts_with("8,3,2,sark2-heun,"));
}

#[test]
fn configuration_errors_exit_with_one() {
    for args in [
        vec!["converge", "--gamma", "1.5"],
        vec!["converge", "--model", "euler1d"],
        vec!["converge", "--levels", "3..1"],
        vec!["stability", "--model", "burgers1d"],
        vec!["converge", "--config", "/nonexistent/run.json"],
    ] {
        let out = tentkit(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn solver_failure_exits_with_two() {
    // the u² flux shocks before t = 0.1, so the characteristic solve for the
    // reference solution breaks down
    let out = tentkit(&["converge", "--levels", "0..0", "--burgers-flux", "square"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("level 0"));
}

#[test]
fn pitch_dump() {
    let out = tentkit(&["pitch", "--h0", "0.25", "--tmax", "0.05"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("tent ") && l.contains(" phit=")));
    assert!(text.lines().count() >= 5);
}
