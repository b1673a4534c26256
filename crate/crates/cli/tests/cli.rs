use std::path::PathBuf;
use std::process::{Command, Output};

fn dgfeti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgfeti"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(name)
}

#[test]
fn solve_prints_a_row() {
    let o = dgfeti(&["solve", "--M", "2", "--m", "4", "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("M,m,delta,beta"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert_eq!(row[1], "4");
    assert_eq!(row[11], "true");
}

#[test]
fn solve_json_with_direct_check_and_history() {
    let hist = scratch("history.csv");
    let o = dgfeti(&[
        "solve",
        "--M",
        "2",
        "--m",
        "2",
        "--rho-red",
        "10",
        "--check-direct",
        "--format",
        "json",
        "--history",
        hist.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows[0]["rho_r"], 10.0);
    let history = std::fs::read_to_string(hist).unwrap();
    assert!(history.lines().count() >= 2);
}

#[test]
fn conflicting_coefficients_are_rejected() {
    let o = dgfeti(&["solve", "--rho-const", "1", "--rho-black", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho-const"));
}

#[test]
fn invalid_sizes_are_rejected() {
    for args in [
        &["solve", "--m", "0"][..],
        &["solve", "--delta", "-1"],
        &["solve", "--format", "xml"],
        &["table", "9"],
    ] {
        let o = dgfeti(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn config_file_is_layered_under_flags() {
    let path = scratch("case.toml");
    std::fs::write(&path, "M = 3\nm = 8\nrho_red = 100.0\nformat = \"csv\"\n").unwrap();
    let o = dgfeti(&["--config", path.to_str().unwrap(), "--m", "2", "solve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..2], &["3", "2"]);
    assert_eq!(row[5], "100");

    std::fs::write(&path, "colour = 3\n").unwrap();
    let o = dgfeti(&["--config", path.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_reports_dense_and_lanczos_estimates() {
    let eig = scratch("eig.csv");
    let o = dgfeti(&[
        "spectrum",
        "--M",
        "2",
        "--m",
        "4",
        "--format",
        "json",
        "--csv",
        eig.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let lmin = v["lambda_min"].as_f64().unwrap();
    let cond = v["cond"].as_f64().unwrap();
    let lanczos = v["lanczos_cond"].as_f64().unwrap();
    assert!(lmin >= 1.0 - 1e-8);
    assert!(lanczos <= cond * (1.0 + 1e-6));
    let n = v["multipliers"].as_u64().unwrap() as usize;
    assert_eq!(std::fs::read_to_string(eig).unwrap().lines().count(), n + 1);
}

#[test]
fn verify_passes_and_exports_ratios() {
    let csv = scratch("ratios.csv");
    let o = dgfeti(&["verify", "--csv", csv.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.lines().any(|l| l.starts_with("PASS")));
    assert!(!text.lines().any(|l| l.starts_with("FAIL")));
    let table = std::fs::read_to_string(csv).unwrap();
    assert!(table.starts_with("suite,bound,m,samples,skipped,min,max"));
}

#[test]
fn table_honours_the_iteration_limit() {
    let o = dgfeti(&["table", "1", "--format", "csv", "--max-iters", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(11) == Some("false")));
}
