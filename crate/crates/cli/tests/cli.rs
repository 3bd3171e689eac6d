use assert_cmd::Command;
use predicates::prelude::*;

fn flowcurv() -> Command {
    Command::cargo_bin("flowcurv").unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = flowcurv().args(args).assert().success().get_output().stdout.clone();
    String::from_utf8(out).unwrap()
}

#[test]
fn lists_the_builtin_models() {
    let text = stdout(&["list-models"]);
    let names: Vec<&str> = text.lines().collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"chua3-pwl"));
    assert!(names.contains(&"gear5"));
}

#[test]
fn chua3_hyperplane_coefficients() {
    flowcurv()
        .args(["hyperplane", "-m", "chua3-pwl"])
        .assert()
        .success()
        .stdout(predicate::str::contains("eigenvalue -3.94213"))
        .stdout(predicate::str::contains("2.876 x1 - 3.94213 x2 + x3 + 2.81399 = 0"))
        .stdout(predicate::str::contains("2.876 x1 - 3.94213 x2 + x3 - 2.81399 = 0"));
}

#[test]
fn hyperplane_file_mirrors_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("planes.csv");
    let json = dir.path().join("planes.json");
    flowcurv()
        .args(["hyperplane", "-m", "chua4-pwl", "-o"])
        .arg(&csv)
        .assert()
        .success();
    flowcurv()
        .args(["hyperplane", "-m", "chua4-pwl", "--format", "json", "-o"])
        .arg(&json)
        .assert()
        .success();
    let rows = std::fs::read_to_string(&csv).unwrap();
    let planes: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let planes = planes.as_array().unwrap();
    assert_eq!(rows.lines().count(), planes.len() + 1);
    assert_eq!(planes.len(), 2);
}

#[test]
fn integrate_is_deterministic_and_json_matches_csv() {
    let args = ["integrate", "-m", "chua3-pwl", "--t-end", "5"];
    let a = stdout(&args);
    assert_eq!(a, stdout(&args));
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&json_args)).unwrap();
    let rows = rows.as_array().unwrap();
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), rows.len() + 1);
    let last: Vec<f64> = lines[lines.len() - 1]
        .split(',')
        .take(4)
        .map(|v| v.parse().unwrap())
        .collect();
    let end = &rows[rows.len() - 1];
    assert_eq!(end["t"].as_f64().unwrap(), last[0]);
    assert_eq!(end["x3"].as_f64().unwrap(), last[3]);
}

#[test]
fn thread_count_does_not_change_scans() {
    let args = [
        "phi-scan",
        "-m",
        "chua4-cubic",
        "--grid",
        "x1=-2:2:15,x3=-1:1:9",
        "--slice",
        "x2=0.1",
    ];
    let one = flowcurv()
        .env("FLOWCURV_THREADS", "1")
        .args(args)
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let four = flowcurv()
        .env("FLOWCURV_THREADS", "4")
        .args(args)
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    assert_eq!(one, four);
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 15 * 9 + 1);
}

#[test]
fn manifold_grid_reports_zero_points() {
    flowcurv()
        .args([
            "manifold",
            "-m",
            "chua3-pwl",
            "--grid",
            "x1=1.2:6:40,x3=-6:6:40",
            "--slice",
            "x2=fp",
        ])
        .assert()
        .success()
        .stdout(predicate::str::starts_with("x1,x2,x3"))
        .stderr(predicate::str::contains("points"));
}

#[test]
fn configuration_errors_exit_1() {
    flowcurv()
        .args(["integrate", "-m", "lorenz"])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("unknown model"));
    flowcurv()
        .args(["integrate", "-m", "chua3-pwl", "--x0", "1,2"])
        .assert()
        .code(1);
    flowcurv()
        .args(["integrate", "-m", "chua3-pwl", "--param", "zeta=1"])
        .assert()
        .code(1);
    flowcurv().args(["bogus-command"]).assert().code(1);
    flowcurv()
        .args([
            "phi-scan",
            "-m",
            "chua3-pwl",
            "--grid",
            "x1=-1:1:3,x2=0:1:2",
            "--slice",
            "x3=0,x1=0",
        ])
        .assert()
        .code(1);
    flowcurv()
        .args(["phi-scan", "-m", "chua3-pwl", "--grid", "x7=-1:1:3"])
        .assert()
        .code(1);
}

#[test]
fn numerical_failures_exit_2() {
    flowcurv()
        .args(["hyperplane", "-m", "chua5-pwl", "--strict"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("complex"));
}

#[test]
fn failed_run_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gear.csv");
    flowcurv()
        .args(["integrate", "-m", "gear5", "--t-end", "1", "-o"])
        .arg(&out)
        .assert()
        .code(2);
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn config_model_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lin.json");
    std::fs::write(&path, r#"{"name": "lin", "dim": 2, "rhs": ["-x1", "-2*x2"]}"#).unwrap();
    let model = path.to_str().unwrap();
    flowcurv()
        .args(["integrate", "-m", model])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("--x0"));
    let text = stdout(&["integrate", "-m", model, "--x0", "1,1", "--t-end", "1"]);
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .take(3)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((last[1] - (-1.0f64).exp()).abs() < 1e-8);
    assert!((last[2] - (-2.0f64).exp()).abs() < 1e-8);
}

#[test]
fn verify_gear5_passes() {
    flowcurv()
        .args(["verify", "-m", "gear5"])
        .assert()
        .success()
        .stdout(predicate::str::contains("PASS"))
        .stdout(predicate::str::contains("FAIL").not());
}

#[test]
fn curvature_columns() {
    let text = stdout(&["curvature", "-m", "chua3-pwl", "--t-end", "2"]);
    assert!(text.lines().next().unwrap().starts_with("t,kappa1,kappa2"));
}
