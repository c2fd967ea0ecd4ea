use std::path::Path;
use std::process::{Command, Output};

use cvtransfer::config::RunConfig;

fn cvtransfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvtransfer"))
        .args(args)
        .env("CVTRANSFER_CHECK_SHOTS", "20000")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cvtransfer(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        out.stderr.is_empty(),
        "stderr on success: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cvtransfer(args).status.code().unwrap()
}

fn value(report: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` in\n{report}"))
        .parse()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn transfer_examples() {
    assert_eq!(value(&ok(&["transfer", "--R", "0.5", "--r", "0"]), "F_out1"), 0.666667);
    assert_eq!(value(&ok(&["transfer", "--R", "0", "--r", "0"]), "F_out1"), 1.0);
    let exact = 2f64.ln() / 2.0;
    let report = ok(&["transfer", "--R", "0.5", "--r", &exact.to_string()]);
    assert_eq!(value(&report, "F_out1"), 0.8);
    assert_eq!(value(&report, "VX_out1"), 1.5);
    assert!(report.contains("out1 beats no-cloning limit = yes"));
    let approx = ok(&["transfer", "--R", "0.5", "--r", "0.34657"]);
    // r = 0.34657 truncates ln2/2, so the sixth decimal reads 0.799999
    assert!((value(&approx, "F_out1") - 0.8).abs() < 2e-6);
}

#[test]
fn squeezing_in_decibels() {
    let db = 10.0 * 2f64.log10();
    let report = ok(&["transfer", "--R", "0.5", "--sq-db", &db.to_string()]);
    assert_eq!(value(&report, "F_out1"), 0.8);
}

#[test]
fn flag_and_domain_errors() {
    assert_eq!(code(&["transfer", "--R", "abc"]), 2);
    assert_eq!(code(&["transfer", "--R", "0.5", "--r", "0.1", "--sq-db", "3"]), 2);
    assert_eq!(code(&["transfer", "--r", "0.1"]), 2);
    assert_eq!(code(&["transfer", "--R", "0.5", "--gain", "fast"]), 2);
    assert_eq!(code(&["bogus"]), 2);
    assert_eq!(code(&["transfer", "--R", "1", "--r", "0"]), 3);
    assert_eq!(code(&["transfer", "--R", "0.5", "--r", "-1"]), 3);
    assert_eq!(code(&["transfer", "--R", "0.5", "--eta", "1.5"]), 3);
    assert_eq!(code(&["clone", "--M", "1", "--r", "0"]), 2);
    assert_eq!(code(&["clone", "--M", "-3", "--r", "0"]), 2);
    let err = cvtransfer(&["transfer", "--R", "1", "--r", "0"]);
    assert!(!err.stderr.is_empty());
}

#[test]
fn help_goes_to_stdout() {
    let out = ok(&["--help"]);
    assert!(out.contains("transfer") && out.contains("sweep"));
}

#[test]
fn sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    ok(&[
        "sweep",
        "--R-grid",
        "0:0.999:50",
        "--r-list",
        "0,0.5,1",
        "--csv",
        path.to_str().unwrap(),
    ]);
    let (header, rows) = read_csv(&path);
    assert_eq!(header.join(","), "R,r,eta,g,F_out1,F_out2,F_boundary,VX_out1,VY_out1");
    assert_eq!(rows.len(), 150);
    assert_eq!(rows[49][0], 0.999);
    for row in &rows {
        let (rf, r, f1, fb) = (row[0], row[1], row[4], row[6]);
        if r == 0.0 {
            assert!((f1 - 1.0 / (rf + 1.0)).abs() < 1e-12);
        } else if rf > 0.0 {
            assert!(fb <= f1);
        }
        assert!((f1 - 1.0 / (1.0 + rf * (-2.0 * r).exp())).abs() < 1e-12);
    }
    for block in rows.chunks(50) {
        for w in block.windows(2) {
            assert!(w[1][4] < w[0][4]);
        }
    }
}

#[test]
fn sweep_rows_are_deterministic() {
    let a = ok(&["sweep", "--R-grid", "0:0.9:200", "--r-list", "0.2,0.7"]);
    let b = ok(&["sweep", "--R-grid", "0:0.9:200", "--r-list", "0.2,0.7"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 401);
}

#[test]
fn sweep_unwritable_path() {
    assert_eq!(
        code(&["sweep", "--R-grid", "0:0.5:3", "--csv", "/nonexistent-dir/x.csv"]),
        4
    );
}

#[test]
fn clone_examples() {
    let two = ok(&["clone", "--M", "2", "--r", "0"]);
    assert_eq!(value(&two, "F_out1 circuit"), 0.666667);
    assert_eq!(value(&two, "F_clone1 circuit"), 0.666667);
    assert!(value(&two, "max |circuit - closed form|") < 1e-12);

    let four = ok(&["clone", "--M", "4", "--r", "0"]);
    assert_eq!(value(&four, "F_clone closed form"), 0.571429);
    assert_eq!(value(&four, "F_clone3 circuit"), 0.571429);

    let three = ok(&["clone", "--M", "3", "--r", "0.5"]);
    let want = 3.0 / (3.0 + 2.0 * (-1f64).exp());
    assert!((value(&three, "F_out1 circuit") - want).abs() < 5e-7);
}

#[test]
fn mc_passes_and_is_reproducible() {
    let args = ["mc", "--R", "0.5", "--r", "0", "--shots", "1000000", "--seed", "7"];
    let first = cvtransfer(&args);
    assert_eq!(first.status.code(), Some(0));
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    assert_eq!(text.lines().last(), Some("PASS"));
    assert_eq!(cvtransfer(&args).stdout, first.stdout);
}

#[test]
fn mc_loss_compensated_mean() {
    let out = ok(&[
        "mc",
        "--R",
        "0.5",
        "--eta",
        "0.8",
        "--gain",
        "loss-comp",
        "--mean",
        "1,-1",
        "--shots",
        "400000",
        "--seed",
        "7",
    ]);
    let row = out
        .lines()
        .find(|l| l.starts_with("out1") && l.contains("mean_x"))
        .unwrap();
    assert!(row.ends_with("PASS"));
    assert!(row.contains(" 1.000000 "));
}

#[test]
fn mc_requires_shots_and_seed() {
    assert_eq!(code(&["mc", "--R", "0.5"]), 2);
}

#[test]
fn mc_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mc.csv");
    ok(&[
        "mc",
        "--M",
        "3",
        "--r",
        "0.2",
        "--shots",
        "50000",
        "--seed",
        "1",
        "--csv",
        path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("output,quantity,analytic,mc,stderr,z,result"));
    assert!(text.contains("clone2,fidelity"));
}

#[test]
fn snr_examples() {
    let zero = ok(&["snr", "--R", "0.3", "--r", "0"]);
    assert_eq!(value(&zero, "SNR_X"), value(&zero, "printed formula SNR_X"));
    assert!(zero.contains("agrees"));

    let one = ok(&["snr", "--R", "0.3", "--r", "1"]);
    assert!(value(&one, "SNR_X") > 0.0);
    assert!(one.contains("warning"));

    let direct = ok(&["snr", "--R", "0", "--r", "0", "--vin", "4,4"]);
    assert_eq!(value(&direct, "SNR_X"), 4.0);
    assert_eq!(value(&direct, "SNR_Y"), 4.0);
}

#[test]
fn check_passes() {
    let out = ok(&["check"]);
    assert!(out.lines().all(|l| l.starts_with("PASS")));
    assert!(out.contains("M = 2..8"));
    assert!(out.contains("lossy out1 coefficient table"));
}

#[test]
fn check_rejects_bad_shot_override() {
    let out = Command::new(env!("CARGO_BIN_EXE_cvtransfer"))
        .arg("check")
        .env("CVTRANSFER_CHECK_SHOTS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    let csv_path = dir.path().join("row.csv");
    std::fs::write(
        &cfg_path,
        format!(
            "[protocol]\nR = 0.5\nsq_db = 3.0102999566398\n\n[output]\ncsv = {:?}\n",
            csv_path.to_str().unwrap()
        ),
    )
    .unwrap();
    let report = ok(&["transfer", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(value(&report, "F_out1"), 0.8);
    let (_, rows) = read_csv(&csv_path);
    assert!((rows[0][4] - 0.8).abs() < 1e-12);

    let overridden = ok(&["transfer", "--config", cfg_path.to_str().unwrap(), "--r", "0"]);
    assert_eq!(value(&overridden, "F_out1"), 0.666667);

    let text = std::fs::read_to_string(&cfg_path).unwrap();
    let parsed = RunConfig::from_toml(&text).unwrap();
    assert_eq!(RunConfig::from_toml(&parsed.to_toml().unwrap()).unwrap(), parsed);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[protocol]\nreflectivity = 0.5\n").unwrap();
    assert_eq!(code(&["transfer", "--config", path.to_str().unwrap()]), 2);
    assert_eq!(code(&["transfer", "--config", "/nonexistent.toml"]), 2);
}
