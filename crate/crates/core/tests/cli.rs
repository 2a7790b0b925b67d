use std::process::{Command, Output};

use orthoshrink::cli::RiskRecord;
use orthoshrink::montecarlo::{AppendixRow, SweepTable};
use orthoshrink::output::{read_appendix_csv, read_sweep_csv};
use orthoshrink::verify::VerifyReport;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthoshrink"))
        .args(args)
        .env_remove("ORTHOSHRINK_SEED")
        .output()
        .expect("spawn binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn risk_json(args: &[&str]) -> RiskRecord {
    let mut full = vec!["risk", "--format", "json"];
    full.extend_from_slice(args);
    let o = run(&full);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn verify_default_passes() {
    let o = run(&["verify", "--trials", "20", "--identity-trials", "500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("all 14 checks passed"));
}

#[test]
fn verify_other_dims() {
    let o = run(&["verify", "--dims", "8x5", "--trials", "50", "--identity-trials", "500", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: VerifyReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.all_passed());
    assert_eq!((report.dims.n, report.dims.p), (8, 5));
}

#[test]
fn verify_reports_injected_fault() {
    let o = run(&["verify", "--trials", "5", "--identity-trials", "50", "--inject-fault", "laplacian-trace"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("failed: laplacian-trace"), "{}", stdout(&o));

    let o = run(&["verify", "--inject-fault", "no-such-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-check"));
}

#[test]
fn risk_efron_morris_at_zero() {
    let r = risk_json(&["--n", "10", "--p", "3", "--sigma", "0,0,0", "--estimator", "em", "--reps", "20000"]);
    assert!((r.estimate.frobenius - 12.0).abs() <= 4.0 * r.estimate.frobenius_stderr);
    assert!(r.mean_sure.is_some());
}

#[test]
fn risk_mle_is_n_times_p() {
    let r = risk_json(&["--n", "10", "--p", "3", "--sigma", "5,1,0", "--estimator", "mle", "--reps", "20000"]);
    assert!((r.estimate.frobenius - 30.0).abs() <= 4.0 * r.estimate.frobenius_stderr);
}

#[test]
fn constant_custom_matches_efron_morris() {
    let args = |label: &'static str| ["--n", "10", "--p", "3", "--sigma", "3,0,0", "--estimator", label, "--reps", "3000"];
    let em = risk_json(&args("em"));
    let custom = risk_json(&args("custom:6,6,6"));
    assert_eq!(em.estimate.mean, custom.estimate.mean);
    assert_eq!(em.estimate.frobenius, custom.estimate.frobenius);
}

#[test]
fn risk_rejects_bad_input() {
    let o = run(&["risk", "--n", "10", "--p", "3", "--sigma", "0,0,0", "--estimator", "james"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for label in ["mle", "em", "stein", "em+", "stein+", "custom:"] {
        assert!(err.contains(label), "{err}");
    }
    let o = run(&["risk", "--n", "3", "--p", "5", "--sigma", "0,0,0,0,0", "--estimator", "mle"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["risk", "--n", "10", "--p", "3", "--sigma", "0,0", "--estimator", "mle"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["risk", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn figure_sweeps_have_expected_shape() {
    let o = run(&["sweep", "--figure", "1-left", "--reps", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_sweep_csv(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 42);
    assert!(rows.iter().all(|r| r.eigenvalues.len() == 3 && r.eigenvalue_se.len() == 3));

    let o = run(&["sweep", "--figure", "2-right", "--reps", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let header = stdout(&o).lines().next().unwrap().to_string();
    assert!(header.contains("eig1,eig2,eig3"), "{header}");
}

#[test]
fn custom_single_point_sweep() {
    let o = run(&[
        "sweep", "--n", "10", "--p", "3", "--sigma", "0,0,0", "--estimator", "em", "--grid", "0", "--reps", "500",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_sweep_csv(o.stdout.as_slice()).unwrap().len(), 1);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let o = run(&["sweep", "--figure", "1-left", "--reps", "10", "--out", "/nonexistent-dir/out.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.json");
    let o = run(&["sweep", "--figure", "3-left", "--reps", "50", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let table: SweepTable = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 42);
}

#[test]
fn appendix_ranges() {
    let o = run(&["appendix", "--p", "3", "--n", "5..10", "--reps", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_appendix_csv(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), (5..=10).collect::<Vec<_>>());

    let o = run(&["appendix", "--p", "10", "--n", "12..20", "--reps", "200", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<AppendixRow> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.largest_eigenvalue.is_some()));

    let o = run(&["appendix", "--p", "3", "--n", "9..5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_comes_from_environment() {
    let args = ["risk", "--n", "6", "--p", "2", "--sigma", "1,0", "--estimator", "stein", "--reps", "500", "--format", "json"];
    let with_env = Command::new(env!("CARGO_BIN_EXE_orthoshrink"))
        .args(args)
        .env("ORTHOSHRINK_SEED", "7")
        .output()
        .unwrap();
    let from_env: RiskRecord = serde_json::from_slice(&with_env.stdout).unwrap();
    let mut explicit_args = args.to_vec();
    explicit_args.extend(["--seed", "7"]);
    let explicit: RiskRecord = serde_json::from_slice(&run(&explicit_args).stdout).unwrap();
    assert_eq!(from_env, explicit);
    assert_eq!(explicit.estimate.seed, 7);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let base = ["sweep", "--figure", "3-right", "--reps", "300", "--format", "json"];
    let mut outputs = Vec::new();
    for threads in ["1", "2", "5"] {
        let mut args = base.to_vec();
        args.extend(["--threads", threads]);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0));
        outputs.push(o.stdout);
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(run(&["risk", "--n", "10", "--p", "3", "--sigma", "0,0,0", "--estimator", "em", "--threads", "0"]).status.code(), Some(2));
}
