use std::path::Path;
use std::process::{Command, Output};

use prevci::report::RunReport;
use prevci::simlab::read_metrics_file;
use prevci::Method;

fn prevci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prevci")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn clopper_pearson_json() {
    let o = prevci(&["ci", "--x", "0", "--n", "10", "--method", "cp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = RunReport::from_json(stdout(&o).trim()).unwrap();
    assert_eq!(r.method, Method::ClopperPearson);
    assert_eq!(r.lower, 0.0);
    assert!((r.upper - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-12);
    assert_eq!(r.seed, None);
}

#[test]
fn text_format_lines() {
    let o = prevci(&["ci", "--x", "0", "--n", "10", "--method", "cp", "--method", "wspoisson", "--format", "text"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], "Clopper-Pearson: estimate 0.00% (apparent 0.00%), 95% CI (0.00%, 30.85%)");
    assert!(lines[1].starts_with("wsPoisson: "));
}

#[test]
fn stratum_file_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.csv", "stratum,weight,n,x\na,0.2,50,1\nb,0.3,80,0\nc,0.5,40,3\n");
    let mut args = vec![
        "ci", "--stratum-file", &f, "--spec-x", "2", "--spec-n", "300", "--sens-x", "55", "--sens-n", "60", "--seed", "3",
        "--mc", "4000",
    ];
    for m in ["wspoisson", "dpac", "kg", "wprev-poisson", "wprev-binomial"] {
        args.extend(["--method", m]);
    }
    let o = prevci(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let reports: Vec<RunReport> = stdout(&o).lines().map(|l| RunReport::from_json(l).unwrap()).collect();
    assert_eq!(reports.len(), 5);
    for r in &reports {
        assert!(0.0 <= r.lower && r.lower <= r.upper && r.upper <= 1.0, "{r:?}");
        assert_eq!(r.schema_version, 1);
        assert_eq!(r.input_digest, reports[0].input_digest);
    }
    assert_eq!(reports[3].mc_samples, Some(4000));
    assert_eq!(reports[3].seed, Some(3));
}

#[test]
fn individual_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "i.csv", "weight,positive\n1.5,1\n2.0,0\n0.5,0\n3.0,0\n");
    let o = prevci(&["ci", "--individual-file", &f, "--method", "wspoisson"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = RunReport::from_json(stdout(&o).trim()).unwrap();
    assert!((r.estimate.apparent - 1.5 / 7.0).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["ci", "--x", "3", "--n", "10"],
        vec!["ci", "--x", "3", "--n", "10", "--method", "nope"],
        vec!["ci", "--x", "11", "--n", "10", "--method", "cp"],
        vec!["ci", "--x", "1", "--n", "10", "--method", "meld-srs", "--spec-x", "1", "--spec-n", "10", "--sens-x", "9", "--sens-n", "10"],
        vec!["ci", "--x", "1", "--n", "10", "--method", "cp", "--alpha", "1.5"],
        vec!["bogus"],
    ] {
        let o = prevci(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn srs_method_on_strata_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.csv", "stratum,weight,n,x\na,0.5,50,1\nb,0.5,80,0\n");
    let o = prevci(&["ci", "--stratum-file", &f, "--method", "cp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("requires a simple random sample"), "{}", stderr(&o));
}

#[test]
fn parse_errors_report_line() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.csv", "stratum,weight,n,x\na,0.5,50,1\nb,0.5,eighty,0\n");
    let o = prevci(&["ci", "--stratum-file", &f, "--method", "kg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_exits_four() {
    let o = prevci(&["ci", "--stratum-file", "/nonexistent/strata.csv", "--method", "kg"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

const SMALL_SCENARIO: &str = r#"{
  "prevalence": 0.02, "layout": {"n_strata": 4, "stratum_size": 50}, "cv_target": 1.0,
  "nonzero_fraction": 0.5, "placement": "uniform", "sensitivity": 0.9, "specificity": 0.97,
  "m_p": 40, "m_n": 100, "replicates": 40, "seed": 11, "mc_samples": 1000,
  "methods": ["wspoisson", "kg", "wprev-binomial"]
}"#;

#[test]
fn simulate_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "s.json", SMALL_SCENARIO);
    let out = dir.path().join("m.csv");
    let o = prevci(&["simulate", "--scenario", &scen, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_metrics_file(&out).unwrap();
    assert_eq!(rows.iter().map(|r| r.method).collect::<Vec<_>>(), vec![Method::WsPoisson, Method::Kg, Method::WprevBinomial]);
    for r in &rows {
        assert_eq!(r.seed, 11);
        assert!((0.0..=1.0).contains(&r.coverage));
        assert!((r.coverage + r.lower_error + r.upper_error - 1.0).abs() < 1e-12);
    }
    let header = std::fs::read_to_string(&out).unwrap();
    assert!(header.starts_with("cv_actual,method,coverage,lower_error,upper_error,mean_width,mc_se,seed\n"));
}

#[test]
fn simulate_method_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "s.json", SMALL_SCENARIO);
    let out = dir.path().join("m.csv");
    let o = prevci(&["simulate", "--scenario", &scen, "--out", out.to_str().unwrap(), "--method", "dpac"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_metrics_file(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].method, Method::Dpac);
}

#[test]
fn infeasible_weight_cv_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(
        dir.path(),
        "s.json",
        r#"{"prevalence": 0.01, "layout": {"n_strata": 2, "stratum_size": 50}, "cv_target": 3.0,
            "nonzero_fraction": 1.0, "placement": "highest", "sensitivity": 1.0, "specificity": 1.0,
            "m_p": 10, "m_n": 10, "seed": 1, "methods": ["kg"]}"#,
    );
    let out = dir.path().join("m.csv");
    let o = prevci(&["simulate", "--scenario", &scen, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_scenario_field_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_SCENARIO.replace("\"seed\": 11", "\"seed\": 11, \"colour\": 1");
    let scen = write(dir.path(), "s.json", &body);
    let out = dir.path().join("m.csv");
    let o = prevci(&["simulate", "--scenario", &scen, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "s.json", SMALL_SCENARIO);
    let o = prevci(&["simulate", "--scenario", &scen, "--out", "/nonexistent/dir/m.csv"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn seeded_ci_is_reproducible() {
    let args = [
        "ci", "--x", "4", "--n", "90", "--spec-x", "1", "--spec-n", "150", "--sens-x", "28", "--sens-n", "30", "--method",
        "meld-srs", "--seed", "8", "--mc", "3000",
    ];
    assert_eq!(prevci(&args).stdout, prevci(&args).stdout);
    let mut other = args;
    other[14] = "9";
    assert_ne!(prevci(&args).stdout, prevci(&other).stdout);
}
