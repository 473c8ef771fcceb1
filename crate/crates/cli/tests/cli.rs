use bnhm_cli::commands::{FitReport, SimulationOutput, SIMULATION_COLUMNS};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DEATH: &str = "study,r_ctrl,n_ctrl,r_trt,n_trt\n\
    Heffron,3,20,4,61\nGanschow,3,54,1,54\nSpada,3,36,4,36\nGras,3,34,2,50\n";

fn bnhm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnhm"))
        .args(args)
        .env_remove("BNHM_SEED")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_dataset_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "study,r_ctrl,n_ctrl,r_trt,n_trt\na,1,10,2,20\nb,12,10,2,20\n");
    let o = bnhm(&["fit", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("line 3") && msg.contains("events <= total"), "{msg}");

    let empty = write(dir.path(), "empty.csv", "study,r_ctrl,n_ctrl,r_trt,n_trt\n");
    let msg = stderr(&bnhm(&["forest", empty.to_str().unwrap()]));
    assert!(msg.contains("at least 1 study"), "{msg}");

    let msg = stderr(&bnhm(&["fit", dir.path().join("missing.csv").to_str().unwrap()]));
    assert!(msg.contains("cannot read"), "{msg}");
}

#[test]
fn prior_flags_are_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", DEATH);
    let o = bnhm(&["fit", data.to_str().unwrap(), "--delta", "250", "--theta-prior", "0,2.82"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("mutually exclusive"));
    let o = bnhm(&["wip-sigma", "--delta", "0.5"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("delta must be > 1"));
}

#[test]
fn fit_reports_every_method_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", DEATH);
    let out = dir.path().join("fit.json");
    let o = bnhm(&[
        "fit", data.to_str().unwrap(), "--method", "mle,wip,vague", "--iter", "800", "--warmup", "400",
        "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let report: FitReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.studies, 4);
    assert_eq!(report.seed, 1);
    let methods: Vec<String> = report.results.iter().map(|r| r.method.to_string()).collect();
    assert_eq!(methods, ["wip", "vague", "mle"]);
    let vague = &report.results[1];
    assert_eq!(vague.priors.unwrap().theta_prior.sd, 100.0);
    assert_eq!(report.results[0].priors.unwrap().theta_prior.sd, 2.82);
    assert_eq!(report.results[0].diagnostics.as_ref().unwrap().draws, 1600);
    let mle = report.results[2].mle.as_ref().unwrap();
    assert!(mle.converged && mle.tau_hat <= 0.01);
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
}

#[test]
fn fit_csv_has_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", DEATH);
    let cfg = write(dir.path(), "run.json", r#"{"method": ["wip", "mle"], "iter": 600, "warmup": 300, "format": "csv"}"#);
    let o = bnhm(&["fit", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--delta", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method,point_log_or"));
    assert!(lines[1].starts_with("wip,") && lines[2].starts_with("mle,"));
}

#[test]
fn seed_comes_from_environment_unless_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", DEATH);
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_bnhm"));
        c.args(["fit", data.to_str().unwrap(), "--iter", "400", "--warmup", "200"]).args(extra);
        match env {
            Some(v) => c.env("BNHM_SEED", v),
            None => c.env_remove("BNHM_SEED"),
        };
        let report: FitReport = serde_json::from_slice(&c.output().unwrap().stdout).unwrap();
        report.seed
    };
    assert_eq!(run(None, &[]), 1);
    assert_eq!(run(Some("42"), &[]), 42);
    assert_eq!(run(Some("42"), &["--seed", "7"]), 7);
}

#[test]
fn forest_applies_correction_only_to_zero_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "z.csv", "study,r_ctrl,n_ctrl,r_trt,n_trt\nA,0,53,1,54\nB,3,36,4,36\n");
    let o = bnhm(&["forest", data.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][0], "A");
    assert_eq!(rows[0][4], "true");
    assert_eq!(rows[1][4], "false");
    let expected = (1.5f64 / 53.5).ln() - (0.5f64 / 53.5).ln();
    assert!((rows[0][1].parse::<f64>().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn simulate_rows_and_overrides() {
    let o = bnhm(&["simulate", "--k", "3", "--theta", "0", "--replications", "3", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SIMULATION_COLUMNS.join(","));
    assert_eq!(lines.len(), 4);
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(8).unwrap()).collect();
    assert_eq!(methods, ["wip", "vague", "mle"]);

    let o = bnhm(&["simulate", "--kind", "high-baseline", "--k", "2", "--theta", "-2,0", "--replications", "2", "--method", "mle"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out: SimulationOutput = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(out.reports.len(), 2);
    assert!(out.reports.iter().all(|r| r.spec.baseline_risk_range == (0.05, 0.2) && r.methods.len() == 1));

    for bad in [["--k", "4"], ["--theta", "0.7"], ["--replications", "0"]] {
        let o = bnhm(&["simulate", bad[0], bad[1]]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains("invalid override"), "{}", stderr(&o));
    }
}
