use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ringphs_cli::{Scenario, ValidationReport};

fn ringphs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringphs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
name = "small"

[model]
n_agents = 5
ring_length = 10.0
alpha = 1.0
beta = 1.0
sigma = 1.0

[sim]
dt = 0.001
n_steps = 2000
seed = 42
thinning = 100

[outputs]
artifacts = ["trajectory"]
"#;

#[test]
fn lists_builtin_scenarios() {
    let o = ringphs(&["list-scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("s1: N=20 L=501 alpha=0.1 beta=1 sigma=1 kappa=2 dt=0.001"));
    assert!(text.contains("s3: N=20 L=501 alpha=1 beta=1 sigma=1 kappa=4"));
}

#[test]
fn rejects_too_few_agents_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("n_agents = 5", "n_agents = 2"));
    let o = ringphs(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.n_agents"), "{}", stderr(&o));
}

#[test]
fn rejects_linear_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("sigma = 1.0", "sigma = 1.0\nkappa = 1.0"));
    let o = ringphs(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.kappa"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_errors_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("beta = 1.0", "beta = 1.0\nbetta = 2.0"));
    let o = ringphs(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("betta") && err.contains("line"), "{err}");
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = ringphs(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["trajectory.csv", "trajectory_wrapped.csv", "series_V_p.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let text = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed=42"));
    assert_eq!(lines.next().unwrap(), "t,q_1,q_2,q_3,q_4,q_5,p_1,p_2,p_3,p_4,p_5");
    assert_eq!(lines.count(), 21);

    let o = ringphs(&["simulate", "--config", &cfg, "--seed", "43", "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn run_writes_wrapped_trajectory_on_the_ring() {
    let dir = tempfile::tempdir().unwrap();
    let mut s1 = Scenario::builtin("s1").unwrap();
    s1.outputs.artifacts = vec![ringphs_cli::Artifact::Trajectory];
    let cfg = write_config(dir.path(), &s1.to_toml());
    let out = dir.path().join("out");
    let o = ringphs(&["run", &cfg, "--steps", "500000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("trajectory_wrapped.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 501);
    for row in &rows {
        assert_eq!(row.len(), 41);
        assert!(row[1..21].iter().all(|q| (0.0..501.0).contains(q)));
    }
}

#[test]
fn analytic_only_run_reports_stationary_variance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ringphs(&["run", "s2", "--analytic-only", "--out", out]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("\"E_Vp\": 0.83125"), "{text}");
    let limit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("limit_distribution.json")).unwrap()).unwrap();
    assert_eq!(limit["time"], "inf");
    assert_eq!(limit["dim"], 40);
    let cov = limit["covariance"].as_array().unwrap();
    // Velocity block diagonal: sigma^2 K_nn / (2 beta) = 1.6625 / 2.
    assert!((cov[20 * 40 + 20].as_f64().unwrap() - 0.83125).abs() < 1e-12);
    let report: ValidationReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation_report.json")).unwrap()).unwrap();
    assert_eq!(report.scenario, "s2");
    assert!(report.checks.iter().all(|c| c.pass));
    assert!(report.checks.iter().any(|c| c.name == "lyapunov"));
    assert!(report.checks.iter().all(|c| !c.name.starts_with("stationary")));
    let k = fs::read_to_string(dir.path().join("k_entries.csv")).unwrap();
    assert!(k.starts_with("m,k_1m\n1,1.6625\n"));
}

#[test]
fn mean_velocity_check_passes_for_quartic_potential() {
    let dir = tempfile::tempdir().unwrap();
    let o = ringphs(&["run", "s3", "--check", "mean-velocity", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS mean-velocity"));
    let report: ValidationReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation_report.json")).unwrap()).unwrap();
    assert_eq!(report.checks.len(), 1);
    assert_eq!(report.seed, 1);
}

#[test]
fn failing_check_sets_exit_status() {
    // Far too short to reach stationarity: the time average must miss the 5% band.
    let dir = tempfile::tempdir().unwrap();
    let o = ringphs(&[
        "validate",
        "--scenario",
        "s2",
        "--check",
        "stationary-variance",
        "--steps",
        "103000",
        "--replicas",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL stationary-V_p"));
}

#[test]
fn unknown_check_is_rejected() {
    let o = ringphs(&["validate", "--scenario", "s2", "--check", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown check"));
}

#[test]
fn acf_command_writes_lag_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ringphs(&["acf", "--scenario", "s2", "--steps", "200000", "--max-lag", "5", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("acf_V_p.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed="));
    assert_eq!(lines.next().unwrap(), "lag,rho");
    assert_eq!(lines.next().unwrap(), "0,1");
    assert_eq!(lines.count(), 500);
}

#[test]
fn dist_command_writes_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ringphs(&["dist", "--scenario", "s2", "--samples", "20", "--replicas", "2", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["samples"], 20);
    assert_eq!(summary["mc_samples"], 100_000);
    let hist = fs::read_to_string(dir.path().join("hist_mc.csv")).unwrap();
    assert!(hist.lines().nth(1).unwrap() == "bin_left,bin_right,count");
    let total: u64 = hist.lines().skip(2).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 100_000);
}
