use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dispatch-mcd"));
    c.env_remove("DISPATCH_MCD_WORKDIR");
    c
}

fn run(args: &[&str], workdir: &Path) -> Output {
    bin().args(args).env("DISPATCH_MCD_WORKDIR", workdir).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Five 73-day periods in one year.
const SMALL: &str = "[horizon]\nyears = 1\ndays_per_period = 73\nbudget_scale = 0.02\n";

#[test]
fn dispatch_writes_one_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dispatch", "--synth", "--c-usd-per-mwh", "10", "--out", "d"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("d/dispatch.csv")).unwrap();
    assert!(text.starts_with("hour,gen_mw,reduction_mw,discharge_mw,charge_mw,energy_start_mwh\n"));
    assert_eq!(text.lines().count(), 25);
    assert!(dir.path().join("d/manifest.json").exists());
    assert!(o.stdout.is_empty());
}

#[test]
fn capped_dispatch_on_given_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("wind_mwh,load_mw\n");
    for h in 0..8760 {
        body.push_str(&format!("{},{}\n", if h % 24 < 6 { 70 } else { 20 }, 40 + (h % 24)));
    }
    std::fs::write(dir.path().join("year.csv"), body).unwrap();
    let o = run(
        &["dispatch", "--profiles", "year.csv", "--u-mwh", "400", "--period", "3", "--soh", "0.9", "--out", "d"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("d/dispatch_summary.json")).unwrap();
    assert!(summary.contains("cap_dual_usd_per_mwh"));
}

#[test]
fn scarce_budget_without_price_room_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("scarce.toml"), "[horizon]\nbudget_scale = 0.05\ndays_per_period = 73\n").unwrap();
    let o = run(&["optimize", "--config", "scarce.toml", "--cmax", "0", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("NoFeasibleCandidate"), "{err}");
    assert!(err.contains("optimize_mcd"), "{err}");
}

#[test]
fn optimize_writes_schedule() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let o = run(&["optimize", "--config", "small.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("o/schedule.csv")).unwrap();
    assert!(text.starts_with("t,year,c_t,H_t,u_t,F_t\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn sweep_bg_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let o = run(
        &["sweep-bg", "--config", "small.toml", "--values", "20,30,40,50", "--jobs", "2", "--out", "s"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("s/sweep_bg.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "b_g_usd_per_mwh,c1_usd_per_mwh,terminal_usd_per_mwh,end_of_life");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("20,"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["dispatch", "--u-mwh", "100", "--c-usd-per-mwh", "5"],
        vec!["dispatch"],
        vec!["optimize", "--profiles", "p.csv", "--synth"],
        vec!["optimize", "--dc", "0"],
        vec!["optimize", "--jobs", "0"],
        vec!["dispatch", "--c-usd-per-mwh", "5", "--period", "999"],
        vec!["dispatch", "--c-usd-per-mwh", "5", "--soh", "1.5"],
        vec!["frobnicate"],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    std::fs::write(dir.path().join("bad.toml"), "[generator]\nb = 3\n").unwrap();
    let o = run(&["optimize", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("RunConfig"));
}

#[test]
fn missing_profiles_name_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dispatch", "--profiles", "absent.csv", "--c-usd-per-mwh", "5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.csv"));
}

#[test]
fn workdir_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["dispatch", "--c-usd-per-mwh", "5", "--out", "d", "--workdir"])
        .arg(flag_dir.path())
        .env("DISPATCH_MCD_WORKDIR", env_dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(flag_dir.path().join("d/dispatch.csv").exists());
    assert!(!env_dir.path().join("d").exists());
}

#[test]
fn validate_passes_on_reference_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--out", "v"], dir.path());
    let err = stderr(&o);
    assert_eq!(o.status.code(), Some(0), "{err}");
    assert!(err.contains("PASS qp::kkt_on_random_instances"));
    assert!(err.contains("0 failed"));
    let json = std::fs::read_to_string(dir.path().join("v/validation.json")).unwrap();
    assert!(json.contains("\"passed\": true"));
}
