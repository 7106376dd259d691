use std::io::Write;
use std::path::Path;

use approx::assert_relative_eq;

use super::*;
use crate::horizon::{evaluate_schedule, optimize_mcd, GridSettings, Policy};

fn write_file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    let mut f = std::fs::File::create(&p).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    p
}

fn rows(n: usize) -> String {
    let mut s = String::from("wind_mwh,load_mw\n");
    for h in 0..n {
        s.push_str(&format!("{},{}\n", (h % 90) as f64 * 0.5, 50.0 + (h % 24) as f64));
    }
    s
}

#[test]
fn loads_well_formed_year() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(dir.path(), "p.csv", &rows(HOURS_PER_YEAR));
    let prof = load_profiles(&p).unwrap();
    assert_eq!(prof.hours(), HOURS_PER_YEAR);
    assert!(!prof.leap);
    assert_eq!(prof.load_mw[1], 51.0);
    assert_eq!(prof.day(1).1[0], 50.0);
}

#[test]
fn leap_year_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(dir.path(), "p.csv", &rows(HOURS_PER_LEAP_YEAR));
    assert!(load_profiles(&p).unwrap().leap);
}

#[test]
fn wrong_length_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(dir.path(), "p.csv", &rows(HOURS_PER_YEAR + 1));
    match load_profiles(&p) {
        Err(IoError::LengthMismatch { expected, found, .. }) => {
            assert_eq!((expected, found), (HOURS_PER_YEAR, HOURS_PER_YEAR + 1));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn negative_load_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = rows(HOURS_PER_YEAR);
    body = body.replacen("\n1,52\n", "\n1,-3\n", 1);
    assert!(body.contains("1,-3"));
    let p = write_file(dir.path(), "p.csv", &body);
    match load_profiles(&p) {
        Err(IoError::NegativeValue { row, col, value, .. }) => {
            assert_eq!((row, col, value), (4, 2, -3.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_field_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let body = rows(10).replacen("\n0.5,51\n", "\n0.5,abc\n", 1);
    let p = write_file(dir.path(), "p.csv", &body);
    match load_profiles(&p) {
        Err(IoError::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
        other => panic!("{other:?}"),
    }
    let p = write_file(dir.path(), "h.csv", "load,wind\n1,2\n");
    assert!(matches!(load_profiles(&p), Err(IoError::Parse { row: 1, .. })));
    assert!(matches!(load_profiles(&dir.path().join("missing.csv")), Err(IoError::Io { .. })));
}

#[test]
fn synthetic_year_hits_targets() {
    let params = SynthParams::default();
    let prof = synth_profiles(&params).unwrap();
    assert_eq!(prof.hours(), HOURS_PER_YEAR);
    let cf = prof.capacity_factor(90.0);
    assert!((0.62..=0.64).contains(&cf), "{cf}");
    let mean = prof.mean_load();
    assert!((56.4..=57.6).contains(&mean), "{mean}");
    assert!(prof.wind_mwh.iter().all(|w| (0.0..=90.0).contains(w)));
    assert!(prof.load_mw.iter().all(|l| *l > 0.0));
    // afternoon load exceeds early-morning load on average
    let hour_mean = |h: usize| (0..365).map(|d| prof.load_mw[24 * d + h]).sum::<f64>() / 365.0;
    assert!(hour_mean(16) > hour_mean(4));
}

#[test]
fn synthetic_year_is_deterministic() {
    let params = SynthParams::default();
    let a = synth_profiles(&params).unwrap();
    let b = synth_profiles(&params).unwrap();
    assert_eq!(a, b);
    let other = synth_profiles(&SynthParams { seed: 7, ..params }).unwrap();
    assert_ne!(a.wind_mwh, other.wind_mwh);
}

#[test]
fn full_capacity_factor_gives_constant_wind() {
    let params = SynthParams {
        wind_capacity_factor: 1.0,
        ..Default::default()
    };
    let prof = synth_profiles(&params).unwrap();
    assert!(prof.wind_mwh.iter().all(|w| *w == 90.0));
}

#[test]
fn synth_rejects_bad_parameters() {
    for p in [
        SynthParams {
            wind_capacity_factor: 0.0,
            ..Default::default()
        },
        SynthParams {
            mean_load_mw: -1.0,
            ..Default::default()
        },
        SynthParams {
            diurnal_amplitude: 0.9,
            ..Default::default()
        },
    ] {
        assert!(synth_profiles(&p).is_err());
    }
}

#[test]
fn profile_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let prof = synth_profiles(&SynthParams::default()).unwrap();
    let p = dir.path().join("synth.csv");
    write_profiles(&prof, &p).unwrap();
    let back = load_profiles(&p).unwrap();
    assert_eq!(back.wind_mwh, prof.wind_mwh);
    assert_eq!(back.load_mw, prof.load_mw);
}

#[test]
fn config_defaults_describe_desk_scale() {
    let cfg = desk_scale();
    assert_eq!(cfg.periods_per_year(), 52);
    assert_eq!(cfg.n_periods(), 156);
    assert_relative_eq!(cfg.storage().budget_mwh, 240_000.0);
    assert_relative_eq!(cfg.horizon_config().period_calendar(), 350.0);
    assert!((cfg.lcod() - 16.47).abs() <= 0.01);
    assert_eq!(representative_day(0, 7), 3);
    assert_eq!(representative_day(51, 7), 360);
}

#[test]
fn config_toml_round_trip_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[generator]\nb_g_usd_per_mwh = 45.0\n\n[horizon]\nyears = 2\n\n[grid]\nt_prime_periods = [52, 104]\n";
    let p = write_file(dir.path(), "run.toml", text);
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!(cfg.gen().b, 45.0);
    assert_eq!(cfg.n_periods(), 104);
    assert_eq!(cfg.grid().t_primes, Some(vec![52, 104]));
    assert_eq!(cfg.storage, StorageSection::default());
    let again = RunConfig::from_toml_str(&cfg.to_toml_string(), &p).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    let p = Path::new("x.toml");
    assert!(matches!(RunConfig::from_toml_str("[generator]\nb = 3\n", p), Err(IoError::Config { .. })));
    assert!(RunConfig::from_toml_str("[horizon]\ndays_per_period = 0\n", p).is_err());
    assert!(RunConfig::from_toml_str("[horizon]\nbudget_scale = 1.5\n", p).is_err());
    assert!(RunConfig::from_toml_str("[grid]\nt_prime_periods = [400]\n", p).is_err());
    assert!(RunConfig::from_toml_str("[storage]\nsoh_end = 1.2\n", p).is_err());
}

#[test]
fn periods_cycle_the_profile_year() {
    let cfg = desk_scale();
    let prof = synth_profiles(&cfg.synth).unwrap();
    let periods = build_periods(&cfg, &prof).unwrap();
    assert_eq!(periods.len(), 156);
    assert_eq!(periods[0].day.load_mw.as_slice(), prof.day(3).1);
    assert_eq!(periods[52].day, periods[0].day);
    assert_eq!(periods[155].day.wind_mwh.as_slice(), prof.day(360).0);
}

fn small_run() -> (RunConfig, Scenario) {
    let mut cfg = desk_scale();
    cfg.horizon.days_per_period = 73;
    cfg.horizon.years = 1;
    cfg.horizon.budget_scale = 0.02;
    let (sc, _) = synth_scenario(&cfg).unwrap();
    (cfg, sc)
}

#[test]
fn schedule_round_trip_reproduces_cost() {
    let (cfg, sc) = small_run();
    let grid = GridSettings {
        t_primes: Some(vec![sc.periods.len()]),
        ..sc.grid.clone()
    };
    let opt = optimize_mcd(&sc.horizon, &sc.periods, &grid).unwrap();
    let y0 = evaluate_schedule(&sc.horizon, &sc.periods, &opt.usage_policy(), "u").unwrap().y;
    let dir = tempfile::tempdir().unwrap();
    let files = write_results(
        &ResultSet {
            schedule: Some(&opt),
            ..Default::default()
        },
        &cfg,
        "optimize",
        "synthetic",
        dir.path(),
    )
    .unwrap();
    assert!(files.iter().any(|f| f.ends_with("manifest.json")));
    let rows = read_schedule(&dir.path().join("schedule.csv")).unwrap();
    assert_eq!(rows.len(), opt.end_of_life);
    assert_eq!(rows[0].t, 1);
    assert_eq!(rows[0].year, 1);
    let usage: Vec<f64> = rows.iter().map(|r| r.u_t).collect();
    assert_eq!(usage, opt.usage);
    let y1 = evaluate_schedule(&sc.horizon, &sc.periods, &Policy::Usage(usage), "u").unwrap().y;
    assert!((y1 - y0).abs() <= 1e-9 * y0.abs());
    let text = std::fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert!(text.starts_with("t,year,c_t,H_t,u_t,F_t\n"));
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.seed, 42);
}

#[test]
fn schedule_reader_rejects_bad_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_file(dir.path(), "s.csv", "t,c\n1,2\n");
    assert!(matches!(read_schedule(&p), Err(IoError::Parse { row: 1, .. })));
}
