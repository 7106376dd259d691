use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::profiles::{synth_profiles, AnnualProfiles};
use super::IoError;
use crate::dispatch::DayProfile;
use crate::horizon::{GridSettings, HorizonConfig, Period};

/// Everything a life-cycle run needs, built from a config and a profile year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub horizon: HorizonConfig<f64>,
    pub periods: Vec<Period<f64>>,
    pub grid: GridSettings<f64>,
    pub lcod: f64,
}

/// Day of the year standing in for period `j` (0-based within the year):
/// the middle day of its block of `w` days.
pub fn representative_day(j: usize, w: usize) -> usize {
    w * j + w / 2
}

/// Dispatch periods for the whole horizon. Every year reuses the same
/// profile year; period `j` of a year takes the profile day
/// [`representative_day`].
pub fn build_periods(cfg: &RunConfig, profiles: &AnnualProfiles) -> Result<Vec<Period<f64>>, IoError> {
    let w = cfg.horizon.days_per_period;
    let p = cfg.periods_per_year();
    let last = representative_day(p - 1, w);
    if last >= profiles.days() {
        return Err(IoError::Scenario(format!(
            "representative day {last} beyond the {} profile days",
            profiles.days()
        )));
    }
    let gen = cfg.gen();
    let load = cfg.load_params();
    let year: Vec<Period<f64>> = (0..p)
        .map(|j| {
            let (wind, demand) = profiles.day(representative_day(j, w));
            let day = DayProfile::new(wind.to_vec(), demand.to_vec()).map_err(|e| IoError::Scenario(e.to_string()))?;
            Ok(Period { gen, load, day })
        })
        .collect::<Result<_, IoError>>()?;
    Ok(year.iter().cycle().take(cfg.n_periods()).cloned().collect())
}

pub fn build_scenario(cfg: &RunConfig, profiles: &AnnualProfiles) -> Result<Scenario, IoError> {
    cfg.validate().map_err(IoError::Scenario)?;
    Ok(Scenario {
        horizon: cfg.horizon_config(),
        periods: build_periods(cfg, profiles)?,
        grid: cfg.grid(),
        lcod: cfg.lcod(),
    })
}

/// Synthetic profiles from the config's seed, then [`build_scenario`].
pub fn synth_scenario(cfg: &RunConfig) -> Result<(Scenario, AnnualProfiles), IoError> {
    let profiles = synth_profiles(&cfg.synth).map_err(IoError::Scenario)?;
    Ok((build_scenario(cfg, &profiles)?, profiles))
}

/// Reference desk-scale run: three years of weekly periods with a fifth of
/// the usage budget and synthetic profiles.
pub fn desk_scale() -> RunConfig {
    RunConfig::default()
}
