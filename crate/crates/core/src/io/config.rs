use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::profiles::SynthParams;
use super::IoError;
use crate::baselines::{lcod_cost, CapitalParams};
use crate::degradation::StorageParams;
use crate::dispatch::{GenParams, LoadParams};
use crate::horizon::{DiscountModel, GridSettings, HorizonConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub capacity_mw: f64,
    pub a_g_usd_per_mw2h: f64,
    pub b_g_usd_per_mwh: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GenParams::<f64>::reference();
        Self {
            capacity_mw: g.capacity_mw,
            a_g_usd_per_mw2h: g.a,
            b_g_usd_per_mwh: g.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSection {
    pub max_reduction_mw: f64,
    pub a_l_usd_per_mw2h: f64,
    pub b_l_usd_per_mwh: f64,
}

impl Default for LoadSection {
    fn default() -> Self {
        let l = LoadParams::<f64>::reference();
        Self {
            max_reduction_mw: l.max_reduction_mw,
            a_l_usd_per_mw2h: l.a,
            b_l_usd_per_mwh: l.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageSection {
    pub power_mw: f64,
    pub energy_mwh: f64,
    pub efficiency: f64,
    pub self_discharge_per_h: f64,
    /// Life-cycle usage budget at full scale.
    pub budget_mwh: f64,
    pub calendar_mwh_per_day: f64,
    pub soh_initial: f64,
    pub soh_end: f64,
    pub impedance_end_ratio: f64,
}

impl Default for StorageSection {
    fn default() -> Self {
        let s = StorageParams::<f64>::reference();
        Self {
            power_mw: s.power_mw,
            energy_mwh: s.energy_mwh,
            efficiency: s.efficiency,
            self_discharge_per_h: s.self_discharge,
            budget_mwh: s.budget_mwh,
            calendar_mwh_per_day: s.calendar_mwh,
            soh_initial: s.soh_initial,
            soh_end: s.soh_end,
            impedance_end_ratio: s.impedance_end_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapitalSection {
    pub usd_per_kwh: f64,
    pub depreciation_ratio: f64,
    pub years: f64,
}

impl Default for CapitalSection {
    fn default() -> Self {
        let c = CapitalParams::<f64>::reference();
        Self {
            usd_per_kwh: c.usd_per_kwh,
            depreciation_ratio: c.depreciation_ratio,
            years: c.years,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscountSection {
    pub rate_per_year: f64,
}

impl Default for DiscountSection {
    fn default() -> Self {
        Self { rate_per_year: 0.07 }
    }
}

/// Horizon length and desk-scale compression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonSection {
    pub years: usize,
    /// Calendar days represented by each dispatch period (`w`).
    pub days_per_period: usize,
    /// Fraction of the full-scale usage budget available to the run.
    pub budget_scale: f64,
    pub soh_step: f64,
    pub soh_term: bool,
}

impl Default for HorizonSection {
    fn default() -> Self {
        Self {
            years: 3,
            days_per_period: 7,
            budget_scale: 0.2,
            soh_step: 1e-4,
            soh_term: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dc_usd_per_mwh: f64,
    pub cmax_usd_per_mwh: f64,
    /// End-of-life periods to try; empty means every year end.
    pub t_prime_periods: Vec<usize>,
    pub bisect_tol_usd_per_mwh: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSettings::<f64>::default();
        Self {
            dc_usd_per_mwh: g.dc,
            cmax_usd_per_mwh: g.cmax,
            t_prime_periods: Vec::new(),
            bisect_tol_usd_per_mwh: g.bisect_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Results directory, relative to the working directory.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Complete run description. Every section is optional; missing keys take
/// the reference values, and the defaults describe the desk-scale case.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorSection,
    pub load: LoadSection,
    pub storage: StorageSection,
    pub capital: CapitalSection,
    pub discount: DiscountSection,
    pub horizon: HorizonSection,
    pub grid: GridSection,
    pub synth: SynthParams,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, IoError> {
        let cfg: Self = toml::from_str(text).map_err(|e| IoError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        cfg.validate().map_err(|msg| IoError::Config {
            path: path.to_path_buf(),
            msg,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn periods_per_year(&self) -> usize {
        365 / self.horizon.days_per_period.max(1)
    }

    pub fn n_periods(&self) -> usize {
        self.horizon.years * self.periods_per_year()
    }

    pub fn gen(&self) -> GenParams<f64> {
        GenParams {
            capacity_mw: self.generator.capacity_mw,
            a: self.generator.a_g_usd_per_mw2h,
            b: self.generator.b_g_usd_per_mwh,
        }
    }

    pub fn load_params(&self) -> LoadParams<f64> {
        LoadParams {
            max_reduction_mw: self.load.max_reduction_mw,
            a: self.load.a_l_usd_per_mw2h,
            b: self.load.b_l_usd_per_mwh,
        }
    }

    /// Storage at full scale.
    pub fn storage_full(&self) -> StorageParams<f64> {
        let s = &self.storage;
        StorageParams {
            power_mw: s.power_mw,
            energy_mwh: s.energy_mwh,
            efficiency: s.efficiency,
            self_discharge: s.self_discharge_per_h,
            budget_mwh: s.budget_mwh,
            calendar_mwh: s.calendar_mwh_per_day,
            soh_initial: s.soh_initial,
            soh_end: s.soh_end,
            impedance_end_ratio: s.impedance_end_ratio,
        }
    }

    /// Storage with the budget scaled for this run.
    pub fn storage(&self) -> StorageParams<f64> {
        let mut s = self.storage_full();
        s.budget_mwh *= self.horizon.budget_scale;
        s
    }

    pub fn capital(&self) -> CapitalParams<f64> {
        CapitalParams {
            usd_per_kwh: self.capital.usd_per_kwh,
            depreciation_ratio: self.capital.depreciation_ratio,
            years: self.capital.years,
        }
    }

    pub fn discount(&self) -> DiscountModel<f64> {
        DiscountModel {
            rate: self.discount.rate_per_year,
            periods_per_year: self.periods_per_year(),
        }
    }

    pub fn horizon_config(&self) -> HorizonConfig<f64> {
        let mut cfg = HorizonConfig::new(self.storage(), self.discount(), self.horizon.days_per_period as f64);
        cfg.soh_step = self.horizon.soh_step;
        cfg.soh_term = self.horizon.soh_term;
        cfg
    }

    pub fn grid(&self) -> GridSettings<f64> {
        GridSettings {
            dc: self.grid.dc_usd_per_mwh,
            cmax: self.grid.cmax_usd_per_mwh,
            t_primes: if self.grid.t_prime_periods.is_empty() {
                None
            } else {
                Some(self.grid.t_prime_periods.clone())
            },
            bisect_tol: self.grid.bisect_tol_usd_per_mwh,
        }
    }

    /// LCOD price, amortized over the full-scale budget: compressing the
    /// horizon does not change the unit's capital cost per MWh.
    pub fn lcod(&self) -> f64 {
        lcod_cost(&self.capital(), &self.storage_full(), &self.discount())
    }

    pub fn validate(&self) -> Result<(), String> {
        let h = &self.horizon;
        if !(1..=365).contains(&h.days_per_period) {
            return Err("horizon.days_per_period must lie in 1..=365".into());
        }
        if h.years == 0 {
            return Err("horizon.years must be at least 1".into());
        }
        if !(h.budget_scale > 0.0 && h.budget_scale <= 1.0) {
            return Err("horizon.budget_scale must lie in (0, 1]".into());
        }
        if !(h.soh_step > 0.0) {
            return Err("horizon.soh_step must be positive".into());
        }
        self.storage().validate().map_err(|e| e.to_string())?;
        self.capital().validate().map_err(|e| e.to_string())?;
        let g = &self.generator;
        let l = &self.load;
        if [g.capacity_mw, g.a_g_usd_per_mw2h, l.max_reduction_mw, l.a_l_usd_per_mw2h]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err("generator and load limits and quadratic coefficients must be finite and nonnegative".into());
        }
        if !(self.discount.rate_per_year >= 0.0) {
            return Err("discount.rate_per_year must be nonnegative".into());
        }
        let gr = &self.grid;
        if !(gr.dc_usd_per_mwh > 0.0 && gr.cmax_usd_per_mwh >= 0.0 && gr.bisect_tol_usd_per_mwh > 0.0) {
            return Err("grid needs dc > 0, cmax >= 0 and bisect_tol > 0".into());
        }
        let n = self.n_periods();
        if let Some(t) = gr.t_prime_periods.iter().find(|&&t| t == 0 || t > n) {
            return Err(format!("grid.t_prime_periods entry {t} outside 1..={n}"));
        }
        self.synth.validate()
    }
}
