use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{io_err, IoError};

pub const HOURS_PER_YEAR: usize = 8760;
pub const HOURS_PER_LEAP_YEAR: usize = 8784;
pub const PROFILE_HEADER: [&str; 2] = ["wind_mwh", "load_mw"];

/// One year of hourly wind energy and load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualProfiles {
    pub wind_mwh: Vec<f64>,
    pub load_mw: Vec<f64>,
    pub source: String,
    /// 8784 hours rather than 8760.
    pub leap: bool,
}

impl AnnualProfiles {
    pub fn hours(&self) -> usize {
        self.load_mw.len()
    }

    pub fn days(&self) -> usize {
        self.hours() / 24
    }

    /// Wind energy over wind capacity times hours.
    pub fn capacity_factor(&self, wind_capacity_mw: f64) -> f64 {
        self.wind_mwh.iter().sum::<f64>() / (wind_capacity_mw * self.wind_mwh.len() as f64)
    }

    pub fn mean_load(&self) -> f64 {
        self.load_mw.iter().sum::<f64>() / self.load_mw.len() as f64
    }

    /// Hourly slices of day `d` (0-based).
    pub fn day(&self, d: usize) -> (&[f64], &[f64]) {
        let r = d * 24..(d + 1) * 24;
        (&self.wind_mwh[r.clone()], &self.load_mw[r])
    }
}

/// Reads a two-column profile file with a `wind_mwh,load_mw` header.
///
/// Rows are reported by file line, columns from 1.
pub fn load_profiles(path: &Path) -> Result<AnnualProfiles, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let parse_err = |row: u64, col: usize, msg: String| IoError::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg,
    };
    let header = rdr.headers().map_err(|e| parse_err(1, 0, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != PROFILE_HEADER {
        return Err(parse_err(1, 0, format!("expected header {}", PROFILE_HEADER.join(","))));
    }
    let mut wind = Vec::with_capacity(HOURS_PER_YEAR);
    let mut load = Vec::with_capacity(HOURS_PER_YEAR);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            parse_err(row, 0, e.to_string())
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(row, rec.len().min(3), format!("expected 2 fields, found {}", rec.len())));
        }
        let mut vals = [0.0; 2];
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(row, col + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, col + 1, format!("not finite: {field:?}")));
            }
            if v < 0.0 {
                return Err(IoError::NegativeValue {
                    path: path.to_path_buf(),
                    row,
                    col: col + 1,
                    value: v,
                });
            }
            vals[col] = v;
        }
        wind.push(vals[0]);
        load.push(vals[1]);
    }
    let leap = match load.len() {
        HOURS_PER_YEAR => false,
        HOURS_PER_LEAP_YEAR => {
            log::warn!("load_profiles: {} has {HOURS_PER_LEAP_YEAR} rows, treated as a leap year", path.display());
            true
        }
        n => {
            return Err(IoError::LengthMismatch {
                path: path.to_path_buf(),
                expected: HOURS_PER_YEAR,
                found: n,
            })
        }
    };
    Ok(AnnualProfiles {
        wind_mwh: wind,
        load_mw: load,
        source: path.display().to_string(),
        leap,
    })
}

/// Writes profiles in the format read by [`load_profiles`], at full precision.
pub fn write_profiles(profiles: &AnnualProfiles, path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", PROFILE_HEADER.join(",")).map_err(io_err(path))?;
    for (wind, load) in profiles.wind_mwh.iter().zip(&profiles.load_mw) {
        writeln!(w, "{wind},{load}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub seed: u64,
    pub wind_capacity_factor: f64,
    pub wind_capacity_mw: f64,
    pub mean_load_mw: f64,
    /// Relative amplitude of the annual load cycle, peaking in midsummer.
    pub seasonal_amplitude: f64,
    /// Relative amplitude of the daily load cycle, peaking mid-afternoon.
    pub diurnal_amplitude: f64,
    /// Half-width of the uniform relative load noise.
    pub load_noise: f64,
    /// Hour-to-hour autocorrelation of the wind driver.
    pub wind_persistence: f64,
    /// Relative amplitude of the daily wind-speed cycle, peaking at night.
    pub wind_diurnal_amplitude: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 42,
            wind_capacity_factor: 0.63,
            wind_capacity_mw: 90.0,
            mean_load_mw: 57.0,
            seasonal_amplitude: 0.12,
            diurnal_amplitude: 0.18,
            load_noise: 0.04,
            wind_persistence: 0.95,
            wind_diurnal_amplitude: 0.2,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wind_capacity_factor > 0.0 && self.wind_capacity_factor <= 1.0) {
            return Err("wind capacity factor must lie in (0, 1]".into());
        }
        if !(self.wind_capacity_mw > 0.0 && self.mean_load_mw > 0.0) {
            return Err("wind capacity and mean load must be positive".into());
        }
        let swing = self.seasonal_amplitude + self.diurnal_amplitude + self.load_noise;
        if [self.seasonal_amplitude, self.diurnal_amplitude, self.load_noise].iter().any(|a| !(*a >= 0.0)) || swing >= 1.0 {
            return Err("load amplitudes must be nonnegative and sum below 1".into());
        }
        if !(self.wind_persistence >= 0.0 && self.wind_persistence < 1.0) {
            return Err("wind persistence must lie in [0, 1)".into());
        }
        if !(self.wind_diurnal_amplitude >= 0.0 && self.wind_diurnal_amplitude < 1.0) {
            return Err("wind diurnal amplitude must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Normalised turbine curve: cubic from cut-in to rated speed 1.
fn power_curve(v: f64) -> f64 {
    const CUT_IN: f64 = 0.3;
    if v <= CUT_IN {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        ((v - CUT_IN) / (1.0 - CUT_IN)).powi(3)
    }
}

fn mean_output(speeds: &[f64], scale: f64) -> f64 {
    speeds.iter().map(|v| power_curve(scale * v)).sum::<f64>() / speeds.len() as f64
}

/// Deterministic synthetic year.
///
/// Wind follows a lognormal AR(1) speed through a cubic power curve, with
/// the speed scale bisected to hit the capacity factor. Load is an annual
/// plus a daily sinusoid with bounded uniform noise, rescaled to the mean.
pub fn synth_profiles(params: &SynthParams) -> Result<AnnualProfiles, String> {
    params.validate()?;
    let n = HOURS_PER_YEAR;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let phi = params.wind_persistence;
    let innov = (1.0 - phi * phi).sqrt();
    let mut z: f64 = rng.sample(StandardNormal);
    let speeds: Vec<f64> = (0..n)
        .map(|h| {
            let e: f64 = rng.sample(StandardNormal);
            z = phi * z + innov * e;
            // windier in winter and at night
            let tau = 2.0 * std::f64::consts::PI;
            let season = 1.0 + 0.1 * (tau * (h as f64 / 24.0) / 365.0).cos();
            let daily = 1.0 + params.wind_diurnal_amplitude * (tau * ((h % 24) as f64 - 1.0) / 24.0).cos();
            season * daily * (0.5 * z).exp()
        })
        .collect();
    let cf = params.wind_capacity_factor;
    let wind_mwh = if cf >= 1.0 {
        vec![params.wind_capacity_mw; n]
    } else {
        let mut hi = 1.0;
        while mean_output(&speeds, hi) < cf {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_output(&speeds, mid) < cf {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        let scale = 0.5 * (lo + hi);
        speeds.iter().map(|v| params.wind_capacity_mw * power_curve(scale * v)).collect()
    };

    let tau = 2.0 * std::f64::consts::PI;
    let shape: Vec<f64> = (0..n)
        .map(|h| {
            let day = (h / 24) as f64;
            let hour = (h % 24) as f64;
            let seasonal = params.seasonal_amplitude * (tau * (day - 196.0) / 365.0).cos();
            let diurnal = -params.diurnal_amplitude * (tau * (hour - 4.0) / 24.0).cos();
            let noise = params.load_noise * rng.random_range(-1.0..=1.0);
            1.0 + seasonal + diurnal + noise
        })
        .collect();
    let mean_shape = shape.iter().sum::<f64>() / n as f64;
    let load_mw = shape.iter().map(|s| params.mean_load_mw * s / mean_shape).collect();
    Ok(AnnualProfiles {
        wind_mwh,
        load_mw,
        source: format!("synthetic seed {}", params.seed),
        leap: false,
    })
}
