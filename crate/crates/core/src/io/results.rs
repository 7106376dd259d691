use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{io_err, IoError};
use crate::baselines::Comparison;
use crate::dispatch::DispatchSolution;
use crate::horizon::{DiscountModel, HorizonResult, McdSchedule};

pub const SCHEDULE_HEADER: [&str; 6] = ["t", "year", "c_t", "H_t", "u_t", "F_t"];

/// One period of a schedule or policy trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub t: usize,
    /// Calendar year, from 1.
    pub year: usize,
    /// Price ($/MWh); NaN where none applies.
    pub c_t: f64,
    /// SOH at the start of the period.
    pub h_t: f64,
    /// Usage including calendar loss (MWh).
    pub u_t: f64,
    /// System cost ($).
    pub f_t: f64,
}

pub fn schedule_rows(s: &McdSchedule<f64>, discount: &DiscountModel<f64>) -> Vec<ScheduleRow> {
    (1..=s.end_of_life)
        .map(|t| ScheduleRow {
            t,
            year: discount.year(t) + 1,
            c_t: s.mcd[t - 1],
            h_t: s.soh[t - 1],
            u_t: s.usage[t - 1],
            f_t: s.cost[t - 1],
        })
        .collect()
}

pub fn result_rows(r: &HorizonResult<f64>, discount: &DiscountModel<f64>) -> Vec<ScheduleRow> {
    (1..=r.cost.len())
        .map(|t| ScheduleRow {
            t,
            year: discount.year(t) + 1,
            c_t: r.mcd[t - 1],
            h_t: r.soh[t - 1],
            u_t: r.usage[t - 1],
            f_t: r.cost[t - 1],
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Writes rows with shortest round-trip float formatting.
pub fn write_schedule(rows: &[ScheduleRow], path: &Path) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let e = io_err(path);
    writeln!(w, "{}", SCHEDULE_HEADER.join(",")).map_err(&e)?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.t, r.year, r.c_t, r.h_t, r.u_t, r.f_t).map_err(&e)?;
    }
    w.flush().map_err(e)
}

pub fn read_schedule(path: &Path) -> Result<Vec<ScheduleRow>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |row: u64, col: usize, msg: String| IoError::Parse {
        path: path.to_path_buf(),
        row,
        col,
        msg,
    };
    let header = rdr.headers().map_err(|e| parse_err(1, 0, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != SCHEDULE_HEADER {
        return Err(parse_err(1, 0, format!("expected header {}", SCHEDULE_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |col: usize| -> Result<f64, IoError> {
            let f = rec.get(col).ok_or_else(|| parse_err(line, col + 1, "missing field".into()))?;
            f.parse().map_err(|_| parse_err(line, col + 1, format!("not a number: {f:?}")))
        };
        let int = |col: usize| -> Result<usize, IoError> {
            let f = rec.get(col).ok_or_else(|| parse_err(line, col + 1, "missing field".into()))?;
            f.parse().map_err(|_| parse_err(line, col + 1, format!("not an integer: {f:?}")))
        };
        rows.push(ScheduleRow {
            t: int(0)?,
            year: int(1)?,
            c_t: num(2)?,
            h_t: num(3)?,
            u_t: num(4)?,
            f_t: num(5)?,
        });
    }
    Ok(rows)
}

pub fn write_dispatch(sol: &DispatchSolution<f64>, path: &Path) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let e = io_err(path);
    writeln!(w, "hour,gen_mw,reduction_mw,discharge_mw,charge_mw,energy_start_mwh").map_err(&e)?;
    for h in 0..sol.gen_mw.len() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            h, sol.gen_mw[h], sol.reduction_mw[h], sol.discharge_mw[h], sol.charge_mw[h], sol.energy_mwh[h]
        )
        .map_err(&e)?;
    }
    w.flush().map_err(e)
}

/// First-year MCD at one generator marginal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepBgRow {
    pub b_g_usd_per_mwh: f64,
    pub c1_usd_per_mwh: f64,
    pub terminal_usd_per_mwh: f64,
    pub end_of_life: usize,
}

pub fn write_sweep_bg(rows: &[SweepBgRow], path: &Path) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let e = io_err(path);
    writeln!(w, "b_g_usd_per_mwh,c1_usd_per_mwh,terminal_usd_per_mwh,end_of_life").map_err(&e)?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.b_g_usd_per_mwh, r.c1_usd_per_mwh, r.terminal_usd_per_mwh, r.end_of_life).map_err(&e)?;
    }
    w.flush().map_err(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub seed: u64,
    pub profiles: String,
    pub config: RunConfig,
    pub files: Vec<PathBuf>,
}

/// What a command produced; absent parts are not written.
#[derive(Debug, Default)]
pub struct ResultSet<'a> {
    pub schedule: Option<&'a McdSchedule<f64>>,
    pub comparison: Option<&'a Comparison<f64>>,
    pub dispatch: Option<&'a DispatchSolution<f64>>,
    pub sweep_bg: Option<&'a [SweepBgRow]>,
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Config {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes the tables of `set` and a `manifest.json` under `dir`; returns
/// the paths written.
pub fn write_results(
    set: &ResultSet<'_>,
    config: &RunConfig,
    command: &str,
    profiles: &str,
    dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    let discount = config.discount();
    let mut files = Vec::new();
    if let Some(s) = set.schedule {
        let p = dir.join("schedule.csv");
        write_schedule(&schedule_rows(s, &discount), &p)?;
        files.push(p);
    }
    if let Some(c) = set.comparison {
        for r in &c.results {
            let p = dir.join(format!("policy_{}.csv", r.label));
            write_schedule(&result_rows(r, &discount), &p)?;
            files.push(p);
        }
        let p = dir.join("summary.json");
        let summary = serde_json::json!({
            "baseline_usd": c.baseline,
            "lcod_usd_per_mwh": c.lcod,
            "terminal_usd_per_mwh": c.optimal.terminal,
            "end_of_life": c.optimal.end_of_life,
            "policies": c.outcomes,
        });
        write_json(&summary, &p)?;
        files.push(p);
    }
    if let Some(d) = set.dispatch {
        let p = dir.join("dispatch.csv");
        write_dispatch(d, &p)?;
        files.push(p);
        let p = dir.join("dispatch_summary.json");
        let summary = serde_json::json!({
            "system_cost_usd": d.system_cost,
            "usage_cost_usd": d.usage_cost,
            "usage_mwh": d.usage_mwh,
            "cap_dual_usd_per_mwh": d.cap_dual,
            "iterations": d.iterations,
        });
        write_json(&summary, &p)?;
        files.push(p);
    }
    if let Some(rows) = set.sweep_bg {
        let p = dir.join("sweep_bg.csv");
        write_sweep_bg(rows, &p)?;
        files.push(p);
    }
    let manifest = Manifest {
        command: command.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.synth.seed,
        profiles: profiles.to_string(),
        config: config.clone(),
        files: files.clone(),
    };
    let p = dir.join("manifest.json");
    write_json(&manifest, &p)?;
    files.push(p);
    Ok(files)
}
