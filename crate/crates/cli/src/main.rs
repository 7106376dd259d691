use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use mcd_core::baselines::compare_policies;
use mcd_core::dispatch::{solve_dispatch, DispatchInstance, Mode};
use mcd_core::horizon::{optimize_mcd, HorizonError};
use mcd_core::io::{
    build_scenario, load_profiles, synth_profiles, write_results, AnnualProfiles, ResultSet, RunConfig, Scenario,
    SweepBgRow,
};
use mcd_core::validation::run_suite;

/// Marginal degradation cost dispatch experiments.
#[derive(Debug, Parser)]
#[command(name = "dispatch-mcd", version)]
struct Cli {
    /// Root for relative paths.
    #[arg(long, global = true, env = "DISPATCH_MCD_WORKDIR")]
    workdir: Option<PathBuf>,
    /// Worker threads for the price grid (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log debug output to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dispatch one period with a usage cap or a usage price.
    Dispatch {
        #[command(flatten)]
        common: Common,
        /// Usage cap including calendar loss (MWh).
        #[arg(long, conflicts_with = "c_usd_per_mwh", required_unless_present = "c_usd_per_mwh")]
        u_mwh: Option<f64>,
        /// Price on usage ($/MWh).
        #[arg(long)]
        c_usd_per_mwh: Option<f64>,
        /// Period of the horizon to dispatch, from 1.
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// State of health (default: initial).
        #[arg(long)]
        soh: Option<f64>,
    },
    /// Optimal degradation-cost schedule.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Optimal schedule against LCOD, no-SOH-term and zero-cost pricing.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// First-period price against the generator's marginal cost.
    SweepBg {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Generator marginal costs b_G ($/MWh).
        #[arg(long, value_delimiter = ',', default_value = "20,30,40,50")]
        values: Vec<f64>,
    },
    /// Run the invariant and oracle suite.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML); reference values when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hourly profile CSV with columns wind_mwh,load_mw.
    #[arg(long, conflicts_with = "synth")]
    profiles: Option<PathBuf>,
    /// Use synthetic profiles from the configured seed (default).
    #[arg(long)]
    synth: bool,
    /// Results directory (default: the config's output dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic profiles.
    #[arg(long)]
    seed: Option<u64>,
    /// Calendar days per dispatch period.
    #[arg(long)]
    compress: Option<usize>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Terminal price step ($/MWh).
    #[arg(long)]
    dc: Option<f64>,
    /// Terminal price ceiling ($/MWh).
    #[arg(long)]
    cmax: Option<f64>,
    /// End-of-life periods to try (default: every year end).
    #[arg(long, value_delimiter = ',')]
    t_prime: Option<Vec<usize>>,
}

/// Bad invocation, as opposed to a failed run.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Run {
    cfg: RunConfig,
    profiles: AnnualProfiles,
    source: String,
    out: PathBuf,
}

fn resolve(workdir: &Option<PathBuf>, p: &Path) -> PathBuf {
    match workdir {
        Some(w) if p.is_relative() => w.join(p),
        _ => p.to_path_buf(),
    }
}

fn load_config(cli: &Cli, common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(&resolve(&cli.workdir, p)).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.synth.seed = seed;
    }
    if let Some(w) = common.compress {
        cfg.horizon.days_per_period = w;
    }
    Ok(cfg)
}

fn apply_grid(cfg: &mut RunConfig, grid: &GridArgs) {
    if let Some(dc) = grid.dc {
        cfg.grid.dc_usd_per_mwh = dc;
    }
    if let Some(cmax) = grid.cmax {
        cfg.grid.cmax_usd_per_mwh = cmax;
    }
    if let Some(t) = &grid.t_prime {
        cfg.grid.t_prime_periods = t.clone();
    }
}

fn prepare(cli: &Cli, common: &Common, grid: Option<&GridArgs>) -> anyhow::Result<Run> {
    let mut cfg = load_config(cli, common)?;
    if let Some(g) = grid {
        apply_grid(&mut cfg, g);
    }
    cfg.validate().map_err(|e| usage(format!("RunConfig: {e}")))?;
    let (profiles, source) = match &common.profiles {
        Some(p) => {
            let path = resolve(&cli.workdir, p);
            let prof = load_profiles(&path)?;
            (prof, path.display().to_string())
        }
        None => {
            info!("synthetic profiles, seed {}", cfg.synth.seed);
            let prof = synth_profiles(&cfg.synth).map_err(|e| anyhow!("synth_profiles: {e}"))?;
            (prof, format!("synthetic seed {}", cfg.synth.seed))
        }
    };
    let out = resolve(&cli.workdir, common.out.as_deref().unwrap_or(&cfg.output.dir));
    Ok(Run {
        cfg,
        profiles,
        source,
        out,
    })
}

fn scenario(run: &Run) -> anyhow::Result<Scenario> {
    Ok(build_scenario(&run.cfg, &run.profiles)?)
}

fn finish(run: &Run, set: &ResultSet<'_>, command: &str) -> anyhow::Result<()> {
    let files = write_results(set, &run.cfg, command, &run.source, &run.out)?;
    for f in &files {
        info!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli, common: &Common, u: Option<f64>, c: Option<f64>, period: usize, soh: Option<f64>) -> anyhow::Result<()> {
    let mode = match (u, c) {
        (Some(u), None) if u >= 0.0 => Mode::ConstrainedUsage(u),
        (None, Some(c)) if c >= 0.0 => Mode::DegradationCost(c),
        _ => return Err(usage("need exactly one of --u-mwh or --c-usd-per-mwh, nonnegative")),
    };
    let run = prepare(cli, common, None)?;
    let sc = scenario(&run)?;
    if period == 0 || period > sc.periods.len() {
        return Err(usage(format!("--period must lie in 1..={}", sc.periods.len())));
    }
    let storage = run.cfg.storage();
    let mut state = storage.initial_state();
    if let Some(h) = soh {
        if !(h >= storage.soh_end && h <= storage.soh_initial) {
            return Err(usage(format!("--soh must lie in [{}, {}]", storage.soh_end, storage.soh_initial)));
        }
        state.soh = h;
    }
    let p = &sc.periods[period - 1];
    let inst = DispatchInstance {
        gen: p.gen,
        load: p.load,
        storage,
        day: p.day.clone(),
        soh: state,
        mode,
    };
    let sol = solve_dispatch(&inst)?;
    info!(
        "period {period}: system cost {:.2} $, usage {:.3} MWh",
        sol.system_cost, sol.usage_mwh
    );
    finish(
        &run,
        &ResultSet {
            dispatch: Some(&sol),
            ..Default::default()
        },
        "dispatch",
    )
}

fn optimize(cli: &Cli, common: &Common, grid: &GridArgs) -> anyhow::Result<()> {
    let run = prepare(cli, common, Some(grid))?;
    let sc = scenario(&run)?;
    info!("{} periods, searching c <= {} $/MWh", sc.periods.len(), sc.grid.cmax);
    let s = optimize_mcd(&sc.horizon, &sc.periods, &sc.grid)?;
    info!(
        "end of life at period {}, terminal price {:.4} $/MWh, y = {:.2} $ ({} sweeps)",
        s.end_of_life, s.terminal, s.y, s.sweeps
    );
    finish(
        &run,
        &ResultSet {
            schedule: Some(&s),
            ..Default::default()
        },
        "optimize",
    )
}

fn compare(cli: &Cli, common: &Common, grid: &GridArgs) -> anyhow::Result<()> {
    let run = prepare(cli, common, Some(grid))?;
    let sc = scenario(&run)?;
    let cmp = compare_policies(&sc.horizon, &sc.periods, &sc.grid, sc.lcod)?;
    for o in &cmp.outcomes {
        info!("{:<12} savings {:>14.2} $  ratio {:.4}", o.label, o.savings, o.ratio);
    }
    finish(
        &run,
        &ResultSet {
            schedule: Some(&cmp.optimal),
            comparison: Some(&cmp),
            ..Default::default()
        },
        "compare",
    )
}

fn sweep_bg(cli: &Cli, common: &Common, grid: &GridArgs, values: &[f64]) -> anyhow::Result<()> {
    if values.is_empty() || values.iter().any(|b| !b.is_finite()) {
        return Err(usage("--values needs finite generator costs"));
    }
    let run = prepare(cli, common, Some(grid))?;
    let rows = values
        .par_iter()
        .map(|&b| {
            let mut cfg = run.cfg.clone();
            cfg.generator.b_g_usd_per_mwh = b;
            let sc = build_scenario(&cfg, &run.profiles)?;
            let s = optimize_mcd(&sc.horizon, &sc.periods, &sc.grid)?;
            info!("b_G {b}: c_1 {:.4} $/MWh", s.mcd[0]);
            Ok(SweepBgRow {
                b_g_usd_per_mwh: b,
                c1_usd_per_mwh: s.mcd[0],
                terminal_usd_per_mwh: s.terminal,
                end_of_life: s.end_of_life,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.b_g_usd_per_mwh.total_cmp(&b.b_g_usd_per_mwh));
    if sorted.windows(2).any(|w| w[1].c1_usd_per_mwh < w[0].c1_usd_per_mwh) {
        warn!("first-period price is not monotone in b_G");
    }
    finish(
        &run,
        &ResultSet {
            sweep_bg: Some(&rows),
            ..Default::default()
        },
        "sweep-bg",
    )
}

/// Returns whether every check passed.
fn validate(cli: &Cli, common: &Common) -> anyhow::Result<bool> {
    let cfg = load_config(cli, common)?;
    cfg.validate().map_err(|e| usage(format!("RunConfig: {e}")))?;
    let checks = run_suite(&cfg.synth);
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        eprintln!("{tag} {}::{} ({})", c.module, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    eprintln!("{} checks, {failed} failed", checks.len());
    if let Some(out) = &common.out {
        let dir = resolve(&cli.workdir, out);
        std::fs::create_dir_all(&dir).with_context(|| format!("{}", dir.display()))?;
        let path = dir.join("validation.json");
        std::fs::write(&path, serde_json::to_string_pretty(&checks)? + "\n").with_context(|| format!("{}", path.display()))?;
    }
    Ok(failed == 0)
}

fn variant(e: &anyhow::Error) -> Option<String> {
    e.downcast_ref::<HorizonError>()
        .map(|h| format!("{h:?}").split([' ', '{', '(']).next().unwrap_or_default().to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            warn!("could not size the worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Dispatch {
            common,
            u_mwh,
            c_usd_per_mwh,
            period,
            soh,
        } => dispatch(&cli, common, *u_mwh, *c_usd_per_mwh, *period, *soh).map(|_| true),
        Command::Optimize { common, grid } => optimize(&cli, common, grid).map(|_| true),
        Command::Compare { common, grid } => compare(&cli, common, grid).map(|_| true),
        Command::SweepBg { common, grid, values } => sweep_bg(&cli, common, grid, values).map(|_| true),
        Command::Validate { common } => validate(&cli, common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            match variant(&e) {
                Some(v) => eprintln!("error: {e:#} ({v})"),
                None => eprintln!("error: {e:#}"),
            }
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
