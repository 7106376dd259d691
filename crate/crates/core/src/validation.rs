//! Self-check suite over small fixtures: one check per module invariant.
//!
//! Every check is independent and deterministic. A check that panics is
//! reported as failed rather than aborting the suite.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{capital_recovery_factor, compare_policies, lcod_cost, CapitalParams};
use crate::degradation::{derate, soh_step, StorageParams};
use crate::dispatch::{
    marginal_usage_value, solve_dispatch, DayProfile, DispatchInstance, GenParams, LoadParams, Mode, HOURS,
};
use crate::horizon::{
    brute_force_long_term, evaluate_schedule, optimize_mcd, DiscountModel, GridSettings, HorizonConfig,
    McdSchedule, Period,
};
use crate::io::{load_profiles, synth_profiles, write_profiles, SynthParams};
use crate::linalg::Matrix;
use crate::qp::{check_kkt, solve_qp, solve_qp_with, QpProblem, SolverSettings, WarmStart};
use crate::scalar::dot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<String, String>;

fn run(module: &'static str, name: &'static str, f: impl FnOnce() -> Outcome) -> Check {
    let (passed, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            (false, msg)
        }
    };
    Check {
        module,
        name,
        passed,
        detail,
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_qp(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> QpProblem<f64> {
    let mut p = QpProblem::new(n);
    let g: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = g.iter().map(|r| r[i] * r[j]).sum();
        }
    }
    p.q = q;
    p.c = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    for j in 0..n {
        p.set_bounds(j, -2.0, 2.0);
    }
    for i in 0..4 {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = dot(&row, &x0) + rng.random_range(0.0..0.5);
        p.add_ineq(row, rhs, format!("g{i}"));
    }
    let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rhs = dot(&row, &x0);
    p.add_eq(row, rhs, "e0");
    p
}

fn qp_checks(out: &mut Vec<Check>) {
    let s = SolverSettings::<f64>::default();
    out.push(run("qp", "kkt_on_random_instances", || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for k in 0..100 {
            let p = random_qp(&mut rng, 10, if k % 3 == 0 { 4 } else { 10 });
            let sol = solve_qp(&p, &s).map_err(|e| format!("instance {k}: {e}"))?;
            let r = check_kkt(&p, &sol, 1e-7);
            worst = worst.max(r.stationarity).max(r.feasibility).max(r.complementarity);
            ensure(r.passed, || format!("instance {k}: {r:?}"))?;
        }
        Ok(format!("100 instances, worst residual {worst:.1e}"))
    }));
    out.push(run("qp", "inactive_constraints_have_zero_dual", || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..30 {
            let p = random_qp(&mut rng, 10, 10);
            let sol = solve_qp(&p, &s).map_err(|e| e.to_string())?;
            for (i, row) in p.a_ineq.iter().enumerate() {
                if p.b_ineq[i] - dot(row, &sol.x) > 1e-6 {
                    ensure(sol.ineq_duals[i] <= s.comp_tol, || format!("instance {k} row {i}: dual {}", sol.ineq_duals[i]))?;
                }
            }
        }
        Ok("30 instances".into())
    }));
    out.push(run("qp", "row_permutation_invariance", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..20 {
            let p = random_qp(&mut rng, 10, 6);
            let base = solve_qp(&p, &s).map_err(|e| e.to_string())?;
            let mut perm = p.clone();
            perm.a_ineq.reverse();
            perm.b_ineq.reverse();
            perm.ineq_labels.reverse();
            let other = solve_qp(&perm, &s).map_err(|e| e.to_string())?;
            let gap = (base.objective - other.objective).abs() / (1.0 + base.objective.abs());
            ensure(gap <= 1e-8, || format!("instance {k}: relative gap {gap:.1e}"))?;
        }
        Ok("20 instances".into())
    }));
    out.push(run("qp", "strictly_convex_solution_is_unique", || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..20 {
            let mut p = random_qp(&mut rng, 10, 10);
            for j in 0..10 {
                p.q[(j, j)] += 1e-3;
            }
            let cold = solve_qp(&p, &s).map_err(|e| e.to_string())?;
            let start: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let warm = solve_qp_with(&p, &s, &WarmStart::from_point(start)).map_err(|e| e.to_string())?;
            let d = cold.x.iter().zip(&warm.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            ensure(d < 1e-6, || format!("instance {k}: starts differ by {d:.1e}"))?;
        }
        Ok("20 instances from two starts".into())
    }));
    out.push(run("qp", "dual_equals_rhs_sensitivity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut tested = 0;
        let mut attempts = 0;
        while tested < 10 && attempts < 200 {
            attempts += 1;
            let mut p = random_qp(&mut rng, 8, 8);
            for j in 0..8 {
                p.q[(j, j)] += 0.1;
            }
            let sol = solve_qp(&p, &s).map_err(|e| e.to_string())?;
            let Some(i) = (0..p.a_ineq.len()).find(|&i| sol.ineq_duals[i] > 1e-2) else {
                continue;
            };
            let h = 1e-5;
            let obj = |delta: f64| -> Result<f64, String> {
                let mut q = p.clone();
                q.b_ineq[i] += delta;
                Ok(solve_qp(&q, &s).map_err(|e| e.to_string())?.objective)
            };
            let fd = -(obj(h)? - obj(-h)?) / (2.0 * h);
            ensure(rel(fd, sol.ineq_duals[i]) <= 1e-3, || format!("dual {} vs difference {fd}", sol.ineq_duals[i]))?;
            tested += 1;
        }
        ensure(tested == 10, || format!("only {tested} instances with an active row"))?;
        Ok("10 active rows".into())
    }));
}

fn degradation_checks(out: &mut Vec<Check>) {
    let p = StorageParams::<f64>::reference();
    out.push(run("degradation", "soh_step_composes_linearly", || {
        for (a, b) in [(100.0, 250.0), (5000.0, 12.5), (0.0, 50_000.0)] {
            let two = soh_step(soh_step(p.initial_state(), a, &p).map_err(|e| e.to_string())?, b, &p).map_err(|e| e.to_string())?;
            let one = soh_step(p.initial_state(), a + b, &p).map_err(|e| e.to_string())?;
            ensure((two.soh - one.soh).abs() <= 1e-12, || format!("{} vs {}", two.soh, one.soh))?;
            ensure(two.period == one.period + 1, || "period index".into())?;
        }
        Ok("3 splits".into())
    }));
    out.push(run("degradation", "soh_sensitivity_to_past_usage", || {
        let path = |u1: f64| -> Result<f64, String> {
            let mut st = p.initial_state();
            for u in [u1, 400.0, 300.0] {
                st = soh_step(st, u, &p).map_err(|e| e.to_string())?;
            }
            Ok(st.soh)
        };
        let h = 10.0;
        let fd = (path(500.0 + h)? - path(500.0 - h)?) / (2.0 * h);
        let expected = -p.sensitivity();
        ensure(rel(fd, expected) <= 1e-9, || format!("{fd} vs {expected}"))?;
        Ok(format!("dH/du = {fd:.6e}"))
    }));
    out.push(run("degradation", "derate_rated_at_start_and_monotone", || {
        let r = derate(p.soh_initial, &p).map_err(|e| e.to_string())?;
        ensure(
            r.energy_mwh == p.energy_mwh && r.power_mw == p.power_mw && r.efficiency == p.efficiency && r.impedance == 1.0,
            || format!("{r:?}"),
        )?;
        let mut prev = r;
        for i in 1..=30 {
            let h = p.soh_initial - (p.soh_initial - p.soh_end) * i as f64 / 30.0;
            let d = derate(h, &p).map_err(|e| e.to_string())?;
            ensure(
                d.energy_mwh <= prev.energy_mwh && d.power_mw <= prev.power_mw && d.efficiency <= prev.efficiency && d.impedance >= prev.impedance,
                || format!("not monotone at H = {h}"),
            )?;
            prev = d;
        }
        Ok("30 steps".into())
    }));
    out.push(run("degradation", "end_of_life_round_trip_efficiency", || {
        let r = derate(p.soh_end, &p).map_err(|e| e.to_string())?;
        let rt = r.efficiency * r.efficiency;
        ensure((rt - 0.818594).abs() <= 1e-6, || format!("{rt}"))?;
        Ok(format!("{rt:.6}"))
    }));
}

/// Cheap night wind, expensive evening peak.
fn arbitrage_day(peak: f64, night_wind: f64) -> DayProfile<f64> {
    let wind = (0..HOURS).map(|h| if h < 7 { night_wind } else { 15.0 }).collect();
    let load = (0..HOURS)
        .map(|h| 45.0 + peak * (std::f64::consts::PI * (h as f64 - 6.0) / 12.0).sin().max(0.0))
        .collect();
    DayProfile::new(wind, load).expect("fixture day")
}

fn fixture_instance(mode: Mode<f64>) -> DispatchInstance<f64> {
    let storage = StorageParams::reference();
    DispatchInstance {
        gen: GenParams::reference(),
        load: LoadParams::reference(),
        storage,
        day: arbitrage_day(30.0, 70.0),
        soh: storage.initial_state(),
        mode,
    }
}

fn dispatch_checks(out: &mut Vec<Check>) {
    out.push(run("dispatch", "priced_and_capped_problems_agree", || {
        for c in [1.0, 4.0, 8.0, 12.0] {
            let base = fixture_instance(Mode::DegradationCost(c));
            let sc = solve_dispatch(&base).map_err(|e| e.to_string())?;
            let sa = solve_dispatch(&base.with_mode(Mode::ConstrainedUsage(sc.usage_mwh))).map_err(|e| e.to_string())?;
            ensure(rel(sa.system_cost, sc.system_cost) <= 1e-5, || format!("c = {c}: {} vs {}", sa.system_cost, sc.system_cost))?;
        }
        Ok("4 prices".into())
    }));
    out.push(run("dispatch", "cap_dual_equals_cost_slope", || {
        let base = fixture_instance(Mode::ConstrainedUsage(400.0));
        let dual = marginal_usage_value(&base).map_err(|e| e.to_string())?;
        let f = |u: f64| solve_dispatch(&base.with_mode(Mode::ConstrainedUsage(u))).map(|s| s.system_cost);
        let fd = -(f(401.0).map_err(|e| e.to_string())? - f(399.0).map_err(|e| e.to_string())?) / 2.0;
        ensure(rel(dual, fd) <= 1e-3, || format!("{dual} vs {fd}"))?;
        Ok(format!("dual {dual:.4}"))
    }));
    out.push(run("dispatch", "cost_monotone_in_usage_and_health", || {
        let base = fixture_instance(Mode::ConstrainedUsage(400.0));
        let mut prev = f64::INFINITY;
        for u in [50.0, 200.0, 400.0, 600.0, 800.0] {
            let f = solve_dispatch(&base.with_mode(Mode::ConstrainedUsage(u))).map_err(|e| e.to_string())?.system_cost;
            ensure(f <= prev + 1e-6, || format!("rises at u = {u}"))?;
            prev = f;
        }
        let mut prev = f64::INFINITY;
        for h in [0.7, 0.775, 0.85, 0.925, 1.0] {
            let f = solve_dispatch(&base.with_soh(h)).map_err(|e| e.to_string())?.system_cost;
            ensure(f <= prev + 1e-6, || format!("rises at H = {h}"))?;
            prev = f;
        }
        Ok("5 caps, 5 health levels".into())
    }));
    out.push(run("dispatch", "usage_nonincreasing_in_price", || {
        let mut prev = f64::INFINITY;
        for c in [0.0, 2.0, 5.0, 10.0, 20.0] {
            let d = solve_dispatch(&fixture_instance(Mode::DegradationCost(c))).map_err(|e| e.to_string())?.usage_mwh;
            ensure(d <= prev + 1e-6, || format!("rises at c = {c}"))?;
            prev = d;
        }
        Ok("5 prices".into())
    }));
    out.push(run("dispatch", "no_simultaneous_charge_and_energy_balance", || {
        let mut worst_sim = 0.0f64;
        let mut worst_res = 0.0f64;
        for mode in [
            Mode::ConstrainedUsage(300.0),
            Mode::ConstrainedUsage(600.0),
            Mode::DegradationCost(5.0),
            Mode::DegradationCost(15.0),
        ] {
            let inst = fixture_instance(mode);
            let sol = solve_dispatch(&inst).map_err(|e| e.to_string())?;
            worst_sim = worst_sim.max(sol.simultaneity());
            worst_res = worst_res.max(sol.energy_residual(&inst.storage, inst.day.dh()));
        }
        ensure(worst_sim <= 1e-4, || format!("simultaneity {worst_sim:.1e} MW"))?;
        ensure(worst_res <= 1e-6, || format!("energy residual {worst_res:.1e} MWh"))?;
        Ok(format!("simultaneity {worst_sim:.1e} MW, residual {worst_res:.1e} MWh"))
    }));
}

fn toy_periods() -> Vec<Period<f64>> {
    [30.0, 25.0, 35.0]
        .iter()
        .map(|&peak| Period {
            gen: GenParams::reference(),
            load: LoadParams::reference(),
            day: arbitrage_day(peak, 40.0),
        })
        .collect()
}

/// Three daily periods a year apart with a binding 500 MWh budget.
fn toy_cfg() -> HorizonConfig<f64> {
    let mut storage = StorageParams::reference();
    storage.budget_mwh = 500.0;
    HorizonConfig::new(
        storage,
        DiscountModel {
            rate: 0.07,
            periods_per_year: 1,
        },
        1.0,
    )
}

fn toy_grid() -> GridSettings<f64> {
    GridSettings {
        t_primes: Some(vec![1, 2, 3]),
        ..Default::default()
    }
}

fn horizon_checks(out: &mut Vec<Check>) {
    let cfg = toy_cfg();
    let periods = toy_periods();
    let opt = match optimize_mcd(&cfg, &periods, &toy_grid()) {
        Ok(o) => o,
        Err(e) => {
            out.push(run("horizon", "toy_schedule", || Err(e.to_string())));
            return;
        }
    };
    let opt = &opt;
    out.push(run("horizon", "matches_brute_force_oracle", || {
        let bf = brute_force_long_term(&cfg, &periods, 50).map_err(|e| e.to_string())?;
        ensure(rel(opt.y, bf.y) <= 1e-3, || format!("{} vs {}", opt.y, bf.y))?;
        Ok(format!("relative gap {:.1e}", rel(opt.y, bf.y)))
    }));
    out.push(run("horizon", "cap_duals_equal_mcd", || {
        let mut worst = 0.0f64;
        for t in 1..=opt.end_of_life {
            if opt.usage[t - 1] <= cfg.period_calendar() * (1.0 + 1e-9) {
                continue;
            }
            let inst = DispatchInstance {
                gen: periods[t - 1].gen,
                load: periods[t - 1].load,
                storage: cfg.storage,
                day: periods[t - 1].day.clone(),
                soh: crate::degradation::SohState {
                    soh: opt.soh[t - 1],
                    cumulative_usage: 0.0,
                    period: t - 1,
                },
                mode: Mode::ConstrainedUsage(opt.usage[t - 1]),
            };
            let sol = solve_dispatch(&inst).map_err(|e| e.to_string())?;
            let dual = sol.cap_dual.unwrap_or(0.0);
            worst = worst.max(rel(dual, opt.mcd[t - 1]));
        }
        ensure(worst <= 0.02, || format!("worst relative gap {worst:.3}"))?;
        Ok(format!("worst relative gap {worst:.1e}"))
    }));
    out.push(run("horizon", "scaling_costs_scales_prices", || {
        let doubled: Vec<Period<f64>> = periods
            .iter()
            .cloned()
            .map(|mut p| {
                p.gen.a *= 2.0;
                p.gen.b *= 2.0;
                p.load.a *= 2.0;
                p.load.b *= 2.0;
                p
            })
            .collect();
        let grid = GridSettings {
            cmax: 60.0,
            ..toy_grid()
        };
        let o2 = optimize_mcd(&cfg, &doubled, &grid).map_err(|e| e.to_string())?;
        for (c2, c1) in o2.mcd.iter().zip(&opt.mcd) {
            ensure(rel(*c2, 2.0 * c1) <= 1e-3, || format!("{c2} vs 2 x {c1}"))?;
        }
        Ok("s = 2".into())
    }));
    out.push(run("horizon", "sweep_closes_budget", || {
        let total: f64 = opt.usage.iter().sum();
        let gap = (total - cfg.storage.budget_mwh).abs();
        ensure(gap <= cfg.period_calendar(), || format!("usage {total} vs budget {}", cfg.storage.budget_mwh))?;
        Ok(format!("gap {gap:.1e} MWh"))
    }));
    out.push(run("horizon", "forward_evaluation_reproduces_sweep", || {
        let fwd = evaluate_schedule(&cfg, &periods, &opt.usage_policy(), "u").map_err(|e| e.to_string())?;
        ensure(rel(fwd.y, opt.y) <= 1e-6, || format!("{} vs {}", fwd.y, opt.y))?;
        Ok(format!("relative gap {:.1e}", rel(fwd.y, opt.y)))
    }));
    baseline_checks(out, &cfg, &periods, opt);
}

fn baseline_checks(out: &mut Vec<Check>, cfg: &HorizonConfig<f64>, periods: &[Period<f64>], opt: &McdSchedule<f64>) {
    out.push(run("baselines", "optimal_dominates_other_policies", || {
        for lcod in [5.0, 16.47] {
            let cmp = compare_policies(cfg, periods, &toy_grid(), lcod).map_err(|e| e.to_string())?;
            let best = cmp.outcome("optimal").map(|o| o.savings).unwrap_or(f64::NAN);
            ensure(rel(cmp.optimal.y, opt.y) <= 1e-9, || "schedule differs from the direct run".into())?;
            for label in ["lcod", "zero_cost"] {
                let s = cmp.outcome(label).map(|o| o.savings).unwrap_or(f64::NAN);
                ensure(s <= best * (1.0 + 1e-6), || format!("{label} saves {s} > optimal {best} at LCOD {lcod}"))?;
            }
        }
        Ok("LCOD 5 and 16.47".into())
    }));
    out.push(run("baselines", "lcod_monotone_in_capital_and_rate", || {
        let s = StorageParams::<f64>::reference();
        let price = |usd: f64, rate: f64| {
            let cap = CapitalParams {
                usd_per_kwh: usd,
                ..CapitalParams::reference()
            };
            lcod_cost(&cap, &s, &DiscountModel { rate, periods_per_year: 1 })
        };
        let mut prev = 0.0;
        for usd in [50.0, 100.0, 200.0, 400.0] {
            let v = price(usd, 0.07);
            ensure(v > prev, || format!("not increasing at {usd} $/kWh"))?;
            prev = v;
        }
        let mut prev = 0.0;
        for r in [0.0, 0.03, 0.07, 0.12] {
            let v = price(200.0, r);
            ensure(v > prev, || format!("not increasing at r = {r}"))?;
            prev = v;
        }
        let crf = capital_recovery_factor(0.07, 15.0);
        Ok(format!("CRF(7%, 15 y) = {crf:.5}"))
    }));
}

fn io_checks(out: &mut Vec<Check>, synth: &SynthParams) {
    out.push(run("io", "profile_round_trip_is_lossless", || {
        let prof = synth_profiles(synth)?;
        let path = std::env::temp_dir().join(format!("mcd-validate-{}-{}.csv", std::process::id(), synth.seed));
        let res = write_profiles(&prof, &path).and_then(|_| load_profiles(&path));
        let _ = std::fs::remove_file(&path);
        let back = res.map_err(|e| e.to_string())?;
        ensure(back.wind_mwh == prof.wind_mwh && back.load_mw == prof.load_mw, || "values changed".into())?;
        Ok(format!("{} hours", prof.hours()))
    }));
    out.push(run("io", "seeded_runs_are_bit_identical", || {
        ensure(synth_profiles(synth)? == synth_profiles(synth)?, || "synthetic profiles differ".into())?;
        let a = optimize_mcd(&toy_cfg(), &toy_periods(), &toy_grid()).map_err(|e| e.to_string())?;
        let b = optimize_mcd(&toy_cfg(), &toy_periods(), &toy_grid()).map_err(|e| e.to_string())?;
        ensure(a == b, || "schedules differ".into())?;
        Ok(format!("seed {}", synth.seed))
    }));
}

/// Runs every check; `synth` drives the profile checks.
pub fn run_suite(synth: &SynthParams) -> Vec<Check> {
    let mut out = Vec::new();
    qp_checks(&mut out);
    degradation_checks(&mut out);
    dispatch_checks(&mut out);
    horizon_checks(&mut out);
    io_checks(&mut out, synth);
    out
}
