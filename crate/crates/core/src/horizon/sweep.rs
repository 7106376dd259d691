use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::Policy;
use super::{invalid, mcd_recursion_step, Ctx, HorizonConfig, HorizonError, Period};
use crate::dispatch::{DispatchSolution, CAP_ROW};
use crate::qp::WorkingSet;
use crate::scalar::Scalar;

/// Fixed-point passes reconciling a period's usage with its starting SOH.
const FIXED_POINT_ITERS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepOutcome {
    /// Reached the initial SOH inside period 1: the budget closes exactly.
    Closed,
    /// Reached the initial SOH at period `t0 > 1`, or with less than one
    /// period of calendar degradation left for period 1.
    Overshoot { t0: usize },
    /// Walked back to period 1 with budget to spare.
    Undershoot,
}

/// Result of one backward sweep from `H̲` at the end of `t_prime`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCandidate<T> {
    pub t_prime: usize,
    pub c_terminal: T,
    pub outcome: SweepOutcome,
    /// MCD of periods `1..=t_prime` (index `t − 1`); NaN before the sweep stopped.
    pub mcd: Vec<T>,
    /// SOH at the start of periods `1..=t_prime + 1`.
    pub soh: Vec<T>,
    /// Period usage (MWh).
    pub usage: Vec<T>,
    /// Period system cost `F_t` ($).
    pub cost: Vec<T>,
    /// Period-scale `∂F_t/∂H_t`.
    pub df_dh: Vec<T>,
    /// Discounted life-cycle cost over the full horizon, idle after `t_prime`; `Some` only when closed.
    pub y: Option<T>,
    /// SOH the sweep ended on at the close of `t_prime`.
    pub soh_terminal: T,
    /// Amount by which period 1 overshot `H₀` before truncation (SOH units);
    /// slightly negative when it closed from below within tolerance.
    pub excess: T,
}

impl<T: Scalar> SweepCandidate<T> {
    pub fn feasible(&self) -> bool {
        self.outcome == SweepOutcome::Closed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSettings<T> {
    /// Grid step of the terminal MCD ($/MWh).
    pub dc: T,
    /// Upper bound of the terminal MCD ($/MWh).
    pub cmax: T,
    /// End-of-life periods to try; `None` means every year end.
    pub t_primes: Option<Vec<usize>>,
    /// Bracket width at which the closing search gives up ($/MWh).
    pub bisect_tol: T,
}

impl<T: Scalar> Default for GridSettings<T> {
    fn default() -> Self {
        Self {
            dc: T::of(0.25),
            cmax: T::of(30.0),
            t_primes: None,
            bisect_tol: T::of(1e-10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdSchedule<T> {
    /// Optimal MCD of periods `1..=end_of_life`; storage is retired afterwards.
    pub mcd: Vec<T>,
    /// Terminal constant `c*` = MCD of the end-of-life period.
    pub terminal: T,
    /// End-of-life period `T*`.
    pub end_of_life: usize,
    /// SOH at the start of periods `1..=end_of_life + 1`.
    pub soh: Vec<T>,
    pub usage: Vec<T>,
    pub cost: Vec<T>,
    /// Discounted life-cycle system cost over the full horizon.
    pub y: T,
    /// False when the budget never binds: zero terminal price, end-of-life SOH above `H̲`.
    pub budget_binding: bool,
    /// Sweeps run by the search.
    pub sweeps: usize,
}

impl<T: Scalar> McdSchedule<T> {
    pub fn price_policy(&self) -> Policy<T> {
        Policy::Price(self.mcd.clone())
    }

    pub fn usage_policy(&self) -> Policy<T> {
        Policy::Usage(self.usage.clone())
    }
}

/// Working sets of the last solves per period, reused across sweeps.
struct Warm {
    c: Vec<Option<WorkingSet>>,
    a: Vec<Option<WorkingSet>>,
}

impl Warm {
    fn new(n: usize) -> Self {
        Self {
            c: vec![None; n],
            a: vec![None; n],
        }
    }
}

fn with_cap(ws: &WorkingSet) -> WorkingSet {
    let mut ws = ws.clone();
    if let Err(pos) = ws.ineq.binary_search(&CAP_ROW) {
        ws.ineq.insert(pos, CAP_ROW);
    }
    ws
}

fn sweep<T: Scalar>(
    ctx: &Ctx<'_, T>,
    t_prime: usize,
    c_terminal: T,
    soh_terminal: T,
    warm: &mut Warm,
) -> Result<SweepCandidate<T>, HorizonError> {
    let cfg = ctx.cfg;
    let s = &cfg.storage;
    let k = s.sensitivity();
    let w = ctx.weight();
    let q = cfg.period_calendar();
    let nan = T::nan();
    let mut cand = SweepCandidate {
        t_prime,
        c_terminal,
        outcome: SweepOutcome::Undershoot,
        mcd: vec![nan; t_prime],
        soh: vec![nan; t_prime + 1],
        usage: vec![nan; t_prime],
        cost: vec![nan; t_prime],
        df_dh: vec![nan; t_prime],
        y: None,
        soh_terminal,
        excess: T::zero(),
    };
    let mut h_next = soh_terminal;
    cand.soh[t_prime] = h_next;
    let mut c = c_terminal;
    let tol = T::of(1e-13);
    let close = close_tol(cfg);
    for t in (1..=t_prime).rev() {
        cand.mcd[t - 1] = c;
        // the usage of period t depends on its starting SOH through derating
        let mut h = h_next;
        let mut sol = None;
        let mut prev: Option<(T, T)> = None;
        for _ in 0..FIXED_POINT_ITERS {
            let hint = sol.as_ref().map(|x: &DispatchSolution<T>| &x.working_set).or(warm.c[t - 1].as_ref());
            let next = ctx.solve_c(t, c, h, hint)?;
            let g = h_next + k * w * next.usage_mwh - h;
            sol = Some(next);
            if g.abs() <= tol || (h >= s.soh_initial && g >= T::zero()) {
                break;
            }
            // secant on the residual, falling back to plain substitution
            let mut h_new = h + g;
            if let Some((hp, gp)) = prev {
                let slope = (g - gp) / (h - hp);
                if slope.is_finite() && slope < T::zero() {
                    h_new = h - g / slope;
                }
            }
            prev = Some((h, g));
            h = h_new.max(h_next).min(s.soh_initial);
        }
        let sol = sol.expect("at least one fixed-point pass");
        warm.c[t - 1] = Some(sol.working_set.clone());
        let h = h_next + k * w * sol.usage_mwh;
        if t > 1 && h >= s.soh_initial - tol {
            cand.outcome = SweepOutcome::Overshoot { t0: t };
            return Ok(cand);
        }
        if t == 1 && h >= s.soh_initial - close {
            // truncate period 1 so the sweep starts exactly at H₀; the
            // calendar floor may be undercut by at most the closing tolerance
            let u1 = (s.soh_initial - h_next) / k;
            if u1 < q - close / k {
                cand.outcome = SweepOutcome::Overshoot { t0: 1 };
                return Ok(cand);
            }
            let u1 = u1.max(q);
            let a = ctx.solve_a(1, u1, s.soh_initial, Some(&with_cap(&sol.working_set)))?;
            cand.soh[0] = s.soh_initial;
            cand.usage[0] = u1;
            cand.cost[0] = a.system_cost * w;
            cand.df_dh[0] = T::zero();
            cand.excess = h - s.soh_initial;
            cand.outcome = SweepOutcome::Closed;
            break;
        }
        let u = w * sol.usage_mwh;
        cand.soh[t - 1] = h;
        cand.usage[t - 1] = u;
        cand.cost[t - 1] = sol.system_cost * w;
        let dfdh = if cfg.soh_term {
            let hint = warm.a[t - 1].clone().unwrap_or_else(|| with_cap(&sol.working_set));
            let (d, ws) = ctx.df_dh(t, u, h, Some(&hint))?;
            warm.a[t - 1] = ws;
            d
        } else {
            T::zero()
        };
        cand.df_dh[t - 1] = dfdh;
        if t > 1 {
            c = mcd_recursion_step(c, dfdh, cfg.discount.ratio(t), s);
        }
        h_next = h;
    }
    if cand.outcome == SweepOutcome::Closed {
        let mut y = ctx.idle_tail(t_prime);
        for t in 1..=t_prime {
            y += cfg.discount.factor(t) * cand.cost[t - 1];
        }
        cand.y = Some(y);
    }
    Ok(cand)
}

/// Backward sweep from end of life at `t_prime` with terminal MCD `c_terminal`.
///
/// Closed and undershooting sweeps are returned; an overshoot is reported
/// as [`HorizonError::BudgetMismatch`].
pub fn backward_sweep<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    t_prime: usize,
    c_terminal: T,
) -> Result<SweepCandidate<T>, HorizonError> {
    if t_prime == 0 || t_prime > periods.len() {
        return invalid("backward_sweep", format!("end-of-life period {t_prime} outside 1..={}", periods.len()));
    }
    if !(c_terminal >= T::zero() && c_terminal.is_finite()) {
        return invalid("backward_sweep", "terminal MCD must be finite and nonnegative");
    }
    let ctx = Ctx::new(cfg, periods, "backward_sweep")?;
    let cand = sweep(&ctx, t_prime, c_terminal, cfg.storage.soh_end, &mut Warm::new(periods.len()))?;
    match cand.outcome {
        SweepOutcome::Overshoot { t0 } => Err(HorizonError::BudgetMismatch { t0 }),
        _ => Ok(cand),
    }
}

/// Closing tolerance at period 1, as a fraction of one period's calendar
/// loss.
const CLOSE_TOL: f64 = 1e-8;

/// Closing tolerance in SOH units.
fn close_tol<T: Scalar>(cfg: &HorizonConfig<T>) -> T {
    let s = &cfg.storage;
    let span = T::of(CLOSE_TOL) * s.sensitivity() * cfg.period_calendar();
    span.max(T::of(64.0) * T::epsilon())
}

/// Candidates and sweep count for one end-of-life period.
fn search_t_prime<T: Scalar>(
    ctx: &Ctx<'_, T>,
    t_prime: usize,
    grid: &GridSettings<T>,
) -> Result<(Vec<SweepCandidate<T>>, usize, bool), HorizonError> {
    let mut warm = Warm::new(ctx.n());
    let h_end = ctx.cfg.storage.soh_end;
    let tol = close_tol(ctx.cfg);
    let mut found = Vec::new();
    let mut sweeps = 0;
    let mut last_lo: Option<T> = None;
    let mut zero_undershoots = false;
    let steps = (grid.cmax / grid.dc).floor().to_usize().unwrap_or(0);
    for i in 0..=steps {
        let c = grid.dc * T::of(i as f64);
        let cand = sweep(ctx, t_prime, c, h_end, &mut warm)?;
        sweeps += 1;
        match cand.outcome {
            SweepOutcome::Overshoot { .. } => last_lo = Some(c),
            SweepOutcome::Closed => {
                let exact = cand.excess <= tol;
                found.push(cand);
                if exact {
                    break;
                }
                last_lo = Some(c);
            }
            SweepOutcome::Undershoot => {
                zero_undershoots = i == 0;
                // usage falls as c rises, so the exact closing price lies in the last bracket
                if let Some(mut lo) = last_lo {
                    let mut hi = c;
                    let mut closed = false;
                    // past the price tolerance, keep halving down to float
                    // resolution while nothing has closed
                    while hi - lo > grid.bisect_tol || !closed {
                        let mid = T::of(0.5) * (lo + hi);
                        if !(mid > lo && mid < hi) {
                            break;
                        }
                        let cand = sweep(ctx, t_prime, mid, h_end, &mut warm)?;
                        sweeps += 1;
                        match cand.outcome {
                            SweepOutcome::Closed if cand.excess <= tol => {
                                found.push(cand);
                                break;
                            }
                            SweepOutcome::Closed => {
                                found.push(cand);
                                closed = true;
                                lo = mid;
                            }
                            SweepOutcome::Overshoot { .. } => lo = mid,
                            SweepOutcome::Undershoot => hi = mid,
                        }
                    }
                }
                break;
            }
        }
    }
    Ok((found, sweeps, zero_undershoots))
}

/// Budget never binds: zero terminal price, with the terminal SOH above
/// `H̲` chosen so the sweep starts exactly at `H₀`.
fn slack_candidate<T: Scalar>(ctx: &Ctx<'_, T>, grid: &GridSettings<T>) -> Result<(Option<SweepCandidate<T>>, usize), HorizonError> {
    let s = &ctx.cfg.storage;
    let n = ctx.n();
    let tol = close_tol(ctx.cfg);
    let mut warm = Warm::new(n);
    let (mut lo, mut hi) = (s.soh_end, s.soh_initial);
    let mut sweeps = 0;
    let mut best: Option<SweepCandidate<T>> = None;
    while hi - lo > grid.bisect_tol * tol {
        let mid = T::of(0.5) * (lo + hi);
        let cand = sweep(ctx, n, T::zero(), mid, &mut warm)?;
        sweeps += 1;
        match cand.outcome {
            SweepOutcome::Undershoot => lo = mid,
            SweepOutcome::Overshoot { .. } => hi = mid,
            SweepOutcome::Closed => {
                let exact = cand.excess <= tol;
                hi = mid;
                if best.as_ref().is_none_or(|b| cand.excess.abs() < b.excess.abs()) {
                    best = Some(cand);
                }
                if exact {
                    break;
                }
            }
        }
    }
    Ok((best, sweeps))
}

/// Grid search over end-of-life period and terminal MCD for the schedule of
/// least discounted life-cycle cost.
///
/// For each end-of-life period the terminal MCD is scanned upwards in steps
/// of `dc`; the first bracket where sweeps switch from overshooting to
/// undershooting is bisected for the price that closes the budget exactly.
/// Ties prefer the earlier end of life, then the lower price.
pub fn optimize_mcd<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    grid: &GridSettings<T>,
) -> Result<McdSchedule<T>, HorizonError> {
    if !(grid.dc > T::zero() && grid.cmax >= T::zero() && grid.bisect_tol > T::zero()) {
        return invalid("optimize_mcd", "need dc > 0, cmax >= 0, bisect_tol > 0");
    }
    let n = periods.len();
    let t_primes: Vec<usize> = match &grid.t_primes {
        Some(v) => v.clone(),
        None => {
            let p = cfg.discount.periods_per_year;
            let mut v: Vec<usize> = (1..=n / p).map(|y| y * p).collect();
            if v.last() != Some(&n) {
                v.push(n);
            }
            v
        }
    };
    if t_primes.is_empty() || t_primes.iter().any(|&t| t == 0 || t > n) {
        return invalid("optimize_mcd", format!("end-of-life periods must lie in 1..={n}"));
    }
    let ctx = Ctx::new(cfg, periods, "optimize_mcd")?;
    let results: Result<Vec<_>, HorizonError> = t_primes.par_iter().map(|&tp| search_t_prime(&ctx, tp, grid)).collect();
    let results = results?;
    let mut sweeps: usize = results.iter().map(|r| r.1).sum();
    let slack_at_n = t_primes.iter().zip(&results).any(|(&tp, r)| tp == n && r.2);
    let mut candidates: Vec<SweepCandidate<T>> = results.into_iter().flat_map(|r| r.0).collect();
    // maximal use cannot exhaust the budget by the horizon end
    if slack_at_n {
        let (cand, k) = slack_candidate(&ctx, grid)?;
        sweeps += k;
        candidates.extend(cand);
    }
    let mut best: Option<SweepCandidate<T>> = None;
    for cand in candidates {
        let better = match &best {
            None => true,
            Some(b) => {
                let (yc, yb) = (cand.y.expect("closed"), b.y.expect("closed"));
                yc < yb || (yc == yb && (cand.t_prime, cand.c_terminal) < (b.t_prime, b.c_terminal))
            }
        };
        if better {
            best = Some(cand);
        }
    }
    let schedule = best.map(|b| McdSchedule {
        terminal: b.c_terminal,
        end_of_life: b.t_prime,
        y: b.y.expect("closed"),
        budget_binding: b.soh_terminal <= cfg.storage.soh_end,
        mcd: b.mcd,
        soh: b.soh,
        usage: b.usage,
        cost: b.cost,
        sweeps,
    });
    match schedule {
        Some(mut s) => {
            s.sweeps = sweeps;
            Ok(s)
        }
        None => Err(HorizonError::NoFeasibleCandidate {
            cmax: grid.cmax.as_f64(),
            tried: sweeps,
        }),
    }
}
