use std::collections::HashMap;

use super::{Ctx, HorizonConfig, HorizonError, Period};
use crate::qp::WorkingSet;
use crate::scalar::Scalar;

pub const MAX_ORACLE_PERIODS: usize = 4;
pub const MAX_ORACLE_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult<T> {
    /// Optimal period usage caps (MWh).
    pub usage: Vec<T>,
    /// SOH at the start of each period and after the last.
    pub soh: Vec<T>,
    pub cost: Vec<T>,
    pub y: T,
    /// Spacing of the usage grid (MWh).
    pub step: T,
}

struct Search<'c, 'a, T> {
    ctx: &'c Ctx<'a, T>,
    q: T,
    step: T,
    /// Grid points allowed per period.
    points: Vec<usize>,
    budget: T,
    cost: HashMap<(usize, usize, usize), T>,
    best: HashMap<(usize, usize), (T, Vec<usize>)>,
    hints: Vec<Option<WorkingSet>>,
}

impl<T: Scalar> Search<'_, '_, T> {
    fn usage(&self, i: usize) -> T {
        self.q + self.step * T::of(i as f64)
    }

    /// Usage consumed before period `t` (0-based) given the prior index sum.
    fn prior(&self, t: usize, sum: usize) -> T {
        self.q * T::of(t as f64) + self.step * T::of(sum as f64)
    }

    fn period_cost(&mut self, t: usize, sum: usize, i: usize) -> Result<T, HorizonError> {
        if let Some(&f) = self.cost.get(&(t, sum, i)) {
            return Ok(f);
        }
        let s = &self.ctx.cfg.storage;
        let soh = s.soh_initial - s.soh_loss(self.prior(t, sum));
        let sol = self.ctx.solve_a(t + 1, self.usage(i), soh, self.hints[t].as_ref())?;
        self.hints[t] = Some(sol.working_set.clone());
        let f = sol.system_cost * self.ctx.weight() * self.ctx.cfg.discount.factor(t + 1);
        self.cost.insert((t, sum, i), f);
        Ok(f)
    }

    /// Least discounted cost of periods `t..` given the prior index sum.
    fn solve(&mut self, t: usize, sum: usize) -> Result<(T, Vec<usize>), HorizonError> {
        let n = self.points.len();
        if t == n {
            return Ok((T::zero(), Vec::new()));
        }
        if let Some(v) = self.best.get(&(t, sum)) {
            return Ok(v.clone());
        }
        let tol = T::of(1e-9) * self.budget;
        // later periods need at least their calendar degradation
        let reserve = self.q * T::of((n - t - 1) as f64);
        let mut best: Option<(T, Vec<usize>)> = None;
        for i in 0..self.points[t] {
            if self.prior(t, sum) + self.usage(i) + reserve > self.budget + tol {
                break;
            }
            let f = self.period_cost(t, sum, i)?;
            let (rest, mut path) = self.solve(t + 1, sum + i)?;
            let total = f + rest;
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                path.insert(0, i);
                best = Some((total, path));
            }
        }
        let best = best.ok_or_else(|| HorizonError::Invalid {
            op: "brute_force_long_term",
            msg: "budget below total calendar degradation".into(),
        })?;
        self.best.insert((t, sum), best.clone());
        Ok(best)
    }
}

/// Exhaustive search over period usage caps on a common grid.
///
/// Period `t` may use `q + i·Δ` for `i < points`, up to its usage with free
/// storage at full health; `Δ` is shared so that every allocation maps to an
/// exact cumulative usage. Allocations whose total exceeds the budget are
/// skipped. Costs are memoised on (period, prior usage, own usage).
pub fn brute_force_long_term<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    points: usize,
) -> Result<BruteForceResult<T>, HorizonError> {
    let n = periods.len();
    if n > MAX_ORACLE_PERIODS || points > MAX_ORACLE_POINTS {
        return Err(HorizonError::TooLarge(format!(
            "{n} periods x {points} points; limits are {MAX_ORACLE_PERIODS} x {MAX_ORACLE_POINTS}"
        )));
    }
    if points < 2 {
        return Err(HorizonError::Invalid {
            op: "brute_force_long_term",
            msg: "need at least 2 grid points".into(),
        });
    }
    let ctx = Ctx::new(cfg, periods, "brute_force_long_term")?;
    let s = &cfg.storage;
    let q = cfg.period_calendar();
    let mut umax = Vec::with_capacity(n);
    for t in 1..=n {
        umax.push(ctx.solve_c(t, T::zero(), s.soh_initial, None)?.usage_mwh * ctx.weight());
    }
    let span = umax.iter().fold(T::zero(), |m, u| m.max(*u - q));
    let step = if span > T::zero() {
        span / T::of((points - 1) as f64)
    } else {
        T::one()
    };
    let grid: Vec<usize> = umax
        .iter()
        .map(|u| {
            let k = ((*u - q) / step + T::of(1e-9)).floor().to_usize().unwrap_or(0);
            (k + 1).min(points)
        })
        .collect();
    let mut search = Search {
        ctx: &ctx,
        q,
        step,
        points: grid,
        budget: s.budget_mwh,
        cost: HashMap::new(),
        best: HashMap::new(),
        hints: vec![None; n],
    };
    let (stored, path) = search.solve(0, 0)?;
    let mut usage = Vec::with_capacity(n);
    let mut soh = vec![s.soh_initial];
    let mut cost = Vec::with_capacity(n);
    let mut sum = 0;
    for (t, &i) in path.iter().enumerate() {
        let u = search.usage(i);
        let f = search.period_cost(t, sum, i)? / cfg.discount.factor(t + 1);
        usage.push(u);
        cost.push(f);
        sum += i;
        soh.push(s.soh_initial - s.soh_loss(search.prior(t + 1, sum)));
    }
    Ok(BruteForceResult {
        usage,
        soh,
        cost,
        y: stored,
        step,
    })
}
