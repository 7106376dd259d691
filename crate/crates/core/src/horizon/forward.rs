use serde::{Deserialize, Serialize};

use super::{invalid, Ctx, HorizonConfig, HorizonError, Period};
use crate::degradation::soh_step;
use crate::qp::WorkingSet;
use crate::scalar::Scalar;

/// Per-period dispatch rule. Periods past the end of the vector are run with
/// the storage retired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy<T> {
    /// Problem C with MCD `c_t`; `+∞` keeps the storage idle.
    Price(Vec<T>),
    /// Problem A with period usage cap `u_t` (MWh).
    Usage(Vec<T>),
}

impl<T> Policy<T> {
    pub fn len(&self) -> usize {
        match self {
            Policy::Price(v) | Policy::Usage(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult<T> {
    pub label: String,
    /// Discounted life-cycle system cost `Σ δ_t F_t` ($).
    pub y: T,
    /// Period system cost `F_t` ($), excluding any degradation price.
    pub cost: Vec<T>,
    /// Period usage including calendar degradation (MWh); zero once retired.
    pub usage: Vec<T>,
    /// SOH at the start of periods `1..=N + 1`.
    pub soh: Vec<T>,
    /// Price applied per period (NaN under a usage policy or when retired).
    pub mcd: Vec<T>,
    /// First period run with the storage retired.
    pub retired_at: Option<usize>,
}

impl<T: Scalar> HorizonResult<T> {
    /// Life-cycle saving against a no-storage baseline cost.
    pub fn savings(&self, baseline: T) -> T {
        baseline - self.y
    }
}

/// Discounted life-cycle cost with the storage idle throughout.
pub fn no_storage_cost<T: Scalar>(cfg: &HorizonConfig<T>, periods: &[Period<T>]) -> Result<T, HorizonError> {
    let ctx = Ctx::new(cfg, periods, "no_storage_cost")?;
    Ok(ctx.idle_tail(0))
}

/// Forward simulation of `policy` with SOH tracking and end-of-life retirement.
pub fn evaluate_schedule<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    policy: &Policy<T>,
    label: &str,
) -> Result<HorizonResult<T>, HorizonError> {
    if policy.is_empty() {
        return invalid("evaluate_schedule", "empty policy");
    }
    let ctx = Ctx::new(cfg, periods, "evaluate_schedule")?;
    evaluate_with(&ctx, policy, label)
}

pub(crate) fn evaluate_with<T: Scalar>(ctx: &Ctx<'_, T>, policy: &Policy<T>, label: &str) -> Result<HorizonResult<T>, HorizonError> {
    let cfg = ctx.cfg;
    let s = &cfg.storage;
    let n = ctx.n();
    let w = ctx.weight();
    let q = cfg.period_calendar();
    let eps = T::of(1e-9) * (T::one() + q);
    let mut state = s.initial_state();
    let mut res = HorizonResult {
        label: label.to_string(),
        y: T::zero(),
        cost: Vec::with_capacity(n),
        usage: Vec::with_capacity(n),
        soh: vec![state.soh],
        mcd: Vec::with_capacity(n),
        retired_at: None,
    };
    let mut hint: Option<WorkingSet> = None;
    for t in 1..=n {
        let remaining = s.remaining_budget(state.soh);
        let alive = res.retired_at.is_none() && t <= policy.len() && remaining >= q - eps && state.soh > s.soh_end;
        if !alive {
            res.retired_at.get_or_insert(t);
            res.cost.push(ctx.idle[t - 1]);
            res.usage.push(T::zero());
            res.mcd.push(T::nan());
            res.soh.push(state.soh);
            continue;
        }
        let (mut sol, price) = match policy {
            Policy::Price(c) if c[t - 1].is_infinite() => (ctx.solve_a(t, q, state.soh, hint.as_ref())?, c[t - 1]),
            Policy::Price(c) => (ctx.solve_c(t, c[t - 1], state.soh, hint.as_ref())?, c[t - 1]),
            Policy::Usage(u) => (ctx.solve_a(t, u[t - 1].min(remaining), state.soh, hint.as_ref())?, T::nan()),
        };
        let mut used = w * sol.usage_mwh;
        if used > remaining {
            // final partial period: cap usage at what is left
            sol = ctx.solve_a(t, remaining, state.soh, Some(&sol.working_set))?;
            used = (w * sol.usage_mwh).min(remaining);
        }
        hint = Some(sol.working_set.clone());
        state = soh_step(state, used, s)?;
        state.soh = state.soh.max(s.soh_end);
        res.cost.push(w * sol.system_cost);
        res.usage.push(used);
        res.mcd.push(price);
        res.soh.push(state.soh);
    }
    res.y = res
        .cost
        .iter()
        .enumerate()
        .map(|(i, f)| cfg.discount.factor(i + 1) * *f)
        .fold(T::zero(), |a, b| a + b);
    Ok(res)
}
