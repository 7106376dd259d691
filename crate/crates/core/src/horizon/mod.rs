//! Life-cycle layer: the backward MCD sweep and its grid search, forward
//! evaluation of a dispatch policy, and an exhaustive oracle for tiny
//! horizons.
//!
//! A horizon is a sequence of dispatch periods. Each period is one
//! representative day standing for `days_per_period` calendar days, so its
//! usage, calendar degradation and cost are the daily figures scaled by
//! that weight while the price `c` per MWh is unchanged.

mod forward;
mod oracle;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degradation::{DegradationError, StorageParams};
use crate::dispatch::{
    solve_dispatch_with, DayProfile, DispatchError, DispatchInstance, DispatchSolution, GenParams, LoadParams, Mode,
};
use crate::qp::WorkingSet;
use crate::scalar::Scalar;

pub use forward::{evaluate_schedule, no_storage_cost, HorizonResult, Policy};
pub use oracle::{brute_force_long_term, BruteForceResult, MAX_ORACLE_PERIODS, MAX_ORACLE_POINTS};
pub use sweep::{backward_sweep, optimize_mcd, GridSettings, McdSchedule, SweepCandidate, SweepOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HorizonError {
    #[error("period {period}: {source}")]
    Dispatch { period: usize, source: DispatchError },
    #[error(transparent)]
    Degradation(#[from] DegradationError),
    #[error("backward_sweep: budget exhausted before the first period (sweep reached initial SOH at period {t0})")]
    BudgetMismatch { t0: usize },
    #[error("optimize_mcd: no feasible candidate within c <= {cmax} $/MWh over {tried} sweeps")]
    NoFeasibleCandidate { cmax: f64, tried: usize },
    #[error("brute_force_long_term: instance too large ({0})")]
    TooLarge(String),
    #[error("{op}: invalid input: {msg}")]
    Invalid { op: &'static str, msg: String },
}

fn invalid<T>(op: &'static str, msg: impl Into<String>) -> Result<T, HorizonError> {
    Err(HorizonError::Invalid { op, msg: msg.into() })
}

/// Annual discounting with a per-period year index `κ(t) = ⌊(t − 1)/P⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountModel<T> {
    pub rate: T,
    pub periods_per_year: usize,
}

impl<T: Scalar> DiscountModel<T> {
    /// Year index of 1-based period `t`.
    pub fn year(&self, t: usize) -> usize {
        t.saturating_sub(1) / self.periods_per_year.max(1)
    }

    /// `δ_t = (1 + r)^−κ(t)`.
    pub fn factor(&self, t: usize) -> T {
        (T::one() + self.rate).powi(-(self.year(t) as i32))
    }

    /// `δ_t / δ_{t−1}`: `1/(1 + r)` on the first period of a year, else 1.
    pub fn ratio(&self, t: usize) -> T {
        if t > 1 && self.year(t) != self.year(t - 1) {
            T::one() / (T::one() + self.rate)
        } else {
            T::one()
        }
    }
}

/// One step of the backward MCD recursion,
/// `c_{t−1} = (δ_t/δ_{t−1})·[c_t − ∂F_t/∂H_t·(H₀ − H̲)/U]`, clamped at zero.
pub fn mcd_recursion_step<T: Scalar>(c_next: T, df_dh_next: T, delta_ratio: T, params: &StorageParams<T>) -> T {
    let c = delta_ratio * (c_next - df_dh_next * params.sensitivity());
    if c < T::zero() {
        log::warn!("mcd_recursion_step: negative MCD {c} clamped to 0");
        return T::zero();
    }
    c
}

/// One dispatch period of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period<T> {
    pub gen: GenParams<T>,
    pub load: LoadParams<T>,
    pub day: DayProfile<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig<T> {
    /// Battery; `calendar_mwh` is per representative day, `budget_mwh` is the life-cycle total.
    pub storage: StorageParams<T>,
    pub discount: DiscountModel<T>,
    /// Calendar days represented by each dispatch period.
    pub days_per_period: T,
    /// SOH step of the finite-difference `∂F/∂H`.
    pub soh_step: T,
    /// Include the `∂F/∂H` term of the recursion.
    pub soh_term: bool,
}

impl<T: Scalar> HorizonConfig<T> {
    pub fn new(storage: StorageParams<T>, discount: DiscountModel<T>, days_per_period: T) -> Self {
        Self {
            storage,
            discount,
            days_per_period,
            soh_step: T::of(1e-4),
            soh_term: true,
        }
    }

    /// Calendar degradation of one period (MWh).
    pub fn period_calendar(&self) -> T {
        self.storage.calendar_mwh * self.days_per_period
    }

    pub fn validate(&self, periods: &[Period<T>], op: &'static str) -> Result<(), HorizonError> {
        self.storage.validate()?;
        if periods.is_empty() {
            return invalid(op, "no periods");
        }
        if !(self.days_per_period >= T::one()) {
            return invalid(op, "days per period must be >= 1");
        }
        if !(self.discount.rate >= T::zero()) || self.discount.periods_per_year == 0 {
            return invalid(op, "discount rate must be >= 0 with at least one period per year");
        }
        if !(self.soh_step > T::zero()) {
            return invalid(op, "SOH step must be positive");
        }
        for (i, p) in periods.iter().enumerate() {
            p.day.validate().map_err(|source| HorizonError::Dispatch { period: i + 1, source })?;
        }
        Ok(())
    }
}

/// Shared evaluation context: per-period solves at period scale.
pub(crate) struct Ctx<'a, T> {
    pub cfg: &'a HorizonConfig<T>,
    pub periods: &'a [Period<T>],
    /// Period cost with storage idle.
    pub idle: Vec<T>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(cfg: &'a HorizonConfig<T>, periods: &'a [Period<T>], op: &'static str) -> Result<Self, HorizonError> {
        use rayon::prelude::*;
        cfg.validate(periods, op)?;
        let mut ctx = Self {
            cfg,
            periods,
            idle: Vec::new(),
        };
        let q = cfg.period_calendar();
        let idle: Result<Vec<T>, HorizonError> = (1..=periods.len())
            .into_par_iter()
            .map(|t| Ok(ctx.solve_a(t, q, cfg.storage.soh_initial, None)?.system_cost))
            .collect();
        ctx.idle = idle?.into_iter().map(|f| f * cfg.days_per_period).collect();
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.periods.len()
    }

    fn instance(&self, t: usize, soh: T, mode: Mode<T>) -> DispatchInstance<T> {
        let p = &self.periods[t - 1];
        let mut state = self.cfg.storage.initial_state();
        state.soh = soh.min(self.cfg.storage.soh_initial).max(self.cfg.storage.soh_end);
        state.period = t - 1;
        DispatchInstance {
            gen: p.gen,
            load: p.load,
            storage: self.cfg.storage,
            day: p.day.clone(),
            soh: state,
            mode,
        }
    }

    fn wrap(t: usize) -> impl Fn(DispatchError) -> HorizonError {
        move |source| HorizonError::Dispatch { period: t, source }
    }

    /// Problem C for period `t` (1-based).
    pub fn solve_c(&self, t: usize, c: T, soh: T, hint: Option<&WorkingSet>) -> Result<DispatchSolution<T>, HorizonError> {
        solve_dispatch_with(&self.instance(t, soh, Mode::DegradationCost(c)), hint).map_err(Self::wrap(t))
    }

    /// Problem A for period `t` with a period-scale cap.
    pub fn solve_a(&self, t: usize, cap: T, soh: T, hint: Option<&WorkingSet>) -> Result<DispatchSolution<T>, HorizonError> {
        let daily = (cap / self.cfg.days_per_period).max(self.cfg.storage.calendar_mwh);
        solve_dispatch_with(&self.instance(t, soh, Mode::ConstrainedUsage(daily)), hint).map_err(Self::wrap(t))
    }

    /// Period-scale `∂F/∂H` of Problem A at fixed cap.
    pub fn df_dh(&self, t: usize, cap: T, soh: T, hint: Option<&WorkingSet>) -> Result<(T, Option<WorkingSet>), HorizonError> {
        let s = &self.cfg.storage;
        let step = self.cfg.soh_step;
        let hi = (soh + step).min(s.soh_initial);
        let lo = (soh - step).max(s.soh_end);
        if !(hi > lo) {
            return Ok((T::zero(), hint.cloned()));
        }
        let a = self.solve_a(t, cap, hi, hint)?;
        let b = self.solve_a(t, cap, lo, Some(&a.working_set))?;
        let d = (a.system_cost - b.system_cost) / (hi - lo) * self.cfg.days_per_period;
        Ok((d, Some(b.working_set)))
    }

    pub fn weight(&self) -> T {
        self.cfg.days_per_period
    }

    /// `Σ_{t > from} δ_t·idle_t`.
    pub fn idle_tail(&self, from: usize) -> T {
        (from + 1..=self.n())
            .map(|t| self.cfg.discount.factor(t) * self.idle[t - 1])
            .fold(T::zero(), |a, b| a + b)
    }
}
