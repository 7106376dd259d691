//! Daily economic dispatch of one generator, one controllable load, wind
//! and one battery, as a convex QP.
//!
//! Two variants share the feasible set:
//! * Problem A caps period usage, `Σ(x⁺ + x⁻)Δh + q ≤ u`;
//! * Problem C prices it, adding `c·[Σ(x⁺ + x⁻)Δh + q]` to the cost.
//!
//! Variable layout, 24 hours each: generation, load reduction, discharge
//! `x⁺`, charge `x⁻`, then the 25 hour-boundary energy levels. The energy
//! recursion applies efficiency as printed in the model,
//! `e_{h+1} = (1 − ρ)e_h − x⁺_h/η·Δh + x⁻_h·η·Δh`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degradation::{derate, usage_of, DegradationError, DeratedRatings, SohState, StorageParams};
use crate::linalg::Matrix;
use crate::qp::{solve_qp_with, QpError, QpProblem, QpStatus, SolverSettings, WarmStart, WorkingSet};
use crate::scalar::Scalar;

pub const HOURS: usize = 24;
/// Number of QP variables.
pub const N_VARS: usize = 5 * HOURS + 1;
/// Inequality row of the usage cap; balance rows come first so a Problem C
/// working set is a valid Problem A hint.
pub const CAP_ROW: usize = HOURS;
pub const CAP_LABEL: &str = "usage_cap";

#[inline]
pub const fn gen_var(h: usize) -> usize {
    h
}
#[inline]
pub const fn red_var(h: usize) -> usize {
    HOURS + h
}
#[inline]
pub const fn dis_var(h: usize) -> usize {
    2 * HOURS + h
}
#[inline]
pub const fn chg_var(h: usize) -> usize {
    3 * HOURS + h
}
#[inline]
pub const fn energy_var(k: usize) -> usize {
    4 * HOURS + k
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Degradation(#[from] DegradationError),
    #[error("solve_dispatch: {0}")]
    Qp(#[from] QpError),
    #[error("{op}: invalid instance: {msg}")]
    InvalidInstance { op: &'static str, msg: String },
    #[error("marginal_usage_value: usage cap inactive (slack {slack:.3e} MWh)")]
    CapInactive { slack: f64 },
}

fn invalid<T>(op: &'static str, msg: impl Into<String>) -> Result<T, DispatchError> {
    Err(DispatchError::InvalidInstance { op, msg: msg.into() })
}

/// Thermal unit with hourly cost `a·x² + b·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams<T> {
    pub capacity_mw: T,
    pub a: T,
    pub b: T,
}

impl<T: Scalar> GenParams<T> {
    pub fn reference() -> Self {
        Self {
            capacity_mw: T::of(100.0),
            a: T::of(0.1),
            b: T::of(30.0),
        }
    }
}

/// Controllable load with hourly reduction cost `a·x² + b·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadParams<T> {
    pub max_reduction_mw: T,
    pub a: T,
    pub b: T,
}

impl<T: Scalar> LoadParams<T> {
    pub fn reference() -> Self {
        Self {
            max_reduction_mw: T::of(10.0),
            a: T::of(0.1),
            b: T::of(70.0),
        }
    }
}

/// One dispatch period at hourly resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile<T> {
    /// Available wind energy per hour (MWh).
    pub wind_mwh: Vec<T>,
    /// Load per hour (MW).
    pub load_mw: Vec<T>,
}

impl<T: Scalar> DayProfile<T> {
    pub fn new(wind_mwh: Vec<T>, load_mw: Vec<T>) -> Result<Self, DispatchError> {
        let d = Self { wind_mwh, load_mw };
        d.validate()?;
        Ok(d)
    }

    /// Length of one step (h).
    #[inline]
    pub fn dh(&self) -> T {
        T::one()
    }

    pub fn validate(&self) -> Result<(), DispatchError> {
        if self.wind_mwh.len() != HOURS || self.load_mw.len() != HOURS {
            return invalid("DayProfile", format!("expected {HOURS} hourly values"));
        }
        if self.wind_mwh.iter().chain(&self.load_mw).any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return invalid("DayProfile", "entries must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode<T> {
    /// Problem A with usage cap `u` (MWh).
    ConstrainedUsage(T),
    /// Problem C with usage price `c` ($/MWh).
    DegradationCost(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchInstance<T> {
    pub gen: GenParams<T>,
    pub load: LoadParams<T>,
    pub storage: StorageParams<T>,
    pub day: DayProfile<T>,
    pub soh: SohState<T>,
    pub mode: Mode<T>,
}

impl<T: Scalar> DispatchInstance<T> {
    pub fn with_mode(&self, mode: Mode<T>) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_soh(&self, soh: T) -> Self {
        let mut s = self.clone();
        s.soh.soh = soh;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution<T> {
    pub gen_mw: Vec<T>,
    pub reduction_mw: Vec<T>,
    pub discharge_mw: Vec<T>,
    pub charge_mw: Vec<T>,
    /// Energy at hour boundaries 0..=24 (MWh).
    pub energy_mwh: Vec<T>,
    /// Generation plus load-reduction cost, `f` ($).
    pub system_cost: T,
    /// `c·d` in Problem C, zero in Problem A ($).
    pub usage_cost: T,
    /// Realised usage `d` including calendar degradation (MWh).
    pub usage_mwh: T,
    /// Multiplier of the usage cap ($/MWh), Problem A only.
    pub cap_dual: Option<T>,
    /// `u − d` in Problem A.
    pub cap_slack: Option<T>,
    pub ratings: DeratedRatings<T>,
    pub status: QpStatus,
    pub iterations: usize,
    pub working_set: WorkingSet,
}

impl<T: Scalar> DispatchSolution<T> {
    /// Objective of the solved problem: `f` for A, `J = f + c·d` for C.
    pub fn objective(&self) -> T {
        self.system_cost + self.usage_cost
    }

    /// Worst residual of the energy recursion and periodicity (MWh).
    pub fn energy_residual(&self, storage: &StorageParams<T>, dh: T) -> T {
        let keep = T::one() - storage.self_discharge;
        let eta = self.ratings.efficiency;
        let e = &self.energy_mwh;
        let mut worst = (e[0] - e[HOURS]).abs();
        for h in 0..HOURS {
            let next = keep * e[h] - self.discharge_mw[h] / eta * dh + self.charge_mw[h] * eta * dh;
            worst = worst.max((e[h + 1] - next).abs());
        }
        worst
    }

    /// Largest `min(x⁺_h, x⁻_h)` over the day (MW).
    pub fn simultaneity(&self) -> T {
        self.discharge_mw
            .iter()
            .zip(&self.charge_mw)
            .fold(T::zero(), |m, (a, b)| m.max(a.min(*b)))
    }
}

fn check_instance<T: Scalar>(inst: &DispatchInstance<T>, op: &'static str) -> Result<DeratedRatings<T>, DispatchError> {
    inst.storage.validate()?;
    inst.day.validate()?;
    let g = &inst.gen;
    let l = &inst.load;
    if !(g.capacity_mw > T::zero() && g.a >= T::zero() && g.b.is_finite()) {
        return invalid(op, "generator needs capacity > 0 and a >= 0");
    }
    if !(l.max_reduction_mw >= T::zero() && l.a >= T::zero() && l.b.is_finite()) {
        return invalid(op, "load needs max reduction >= 0 and a >= 0");
    }
    Ok(derate(inst.soh.soh, &inst.storage)?)
}

/// Shared feasible set; `cap` adds the usage row, `price` the usage cost.
fn build<T: Scalar>(inst: &DispatchInstance<T>, ratings: &DeratedRatings<T>, cap: Option<T>, price: T) -> QpProblem<T> {
    let dh = inst.day.dh();
    let two = T::of(2.0);
    let mut p = QpProblem::new(N_VARS);
    let mut q = Matrix::zeros(N_VARS, N_VARS);
    for h in 0..HOURS {
        q[(gen_var(h), gen_var(h))] = two * inst.gen.a * dh;
        q[(red_var(h), red_var(h))] = two * inst.load.a * dh;
        p.c[gen_var(h)] = inst.gen.b * dh;
        p.c[red_var(h)] = inst.load.b * dh;
        p.c[dis_var(h)] = price * dh;
        p.c[chg_var(h)] = price * dh;
        p.set_bounds(gen_var(h), T::zero(), inst.gen.capacity_mw);
        p.set_bounds(red_var(h), T::zero(), inst.load.max_reduction_mw);
        p.set_bounds(dis_var(h), T::zero(), ratings.power_mw);
        p.set_bounds(chg_var(h), T::zero(), ratings.power_mw);
    }
    p.q = q;
    for k in 0..=HOURS {
        p.set_bounds(energy_var(k), T::zero(), ratings.energy_mwh);
    }
    // wind may be spilled, so supply only has to cover load
    for h in 0..HOURS {
        let mut row = vec![T::zero(); N_VARS];
        row[gen_var(h)] = -dh;
        row[red_var(h)] = -dh;
        row[dis_var(h)] = -dh;
        row[chg_var(h)] = dh;
        p.add_ineq(row, inst.day.wind_mwh[h] - inst.day.load_mw[h] * dh, format!("balance_{h}"));
    }
    if let Some(u) = cap {
        let mut row = vec![T::zero(); N_VARS];
        for h in 0..HOURS {
            row[dis_var(h)] = dh;
            row[chg_var(h)] = dh;
        }
        p.add_ineq(row, u - inst.storage.calendar_mwh, CAP_LABEL);
    }
    let keep = T::one() - inst.storage.self_discharge;
    let eta = ratings.efficiency;
    for h in 0..HOURS {
        let mut row = vec![T::zero(); N_VARS];
        row[energy_var(h + 1)] = T::one();
        row[energy_var(h)] = -keep;
        row[dis_var(h)] = dh / eta;
        row[chg_var(h)] = -eta * dh;
        p.add_eq(row, T::zero(), format!("energy_{h}"));
    }
    let mut row = vec![T::zero(); N_VARS];
    row[energy_var(0)] = T::one();
    row[energy_var(HOURS)] = -T::one();
    p.add_eq(row, T::zero(), "periodicity");
    p
}

/// Problem A. An infinite cap omits the usage row.
pub fn build_problem_a<T: Scalar>(inst: &DispatchInstance<T>) -> Result<QpProblem<T>, DispatchError> {
    let ratings = check_instance(inst, "build_problem_a")?;
    let Mode::ConstrainedUsage(u) = inst.mode else {
        return invalid("build_problem_a", "mode must be ConstrainedUsage");
    };
    if !(u >= inst.storage.calendar_mwh) {
        return invalid("build_problem_a", "usage cap below calendar degradation");
    }
    Ok(build(inst, &ratings, u.is_finite().then_some(u), T::zero()))
}

/// Problem C without its constant `c·q` term, which [`solve_dispatch`]
/// adds back when reporting.
pub fn build_problem_c<T: Scalar>(inst: &DispatchInstance<T>) -> Result<QpProblem<T>, DispatchError> {
    let ratings = check_instance(inst, "build_problem_c")?;
    let Mode::DegradationCost(c) = inst.mode else {
        return invalid("build_problem_c", "mode must be DegradationCost");
    };
    if !(c >= T::zero() && c.is_finite()) {
        return invalid("build_problem_c", "usage price must be finite and nonnegative");
    }
    Ok(build(inst, &ratings, None, c))
}

/// Storage idle, generation first, then load reduction. Feasible whenever
/// the day is servable without storage.
fn crash_point<T: Scalar>(inst: &DispatchInstance<T>) -> Vec<T> {
    let mut x = vec![T::zero(); N_VARS];
    let dh = inst.day.dh();
    for h in 0..HOURS {
        let net = (inst.day.load_mw[h] - inst.day.wind_mwh[h] / dh).max(T::zero());
        let g = net.min(inst.gen.capacity_mw);
        x[gen_var(h)] = g;
        x[red_var(h)] = (net - g).min(inst.load.max_reduction_mw);
    }
    x
}

pub fn solve_dispatch<T: Scalar>(inst: &DispatchInstance<T>) -> Result<DispatchSolution<T>, DispatchError> {
    solve_dispatch_with(inst, None)
}

/// [`solve_dispatch`] with an optional working-set hint from a related solve.
pub fn solve_dispatch_with<T: Scalar>(
    inst: &DispatchInstance<T>,
    hint: Option<&WorkingSet>,
) -> Result<DispatchSolution<T>, DispatchError> {
    let (problem, price) = match inst.mode {
        Mode::ConstrainedUsage(_) => (build_problem_a(inst)?, None),
        Mode::DegradationCost(c) => (build_problem_c(inst)?, Some(c)),
    };
    let ratings = derate(inst.soh.soh, &inst.storage)?;
    let warm = WarmStart {
        x: Some(crash_point(inst)),
        working_set: hint.cloned(),
    };
    let sol = solve_qp_with(&problem, &SolverSettings::default(), &warm)?;
    let x = &sol.x;
    let pick = |f: fn(usize) -> usize| -> Vec<T> { (0..HOURS).map(|h| x[f(h)].max(T::zero())).collect() };
    let gen_mw = pick(gen_var);
    let reduction_mw = pick(red_var);
    let discharge_mw = pick(dis_var);
    let charge_mw = pick(chg_var);
    let energy_mwh: Vec<T> = (0..=HOURS).map(|k| x[energy_var(k)]).collect();
    let dh = inst.day.dh();
    let usage_mwh = usage_of(&charge_mw, &discharge_mw, dh, inst.storage.calendar_mwh)?;
    let mut system_cost = T::zero();
    for h in 0..HOURS {
        let (g, l) = (gen_mw[h], reduction_mw[h]);
        system_cost += (inst.gen.a * g * g + inst.gen.b * g + inst.load.a * l * l + inst.load.b * l) * dh;
    }
    let (cap_dual, cap_slack) = match inst.mode {
        Mode::ConstrainedUsage(u) if u.is_finite() => (Some(sol.ineq_duals[CAP_ROW]), Some(u - usage_mwh)),
        Mode::ConstrainedUsage(_) => (Some(T::zero()), Some(T::infinity())),
        Mode::DegradationCost(_) => (None, None),
    };
    Ok(DispatchSolution {
        gen_mw,
        reduction_mw,
        discharge_mw,
        charge_mw,
        energy_mwh,
        system_cost,
        usage_cost: price.map_or(T::zero(), |c| c * usage_mwh),
        usage_mwh,
        cap_dual,
        cap_slack,
        ratings,
        status: sol.status,
        iterations: sol.iterations,
        working_set: sol.working_set,
    })
}

/// `−∂F/∂u`, the usage-cap multiplier of Problem A. Fails with
/// [`DispatchError::CapInactive`] when the cap is slack, where the
/// multiplier is zero.
pub fn marginal_usage_value<T: Scalar>(inst: &DispatchInstance<T>) -> Result<T, DispatchError> {
    if !matches!(inst.mode, Mode::ConstrainedUsage(_)) {
        return invalid("marginal_usage_value", "mode must be ConstrainedUsage");
    }
    let sol = solve_dispatch(inst)?;
    let slack = sol.cap_slack.unwrap_or(T::infinity());
    if slack > T::of(1e-6) {
        return Err(DispatchError::CapInactive { slack: slack.as_f64() });
    }
    Ok(sol.cap_dual.unwrap_or(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SohSensitivity<T> {
    /// `∂F/∂H` ($ per unit SOH).
    pub value: T,
    /// True when a one-sided difference replaced the central one at `H₀` or `H̲`.
    pub one_sided: bool,
}

/// Finite-difference `∂F/∂H` of the instance's objective at fixed mode
/// parameter. Central where `H ± step` stays in range, one-sided otherwise.
pub fn soh_sensitivity<T: Scalar>(inst: &DispatchInstance<T>, step: T) -> Result<SohSensitivity<T>, DispatchError> {
    soh_sensitivity_with(inst, step, None)
}

pub fn soh_sensitivity_with<T: Scalar>(
    inst: &DispatchInstance<T>,
    step: T,
    hint: Option<&WorkingSet>,
) -> Result<SohSensitivity<T>, DispatchError> {
    if !(step > T::zero()) {
        return invalid("soh_sensitivity", "step must be positive");
    }
    let h = inst.soh.soh;
    let hi = (h + step).min(inst.storage.soh_initial);
    let lo = (h - step).max(inst.storage.soh_end);
    if !(hi > lo) {
        return invalid("soh_sensitivity", "no room for a difference inside the SOH range");
    }
    let eval = |soh: T| -> Result<T, DispatchError> {
        if soh == h {
            return Ok(solve_dispatch_with(inst, hint)?.objective());
        }
        Ok(solve_dispatch_with(&inst.with_soh(soh), hint)?.objective())
    };
    let value = (eval(hi)? - eval(lo)?) / (hi - lo);
    Ok(SohSensitivity {
        value,
        one_sided: ((hi - h) - (h - lo)).abs() > step * T::of(1e-6),
    })
}
