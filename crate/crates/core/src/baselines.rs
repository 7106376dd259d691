//! Comparator policies for the optimal MCD schedule: a levelized cost of
//! degradation, the recursion without its SOH term, and free storage.

use serde::{Deserialize, Serialize};

use crate::degradation::StorageParams;
use crate::horizon::{
    evaluate_schedule, no_storage_cost, optimize_mcd, DiscountModel, GridSettings, HorizonConfig, HorizonError,
    HorizonResult, McdSchedule, Period, Policy,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapitalParams<T> {
    /// Capital cost per unit of energy capacity ($/kWh).
    pub usd_per_kwh: T,
    /// Share of the capital lost to degradation over the amortization period.
    pub depreciation_ratio: T,
    pub years: T,
}

impl<T: Scalar> CapitalParams<T> {
    /// 200 $/kWh, 30% depreciation over 15 years.
    pub fn reference() -> Self {
        Self {
            usd_per_kwh: T::of(200.0),
            depreciation_ratio: T::of(0.3),
            years: T::of(15.0),
        }
    }

    pub fn validate(&self) -> Result<(), HorizonError> {
        let ok = self.usd_per_kwh > T::zero()
            && self.depreciation_ratio > T::zero()
            && self.depreciation_ratio <= T::one()
            && self.years > T::zero()
            && self.usd_per_kwh.is_finite()
            && self.years.is_finite();
        if ok {
            Ok(())
        } else {
            Err(HorizonError::Invalid {
                op: "CapitalParams",
                msg: "need positive cost and years with 0 < depreciation ratio <= 1".into(),
            })
        }
    }
}

/// Capital recovery factor `r(1 + r)ⁿ / ((1 + r)ⁿ − 1)`, `1/n` at `r = 0`.
pub fn capital_recovery_factor<T: Scalar>(rate: T, years: T) -> T {
    if rate == T::zero() {
        return T::one() / years;
    }
    let g = (T::one() + rate).powf(years);
    rate * g / (g - T::one())
}

/// Levelized cost of degradation ($/MWh of throughput): annualized
/// depreciable capital over the annual share of the usage budget.
pub fn lcod_cost<T: Scalar>(capital: &CapitalParams<T>, storage: &StorageParams<T>, discount: &DiscountModel<T>) -> T {
    let capital_usd = capital.usd_per_kwh * T::of(1000.0) * storage.energy_mwh;
    let annual = capital_usd * capital.depreciation_ratio * capital_recovery_factor(discount.rate, capital.years);
    annual / (storage.budget_mwh / capital.years)
}

/// Constant price `lcod` in every period.
pub fn run_lcod<T: Scalar>(cfg: &HorizonConfig<T>, periods: &[Period<T>], lcod: T) -> Result<HorizonResult<T>, HorizonError> {
    evaluate_schedule(cfg, periods, &Policy::Price(vec![lcod; periods.len()]), "lcod")
}

/// Optimal schedule computed with the SOH term of the recursion dropped.
pub fn no_soh_schedule<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    grid: &GridSettings<T>,
) -> Result<McdSchedule<T>, HorizonError> {
    let cfg = HorizonConfig { soh_term: false, ..*cfg };
    optimize_mcd(&cfg, periods, grid)
}

/// Prices from [`no_soh_schedule`], dispatched against the true SOH path.
pub fn run_no_soh_term<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    grid: &GridSettings<T>,
) -> Result<HorizonResult<T>, HorizonError> {
    let schedule = no_soh_schedule(cfg, periods, grid)?;
    evaluate_schedule(cfg, periods, &schedule.price_policy(), "no_soh_term")
}

/// Storage priced at zero until the budget runs out.
pub fn run_zero_cost<T: Scalar>(cfg: &HorizonConfig<T>, periods: &[Period<T>]) -> Result<HorizonResult<T>, HorizonError> {
    evaluate_schedule(cfg, periods, &Policy::Price(vec![T::zero(); periods.len()]), "zero_cost")
}

/// Optimal schedule and its forward evaluation.
pub fn run_optimal<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    grid: &GridSettings<T>,
) -> Result<(McdSchedule<T>, HorizonResult<T>), HorizonError> {
    let schedule = optimize_mcd(cfg, periods, grid)?;
    let result = evaluate_schedule(cfg, periods, &schedule.price_policy(), "optimal")?;
    Ok((schedule, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome<T> {
    pub label: String,
    pub y: T,
    pub savings: T,
    /// Savings relative to the optimal policy.
    pub ratio: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison<T> {
    /// Discounted cost with the storage idle throughout.
    pub baseline: T,
    pub lcod: T,
    pub optimal: McdSchedule<T>,
    pub no_soh: McdSchedule<T>,
    /// Forward evaluations: optimal, LCOD, no SOH term, zero cost.
    pub results: Vec<HorizonResult<T>>,
    pub outcomes: Vec<PolicyOutcome<T>>,
}

impl<T: Scalar> Comparison<T> {
    pub fn outcome(&self, label: &str) -> Option<&PolicyOutcome<T>> {
        self.outcomes.iter().find(|o| o.label == label)
    }

    pub fn result(&self, label: &str) -> Option<&HorizonResult<T>> {
        self.results.iter().find(|r| r.label == label)
    }
}

/// Runs all four policies against the no-storage baseline.
pub fn compare_policies<T: Scalar>(
    cfg: &HorizonConfig<T>,
    periods: &[Period<T>],
    grid: &GridSettings<T>,
    lcod: T,
) -> Result<Comparison<T>, HorizonError> {
    let baseline = no_storage_cost(cfg, periods)?;
    let ((optimal, opt_res), no_soh) = {
        let (a, b) = rayon::join(|| run_optimal(cfg, periods, grid), || no_soh_schedule(cfg, periods, grid));
        (a?, b?)
    };
    let no_soh_res = evaluate_schedule(cfg, periods, &no_soh.price_policy(), "no_soh_term")?;
    let results = vec![
        opt_res,
        run_lcod(cfg, periods, lcod)?,
        no_soh_res,
        run_zero_cost(cfg, periods)?,
    ];
    let best = baseline - results[0].y;
    let outcomes = results
        .iter()
        .map(|r| {
            let savings = baseline - r.y;
            PolicyOutcome {
                label: r.label.clone(),
                y: r.y,
                savings,
                ratio: if best != T::zero() { savings / best } else { T::nan() },
            }
        })
        .collect();
    Ok(Comparison {
        baseline,
        lcod,
        optimal,
        no_soh,
        results,
        outcomes,
    })
}
