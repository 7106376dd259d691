//! State of health (SOH) bookkeeping and SOH-dependent derating.
//!
//! Degradation is linear in throughput: every MWh charged or discharged,
//! plus a fixed calendar term per period, consumes `k = (H₀ − H̲)/U` of
//! health. Ratings shrink as health falls:
//!
//! ```text
//!     ē(H) = H·ē₀
//!     Z(H) = Z₀ + (Z̄ − Z₀)(H₀ − H)/(H₀ − H̲)
//!     x̄(H) = (Z₀/Z)·x̄₀
//!     η(H) = 1 / (1 + (Z/Z₀)(1 − η₀)/η₀)
//! ```
//!
//! Only the linear-throughput degradation form is modelled; a chemistry
//! specific `d(x, H)` would replace [`usage_of`] and [`StorageParams::soh_loss`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Slack allowed when comparing SOH against its end-of-life floor.
pub const SOH_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DegradationError {
    #[error("derate: SOH {soh} outside [{min}, {max}]")]
    SohOutOfRange { soh: f64, min: f64, max: f64 },
    #[error("soh_step: usage {usage} MWh drives SOH to {soh}, below end of life {min}")]
    BudgetExceeded { usage: f64, soh: f64, min: f64 },
    #[error("usage_of: negative schedule entry {value} at hour {hour}")]
    NegativeSchedule { hour: usize, value: f64 },
    #[error("storage parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageParams<T> {
    /// Rated power x̄ˢ₀ (MW).
    pub power_mw: T,
    /// Rated energy ēˢ₀ (MWh).
    pub energy_mwh: T,
    /// One-way efficiency η₀.
    pub efficiency: T,
    /// Self-discharge ρ per hour.
    pub self_discharge: T,
    /// Life-cycle throughput budget U (MWh).
    pub budget_mwh: T,
    /// Calendar degradation q per dispatch period (MWh-equivalent).
    pub calendar_mwh: T,
    /// Initial SOH H₀.
    pub soh_initial: T,
    /// End-of-life SOH H̲.
    pub soh_end: T,
    /// End-of-life impedance ratio Z̄/Z₀; Z₀ is normalised to 1.
    pub impedance_end_ratio: T,
}

impl<T: Scalar> StorageParams<T> {
    /// 50 MW / 200 MWh lithium-ion unit of the reference case study.
    pub fn reference() -> Self {
        Self {
            power_mw: T::of(50.0),
            energy_mwh: T::of(200.0),
            efficiency: T::of(0.95),
            self_discharge: T::zero(),
            budget_mwh: T::of(1.2e6),
            calendar_mwh: T::of(50.0),
            soh_initial: T::one(),
            soh_end: T::of(0.7),
            impedance_end_ratio: T::of(2.0),
        }
    }

    pub fn validate(&self) -> Result<(), DegradationError> {
        let bad = |m: &str| Err(DegradationError::InvalidParams(m.into()));
        let (z, o) = (T::zero(), T::one());
        if !(self.soh_end > z && self.soh_end < self.soh_initial && self.soh_initial <= o) {
            return bad("need 0 < soh_end < soh_initial <= 1");
        }
        if !(self.calendar_mwh > z && self.budget_mwh >= self.calendar_mwh) {
            return bad("need budget >= calendar degradation > 0");
        }
        if !(self.efficiency > z && self.efficiency <= o) {
            return bad("efficiency must lie in (0, 1]");
        }
        if !(self.impedance_end_ratio >= o) {
            return bad("end-of-life impedance ratio must be >= 1");
        }
        if !(self.power_mw > z && self.energy_mwh > z) {
            return bad("ratings must be positive");
        }
        if !(self.self_discharge >= z && self.self_discharge < o) {
            return bad("self-discharge must lie in [0, 1)");
        }
        Ok(())
    }

    /// SOH lost per MWh of usage, `k = (H₀ − H̲)/U`.
    #[inline]
    pub fn sensitivity(&self) -> T {
        (self.soh_initial - self.soh_end) / self.budget_mwh
    }

    #[inline]
    pub fn soh_loss(&self, usage: T) -> T {
        usage * self.sensitivity()
    }

    /// Usage that would take health from `soh` down to `H̲`.
    #[inline]
    pub fn remaining_budget(&self, soh: T) -> T {
        (soh - self.soh_end) / self.sensitivity()
    }

    pub fn initial_state(&self) -> SohState<T> {
        SohState {
            soh: self.soh_initial,
            cumulative_usage: T::zero(),
            period: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SohState<T> {
    pub soh: T,
    /// Throughput consumed so far (MWh).
    pub cumulative_usage: T,
    /// Periods elapsed.
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeratedRatings<T> {
    pub energy_mwh: T,
    /// Impedance relative to Z₀.
    pub impedance: T,
    pub power_mw: T,
    pub efficiency: T,
}

pub fn derate<T: Scalar>(soh: T, p: &StorageParams<T>) -> Result<DeratedRatings<T>, DegradationError> {
    let slack = T::of(SOH_SLACK);
    if !(soh >= p.soh_end - slack && soh <= p.soh_initial + slack) {
        return Err(DegradationError::SohOutOfRange {
            soh: soh.as_f64(),
            min: p.soh_end.as_f64(),
            max: p.soh_initial.as_f64(),
        });
    }
    let one = T::one();
    let span = p.soh_initial - p.soh_end;
    let impedance = one + (p.impedance_end_ratio - one) * (p.soh_initial - soh) / span;
    let eta = p.efficiency;
    Ok(DeratedRatings {
        energy_mwh: soh * p.energy_mwh,
        impedance,
        power_mw: p.power_mw / impedance,
        efficiency: eta / (eta + impedance * (one - eta)),
    })
}

/// Advances health by one period with usage `u`.
pub fn soh_step<T: Scalar>(
    state: SohState<T>,
    usage: T,
    p: &StorageParams<T>,
) -> Result<SohState<T>, DegradationError> {
    if usage < T::zero() {
        return Err(DegradationError::NegativeSchedule {
            hour: 0,
            value: usage.as_f64(),
        });
    }
    let soh = state.soh - p.soh_loss(usage);
    if soh < p.soh_end - T::of(SOH_SLACK) {
        return Err(DegradationError::BudgetExceeded {
            usage: usage.as_f64(),
            soh: soh.as_f64(),
            min: p.soh_end.as_f64(),
        });
    }
    Ok(SohState {
        soh,
        cumulative_usage: state.cumulative_usage + usage,
        period: state.period + 1,
    })
}

/// Period usage `Σ_h (x⁺_h + x⁻_h)·Δh + q`.
pub fn usage_of<T: Scalar>(
    charge: &[T],
    discharge: &[T],
    dh: T,
    calendar: T,
) -> Result<T, DegradationError> {
    let mut total = T::zero();
    for (hour, &v) in charge.iter().enumerate().chain(discharge.iter().enumerate()) {
        if v < T::zero() {
            return Err(DegradationError::NegativeSchedule {
                hour,
                value: v.as_f64(),
            });
        }
        total += v;
    }
    Ok(total * dh + calendar)
}
