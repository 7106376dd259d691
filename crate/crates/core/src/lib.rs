//! Degradation-aware economic dispatch with battery storage.
//!
//! The crate prices battery usage with a time-varying marginal cost of
//! degradation (MCD): the opportunity cost per MWh of throughput that makes
//! each day's cost-minimising dispatch reproduce the life-cycle optimum.
//!
//! Layers, bottom-up:
//! * [`qp`]: dense convex QP solver with exact multipliers;
//! * [`degradation`]: state-of-health bookkeeping and derating;
//! * [`dispatch`]: daily dispatch with a usage cap or a usage price;
//! * [`horizon`]: backward MCD sweep, forward life-cycle evaluation, brute-force oracle;
//! * [`baselines`]: comparator degradation-cost policies;
//! * [`io`]: profiles, configuration and result files.
//!
//! Numerical code is generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below fix the scalar for application code.

pub mod baselines;
pub mod degradation;
pub mod dispatch;
pub mod horizon;
pub mod io;
pub mod linalg;
pub mod qp;
pub mod scalar;
pub mod validation;

pub use scalar::Scalar;

pub type QpProblem64 = qp::QpProblem<f64>;
pub type QpSolution64 = qp::QpSolution<f64>;
pub type StorageParams64 = degradation::StorageParams<f64>;
pub type DispatchInstance64 = dispatch::DispatchInstance<f64>;
pub type DispatchSolution64 = dispatch::DispatchSolution<f64>;
pub type McdSchedule64 = horizon::McdSchedule<f64>;
pub type HorizonResult64 = horizon::HorizonResult<f64>;
