//! Dense convex quadratic programming with exact constraint multipliers.
//!
//! ```text
//!     minimize     ½ xᵀQx + cᵀx
//!     subject to   A x ≤ b
//!                  E x = f
//!                  l ≤ x ≤ u
//! ```
//!
//! Solved by a two-phase primal active-set method. `Q` only has to be
//! positive semidefinite: directions of zero curvature are followed to the
//! next blocking constraint instead of being regularised away, so the
//! multipliers returned are the exact KKT multipliers of the stated problem.

mod active_set;
mod kkt;
mod working_set;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};

pub use kkt::{check_kkt, KktReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("solve_qp: no point satisfies the constraints (phase-1 residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("solve_qp: tolerances unmet after {iterations} iterations")]
    MaxIterations { iterations: usize },
    #[error("solve_qp: quadratic term is not positive semidefinite")]
    NotPsd,
    #[error("solve_qp: objective unbounded below")]
    Unbounded,
    #[error("solve_qp: inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("solve_qp: numerical breakdown: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Canonical QP. Rows of `A`/`E` are stored densely; labels are opaque tags
/// used by callers to look multipliers up after the solve.
#[derive(Debug, Clone)]
pub struct QpProblem<T> {
    pub q: Matrix<T>,
    pub c: Vec<T>,
    pub a_ineq: Vec<Vec<T>>,
    pub b_ineq: Vec<T>,
    pub ineq_labels: Vec<String>,
    pub a_eq: Vec<Vec<T>>,
    pub b_eq: Vec<T>,
    pub eq_labels: Vec<String>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Unconstrained problem with zero objective over `n` free variables.
    pub fn new(n: usize) -> Self {
        Self {
            q: Matrix::zeros(n, n),
            c: vec![T::zero(); n],
            a_ineq: Vec::new(),
            b_ineq: Vec::new(),
            ineq_labels: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            eq_labels: Vec::new(),
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn add_ineq(&mut self, row: Vec<T>, rhs: T, label: impl Into<String>) -> usize {
        self.a_ineq.push(row);
        self.b_ineq.push(rhs);
        self.ineq_labels.push(label.into());
        self.a_ineq.len() - 1
    }

    pub fn add_eq(&mut self, row: Vec<T>, rhs: T, label: impl Into<String>) -> usize {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self.eq_labels.push(label.into());
        self.a_eq.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lo: T, hi: T) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn ineq_index(&self, label: &str) -> Option<usize> {
        self.ineq_labels.iter().position(|l| l == label)
    }

    pub fn eq_index(&self, label: &str) -> Option<usize> {
        self.eq_labels.iter().position(|l| l == label)
    }

    pub fn objective(&self, x: &[T]) -> T {
        let qx = self.q.mul_vec(x);
        T::of(0.5) * dot(x, &qx) + dot(&self.c, x)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let dim = |what: String| Err(QpError::Dimension(what));
        if self.q.rows() != n || self.q.cols() != n {
            return dim(format!("Q is {}x{}, expected {n}x{n}", self.q.rows(), self.q.cols()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return dim("bound vectors".into());
        }
        if self.a_ineq.len() != self.b_ineq.len() || self.ineq_labels.len() != self.b_ineq.len() {
            return dim("inequality rows vs rhs".into());
        }
        if self.a_eq.len() != self.b_eq.len() || self.eq_labels.len() != self.b_eq.len() {
            return dim("equality rows vs rhs".into());
        }
        if let Some(i) = self.a_ineq.iter().chain(&self.a_eq).position(|r| r.len() != n) {
            return dim(format!("constraint row {i} has wrong length"));
        }
        if let Some(j) = (0..n).find(|&j| self.lower[j] > self.upper[j]) {
            return Err(QpError::Infeasible {
                residual: (self.lower[j] - self.upper[j]).as_f64(),
            });
        }
        let all_finite = self.c.iter().all(|v| v.is_finite())
            && self.b_ineq.iter().chain(&self.b_eq).all(|v| v.is_finite())
            && self.a_ineq.iter().chain(&self.a_eq).flatten().all(|v| v.is_finite());
        if !all_finite {
            return dim("non-finite coefficient".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings<T> {
    pub feas_tol: T,
    pub opt_tol: T,
    pub comp_tol: T,
    /// `None` means `10·(n + m)`.
    pub max_iter: Option<usize>,
    /// Eigenvalue floor of the PSD check.
    pub psd_floor: T,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        let tol = T::default_tol();
        Self {
            feas_tol: tol,
            opt_tol: tol,
            comp_tol: tol,
            max_iter: None,
            psd_floor: T::of(1e-9),
        }
    }
}

/// Constraints held as equalities at a solution; reusable as a warm start
/// for a problem with the same layout.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkingSet {
    pub ineq: Vec<usize>,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct WarmStart<T> {
    /// Starting point; projected onto the bounds before phase 1.
    pub x: Option<Vec<T>>,
    /// Working-set guess, tried before `x`.
    pub working_set: Option<WorkingSet>,
}

impl<T> WarmStart<T> {
    pub fn from_point(x: Vec<T>) -> Self {
        Self {
            x: Some(x),
            working_set: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    /// Multipliers of `A x ≤ b`, all ≥ 0.
    pub ineq_duals: Vec<T>,
    /// Multipliers of `E x = f`.
    pub eq_duals: Vec<T>,
    /// Multipliers of `x ≥ l` and `x ≤ u`, both ≥ 0.
    pub lower_duals: Vec<T>,
    pub upper_duals: Vec<T>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub working_set: WorkingSet,
    /// True when the warm-start working set was accepted without phase 1.
    pub warm_started: bool,
}

impl<T: Scalar> QpSolution<T> {
    pub fn ineq_dual(&self, problem: &QpProblem<T>, label: &str) -> Option<T> {
        problem.ineq_index(label).map(|i| self.ineq_duals[i])
    }

    pub fn eq_dual(&self, problem: &QpProblem<T>, label: &str) -> Option<T> {
        problem.eq_index(label).map(|i| self.eq_duals[i])
    }
}

pub fn solve_qp<T: Scalar>(
    problem: &QpProblem<T>,
    settings: &SolverSettings<T>,
) -> Result<QpSolution<T>, QpError> {
    solve_qp_with(problem, settings, &WarmStart::default())
}

pub fn solve_qp_with<T: Scalar>(
    problem: &QpProblem<T>,
    settings: &SolverSettings<T>,
    warm: &WarmStart<T>,
) -> Result<QpSolution<T>, QpError> {
    problem.validate()?;
    let mut sym = problem.q.clone();
    let n = problem.n();
    for i in 0..n {
        for j in i + 1..n {
            let v = T::of(0.5) * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    if !crate::linalg::is_psd(&sym, settings.psd_floor) {
        return Err(QpError::NotPsd);
    }
    let symmetric = QpProblem {
        q: sym,
        ..problem.clone()
    };
    active_set::solve(&symmetric, settings, warm)
}

#[cfg(test)]
mod tests;
