use super::{QpProblem, QpSolution};
use crate::scalar::{dot, Scalar};

/// Worst-case residuals of the first-order optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<T> {
    /// ‖Qx + c + Aᵀλ + Eᵀμ − ν + ω‖∞
    pub stationarity: T,
    /// Largest constraint or bound violation.
    pub feasibility: T,
    /// Largest |multiplier · slack| over inequalities and bounds.
    pub complementarity: T,
    /// Most negative inequality or bound multiplier, as a positive number.
    pub dual_sign: T,
    pub passed: bool,
}

pub fn check_kkt<T: Scalar>(problem: &QpProblem<T>, sol: &QpSolution<T>, tol: T) -> KktReport<T> {
    let x = &sol.x;
    let n = problem.n();
    let mut st = problem.q.mul_vec(x);
    for (s, c) in st.iter_mut().zip(&problem.c) {
        *s += *c;
    }
    for (row, &l) in problem.a_ineq.iter().zip(&sol.ineq_duals) {
        st.iter_mut().zip(row).for_each(|(s, a)| *s += l * *a);
    }
    for (row, &l) in problem.a_eq.iter().zip(&sol.eq_duals) {
        st.iter_mut().zip(row).for_each(|(s, a)| *s += l * *a);
    }
    for j in 0..n {
        st[j] += sol.upper_duals[j] - sol.lower_duals[j];
    }
    let stationarity = st.iter().fold(T::zero(), |m, v| m.max(v.abs()));

    let mut feasibility = T::zero();
    let mut complementarity = T::zero();
    let mut dual_sign = T::zero();
    for (i, row) in problem.a_ineq.iter().enumerate() {
        let slack = dot(row, x) - problem.b_ineq[i];
        feasibility = feasibility.max(slack);
        complementarity = complementarity.max((sol.ineq_duals[i] * slack).abs());
        dual_sign = dual_sign.max(-sol.ineq_duals[i]);
    }
    for (i, row) in problem.a_eq.iter().enumerate() {
        feasibility = feasibility.max((dot(row, x) - problem.b_eq[i]).abs());
    }
    for j in 0..n {
        feasibility = feasibility
            .max(problem.lower[j] - x[j])
            .max(x[j] - problem.upper[j]);
        if problem.lower[j].is_finite() {
            complementarity = complementarity.max((sol.lower_duals[j] * (x[j] - problem.lower[j])).abs());
        }
        if problem.upper[j].is_finite() {
            complementarity = complementarity.max((sol.upper_duals[j] * (problem.upper[j] - x[j])).abs());
        }
        dual_sign = dual_sign.max(-sol.lower_duals[j]).max(-sol.upper_duals[j]);
    }
    let passed = stationarity <= tol && feasibility <= tol && complementarity <= tol && dual_sign <= tol;
    KktReport {
        stationarity,
        feasibility,
        complementarity,
        dual_sign,
        passed,
    }
}
