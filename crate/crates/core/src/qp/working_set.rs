use super::{QpProblem, WorkingSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Fix {
    Free,
    Lower,
    Upper,
}

/// Working set in solver form: general rows plus per-variable bound state.
#[derive(Debug, Clone)]
pub(super) struct Active {
    pub eq: Vec<usize>,
    pub ineq: Vec<usize>,
    pub fix: Vec<Fix>,
}

impl Active {
    pub fn free_vars(&self) -> Vec<usize> {
        (0..self.fix.len())
            .filter(|&j| self.fix[j] == Fix::Free)
            .collect()
    }

    pub fn to_public(&self) -> WorkingSet {
        let mut ws = WorkingSet {
            ineq: self.ineq.clone(),
            ..Default::default()
        };
        for (j, f) in self.fix.iter().enumerate() {
            match f {
                Fix::Lower => ws.lower.push(j),
                Fix::Upper => ws.upper.push(j),
                Fix::Free => {}
            }
        }
        ws
    }

    pub fn add_ineq(&mut self, i: usize) {
        if let Err(pos) = self.ineq.binary_search(&i) {
            self.ineq.insert(pos, i);
        }
    }

    pub fn remove_ineq(&mut self, i: usize) {
        if let Ok(pos) = self.ineq.binary_search(&i) {
            self.ineq.remove(pos);
        }
    }
}

/// Picks a linearly independent working set from candidate constraints.
///
/// Equality rows take precedence, then inequality rows in index order; a
/// bound candidate is dropped whenever its column is needed as a pivot for
/// a general row. Gaussian elimination with pivots preferring columns that
/// are not bound candidates keeps the retained rows independent of the
/// fixed columns.
pub(super) fn select<T: Scalar>(
    p: &QpProblem<T>,
    eq_cands: &[usize],
    ineq_cands: &[usize],
    bound_cands: &[(usize, Fix)],
) -> Active {
    let n = p.n();
    let mut fix = vec![Fix::Free; n];
    for &(j, side) in bound_cands {
        let finite = match side {
            Fix::Lower => p.lower[j].is_finite(),
            Fix::Upper => p.upper[j].is_finite(),
            Fix::Free => false,
        };
        if finite {
            fix[j] = side;
        }
    }
    let dep_tol = T::of(1e-9);
    let mut basis: Vec<(usize, Vec<T>)> = Vec::new();
    let mut eq = Vec::new();
    let mut ineq = Vec::new();

    let consider = |row: &[T], fix: &mut Vec<Fix>, basis: &mut Vec<(usize, Vec<T>)>| -> bool {
        let scale = row.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if scale == T::zero() {
            return false;
        }
        let mut v = row.to_vec();
        for (pc, bv) in basis.iter() {
            let f = v[*pc] / bv[*pc];
            if f != T::zero() {
                for (vi, bi) in v.iter_mut().zip(bv) {
                    *vi -= f * *bi;
                }
            }
        }
        let vmax = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if vmax <= dep_tol * scale {
            return false;
        }
        let mut pick = None;
        let mut best = T::zero();
        for j in 0..n {
            if fix[j] == Fix::Free && v[j].abs() >= T::of(0.1) * vmax && v[j].abs() > best {
                best = v[j].abs();
                pick = Some(j);
            }
        }
        let pc = pick.unwrap_or_else(|| {
            let mut bj = 0;
            for j in 0..n {
                if v[j].abs() > v[bj].abs() {
                    bj = j;
                }
            }
            bj
        });
        fix[pc] = Fix::Free;
        basis.push((pc, v));
        true
    };

    for &i in eq_cands {
        if consider(&p.a_eq[i], &mut fix, &mut basis) {
            eq.push(i);
        }
    }
    for &i in ineq_cands {
        if consider(&p.a_ineq[i], &mut fix, &mut basis) {
            ineq.push(i);
        }
    }
    eq.sort_unstable();
    ineq.sort_unstable();
    Active { eq, ineq, fix }
}
