//! Primal active-set iterations (null-space variant).
//!
//! Bound constraints are handled by fixing variables, so linear algebra runs
//! only over the free columns. Each iteration factors the working rows with
//! Householder QR, projects the Hessian onto their null space and either
//! takes the projected Newton step or, when the projected Hessian is
//! singular and the gradient has a kernel component, follows that
//! zero-curvature ray to the first blocking constraint.

use super::working_set::{select, Active, Fix};
use super::{QpError, QpProblem, QpSolution, QpStatus, SolverSettings, WarmStart, WorkingSet};
use crate::linalg::{psd_step, qr_split, solve_upper, solve_upper_tr, Matrix, PsdStep, QrSplit};
use crate::scalar::{dot, max_abs, Scalar};

struct Ctx<'a, T> {
    p: &'a QpProblem<T>,
    s: &'a SolverSettings<T>,
    diag_q: bool,
    rank_tol: T,
    hess_tol: T,
    ray_tol: T,
    step_tol: T,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    fn new(p: &'a QpProblem<T>, s: &'a SolverSettings<T>) -> Self {
        let qmax = p.q.max_abs();
        Self {
            p,
            s,
            diag_q: p.q.is_diagonal(),
            rank_tol: T::epsilon().sqrt() * T::of(1e-3),
            hess_tol: T::of(1e-10) * qmax.max(T::epsilon()),
            ray_tol: T::epsilon().sqrt() * T::of(0.1),
            step_tol: T::epsilon().sqrt() * T::of(1e-3),
        }
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = if self.diag_q {
            (0..x.len()).map(|i| self.p.q[(i, i)] * x[i]).collect()
        } else {
            self.p.q.mul_vec(x)
        };
        for (gi, ci) in g.iter_mut().zip(&self.p.c) {
            *gi += *ci;
        }
        g
    }

    fn max_violation(&self, x: &[T]) -> T {
        let p = self.p;
        let mut v = T::zero();
        for (row, &b) in p.a_ineq.iter().zip(&p.b_ineq) {
            v = v.max(dot(row, x) - b);
        }
        for (row, &b) in p.a_eq.iter().zip(&p.b_eq) {
            v = v.max((dot(row, x) - b).abs());
        }
        for j in 0..x.len() {
            v = v.max(p.lower[j] - x[j]).max(x[j] - p.upper[j]);
        }
        v
    }

    fn reduced_hessian(&self, free: &[usize], z: &Matrix<T>) -> Matrix<T> {
        let d = z.cols();
        let nf = free.len();
        let mut qz = Matrix::zeros(nf, d);
        if self.diag_q {
            for (a, &j) in free.iter().enumerate() {
                let qjj = self.p.q[(j, j)];
                if qjj != T::zero() {
                    for k in 0..d {
                        qz[(a, k)] = qjj * z[(a, k)];
                    }
                }
            }
        } else {
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    let qij = self.p.q[(i, j)];
                    if qij == T::zero() {
                        continue;
                    }
                    for k in 0..d {
                        let v = qij * z[(b, k)];
                        qz[(a, k)] += v;
                    }
                }
            }
        }
        let mut h = Matrix::zeros(d, d);
        for a in 0..nf {
            for k in 0..d {
                let zak = z[(a, k)];
                if zak == T::zero() {
                    continue;
                }
                for l in 0..d {
                    let v = zak * qz[(a, l)];
                    h[(k, l)] += v;
                }
            }
        }
        h
    }

    /// Working rows restricted to free columns, factored as `Mᵀ = Y R`.
    fn factor(&self, act: &Active, free: &[usize]) -> Result<QrSplit<T>, QpError> {
        let rows: Vec<&[T]> = self.rows(act);
        let nf = free.len();
        let mg = rows.len();
        if mg == 0 {
            return Ok(QrSplit {
                y: Matrix::zeros(nf, 0),
                z: Matrix::identity(nf),
                r: Matrix::zeros(0, 0),
            });
        }
        if mg > nf {
            return Err(QpError::Numerical(format!(
                "working set has {mg} rows over {nf} free columns"
            )));
        }
        let mut b = Matrix::zeros(nf, mg);
        for (k, row) in rows.iter().enumerate() {
            for (a, &j) in free.iter().enumerate() {
                b[(a, k)] = row[j];
            }
        }
        qr_split(&b, self.rank_tol)
            .ok_or_else(|| QpError::Numerical("dependent working constraints".into()))
    }

    fn rows(&self, act: &Active) -> Vec<&'a [T]> {
        act.eq
            .iter()
            .map(|&i| self.p.a_eq[i].as_slice())
            .chain(act.ineq.iter().map(|&i| self.p.a_ineq[i].as_slice()))
            .collect()
    }

    fn rhs(&self, act: &Active) -> Vec<T> {
        act.eq
            .iter()
            .map(|&i| self.p.b_eq[i])
            .chain(act.ineq.iter().map(|&i| self.p.b_ineq[i]))
            .collect()
    }
}

/// Multipliers at an optimal working set.
struct Mults<T> {
    eq: Vec<T>,
    ineq: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
}

#[derive(Clone, Copy)]
enum Blocker {
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

/// Core loop from a feasible `x` with a consistent working set.
fn iterate<T: Scalar>(
    ctx: &Ctx<'_, T>,
    x: &mut [T],
    act: &mut Active,
    max_iter: usize,
    iters: &mut usize,
) -> Result<Mults<T>, QpError> {
    let p = ctx.p;
    let n = p.n();
    let mi = p.a_ineq.len();
    let mut in_ws = vec![false; mi];
    for &i in &act.ineq {
        in_ws[i] = true;
    }
    let mut skip_ineq = vec![false; mi];
    let mut skip_bound = vec![false; n];
    let mut added: Option<Blocker> = None;
    loop {
        if *iters >= max_iter {
            return Err(QpError::MaxIterations { iterations: *iters });
        }
        *iters += 1;
        let free = act.free_vars();
        let qr = match (ctx.factor(act, &free), added.take()) {
            (Ok(qr), _) => qr,
            // a blocker parallel to the step up to rounding: undo and ignore it until the next drop
            (Err(_), Some(Blocker::Ineq(i))) => {
                act.remove_ineq(i);
                in_ws[i] = false;
                skip_ineq[i] = true;
                continue;
            }
            (Err(_), Some(Blocker::Lower(j) | Blocker::Upper(j))) => {
                act.fix[j] = Fix::Free;
                skip_bound[j] = true;
                continue;
            }
            (Err(e), None) => return Err(e),
        };
        let g = ctx.gradient(x);
        let g_f: Vec<T> = free.iter().map(|&j| g[j]).collect();

        let d = qr.z.cols();
        let step = if d == 0 {
            None
        } else {
            let hr = ctx.reduced_hessian(&free, &qr.z);
            let gr = qr.z.tr_mul_vec(&g_f);
            let lift = |v: Vec<T>| -> Vec<T> {
                let pf = qr.z.mul_vec(&v);
                let mut full = vec![T::zero(); n];
                for (a, &j) in free.iter().enumerate() {
                    full[j] = pf[a];
                }
                full
            };
            match psd_step(&hr, &gr, ctx.hess_tol, ctx.ray_tol) {
                PsdStep::Newton(pz) => {
                    let full = lift(pz);
                    if max_abs(&full) <= ctx.step_tol * (T::one() + max_abs(x)) {
                        None
                    } else {
                        Some((full, true))
                    }
                }
                PsdStep::Ray(dz) => Some((lift(dz), false)),
            }
        };

        let Some((dir, newton)) = step else {
            // stationary on the working set: price out the multipliers
            let yg = qr.y.tr_mul_vec(&g_f);
            let neg: Vec<T> = yg.iter().map(|v| -*v).collect();
            let lam = solve_upper(&qr.r, &neg);
            let rows = ctx.rows(act);
            let mut resid = g.clone();
            for (k, row) in rows.iter().enumerate() {
                if lam[k] == T::zero() {
                    continue;
                }
                for (rj, aj) in resid.iter_mut().zip(row.iter()) {
                    *rj += lam[k] * *aj;
                }
            }
            let ne = act.eq.len();
            let mut m = Mults {
                eq: vec![T::zero(); p.a_eq.len()],
                ineq: vec![T::zero(); mi],
                lower: vec![T::zero(); n],
                upper: vec![T::zero(); n],
            };
            let mut worst: Option<(T, usize)> = None;
            let mut consider = |val: T, idx: usize| {
                if val < -ctx.s.opt_tol && worst.is_none_or(|(w, _)| val < w) {
                    worst = Some((val, idx));
                }
            };
            for (k, &i) in act.eq.iter().enumerate() {
                m.eq[i] = lam[k];
            }
            for (k, &i) in act.ineq.iter().enumerate() {
                let v = lam[ne + k];
                m.ineq[i] = v;
                consider(v, i);
            }
            for j in 0..n {
                match act.fix[j] {
                    Fix::Lower => {
                        m.lower[j] = resid[j];
                        consider(resid[j], mi + j);
                    }
                    Fix::Upper => {
                        m.upper[j] = -resid[j];
                        consider(-resid[j], mi + n + j);
                    }
                    Fix::Free => {}
                }
            }
            skip_ineq.iter_mut().for_each(|s| *s = false);
            skip_bound.iter_mut().for_each(|s| *s = false);
            match worst {
                None => return Ok(m),
                Some((_, idx)) if idx < mi => {
                    act.remove_ineq(idx);
                    in_ws[idx] = false;
                }
                Some((_, idx)) => {
                    let j = (idx - mi) % n;
                    act.fix[j] = Fix::Free;
                }
            }
            continue;
        };

        // ratio test
        let dnorm = max_abs(&dir);
        let tiny = T::epsilon() * T::of(16.0) * dnorm;
        let mut alpha = if newton { T::one() } else { T::infinity() };
        let mut block: Option<Blocker> = None;
        for i in 0..mi {
            if in_ws[i] || skip_ineq[i] {
                continue;
            }
            let row = &p.a_ineq[i];
            let ap = dot(row, &dir);
            if ap <= tiny * max_abs(row) {
                continue;
            }
            let slack = (p.b_ineq[i] - dot(row, x)).max(T::zero());
            let a = slack / ap;
            if a < alpha {
                alpha = a;
                block = Some(Blocker::Ineq(i));
            }
        }
        for &j in free.iter().filter(|&&j| !skip_bound[j]) {
            let pj = dir[j];
            if pj < -tiny && p.lower[j].is_finite() {
                let a = (x[j] - p.lower[j]).max(T::zero()) / -pj;
                if a < alpha {
                    alpha = a;
                    block = Some(Blocker::Lower(j));
                }
            }
        }
        for &j in free.iter().filter(|&&j| !skip_bound[j]) {
            let pj = dir[j];
            if pj > tiny && p.upper[j].is_finite() {
                let a = (p.upper[j] - x[j]).max(T::zero()) / pj;
                if a < alpha {
                    alpha = a;
                    block = Some(Blocker::Upper(j));
                }
            }
        }
        if !alpha.is_finite() {
            return Err(QpError::Unbounded);
        }
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi += alpha * *di;
        }
        added = block;
        match block {
            Some(Blocker::Ineq(i)) => {
                act.add_ineq(i);
                in_ws[i] = true;
            }
            Some(Blocker::Lower(j)) => {
                x[j] = p.lower[j];
                act.fix[j] = Fix::Lower;
            }
            Some(Blocker::Upper(j)) => {
                x[j] = p.upper[j];
                act.fix[j] = Fix::Upper;
            }
            None => {}
        }
    }
}

fn active_candidates<T: Scalar>(ctx: &Ctx<'_, T>, x: &mut [T]) -> Active {
    let p = ctx.p;
    let tol = ctx.s.feas_tol;
    let eq: Vec<usize> = (0..p.a_eq.len()).collect();
    let ineq: Vec<usize> = (0..p.a_ineq.len())
        .filter(|&i| (p.b_ineq[i] - dot(&p.a_ineq[i], x)).abs() <= tol * (T::one() + p.b_ineq[i].abs()))
        .collect();
    let mut bounds = Vec::new();
    for j in 0..p.n() {
        if p.lower[j].is_finite() && x[j] - p.lower[j] <= tol {
            bounds.push((j, Fix::Lower));
        } else if p.upper[j].is_finite() && p.upper[j] - x[j] <= tol {
            bounds.push((j, Fix::Upper));
        }
    }
    let act = select(p, &eq, &ineq, &bounds);
    for j in 0..p.n() {
        match act.fix[j] {
            Fix::Lower => x[j] = p.lower[j],
            Fix::Upper => x[j] = p.upper[j],
            Fix::Free => {}
        }
    }
    act
}

/// Minimiser on a guessed working set, accepted only if globally feasible.
fn try_working_set<T: Scalar>(ctx: &Ctx<'_, T>, ws: &WorkingSet) -> Option<(Vec<T>, Active)> {
    let p = ctx.p;
    let n = p.n();
    let eq: Vec<usize> = (0..p.a_eq.len()).collect();
    let ineq: Vec<usize> = ws.ineq.iter().copied().filter(|&i| i < p.a_ineq.len()).collect();
    let bounds: Vec<(usize, Fix)> = ws
        .lower
        .iter()
        .filter(|&&j| j < n)
        .map(|&j| (j, Fix::Lower))
        .chain(ws.upper.iter().filter(|&&j| j < n).map(|&j| (j, Fix::Upper)))
        .collect();
    let act = select(p, &eq, &ineq, &bounds);
    let free = act.free_vars();
    let mut x = vec![T::zero(); n];
    for j in 0..n {
        match act.fix[j] {
            Fix::Lower => x[j] = p.lower[j],
            Fix::Upper => x[j] = p.upper[j],
            Fix::Free => {}
        }
    }
    let qr = ctx.factor(&act, &free).ok()?;
    let rows = ctx.rows(&act);
    let mut rhs = ctx.rhs(&act);
    for (k, row) in rows.iter().enumerate() {
        rhs[k] -= dot(row, &x);
    }
    let v = solve_upper_tr(&qr.r, &rhs);
    let xp = qr.y.mul_vec(&v);
    for (a, &j) in free.iter().enumerate() {
        x[j] = xp[a];
    }
    if qr.z.cols() > 0 {
        let g = ctx.gradient(&x);
        let g_f: Vec<T> = free.iter().map(|&j| g[j]).collect();
        let hr = ctx.reduced_hessian(&free, &qr.z);
        let gr = qr.z.tr_mul_vec(&g_f);
        match psd_step(&hr, &gr, ctx.hess_tol, ctx.ray_tol) {
            PsdStep::Newton(pz) => {
                let pf = qr.z.mul_vec(&pz);
                for (a, &j) in free.iter().enumerate() {
                    x[j] += pf[a];
                }
            }
            PsdStep::Ray(_) => return None,
        }
    }
    if !x.iter().all(|v| v.is_finite()) || ctx.max_violation(&x) > ctx.s.feas_tol {
        return None;
    }
    Some((x, act))
}

/// Elastic phase 1: minimise the total violation from the crash point.
fn phase_one<T: Scalar>(
    ctx: &Ctx<'_, T>,
    x0: &[T],
    max_iter: usize,
    iters: &mut usize,
) -> Result<Vec<T>, QpError> {
    let p = ctx.p;
    let n = p.n();
    let tol = ctx.s.feas_tol;
    let mut ineq_slack = Vec::new();
    let mut eq_slack = Vec::new();
    for (i, row) in p.a_ineq.iter().enumerate() {
        let v = dot(row, x0) - p.b_ineq[i];
        if v > tol {
            ineq_slack.push((i, v));
        }
    }
    for (i, row) in p.a_eq.iter().enumerate() {
        let r = p.b_eq[i] - dot(row, x0);
        if r.abs() > tol {
            eq_slack.push((i, r));
        }
    }
    let k = ineq_slack.len() + eq_slack.len();
    let n1 = n + k;
    let mut ext = QpProblem::<T>::new(n1);
    let mut x = x0.to_vec();
    x.resize(n1, T::zero());
    for j in 0..n {
        ext.set_bounds(j, p.lower[j], p.upper[j]);
    }
    for s in n..n1 {
        ext.set_bounds(s, T::zero(), T::infinity());
        ext.c[s] = T::one();
    }
    let mut col = n;
    let mut slack_of_ineq = vec![None; p.a_ineq.len()];
    for &(i, v) in &ineq_slack {
        slack_of_ineq[i] = Some((col, v));
        col += 1;
    }
    for (i, row) in p.a_ineq.iter().enumerate() {
        let mut r = row.clone();
        r.resize(n1, T::zero());
        if let Some((s, v)) = slack_of_ineq[i] {
            r[s] = -T::one();
            x[s] = v;
        }
        ext.add_ineq(r, p.b_ineq[i], "");
    }
    let mut slack_of_eq = vec![None; p.a_eq.len()];
    for &(i, r) in &eq_slack {
        slack_of_eq[i] = Some((col, r));
        col += 1;
    }
    for (i, row) in p.a_eq.iter().enumerate() {
        let mut r = row.clone();
        r.resize(n1, T::zero());
        if let Some((s, res)) = slack_of_eq[i] {
            r[s] = if res > T::zero() { T::one() } else { -T::one() };
            x[s] = res.abs();
        }
        ext.add_eq(r, p.b_eq[i], "");
    }
    let settings = *ctx.s;
    let sub = Ctx::new(&ext, &settings);
    let mut act = active_candidates(&sub, &mut x);
    iterate(&sub, &mut x, &mut act, max_iter, iters)?;
    let residual: T = x[n..].iter().copied().sum();
    let scale = T::one() + max_abs(&p.b_ineq).max(max_abs(&p.b_eq));
    if residual > T::of(10.0) * tol * scale {
        return Err(QpError::Infeasible {
            residual: residual.as_f64(),
        });
    }
    x.truncate(n);
    for j in 0..n {
        x[j] = x[j].max(p.lower[j]).min(p.upper[j]);
    }
    Ok(x)
}

pub(super) fn solve<T: Scalar>(
    p: &QpProblem<T>,
    s: &SolverSettings<T>,
    warm: &WarmStart<T>,
) -> Result<QpSolution<T>, QpError> {
    let n = p.n();
    let m = p.a_ineq.len() + p.a_eq.len();
    let max_iter = s.max_iter.unwrap_or(10 * (n + m)).max(1);
    let ctx = Ctx::new(p, s);
    let mut iters = 0;

    if let Some(ws) = &warm.working_set {
        if let Some((mut x, mut act)) = try_working_set(&ctx, ws) {
            // a failed warm start only costs the attempt; fall through to a cold solve
            if let Ok(m) = iterate(&ctx, &mut x, &mut act, max_iter, &mut iters) {
                return Ok(finish(&ctx, x, &act, m, iters, true));
            }
        }
        iters = 0;
    }

    let mut x: Vec<T> = match &warm.x {
        Some(x0) if x0.len() == n => x0.clone(),
        _ => vec![T::zero(); n],
    };
    for j in 0..n {
        x[j] = x[j].max(p.lower[j]).min(p.upper[j]);
        if !x[j].is_finite() {
            x[j] = T::zero();
        }
    }
    if ctx.max_violation(&x) > s.feas_tol {
        x = phase_one(&ctx, &x, max_iter, &mut iters)?;
    }
    let mut act = active_candidates(&ctx, &mut x);
    let m = iterate(&ctx, &mut x, &mut act, max_iter, &mut iters)?;
    Ok(finish(&ctx, x, &act, m, iters, false))
}

fn finish<T: Scalar>(
    ctx: &Ctx<'_, T>,
    x: Vec<T>,
    act: &Active,
    m: Mults<T>,
    iterations: usize,
    warm_started: bool,
) -> QpSolution<T> {
    let p = ctx.p;
    let mut m = m;
    for v in m.ineq.iter_mut().chain(m.lower.iter_mut()).chain(m.upper.iter_mut()) {
        *v = v.max(T::zero());
    }
    let g = ctx.gradient(&x);
    let mut st = g;
    for (row, &l) in p.a_ineq.iter().zip(&m.ineq) {
        if l != T::zero() {
            st.iter_mut().zip(row).for_each(|(s, a)| *s += l * *a);
        }
    }
    for (row, &l) in p.a_eq.iter().zip(&m.eq) {
        if l != T::zero() {
            st.iter_mut().zip(row).for_each(|(s, a)| *s += l * *a);
        }
    }
    for j in 0..x.len() {
        st[j] += m.upper[j] - m.lower[j];
    }
    QpSolution {
        objective: p.objective(&x),
        primal_residual: ctx.max_violation(&x),
        dual_residual: max_abs(&st),
        x,
        ineq_duals: m.ineq,
        eq_duals: m.eq,
        lower_duals: m.lower,
        upper_duals: m.upper,
        status: QpStatus::Optimal,
        iterations,
        working_set: act.to_public(),
        warm_started,
    }
}
