//! Small dense kernels used by the active-set solver.
//!
//! Everything here is row-major and sized for problems of a few hundred
//! unknowns; nothing is blocked or vectorised.

use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| {
            self.row(i)
                .iter()
                .enumerate()
                .all(|(j, &v)| i == j || v == T::zero())
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Complete orthogonal split of a tall matrix `B` (n × m, n ≥ m):
/// `B = Y·R` with `[Y Z]` orthogonal and `R` upper triangular.
pub struct QrSplit<T> {
    /// n × m range basis.
    pub y: Matrix<T>,
    /// n × (n − m) null-space basis of `Bᵀ`.
    pub z: Matrix<T>,
    /// m × m upper triangle.
    pub r: Matrix<T>,
}

/// Householder QR. Returns `None` when `B` is numerically rank deficient.
pub fn qr_split<T: Scalar>(b: &Matrix<T>, rank_tol: T) -> Option<QrSplit<T>> {
    let n = b.rows();
    let m = b.cols();
    if m > n {
        return None;
    }
    // work holds the factor in column-major for cache-friendly reflector application
    let mut cols: Vec<Vec<T>> = (0..m).map(|j| (0..n).map(|i| b[(i, j)]).collect()).collect();
    let scale = b.max_abs().max(T::min_positive_value());
    let mut vs: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut r = Matrix::zeros(m, m);
    for k in 0..m {
        let (cur, rest) = cols[k..].split_at_mut(1);
        let ck = &cur[0];
        let norm = ck[k..].iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
        if norm <= rank_tol * scale {
            return None;
        }
        let alpha = if ck[k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = ck[k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, x| s + *x * *x);
        r[(k, k)] = alpha;
        if vnorm2 > T::zero() {
            let inv = T::of(2.0) / vnorm2;
            for c in rest.iter_mut() {
                let s = dot(&v, &c[k..]) * inv;
                for (ci, vi) in c[k..].iter_mut().zip(&v) {
                    *ci -= s * *vi;
                }
            }
        }
        for (j, c) in rest.iter().enumerate() {
            r[(k, k + 1 + j)] = c[k];
        }
        vs.push(v);
    }
    // Explicit Q = H_0 H_1 ... H_{m-1}, applied to the identity from the right end.
    let mut q = Matrix::identity(n);
    for k in (0..m).rev() {
        let v = &vs[k];
        let vnorm2 = v.iter().fold(T::zero(), |s, x| s + *x * *x);
        if vnorm2 == T::zero() {
            continue;
        }
        let inv = T::of(2.0) / vnorm2;
        for col in 0..n {
            let mut s = T::zero();
            for (i, vi) in v.iter().enumerate() {
                s += *vi * q[(k + i, col)];
            }
            if s == T::zero() {
                continue;
            }
            s *= inv;
            for (i, vi) in v.iter().enumerate() {
                q[(k + i, col)] -= s * *vi;
            }
        }
    }
    let mut y = Matrix::zeros(n, m);
    let mut z = Matrix::zeros(n, n - m);
    for i in 0..n {
        for j in 0..n {
            if j < m {
                y[(i, j)] = q[(i, j)];
            } else {
                z[(i, j - m)] = q[(i, j)];
            }
        }
    }
    Some(QrSplit { y, z, r })
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn solve_upper<T: Scalar>(r: &Matrix<T>, b: &[T]) -> Vec<T> {
    let m = r.rows();
    let mut x = b.to_vec();
    for i in (0..m).rev() {
        let mut s = x[i];
        for j in i + 1..m {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Solves `Rᵀ x = b` for upper-triangular `R`.
pub fn solve_upper_tr<T: Scalar>(r: &Matrix<T>, b: &[T]) -> Vec<T> {
    let m = r.rows();
    let mut x = b.to_vec();
    for i in 0..m {
        let mut s = x[i];
        for j in 0..i {
            s -= r[(j, i)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Outcome of minimising `½pᵀHp + gᵀp` for positive semidefinite `H`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsdStep<T> {
    /// A minimiser exists; the component along `ker H` is zero.
    Newton(Vec<T>),
    /// The gradient has a component along `ker H`: a zero-curvature descent ray.
    Ray(Vec<T>),
}

/// Symmetric pivoted Cholesky `P H Pᵀ = L Lᵀ`, truncated at numerical rank.
pub struct PivotedCholesky<T> {
    pub perm: Vec<usize>,
    /// d × rank, columns in pivot order.
    pub l: Matrix<T>,
    pub rank: usize,
}

pub fn pivoted_cholesky<T: Scalar>(h: &Matrix<T>, tol: T) -> PivotedCholesky<T> {
    let d = h.rows();
    let mut a = h.clone();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut rank = 0;
    for k in 0..d {
        let (mut best, mut best_v) = (k, a[(k, k)]);
        for i in k + 1..d {
            if a[(i, i)] > best_v {
                best = i;
                best_v = a[(i, i)];
            }
        }
        if best_v <= tol {
            break;
        }
        if best != k {
            perm.swap(k, best);
            for j in 0..d {
                let t = a[(k, j)];
                a[(k, j)] = a[(best, j)];
                a[(best, j)] = t;
            }
            for i in 0..d {
                let t = a[(i, k)];
                a[(i, k)] = a[(i, best)];
                a[(i, best)] = t;
            }
        }
        let piv = a[(k, k)].sqrt();
        a[(k, k)] = piv;
        for i in k + 1..d {
            a[(i, k)] = a[(i, k)] / piv;
        }
        for j in k + 1..d {
            let ljk = a[(j, k)];
            if ljk == T::zero() {
                continue;
            }
            for i in j..d {
                let v = a[(i, k)] * ljk;
                a[(i, j)] -= v;
            }
            // keep the trailing block symmetric for the pivot search
            for i in j + 1..d {
                a[(j, i)] = a[(i, j)];
            }
        }
        rank += 1;
    }
    let mut l = Matrix::zeros(d, rank);
    for i in 0..d {
        for j in 0..rank.min(i + 1) {
            l[(i, j)] = a[(i, j)];
        }
    }
    PivotedCholesky { perm, l, rank }
}

/// Minimises `½pᵀHp + gᵀp`. `ray_tol` bounds the admissible gradient
/// component along the kernel before a ray is reported.
pub fn psd_step<T: Scalar>(h: &Matrix<T>, g: &[T], rank_tol: T, ray_tol: T) -> PsdStep<T> {
    let d = h.rows();
    let chol = pivoted_cholesky(h, rank_tol);
    let r = chol.rank;
    let gp: Vec<T> = chol.perm.iter().map(|&i| g[i]).collect();
    if r < d {
        // kernel basis in permuted coordinates: [-L11⁻ᵀ L21ᵀ e_j ; e_j]
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(d - r);
        for j in r..d {
            let mut v = vec![T::zero(); d];
            v[j] = T::one();
            let rhs: Vec<T> = (0..r).map(|k| -chol.l[(j, k)]).collect();
            let top = lower_tr_solve(&chol.l, r, &rhs);
            v[..r].copy_from_slice(&top);
            basis.push(v);
        }
        // modified Gram-Schmidt
        let mut ortho: Vec<Vec<T>> = Vec::with_capacity(basis.len());
        for mut v in basis {
            for u in &ortho {
                let s = dot(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= s * *ui;
                }
            }
            let nrm = dot(&v, &v).sqrt();
            if nrm > T::epsilon() {
                v.iter_mut().for_each(|x| *x = *x / nrm);
                ortho.push(v);
            }
        }
        let mut proj = vec![T::zero(); d];
        for u in &ortho {
            let s = dot(u, &gp);
            for (pi, ui) in proj.iter_mut().zip(u) {
                *pi += s * *ui;
            }
        }
        let gnorm = gp.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let pnorm = proj.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if pnorm > ray_tol * (T::one() + gnorm) {
            let mut ray = vec![T::zero(); d];
            for (k, &pi) in chol.perm.iter().enumerate() {
                ray[pi] = -proj[k];
            }
            return PsdStep::Ray(ray);
        }
    }
    // L11 z = -gp[..r];  L11ᵀ w = z;  p_perm = [w; 0]
    let rhs: Vec<T> = gp[..r].iter().map(|x| -*x).collect();
    let zv = lower_solve(&chol.l, r, &rhs);
    let w = lower_tr_solve(&chol.l, r, &zv);
    let mut p = vec![T::zero(); d];
    for k in 0..r {
        p[chol.perm[k]] = w[k];
    }
    PsdStep::Newton(p)
}

fn lower_solve<T: Scalar>(l: &Matrix<T>, r: usize, b: &[T]) -> Vec<T> {
    let mut x = b.to_vec();
    for i in 0..r {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

fn lower_tr_solve<T: Scalar>(l: &Matrix<T>, r: usize, b: &[T]) -> Vec<T> {
    let mut x = b.to_vec();
    for i in (0..r).rev() {
        let mut s = x[i];
        for j in i + 1..r {
            s -= l[(j, i)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Smallest eigenvalue bound test: returns `false` when `A + shift·I` is not
/// positive semidefinite, via an LDLᵀ sweep that tolerates zero pivots.
pub fn is_psd<T: Scalar>(a: &Matrix<T>, shift: T) -> bool {
    let n = a.rows();
    if a.is_diagonal() {
        return (0..n).all(|i| a[(i, i)] >= -shift);
    }
    let scale = a.max_abs().max(T::one());
    let round = T::epsilon() * T::of(64.0) * T::of(n as f64) * scale;
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += shift;
    }
    for k in 0..n {
        let piv = m[(k, k)];
        if piv < -round {
            return false;
        }
        if piv <= round {
            // zero pivot: the rest of the column must vanish too
            if (k + 1..n).any(|i| m[(i, k)].abs() > round.sqrt() * scale.sqrt()) {
                return false;
            }
            continue;
        }
        for i in k + 1..n {
            let f = m[(i, k)] / piv;
            if f == T::zero() {
                continue;
            }
            for j in k + 1..=i {
                let v = f * m[(j, k)];
                m[(i, j)] -= v;
            }
        }
        for i in k + 1..n {
            for j in i + 1..n {
                m[(i, j)] = m[(j, i)];
            }
        }
    }
    true
}
