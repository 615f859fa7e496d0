//! Dense row-major matrices, activations and the Moore-Penrose pseudoinverse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Relative singular-value cutoff used by [`pinv_default`].
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Probability floor applied inside [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 80;

/// Dense matrix of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from row-major data. Dimensions must be positive and every
    /// entry finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{rows}x{cols} matrix")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Fill row-major from a generator; used for seeded initialization.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    fn zip(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of squared entries.
    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }
}

/// Matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `out = m · x`.
pub fn gemv(m: &Matrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, x.len());
    debug_assert_eq!(m.rows, out.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols)) {
        *o = dot(row, x);
    }
}

/// `out += mᵀ · y`.
pub fn gemv_t_add(m: &Matrix, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.rows, y.len());
    debug_assert_eq!(m.cols, out.len());
    for (&yi, row) in y.iter().zip(m.data.chunks_exact(m.cols)) {
        if yi == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += yi * w;
        }
    }
}

/// `m += a · bᵀ`.
pub fn outer_add(m: &mut Matrix, a: &[f64], b: &[f64]) {
    debug_assert_eq!(m.rows, a.len());
    debug_assert_eq!(m.cols, b.len());
    for (&ai, row) in a.iter().zip(m.data.chunks_exact_mut(b.len())) {
        if ai == 0.0 {
            continue;
        }
        for (r, &bj) in row.iter_mut().zip(b) {
            if bj != 0.0 {
                *r += ai * bj;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Thin singular value decomposition `m = U · diag(s) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// (rows, k) with orthonormal columns where `s > 0`.
    pub u: Matrix,
    /// Length k = min(rows, cols), unsorted.
    pub s: Vec<f64>,
    /// (cols, k).
    pub v: Matrix,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if m.rows < m.cols {
        let t = svd_tall(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(m)
}

fn svd_tall(m: &Matrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    // Column-major working copies.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..rows).map(|r| m.get(r, c)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    // Orthogonality threshold and the norm below which a column counts as zero.
    let tol = rows.max(2) as f64 * f64::EPSILON;
    let frob_sq: f64 = a.iter().map(|col| dot(col, col)).sum();
    let negligible = frob_sq * f64::EPSILON * f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * libm::sqrt(alpha * beta)
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps on a {rows}x{n} matrix"
        )));
    }

    let s: Vec<f64> = a.iter().map(|col| norm2(col)).collect();
    let u = Matrix::from_fn(
        rows,
        n,
        |r, c| if s[c] > 0.0 { a[c][r] / s[c] } else { 0.0 },
    );
    let v = Matrix::from_fn(n, n, |r, c| v[c][r]);
    Ok(Svd { u, s, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Moore-Penrose pseudoinverse. Singular values below `tol × σ_max` are
/// treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pinv tolerance must be >= 0, got {tol}"
        )));
    }
    let Svd { u, s, v } = svd(m)?;
    let smax = s.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cutoff = tol * smax;
    let mut out = Matrix::zeros(m.cols, m.rows);
    for (k, &sk) in s.iter().enumerate() {
        if sk <= cutoff || sk == 0.0 {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..m.cols {
            let vik = v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m.rows {
                out.data[i * m.rows + j] += vik * u.get(j, k);
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("pinv result".into()));
    }
    Ok(out)
}

/// [`pinv`] with the default relative cutoff of 1e-12.
pub fn pinv_default(m: &Matrix) -> Result<Matrix> {
    pinv(m, DEFAULT_PINV_TOL)
}

/// Regularized least squares: `(FᵀF + λI)⁻¹FᵀT` for λ > 0, `F⁺T` for λ = 0.
pub fn ridge_solve(f: &Matrix, t: &Matrix, lambda: f64) -> Result<Matrix> {
    if f.rows != t.rows {
        return Err(Error::Shape {
            op: "ridge_solve",
            left: f.shape(),
            right: t.shape(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return matmul(&pinv_default(f)?, t);
    }
    let n = f.cols;
    let mut gram = Matrix::zeros(n, n);
    for r in 0..f.rows {
        outer_add(&mut gram, f.row(r), f.row(r));
    }
    for i in 0..n {
        gram.data[i * n + i] += lambda;
    }
    let rhs = matmul(&f.transpose(), t)?;
    let beta = cholesky_solve(&gram, &rhs)?;
    if !beta.is_finite() {
        return Err(Error::NonFinite("ridge solution".into()));
    }
    Ok(beta)
}

/// Solve `A X = B` for symmetric positive definite `A`.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    if a.cols != n || b.rows != n {
        return Err(Error::Shape {
            op: "cholesky_solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Numeric(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l.set(i, i, libm::sqrt(s));
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

pub fn sigmoid_matrix(x: &Matrix) -> Matrix {
    x.map(sigmoid)
}

pub fn tanh_matrix(x: &Matrix) -> Matrix {
    x.map(tanh)
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Mean over rows of `-ln(max(probs[row][target], 1e-12))`.
pub fn cross_entropy(probs: &Matrix, targets: &[usize]) -> Result<f64> {
    if targets.len() != probs.rows {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} rows",
            targets.len(),
            probs.rows
        )));
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= probs.cols {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: probs.cols,
            });
        }
        total -= libm::log(probs.get(r, t).max(PROB_FLOOR));
    }
    Ok(total / probs.rows as f64)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let d = a.sub(b).unwrap().max_abs();
        assert!(d <= tol, "max deviation {d} > {tol}\n{a:?}\n{b:?}");
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = substream(seed, "linalg-test");
        Matrix::from_fn(rows, cols, |_, _| s.uniform(-1.0, 1.0))
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matmul_identity_and_dot() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
        let a = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0], [4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().as_slice(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(5, 7, 1);
        let b = random(7, 3, 2);
        let got = matmul(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((got.get(i, j) - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("(2, 3)"));
    }

    #[test]
    fn pinv_identity_rank_one_and_zero() {
        assert_close(
            &pinv_default(&Matrix::identity(3)).unwrap(),
            &Matrix::identity(3),
            1e-14,
        );
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        let want = Matrix::from_rows(&[[0.04, 0.08], [0.08, 0.16]]).unwrap();
        assert_close(&pinv_default(&m).unwrap(), &want, 1e-10);
        let z = pinv_default(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(z, Matrix::zeros(3, 2));
    }

    #[test]
    fn pinv_wide_and_tall_agree_by_transpose() {
        let m = random(3, 6, 9);
        let a = pinv_default(&m).unwrap().transpose();
        let b = pinv_default(&m.transpose()).unwrap();
        assert_close(&a, &b, 1e-12);
    }

    #[test]
    fn pinv_rejects_negative_tol() {
        assert!(pinv(&Matrix::identity(2), -1.0).is_err());
    }

    #[test]
    fn svd_reconstructs() {
        let m = random(6, 4, 5);
        let Svd { u, s, v } = svd(&m).unwrap();
        let us = Matrix::from_fn(6, 4, |r, c| u.get(r, c) * s[c]);
        assert_close(&matmul(&us, &v.transpose()).unwrap(), &m, 1e-12);
    }

    #[test]
    fn ridge_examples() {
        let beta = ridge_solve(
            &Matrix::identity(2),
            &Matrix::from_rows(&[[3.0], [5.0]]).unwrap(),
            0.0,
        )
        .unwrap();
        assert_close(&beta, &Matrix::from_rows(&[[3.0], [5.0]]).unwrap(), 1e-12);

        // Mean of the targets; a brute-force scan over β confirms the minimizer.
        let f = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let t = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let beta = ridge_solve(&f, &t, 0.0).unwrap().get(0, 0);
        let scan = (0..=4000)
            .map(|i| i as f64 * 0.001)
            .min_by(|a, b| {
                let ra = (a - 1.0).powi(2) + (a - 3.0).powi(2);
                let rb = (b - 1.0).powi(2) + (b - 3.0).powi(2);
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        assert!((scan - 2.0).abs() < 1e-9);
        assert!((beta - 2.0).abs() < 1e-12);

        let f = random(6, 3, 11);
        let t = random(6, 2, 12);
        assert!(ridge_solve(&f, &t, 1e9).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn ridge_errors() {
        assert!(matches!(
            ridge_solve(&Matrix::zeros(2, 2), &Matrix::zeros(3, 1), 0.0),
            Err(Error::Shape { .. })
        ));
        assert!(ridge_solve(&Matrix::zeros(2, 2), &Matrix::zeros(2, 1), -1.0).is_err());
        // Singular design still solvable once regularized.
        assert!(ridge_solve(&Matrix::zeros(2, 2), &Matrix::zeros(2, 1), 1e-3).is_ok());
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        let p = softmax_rows(&Matrix::zeros(1, 26));
        for &x in p.as_slice() {
            assert!((x - 1.0 / 26.0).abs() < 1e-15);
        }
        let big = softmax_rows(&Matrix::from_rows(&[[1000.0, 0.0]]).unwrap());
        assert!(big.is_finite());
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = Matrix::from_rows(&[[0.0, 1.0, 0.0]]).unwrap();
        assert!(cross_entropy(&onehot, &[1]).unwrap() <= 1e-11);
        let uniform = softmax_rows(&Matrix::zeros(3, 26));
        let ce = cross_entropy(&uniform, &[0, 5, 25]).unwrap();
        assert!((ce - libm::log(26.0)).abs() < 1e-12);
        assert!((ce - 3.2581).abs() < 1e-4);
        let half = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!((cross_entropy(&half, &[0]).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            cross_entropy(&half, &[2]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }
}
