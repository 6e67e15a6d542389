//! Dense complex matrices and the Hermitian factor-and-solve kernel used by
//! the filter and reflection designs.
//!
//! The sizes here are small (tens of rows), so a plain row-major layout with
//! straightforward loops is fast enough. Every routine on the optimization
//! path takes an [`OpCounter`] so measured complexity can be compared against
//! the closed-form model.

use num_complex::Complex64;

use crate::config::OpCounter;
use crate::error::Error;
use crate::Result;

pub type C64 = Complex64;

pub const C_ZERO: C64 = C64::new(0.0, 0.0);
pub const C_ONE: C64 = C64::new(1.0, 0.0);

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    data: Vec<C64>,
    rows: usize,
    cols: usize,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            data: vec![C_ZERO; rows * cols],
            rows,
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dimension("ragged rows"));
        }
        Ok(CMat {
            data: rows.concat(),
            rows: r,
            cols: c,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [C64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_col(&mut self, c: usize, v: &[C64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (r, &x) in v.iter().enumerate() {
            self[(r, c)] = x;
        }
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            data: self.data.iter().map(|x| x * s).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn add(&self, other: &CMat) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dimension("add: shapes differ"));
        }
        Ok(CMat {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
            rows: self.rows,
            cols: self.cols,
        })
    }

    pub fn sub(&self, other: &CMat) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dimension("sub: shapes differ"));
        }
        Ok(CMat {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
            rows: self.rows,
            cols: self.cols,
        })
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    /// `self * other`, counting rows*inner*cols multiply-adds.
    pub fn mul(&self, other: &CMat, ops: &mut OpCounter) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::dimension(format!(
                "mul: {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C_ZERO {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(r);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        ops.add_mul_adds((self.rows * self.cols * other.cols) as u64);
        Ok(out)
    }

    /// `self * v`, counting rows*cols multiply-adds.
    pub fn mat_vec(&self, v: &[C64], ops: &mut OpCounter) -> Result<Vec<C64>> {
        if self.cols != v.len() {
            return Err(Error::dimension("mat_vec: length mismatch"));
        }
        let mut out = vec![C_ZERO; self.rows];
        for r in 0..self.rows {
            let mut acc = C_ZERO;
            for (a, x) in self.row(r).iter().zip(v) {
                acc += a * x;
            }
            out[r] = acc;
        }
        ops.add_mul_adds((self.rows * self.cols) as u64);
        Ok(out)
    }

    /// Gram matrix `selfᴴ * self`, counting cols*cols*rows multiply-adds.
    pub fn gram(&self, ops: &mut OpCounter) -> CMat {
        let n = self.cols;
        let mut out = CMat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = C_ZERO;
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
        }
        ops.add_mul_adds((n * n * self.rows) as u64);
        out
    }

    /// Adds `s` to every diagonal entry in place.
    pub fn add_diagonal(&mut self, s: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += C64::new(s, 0.0);
        }
    }

    pub fn trace_real(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].re).sum()
    }

    /// Largest |a_ij - conj(a_ji)| over the matrix.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Conjugated inner product `aᴴ b`.
pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Weighted Gram of columns: `sum_i w_i h_i h_iᴴ` for the columns `h_i` of an
/// M x K matrix. Counts M*M*K multiply-adds.
pub fn weighted_col_gram(h: &CMat, weights: &[f64], ops: &mut OpCounter) -> Result<CMat> {
    if weights.len() != h.cols() {
        return Err(Error::dimension("weighted_col_gram: weight count"));
    }
    let m = h.rows();
    let mut out = CMat::zeros(m, m);
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for i in 0..m {
            let hi = h[(i, k)] * w;
            for j in 0..m {
                out[(i, j)] += hi * h[(j, k)].conj();
            }
        }
    }
    ops.add_mul_adds((m * m * h.cols()) as u64);
    Ok(out)
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix.
/// Fails on a non-positive pivot.
fn cholesky_factor(a: &CMat) -> Option<CMat> {
    let n = a.rows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `A X = B` for Hermitian positive-(semi)definite `A` by Cholesky
/// factorization. On a failed pivot the diagonal is loaded with an escalating
/// multiple of trace/n and the factorization retried. Records one
/// factor-and-solve event of size n with `B.cols()` right-hand sides.
pub fn cholesky_solve(a: &CMat, b: &CMat, ops: &mut OpCounter) -> Result<CMat> {
    if a.rows() != a.cols() {
        return Err(Error::dimension("cholesky_solve: matrix not square"));
    }
    if a.rows() != b.rows() {
        return Err(Error::dimension("cholesky_solve: rhs rows"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(CMat::zeros(0, b.cols()));
    }
    let scale = (a.trace_real() / n as f64).max(f64::MIN_POSITIVE);

    let mut l = cholesky_factor(a);
    let mut loading = 1e-12;
    while l.is_none() && loading <= 1e-2 {
        let mut loaded = a.clone();
        loaded.add_diagonal(loading * scale);
        l = cholesky_factor(&loaded);
        loading *= 100.0;
    }
    let l = l.ok_or_else(|| {
        Error::Singular(format!("{n}x{n} system not positive definite after loading"))
    })?;

    ops.record_cholesky(n, b.cols());

    // Forward substitution L Y = B, then back substitution Lᴴ X = Y.
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// Convenience wrapper solving `A x = b` for a single right-hand side.
pub fn cholesky_solve_vec(a: &CMat, b: &[C64], ops: &mut OpCounter) -> Result<Vec<C64>> {
    let rhs = CMat::from_fn(b.len(), 1, |r, _| b[r]);
    let x = cholesky_solve(a, &rhs, ops)?;
    Ok(x.col(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn mul_matches_hand_example() {
        let mut ops = OpCounter::new();
        let a = CMat::from_rows(&[
            vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)],
            vec![C64::new(2.0, 0.0), C64::new(0.0, 0.0)],
        ])
        .unwrap();
        let b = CMat::from_rows(&[
            vec![C64::new(1.0, 0.0)],
            vec![C64::new(0.0, 1.0)],
        ])
        .unwrap();
        let c = a.mul(&b, &mut ops).unwrap();
        assert_eq!(c[(0, 0)], C64::new(0.0, 0.0)); // 1 + i*i = 0
        assert_eq!(c[(1, 0)], C64::new(2.0, 0.0));
        assert_eq!(ops.complex_mul_adds, 4);
    }

    #[test]
    fn hermitian_of_hermitian_is_identity_map() {
        let mut rng = crate::config::seeded_rng(3, 0);
        let a = rand_mat(4, 6, &mut rng);
        assert_eq!(a.hermitian().hermitian(), a);
    }

    #[test]
    fn cholesky_solves_small_system() {
        // A = [[4, 2i], [-2i, 3]] is Hermitian positive definite.
        let a = CMat::from_rows(&[
            vec![C64::new(4.0, 0.0), C64::new(0.0, 2.0)],
            vec![C64::new(0.0, -2.0), C64::new(3.0, 0.0)],
        ])
        .unwrap();
        let x_true = vec![C64::new(1.0, -1.0), C64::new(0.5, 2.0)];
        let mut ops = OpCounter::new();
        let b = a.mat_vec(&x_true, &mut ops).unwrap();
        let x = cholesky_solve_vec(&a, &b, &mut ops).unwrap();
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).norm() < 1e-12);
        }
        assert_eq!(ops.cholesky_solves, vec![(2, 1)]);
    }

    #[test]
    fn cholesky_random_pd_residual() {
        let mut rng = crate::config::seeded_rng(11, 0);
        let mut ops = OpCounter::new();
        for trial in 0..20 {
            let n = 2 + trial % 7;
            let m = rand_mat(n + 3, n, &mut rng);
            let mut a = m.gram(&mut ops);
            a.add_diagonal(0.1);
            let b = rand_mat(n, 3, &mut rng);
            let x = cholesky_solve(&a, &b, &mut ops).unwrap();
            let r = a.mul(&x, &mut ops).unwrap().sub(&b).unwrap();
            assert!(r.frobenius_norm_sqr().sqrt() < 1e-9);
        }
    }

    #[test]
    fn cholesky_rank_deficient_recovers_with_loading() {
        // Rank-1 Gram of a single column: singular without loading.
        let mut ops = OpCounter::new();
        let col = CMat::from_fn(4, 1, |r, _| C64::new(1.0 + r as f64, 0.5));
        let a = {
            let c = col.clone();
            let mut g = CMat::zeros(4, 4);
            for i in 0..4 {
                for j in 0..4 {
                    g[(i, j)] = c[(i, 0)] * c[(j, 0)].conj();
                }
            }
            g
        };
        let b = CMat::from_fn(4, 1, |r, _| a[(r, 0)]);
        // Must not error: escalating diagonal loading takes over.
        let x = cholesky_solve(&a, &b, &mut ops).unwrap();
        assert!(x.frobenius_norm_sqr().is_finite());
    }

    #[test]
    fn weighted_col_gram_matches_dense_path() {
        let mut rng = crate::config::seeded_rng(5, 1);
        let mut ops = OpCounter::new();
        let h = rand_mat(5, 3, &mut rng);
        let w = [0.3, 1.0, 0.7];
        let fast = weighted_col_gram(&h, &w, &mut ops).unwrap();
        // Dense route: H diag(w) Hᴴ.
        let d = CMat::from_fn(3, 3, |r, c| {
            if r == c {
                C64::new(w[r], 0.0)
            } else {
                C_ZERO
            }
        });
        let slow = h
            .mul(&d, &mut ops)
            .unwrap()
            .mul(&h.hermitian(), &mut ops)
            .unwrap();
        assert!(fast.sub(&slow).unwrap().frobenius_norm_sqr() < 1e-20);
        assert!(fast.hermitian_deviation() < 1e-14);
    }
}
