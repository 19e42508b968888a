use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default dimension cap for dense materialization and dense solves.
pub const DENSE_CAP: usize = 600;

/// A 2n×2n matrix `[diag(a) diag(b); diag(c) diag(d)]`.
///
/// Under the interleaving permutation this is block diagonal with the 2×2
/// blocks `[a_i b_i; c_i d_i]`, so it is closed under inversion, scaling
/// and addition and every operation is O(n) per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBlocks {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
}

impl ModeBlocks {
    /// `Ã = [0 I; −Ω² −2αΩ]`.
    pub fn undamped(omega: &DVector<f64>, alpha: f64) -> Self {
        let n = omega.len();
        Self {
            a: DVector::zeros(n),
            b: DVector::from_element(n, 1.0),
            c: omega.map(|w| -w * w),
            d: omega.map(|w| -2.0 * alpha * w),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: DVector::from_element(n, 1.0),
            b: DVector::zeros(n),
            c: DVector::zeros(n),
            d: DVector::from_element(n, 1.0),
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn block(&self, i: usize) -> [[f64; 2]; 2] {
        [[self.a[i], self.b[i]], [self.c[i], self.d[i]]]
    }

    /// Per-mode inverse. Fails when a block is singular.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n();
        let mut out = Self {
            a: DVector::zeros(n),
            b: DVector::zeros(n),
            c: DVector::zeros(n),
            d: DVector::zeros(n),
        };
        for i in 0..n {
            let det = self.a[i] * self.d[i] - self.b[i] * self.c[i];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            out.a[i] = self.d[i] / det;
            out.b[i] = -self.b[i] / det;
            out.c[i] = -self.c[i] / det;
            out.d[i] = self.a[i] / det;
        }
        Some(out)
    }

    /// `s·self + t·other`.
    pub fn combine(&self, s: f64, other: &Self, t: f64) -> Self {
        Self {
            a: &self.a * s + &other.a * t,
            b: &self.b * s + &other.b * t,
            c: &self.c * s + &other.c * t,
            d: &self.d * s + &other.d * t,
        }
    }

    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            a: self.a.add_scalar(shift),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.add_scalar(shift),
        }
    }

    pub fn frob_sq(&self) -> f64 {
        self.a.norm_squared() + self.b.norm_squared() + self.c.norm_squared() + self.d.norm_squared()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_with(x, false)
    }

    pub fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_with(x, true)
    }

    fn apply_with(&self, x: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
        let n = self.n();
        assert_eq!(x.nrows(), 2 * n, "mode block operand must have 2n rows");
        let (b, c) = if transpose {
            (&self.c, &self.b)
        } else {
            (&self.b, &self.c)
        };
        let mut y = DMatrix::zeros(2 * n, x.ncols());
        for j in 0..x.ncols() {
            for i in 0..n {
                let top = x[(i, j)];
                let bot = x[(n + i, j)];
                y[(i, j)] = self.a[i] * top + b[i] * bot;
                y[(n + i, j)] = c[i] * top + self.d[i] * bot;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            m[(i, i)] = self.a[i];
            m[(i, n + i)] = self.b[i];
            m[(n + i, i)] = self.c[i];
            m[(n + i, n + i)] = self.d[i];
        }
        m
    }
}

/// `A(g) = Ã − U G Uᵀ` with `U = [0; ΦᵀF]` and `G = diag(gains)`.
///
/// Never stores a dense 2n×2n matrix; `to_dense` exists for small-scale
/// checks only.
#[derive(Debug, Clone)]
pub struct StructuredStateOperator {
    pub base: ModeBlocks,
    pub omega: DVector<f64>,
    pub alpha: f64,
    /// Lower block `ΦᵀF` of `U` (n×d).
    pub dampers: DMatrix<f64>,
    /// Per-damper gains.
    pub gains: DVector<f64>,
}

impl StructuredStateOperator {
    pub fn new(omega: DVector<f64>, alpha: f64, dampers: DMatrix<f64>, gains: DVector<f64>) -> Self {
        assert_eq!(dampers.nrows(), omega.len());
        assert_eq!(dampers.ncols(), gains.len());
        Self {
            base: ModeBlocks::undamped(&omega, alpha),
            omega,
            alpha,
            dampers,
            gains,
        }
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    /// `U = [0; ΦᵀF]` (2n×d).
    pub fn u_full(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut u = DMatrix::zeros(2 * n, self.dampers.ncols());
        u.view_mut((n, 0), self.dampers.shape()).copy_from(&self.dampers);
        u
    }

    /// `U G Uᵀ` restricted to the velocity block: `F̂ G F̂ᵀ` applied to `x2`.
    fn damper_term(&self, x_low: &DMatrix<f64>) -> DMatrix<f64> {
        let mut t = self.dampers.transpose() * x_low;
        for (mut row, g) in t.row_iter_mut().zip(self.gains.iter()) {
            row *= *g;
        }
        &self.dampers * t
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut y = self.base.apply(x);
        if self.dampers.ncols() > 0 {
            let x_low = x.rows(n, n).into_owned();
            let corr = self.damper_term(&x_low);
            let mut low = y.rows_mut(n, n);
            low -= corr;
        }
        y
    }

    pub fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        // U G Uᵀ is symmetric
        let n = self.n();
        let mut y = self.base.apply_transpose(x);
        if self.dampers.ncols() > 0 {
            let x_low = x.rows(n, n).into_owned();
            let corr = self.damper_term(&x_low);
            let mut low = y.rows_mut(n, n);
            low -= corr;
        }
        y
    }

    /// `Ã⁻¹ x`, one 2×2 solve per mode.
    pub fn solve_base(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inv = self
            .base
            .inverse()
            .ok_or_else(|| Error::InvalidInput("singular mode block".into()))?;
        Ok(inv.apply(x))
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        if self.dim() > cap {
            return Err(Error::Capacity { dim: self.dim(), cap });
        }
        Ok(self.to_dense())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = self.base.to_dense();
        if self.dampers.ncols() > 0 {
            let fg = &self.dampers * DMatrix::from_diagonal(&self.gains);
            let corr = fg * self.dampers.transpose();
            let mut low = m.view_mut((n, n), (n, n));
            low -= corr;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_without_dampers() {
        let op = StructuredStateOperator::new(
            DVector::from_element(1, 2.0),
            0.1,
            DMatrix::zeros(1, 0),
            DVector::zeros(0),
        );
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.4]);
        assert!((op.to_dense() - expect).norm() < 1e-15);
    }

    #[test]
    fn mode_block_inverse_roundtrip() {
        let omega = DVector::from_column_slice(&[0.5, 1.0, 3.0]);
        let blocks = ModeBlocks::undamped(&omega, 0.02);
        let inv = blocks.inverse().unwrap();
        let prod = blocks.to_dense() * inv.to_dense();
        assert!((prod - DMatrix::<f64>::identity(6, 6)).norm() < 1e-13);
    }

    #[test]
    fn transpose_apply_matches_dense() {
        let omega = DVector::from_column_slice(&[0.7, 1.3]);
        let f = DMatrix::from_row_slice(2, 1, &[0.3, -0.8]);
        let op = StructuredStateOperator::new(omega, 0.05, f, DVector::from_element(1, 2.5));
        let x = DMatrix::from_fn(4, 2, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        let dense = op.to_dense();
        assert!((op.apply_transpose(&x) - dense.transpose() * &x).norm() < 1e-14);
        assert!((op.apply(&x) - &dense * &x).norm() < 1e-14);
    }

    #[test]
    fn dense_cap_enforced() {
        let op = StructuredStateOperator::new(
            DVector::from_element(4, 1.0),
            0.1,
            DMatrix::zeros(4, 0),
            DVector::zeros(0),
        );
        assert!(matches!(op.to_dense_capped(6), Err(Error::Capacity { dim: 8, cap: 6 })));
    }
}
