//! Dense helpers shared by the solvers: rank-revealing orthonormalization,
//! column compression of low-rank factors and trace identities.

use nalgebra::{DMatrix, DVector};

/// `trace(aᵀ b)`, i.e. the Frobenius inner product.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frob_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

pub fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

fn to_faer(x: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

fn from_faer(x: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

/// Thin SVD `x = U diag(σ) Vᵀ`, singular values descending.
///
/// Backed by faer: nalgebra's bidiagonal SVD loses up to six digits on
/// graded matrices, which the compressions in the sign iteration produce.
pub fn svd(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = x.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (DMatrix::zeros(rows, 0), DVector::zeros(0), DMatrix::zeros(cols, 0));
    }
    let f = to_faer(x);
    let dec = f.thin_svd().expect("svd did not converge");
    let s = dec.S().column_vector();
    let sigma = DVector::from_fn(k, |i, _| s[i]);
    debug_assert!(sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
    (from_faer(dec.U()), sigma, from_faer(dec.V()))
}

/// Symmetric eigendecomposition `x = Q diag(λ) Qᵀ`, eigenvalues ascending.
pub fn sym_eigen(x: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    if n == 0 {
        return Some((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let f = to_faer(x);
    let dec = f.self_adjoint_eigen(faer::Side::Lower).ok()?;
    let s = dec.S().column_vector();
    let vals = DVector::from_fn(n, |i, _| s[i]);
    if !vals.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((vals, from_faer(dec.U())))
}

/// Left singular vectors and values of `x`, descending.
fn thin_left_svd(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(rows, 0), DVector::zeros(0));
    }
    if rows > 2 * cols {
        let (q, r) = qr_thin(x);
        let (u_r, s, _) = svd(&r);
        (q * u_r, s)
    } else {
        let (u, s, _) = svd(x);
        (u, s)
    }
}

fn leading_count(s: &DVector<f64>, threshold: f64) -> usize {
    s.iter().take_while(|&&v| v > threshold && v.is_finite()).count()
}

/// Orthonormal basis of the column span of `x`, dropping directions whose
/// singular value is at most `rel_tol` times the largest one.
pub fn orth(x: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (u, s) = thin_left_svd(x);
    if s.is_empty() || s[0] <= 0.0 {
        return DMatrix::zeros(x.nrows(), 0);
    }
    let k = leading_count(&s, rel_tol * s[0]);
    u.columns(0, k).into_owned()
}

/// `orth([v, z])` for a `v` with orthonormal columns. New directions of `z`
/// are kept when their singular value after projecting out `span(v)` exceeds
/// `rel_tol` times the largest singular value of `z` itself, so the scale of
/// `z` does not interact with the unit scale of `v`.
pub fn extend_basis(v: &DMatrix<f64>, z: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    assert_eq!(v.nrows(), z.nrows());
    if z.ncols() == 0 {
        return v.clone();
    }
    let (_, s_z) = thin_left_svd(z);
    let scale = s_z.iter().cloned().fold(0.0, f64::max);
    if scale <= 0.0 || !scale.is_finite() {
        return v.clone();
    }
    let mut w = z.clone();
    if v.ncols() > 0 {
        // two passes of block Gram–Schmidt
        for _ in 0..2 {
            let h = v.transpose() * &w;
            w -= v * h;
        }
    }
    let (u, s) = thin_left_svd(&w);
    let k = leading_count(&s, rel_tol * scale);
    if k == 0 {
        return v.clone();
    }
    let mut out = DMatrix::zeros(v.nrows(), v.ncols() + k);
    out.columns_mut(0, v.ncols()).copy_from(v);
    out.columns_mut(v.ncols(), k).copy_from(&u.columns(0, k));
    if v.ncols() > 0 {
        // re-orthogonalize the new block against the old one
        let mut new = out.columns(v.ncols(), k).into_owned();
        let h = v.transpose() * &new;
        new -= v * h;
        let q = new.qr().q();
        out.columns_mut(v.ncols(), k).copy_from(&q.columns(0, k));
    }
    out
}

/// Result of compressing a factor `b` with `b bᵀ` preserved.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub factor: DMatrix<f64>,
    /// Largest dropped singular value relative to the largest one.
    pub dropped: f64,
    pub capped: bool,
}

/// Column compression `b ↦ b'` with `b' b'ᵀ ≈ b bᵀ`; `b'` has orthogonal
/// columns scaled by the retained singular values.
pub fn compress_factor(b: &DMatrix<f64>, rel_tol: f64, cap: usize) -> Compressed {
    let (u, s) = thin_left_svd(b);
    if s.is_empty() || s[0] <= 0.0 {
        return Compressed {
            factor: DMatrix::zeros(b.nrows(), 0),
            dropped: 0.0,
            capped: false,
        };
    }
    let mut k = leading_count(&s, rel_tol * s[0]);
    let capped = k > cap;
    if capped {
        k = cap;
    }
    let dropped = if k < s.len() { s[k] / s[0] } else { 0.0 };
    let mut factor = u.columns(0, k).into_owned();
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= s[j];
    }
    Compressed {
        factor,
        dropped,
        capped,
    }
}

/// Low-rank product `u · core · vᵀ` recompressed to `u' diag(σ) v'ᵀ`.
#[derive(Debug, Clone)]
pub struct LowRankProduct {
    pub left: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub right: DMatrix<f64>,
}

pub fn compress_product(u: &DMatrix<f64>, core: &DMatrix<f64>, v: &DMatrix<f64>, rel_tol: f64) -> LowRankProduct {
    let rows = u.nrows();
    if u.ncols() == 0 {
        return LowRankProduct {
            left: DMatrix::zeros(rows, 0),
            sigma: DVector::zeros(0),
            right: DMatrix::zeros(v.nrows(), 0),
        };
    }
    let (qu, ru) = qr_thin(u);
    let (qv, rv) = qr_thin(v);
    let small = &ru * core * rv.transpose();
    let (l, s, r) = svd(&small);
    let smax = if s.is_empty() { 0.0 } else { s[0] };
    let k = leading_count(&s, (rel_tol * smax).max(0.0));
    LowRankProduct {
        left: qu * l.columns(0, k),
        sigma: s.rows(0, k).into_owned(),
        right: qv * r.columns(0, k),
    }
}

/// Thin QR for a matrix with at least as many rows as columns; wide inputs
/// fall back to a square `Q`.
pub fn qr_thin(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    (qr.q(), qr.r())
}

/// Horizontal concatenation.
pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation.
pub fn vcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat column mismatch");
        out.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Block-diagonal `[a 0; 0 b]`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn svd_and_eigen_reconstruct() {
        for (r, c) in [(5, 3), (3, 5), (4, 4), (9, 2)] {
            let x = sample(r, c, 7 + r as u64);
            let (u, s, v) = svd(&x);
            let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
            assert!((rec - &x).norm() <= 1e-14 * x.norm());
        }
        let x = sample(6, 6, 3);
        let sym = &x + x.transpose();
        let (vals, q) = sym_eigen(&sym).unwrap();
        assert!(vals.as_slice().windows(2).all(|w| w[0] <= w[1]));
        let rec = &q * DMatrix::from_diagonal(&vals) * q.transpose();
        assert!((rec - &sym).norm() <= 1e-14 * sym.norm());
    }

    #[test]
    fn orth_drops_dependent_columns() {
        let a = sample(10, 3, 1);
        let x = hcat(&[&a, &(&a * 2.0)]);
        let q = orth(&x, 1e-10);
        assert_eq!(q.ncols(), 3);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
        // span preserved
        let resid = &a - &q * (q.transpose() * &a);
        assert!(resid.norm() < 1e-12);
    }

    #[test]
    fn extend_basis_keeps_old_columns_and_orthonormality() {
        let v = orth(&sample(12, 3, 2), 1e-12);
        let z = hcat(&[&v.columns(0, 1).into_owned(), &sample(12, 2, 3)]) * 1e6;
        let w = extend_basis(&v, &z, 1e-10);
        assert_eq!(w.ncols(), 5);
        assert!((w.columns(0, 3) - &v).norm() < 1e-15);
        let gram = w.transpose() * &w;
        assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn compress_factor_preserves_gram() {
        let a = sample(20, 4, 4);
        let b = hcat(&[&a, &a, &(&a * 0.5)]);
        let c = compress_factor(&b, 1e-10, 100);
        assert_eq!(c.factor.ncols(), 4);
        let err = (&b * b.transpose() - &c.factor * c.factor.transpose()).norm();
        assert!(err < 1e-12 * (&b * b.transpose()).norm());
    }

    #[test]
    fn compress_factor_honours_cap() {
        let b = sample(20, 6, 5);
        let c = compress_factor(&b, 1e-14, 2);
        assert!(c.capped);
        assert_eq!(c.factor.ncols(), 2);
    }

    #[test]
    fn compress_product_reproduces_product() {
        let u = sample(15, 4, 6);
        let v = sample(15, 4, 7);
        let core = sample(4, 4, 8);
        let lr = compress_product(&u, &core, &v, 1e-14);
        let full = &u * &core * v.transpose();
        let rebuilt = &lr.left * DMatrix::from_diagonal(&lr.sigma) * lr.right.transpose();
        assert!((full - rebuilt).norm() < 1e-12);
    }
}
