//! Bartels–Stewart solver for `A P + P Aᵀ + Q = 0`.

use nalgebra::{DMatrix, Matrix4, Vector4};

use crate::linalg::symmetrize;
use crate::{Error, Result};

/// Solves `A P + P Aᵀ = −Q` for stable `A` by real Schur reduction and
/// back-substitution on the quasi-triangular factor.
pub fn solve_dense(a: &DMatrix<f64>, q: &DMatrix<f64>, cap: usize) -> Result<DMatrix<f64>> {
    let dim = a.nrows();
    if !a.is_square() || q.shape() != a.shape() {
        return Err(Error::Dimension(format!("A is {:?}, Q is {:?}", a.shape(), q.shape())));
    }
    if dim > cap {
        return Err(Error::Capacity { dim, cap });
    }
    if dim == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if !a.iter().chain(q.iter()).all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("non-finite entries in Lyapunov data".into()));
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 200 * dim + 1000)
        .ok_or(Error::EigenFailure { mode: 0 })?;
    let (u, t) = schur.unpack();
    let blocks = diagonal_blocks(&t);
    let max_re = blocks
        .iter()
        .map(|&(i, size)| block_max_real_part(&t, i, size))
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re >= 0.0 {
        return Err(Error::Unstable { real_part: max_re });
    }

    let mut c = -(u.transpose() * q * &u);
    let y = solve_quasi_triangular(&t, &mut c, &blocks)?;
    let mut p = &u * y * u.transpose();
    symmetrize(&mut p);
    Ok(p)
}

/// Convenience wrapper for `Q = B Bᵀ`.
pub fn solve_dense_factored(a: &DMatrix<f64>, b: &DMatrix<f64>, cap: usize) -> Result<DMatrix<f64>> {
    solve_dense(a, &(b * b.transpose()), cap)
}

/// `(start, size)` of the 1×1 and 2×2 diagonal blocks of a quasi-triangular
/// matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

fn block_max_real_part(t: &DMatrix<f64>, i: usize, size: usize) -> f64 {
    if size == 1 {
        return t[(i, i)];
    }
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc > 0.0 {
        half_tr + disc.sqrt()
    } else {
        half_tr
    }
}

/// Solves `T Y + Y Tᵀ = C` in place of `C`'s column blocks.
fn solve_quasi_triangular(t: &DMatrix<f64>, c: &mut DMatrix<f64>, blocks: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let mut y = DMatrix::zeros(n, n);
    for &(j0, q) in blocks.iter().rev() {
        // column block j: T Y_j + Y_j T_jjᵀ = C_j, row blocks bottom-up
        for &(i0, p) in blocks.iter().rev() {
            let mut rhs = c.view((i0, j0), (p, q)).into_owned();
            let tail = i0 + p;
            if tail < n {
                rhs -= t.view((i0, tail), (p, n - tail)) * y.view((tail, j0), (n - tail, q));
            }
            let x = small_sylvester(t, i0, p, j0, q, &rhs)?;
            y.view_mut((i0, j0), (p, q)).copy_from(&x);
        }
        if j0 > 0 {
            // C_k -= Y_j T_kjᵀ for every earlier column block k
            let yj = y.columns(j0, q).into_owned();
            let tkj = t.view((0, j0), (j0, q)).into_owned();
            let upd = yj * tkj.transpose();
            let mut head = c.columns_mut(0, j0);
            head -= upd;
        }
    }
    Ok(y)
}

/// `T_ii X + X T_jjᵀ = R` for blocks of size at most 2.
fn small_sylvester(
    t: &DMatrix<f64>,
    i0: usize,
    p: usize,
    j0: usize,
    q: usize,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dim = p * q;
    let mut m = Matrix4::<f64>::identity();
    let mut rhs = Vector4::<f64>::zeros();
    // unknown index (row a, col b) -> a + p*b (column-major vec)
    for b in 0..q {
        for a in 0..p {
            let row = a + p * b;
            for k in 0..dim {
                m[(row, k)] = 0.0;
            }
            for a2 in 0..p {
                m[(row, a2 + p * b)] += t[(i0 + a, i0 + a2)];
            }
            for b2 in 0..q {
                m[(row, a + p * b2)] += t[(j0 + b, j0 + b2)];
            }
            rhs[row] = r[(a, b)];
        }
    }
    let sol = if dim == 4 {
        m.lu().solve(&rhs)
    } else {
        let sub = m.view((0, 0), (dim, dim)).into_owned();
        let v = rhs.rows(0, dim).into_owned();
        sub.lu().solve(&v).map(|s| {
            let mut out = Vector4::zeros();
            out.rows_mut(0, dim).copy_from(&s);
            out
        })
    };
    let sol = sol.ok_or(Error::Unstable { real_part: 0.0 })?;
    Ok(DMatrix::from_fn(p, q, |a, b| sol[a + p * b]))
}
