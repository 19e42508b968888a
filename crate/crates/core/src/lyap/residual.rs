use nalgebra::DMatrix;

use super::LowRankFactor;
use crate::model::StructuredStateOperator;
use crate::{Error, Result};

/// `‖B Bᵀ + A Z Zᵀ + Z Zᵀ Aᵀ‖_F` without forming 2n×2n matrices.
///
/// With `L = [B, AZ, Z]` the residual is `L M Lᵀ` for the symmetric
/// `M = diag(I, [0 I; I 0])`. A thin QR `L = Q R` gives
/// `‖R‖_F = ‖R M Rᵀ‖_F`; the Gram form `tr((M LᵀL)²)` would cancel
/// catastrophically once the residual is small.
pub fn lyapunov_residual(op: &StructuredStateOperator, z: &LowRankFactor, rhs: &DMatrix<f64>) -> Result<f64> {
    let dim = op.dim();
    if z.z.nrows() != dim || rhs.nrows() != dim {
        return Err(Error::Dimension(format!(
            "operator dimension {dim}, factor rows {}, rhs rows {}",
            z.z.nrows(),
            rhs.nrows()
        )));
    }
    let m = rhs.ncols();
    let q = z.rank();
    let az = op.apply(&z.z);
    let l = crate::linalg::hcat(&[rhs, &az, &z.z]);
    let r = if l.nrows() >= l.ncols() {
        crate::linalg::qr_thin(&l).1
    } else {
        l
    };
    // columns of R·M: B-columns unchanged, AZ- and Z-columns swapped
    let mut rm = r.clone();
    if q > 0 {
        rm.columns_mut(m, q).copy_from(&r.columns(m + q, q));
        rm.columns_mut(m + q, q).copy_from(&r.columns(m, q));
    }
    Ok((rm * r.transpose()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn small_op() -> StructuredStateOperator {
        let omega = DVector::from_vec(vec![0.7, 1.3, 2.1]);
        let f = DMatrix::from_row_slice(3, 1, &[0.4, -0.2, 0.9]);
        StructuredStateOperator::new(omega, 0.05, f, DVector::from_vec(vec![3.0]))
    }

    #[test]
    fn zero_factor_gives_rhs_norm() {
        let op = small_op();
        let b = DMatrix::from_fn(6, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let r = lyapunov_residual(&op, &LowRankFactor::zeros(3), &b).unwrap();
        assert!((r - (&b * b.transpose()).norm()).abs() <= 1e-14 * r);
    }

    #[test]
    fn matches_dense_assembly() {
        let op = small_op();
        let b = DMatrix::from_fn(6, 1, |i, _| (i as f64).sin());
        let z = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64 * 0.37).cos());
        let a = op.to_dense();
        let p = &z * z.transpose();
        let dense = (&b * b.transpose() + &a * &p + &p * a.transpose()).norm();
        let r = lyapunov_residual(&op, &LowRankFactor::new(z).unwrap(), &b).unwrap();
        assert!((r - dense).abs() <= 1e-12 * dense);
    }
}
