//! Error estimators from the reduced error equation and the cheap residual
//! norm used to pick error-space enrichment parameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::projection::{project_a, project_ata, project_b, project_bta, trace_of_product, ErrorModel};
use crate::lyap::solve_dense;
use crate::model::DampingParameter;
use crate::{Error, Result};

/// Which estimator drives the greedy loop and the objective guard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// `Δ₁ = |trace(C Ẽ₁₁ Cᵀ)|`, relative to `trace(C P̃₁₁ Cᵀ)`.
    #[default]
    Trace,
    /// `Δ₂ = ‖Ẽ₁₁‖_F`, relative to `‖P̃₁₁‖_F`.
    Frobenius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub delta1: f64,
    pub delta2: f64,
    pub which: Estimator,
    /// `trace(C P̃₁₁ Cᵀ)`, the reduced squared response.
    pub reduced_squared: f64,
    /// `‖P̃₁₁‖_F`.
    pub reduced_p11_norm: f64,
}

fn ratio(x: f64, scale: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if scale > 0.0 {
        x / scale
    } else {
        f64::INFINITY
    }
}

impl ErrorEstimate {
    pub fn delta(&self) -> f64 {
        match self.which {
            Estimator::Trace => self.delta1,
            Estimator::Frobenius => self.delta2,
        }
    }

    pub fn relative_delta1(&self) -> f64 {
        ratio(self.delta1, self.reduced_squared)
    }

    pub fn relative_delta2(&self) -> f64 {
        ratio(self.delta2, self.reduced_p11_norm)
    }

    /// The selected estimator, normalized; this is what `tol_f` bounds.
    pub fn relative(&self) -> f64 {
        match self.which {
            Estimator::Trace => self.relative_delta1(),
            Estimator::Frobenius => self.relative_delta2(),
        }
    }
}

/// Estimate plus the reduced solutions it was computed from.
#[derive(Debug, Clone)]
pub struct EstimateDetail {
    pub estimate: ErrorEstimate,
    /// Reduced Gramian `P̂` (2r×2r).
    pub p_hat: DMatrix<f64>,
    /// Reduced error `Ê` (2r_e×2r_e).
    pub e_hat: DMatrix<f64>,
}

fn blkdiag2(x: &DMatrix<f64>) -> DMatrix<f64> {
    crate::linalg::block_diag(x, x)
}

/// Solves the reduced Lyapunov equation and the reduced error equation at
/// `g` and evaluates both estimators.
pub fn estimate_error(em: &ErrorModel, g: &DampingParameter, which: Estimator) -> Result<EstimateDetail> {
    let rm = &em.rm;
    let gains = rm.gains(g)?;
    let p_hat = rm.solve_gramian(g)?;
    let r = rm.r();

    let a_ee = project_a(&em.err, &em.err, &em.cross_ee, &gains);
    let a_e1 = project_a(&em.err, &rm.data, &em.cross_e1, &gains);
    let w2 = blkdiag2(&em.cross_e1.qp);
    let b_e = project_b(&em.err);

    // V_errᵀ ℛ V_err with ℛ = ℬℬᵀ + A P̃ + P̃ Aᵀ
    let ap = &a_e1 * &p_hat * w2.transpose();
    let rhs = &b_e * b_e.transpose() + &ap + ap.transpose();
    let e_hat = solve_dense(&a_ee, &rhs, usize::MAX).map_err(|e| match e {
        Error::Unstable { .. } | Error::EigenFailure { .. } => Error::ReducedUnstable { g: g.0.clone() },
        other => other,
    })?;

    let re = em.r_err();
    let e11 = e_hat.view((0, 0), (re, re)).into_owned();
    let c_e = &em.err.c;
    let delta1 = crate::linalg::frob_inner(&(c_e * &e11), c_e).abs();
    let delta2 = e11.norm();
    let p11 = p_hat.view((0, 0), (r, r)).into_owned();

    Ok(EstimateDetail {
        estimate: ErrorEstimate {
            delta1,
            delta2,
            which,
            reduced_squared: rm.squared_response(&p_hat).max(0.0),
            reduced_p11_norm: p11.norm(),
        },
        p_hat,
        e_hat,
    })
}

/// `‖A Ẽ + Ẽ Aᵀ + ℬℬᵀ + A P̃ + P̃ Aᵀ‖_F`, evaluated on the cached
/// triangular factor of the residual range. Cost is independent of `n`.
pub fn error_residual_norm(em: &ErrorModel, g: &DampingParameter, detail: &EstimateDetail) -> Result<f64> {
    let gains = em.rm.gains(g)?;
    Ok(em.resid.norm(&gains, &detail.p_hat, &detail.e_hat))
}

/// Square of [`error_residual_norm`] through the nine-term trace expansion.
pub fn error_residual_norm_sq_expanded(em: &ErrorModel, g: &DampingParameter, detail: &EstimateDetail) -> Result<f64> {
    Ok(error_residual_terms(em, g, detail)?.iter().sum())
}

/// The nine summands of `‖R_rr(g)‖_F²`. The `AᵀA` terms carry the squared
/// conditioning of `A`, so their sum is accurate to roughly
/// `eps · ‖A‖² ‖Ẽ‖²` only. Order: error part
/// (`AẼAẼ`, `AᵀAẼẼ`, `ℬℬᵀAẼ`), Gramian part (same three with `P̃`), the
/// two cross terms and `trace((ℬᵀℬ)²)`.
pub fn error_residual_terms(em: &ErrorModel, g: &DampingParameter, detail: &EstimateDetail) -> Result<[f64; 9]> {
    let rm = &em.rm;
    let gains = rm.gains(g)?;
    let (p, e) = (&detail.p_hat, &detail.e_hat);

    let a_ee = project_a(&em.err, &em.err, &em.cross_ee, &gains);
    let a_11 = project_a(&rm.data, &rm.data, &rm.cross, &gains);
    let a_1e = project_a(&rm.data, &em.err, &em.cross_1e, &gains);
    let a_e1 = project_a(&em.err, &rm.data, &em.cross_e1, &gains);
    let g_ee = project_ata(&em.err, &em.err, &em.cross_ee, &em.glob, &gains);
    let g_11 = project_ata(&rm.data, &rm.data, &rm.cross, &em.glob, &gains);
    let g_1e = project_ata(&rm.data, &em.err, &em.cross_1e, &em.glob, &gains);
    let w2 = blkdiag2(&em.cross_e1.qp);
    let m_ee = blkdiag2(&em.cross_ee.qp);
    let m_11 = blkdiag2(&rm.cross.qp);
    let b_e = project_b(&em.err);
    let b_1 = project_b(&rm.data);
    let bta_e = project_bta(&em.err, &em.glob, &gains);
    let bta_1 = project_bta(&rm.data, &em.glob, &gains);

    let ae = &a_ee * e;
    let ap = &a_11 * p;
    let terms = [
        2.0 * trace_of_product(&ae, &ae),
        2.0 * trace_of_product(&(&g_ee * e), &(&m_ee * e)),
        4.0 * trace_of_product(&(&b_e * &bta_e), e),
        2.0 * trace_of_product(&ap, &ap),
        2.0 * trace_of_product(&(&g_11 * p), &(&m_11 * p)),
        4.0 * trace_of_product(&(&b_1 * &bta_1), p),
        4.0 * trace_of_product(&(&a_1e * e), &(&a_e1 * p)),
        4.0 * trace_of_product(&(&g_1e * e), &(&w2 * p)),
        em.glob.btb_sq,
    ];
    Ok(terms)
}
