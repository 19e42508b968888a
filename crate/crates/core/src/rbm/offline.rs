use std::time::Instant;

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::{ReducedBasis, ORTH_TOL};
use super::estimate::{error_residual_norm, estimate_error, Estimator};
use super::projection::ErrorModel;
use crate::model::{DampingParameter, ModalRealization};
use crate::response::{gramian_factor, ResponseOptions};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmOptions {
    pub tol_f: f64,
    pub estimator: Estimator,
    pub orth_tol: f64,
    pub response: ResponseOptions,
    /// Seed the solution basis with `Z₁(0)`.
    pub include_undamped: bool,
    /// Give up with [`Error::Deadline`] once this instant has passed.
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

pub(crate) fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    match deadline {
        Some(d) if Instant::now() >= d => Err(Error::Deadline),
        _ => Ok(()),
    }
}

impl Default for RbmOptions {
    fn default() -> Self {
        Self {
            tol_f: 1e-3,
            estimator: Estimator::Trace,
            orth_tol: ORTH_TOL,
            response: ResponseOptions::default(),
            include_undamped: true,
            deadline: None,
        }
    }
}

/// Position block `Z₁(g)` of the full Gramian factor.
pub fn position_factor(modal: &ModalRealization, g: &DampingParameter, opts: &ResponseOptions) -> Result<DMatrix<f64>> {
    Ok(gramian_factor(modal, g, opts)?.z1())
}

/// `Z₁(0)` of the undamped system (internal damping only).
pub fn undamped_factor(modal: &ModalRealization, opts: &ResponseOptions) -> Result<DMatrix<f64>> {
    position_factor(modal, &DampingParameter::zeros(modal.num_gains()), opts)
}

/// Estimator and residual at one test parameter. Failures of the reduced
/// solves count as an infinitely bad approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    pub delta: f64,
    pub residual: f64,
}

pub fn sweep(em: &ErrorModel, params: &[DampingParameter], which: Estimator) -> Vec<SweepEntry> {
    par::map(params, |g| sweep_one(em, g, which))
}

pub fn sweep_sequential(em: &ErrorModel, params: &[DampingParameter], which: Estimator) -> Vec<SweepEntry> {
    par::map_sequential(params, |g| sweep_one(em, g, which))
}

fn sweep_one(em: &ErrorModel, g: &DampingParameter, which: Estimator) -> SweepEntry {
    match estimate_error(em, g, which) {
        Ok(detail) => {
            let delta = detail.estimate.relative();
            let residual = error_residual_norm(em, g, &detail).unwrap_or(f64::INFINITY);
            SweepEntry {
                delta: if delta.is_nan() { f64::INFINITY } else { delta },
                residual: if residual.is_nan() { f64::INFINITY } else { residual },
            }
        }
        Err(e) => {
            debug!("estimator failed at {:?}: {e}", g.0);
            SweepEntry {
                delta: f64::INFINITY,
                residual: f64::INFINITY,
            }
        }
    }
}

/// Index of the largest value among `allowed`, lowest index on ties.
pub fn argmax_allowed(values: impl Iterator<Item = f64>, allowed: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if !allowed[i] {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineStep {
    pub g: Vec<f64>,
    pub g_rr: Vec<f64>,
    pub delta_max: f64,
    pub r: usize,
    pub r_err: usize,
}

#[derive(Debug, Clone)]
pub struct OfflineResult {
    pub basis: ReducedBasis,
    /// One entry per sweep; the last one has `delta_max ≤ tol_f`.
    pub history: Vec<OfflineStep>,
}

/// Start parameters and precomputed pieces for [`offline_rbm`].
#[derive(Debug, Clone, Default)]
pub struct OfflineStart<'a> {
    /// `g₀`; defaults to the first test parameter.
    pub g0: Option<DampingParameter>,
    /// `g₀^rr`; defaults to the last test parameter.
    pub g0_rr: Option<DampingParameter>,
    /// Precomputed `Z₁(0)`.
    pub undamped: Option<&'a DMatrix<f64>>,
    /// Resume from an existing basis instead of seeding.
    pub basis: Option<ReducedBasis>,
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Greedy offline phase with error-space enrichment: enrich `V₁` at the
/// test parameter with the largest estimate and `V₁,err` at the one with
/// the largest error-equation residual until every estimate is at most
/// `tol_f`.
pub fn offline_rbm(
    modal: &ModalRealization,
    test: &[DampingParameter],
    opts: &RbmOptions,
    start: OfflineStart<'_>,
) -> Result<OfflineResult> {
    if test.len() < 2 {
        return Err(Error::InvalidInput("test set needs at least two parameters".into()));
    }
    if !(opts.tol_f > 0.0) {
        return Err(Error::InvalidInput("tol_f must be positive".into()));
    }
    let n = modal.n();
    let mut basis = match start.basis {
        Some(b) => b,
        None => {
            let g0 = start.g0.unwrap_or_else(|| test[0].clone());
            let g0_rr = start.g0_rr.unwrap_or_else(|| test[test.len() - 1].clone());
            let owned_z0;
            let z0 = match (opts.include_undamped, start.undamped) {
                (false, _) => None,
                (true, Some(z)) => Some(z),
                (true, None) => {
                    owned_z0 = undamped_factor(modal, &opts.response)?;
                    Some(&owned_z0)
                }
            };
            let seeds = [g0.clone(), g0_rr.clone()];
            let mut zs = par::map(&seeds, |g| position_factor(modal, g, &opts.response));
            let z_rr = zs.pop().expect("two seeds")?;
            let z_start = zs.pop().expect("two seeds")?;
            ReducedBasis::seed(z0, &z_start, &g0.0, &z_rr, &g0_rr.0, opts.orth_tol)
        }
    };

    let mut history = Vec::new();
    loop {
        let used: Vec<bool> = test
            .iter()
            .map(|g| basis.used_params.iter().any(|u| same(u, &g.0)))
            .collect();
        let allowed: Vec<bool> = used.iter().map(|u| !u).collect();
        let allowed_rr: Vec<bool> = test
            .iter()
            .zip(&allowed)
            .map(|(g, &a)| a && !basis.rr_params.iter().any(|u| same(u, &g.0)))
            .collect();

        check_deadline(opts.deadline)?;
        let em = ErrorModel::new(modal, &basis.v1, &basis.v1_err)?;
        let candidates: Vec<usize> = (0..test.len()).filter(|&i| allowed[i]).collect();
        let subset: Vec<DampingParameter> = candidates.iter().map(|&i| test[i].clone()).collect();
        let entries = par::map(&subset, |g| match check_deadline(opts.deadline) {
            Ok(()) => sweep_one(&em, g, opts.estimator),
            Err(_) => SweepEntry {
                delta: f64::INFINITY,
                residual: f64::INFINITY,
            },
        });
        check_deadline(opts.deadline)?;
        let mut delta = vec![f64::NEG_INFINITY; test.len()];
        let mut resid = vec![f64::NEG_INFINITY; test.len()];
        for (&i, e) in candidates.iter().zip(&entries) {
            delta[i] = e.delta;
            resid[i] = e.residual;
        }

        let pick = argmax_allowed(delta.iter().cloned(), &allowed);
        let delta_max = pick.map_or(0.0, |(_, d)| d);
        info!(
            "offline sweep {}: r = {}, r_err = {}, max estimate {:.3e}",
            history.len(),
            basis.r(),
            basis.r_err(),
            delta_max
        );
        let (k, _) = match pick {
            Some(p) if delta_max > opts.tol_f => p,
            _ => {
                history.push(OfflineStep {
                    g: Vec::new(),
                    g_rr: Vec::new(),
                    delta_max,
                    r: basis.r(),
                    r_err: basis.r_err(),
                });
                break;
            }
        };
        let mut allowed_rr = allowed_rr;
        allowed_rr[k] = false;
        let (k_rr, _) = argmax_allowed(resid.iter().cloned(), &allowed_rr)
            .or_else(|| argmax_allowed(resid.iter().cloned(), &allowed))
            .expect("allowed set is nonempty");

        let pair = [test[k].clone(), test[k_rr].clone()];
        let mut zs = par::map(&pair, |g| position_factor(modal, g, &opts.response));
        let z_rr = zs.pop().expect("two solves")?;
        let z = zs.pop().expect("two solves")?;
        basis.enrich(&z, &pair[0].0, &z_rr, &pair[1].0);
        history.push(OfflineStep {
            g: pair[0].0.clone(),
            g_rr: pair[1].0.clone(),
            delta_max,
            r: basis.r(),
            r_err: basis.r_err(),
        });
        if basis.r() > n {
            return Err(Error::OfflineNoConvergence(format!(
                "basis dimension {} exceeds n = {n}",
                basis.r()
            )));
        }
    }
    Ok(OfflineResult { basis, history })
}
