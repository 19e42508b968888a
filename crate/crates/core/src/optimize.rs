//! Box-constrained Nelder–Mead and the optimization drivers: exact,
//! offline/online reduced, and adaptive reduced with a guarded objective.
//!
//! All drivers minimize the squared energy response `trace(C P11 Cᵀ)` and
//! report `J = √trace`.

use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{DampingParameter, ModalRealization};
use crate::rbm::check_deadline;
use crate::rbm::{
    estimate_error, offline_rbm, position_factor, project_reduced_model, sweep, undamped_factor, ErrorModel, Estimator,
    OfflineStart, RbmOptions, ReducedBasis, ReducedModel, ORTH_TOL,
};
use crate::response::{exact_energy_response, EnergyResponseValue, ResponseOptions, ResponseSource};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_evals: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub evals: usize,
}

/// Outcome of a run whose objective may stop the search.
#[derive(Debug, Clone, PartialEq)]
pub enum NelderMeadRun {
    Finished(NelderMeadResult),
    /// The objective declined to evaluate `at`.
    Aborted {
        at: Vec<f64>,
        evals: usize,
    },
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// `c + t (c − w)`, clamped.
fn along(c: &[f64], w: &[f64], t: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let mut x: Vec<f64> = c.iter().zip(w).map(|(ci, wi)| ci + t * (ci - wi)).collect();
    clamp_into(&mut x, bounds);
    x
}

fn converged(simplex: &[Vec<f64>], f: &[f64], tol: f64) -> bool {
    let best = &simplex[0];
    let scale = best.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let diameter = simplex[1..]
        .iter()
        .map(|x| x.iter().zip(best).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .fold(0.0f64, f64::max);
    let spread = f[f.len() - 1] - f[0];
    diameter <= tol * scale && spread <= tol * f[0].abs() + tol * tol
}

/// Nelder–Mead on a box with an objective that may abort the search by
/// returning `None`.
///
/// Candidates are clamped to `bounds` before evaluation. The initial simplex
/// steps by 5% of the box width (at least 1) per coordinate, towards the
/// interior. The run stops when the simplex diameter is below
/// `tol · max(1, ‖x_best‖_∞)` and the value spread below
/// `tol · |f_best| + tol²`.
pub fn nelder_mead_abortable<F>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> Result<NelderMeadRun>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let dim = x0.len();
    if dim == 0 || bounds.len() != dim {
        return Err(Error::Dimension("start point and bounds differ in length".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if x0.iter().zip(bounds).any(|(x, (lo, hi))| !(x >= lo && x <= hi)) {
        return Err(Error::InvalidInput(format!("start point {x0:?} outside the box")));
    }

    let mut evals = 0usize;
    macro_rules! eval {
        ($x:expr) => {{
            let x: &Vec<f64> = &$x;
            evals += 1;
            match f(x) {
                Some(v) if v.is_nan() => f64::INFINITY,
                Some(v) => v,
                None => return Ok(NelderMeadRun::Aborted { at: x.clone(), evals }),
            }
        }};
    }

    let mut simplex = vec![x0.to_vec()];
    for i in 0..dim {
        let (lo, hi) = bounds[i];
        let step = (0.05 * (hi - lo)).max(1.0);
        let mut v = x0.to_vec();
        v[i] = if x0[i] + step <= hi { x0[i] + step } else { x0[i] - step };
        clamp_into(&mut v, bounds);
        simplex.push(v);
    }
    let mut fv = Vec::with_capacity(dim + 1);
    for x in &simplex {
        let v = eval!(x.clone());
        fv.push(v);
    }
    if fv.iter().all(|v| v.is_infinite()) {
        return Err(Error::StartFailure);
    }

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        if converged(&simplex, &fv, opts.tol) || evals >= opts.max_evals {
            let done = converged(&simplex, &fv, opts.tol);
            return Ok(NelderMeadRun::Finished(NelderMeadResult {
                x: simplex[0].clone(),
                f: fv[0],
                converged: done,
                evals,
            }));
        }

        let mut c = vec![0.0; dim];
        for x in &simplex[..dim] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let xr = along(&c, &worst, REFLECT, bounds);
        let fr = eval!(xr);

        if fr < fv[0] {
            let xe = along(&c, &worst, EXPAND, bounds);
            let fe = eval!(xe);
            if fe < fr {
                simplex[dim] = xe;
                fv[dim] = fe;
            } else {
                simplex[dim] = xr;
                fv[dim] = fr;
            }
            continue;
        }
        if fr < fv[dim - 1] {
            simplex[dim] = xr;
            fv[dim] = fr;
            continue;
        }
        let accepted = if fr < fv[dim] {
            let xc = along(&c, &worst, REFLECT * CONTRACT, bounds);
            let fc = eval!(xc);
            (fc <= fr).then_some((xc, fc))
        } else {
            let xc = along(&c, &worst, -CONTRACT, bounds);
            let fc = eval!(xc);
            (fc < fv[dim]).then_some((xc, fc))
        };
        if let Some((x, v)) = accepted {
            simplex[dim] = x;
            fv[dim] = v;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=dim {
            let mut x: Vec<f64> = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, xi)| b + SHRINK * (xi - b))
                .collect();
            clamp_into(&mut x, bounds);
            fv[i] = eval!(x);
            simplex[i] = x;
        }
    }
}

/// Nelder–Mead on a box; `+∞` values are ordinary (worst) values.
pub fn nelder_mead_box<F>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    match nelder_mead_abortable(|x| Some(f(x)), x0, bounds, opts)? {
        NelderMeadRun::Finished(r) => Ok(r),
        NelderMeadRun::Aborted { .. } => unreachable!("objective never aborts"),
    }
}

/// Value of the reduced objective with the estimator guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardedObjectiveResult {
    /// Reduced squared response, or `+∞` when the guard fired.
    pub value: f64,
    pub conv: bool,
}

impl GuardedObjectiveResult {
    fn blocked() -> Self {
        Self {
            value: f64::INFINITY,
            conv: false,
        }
    }
}

/// Reduced squared response at `g` if the relative error estimate is at
/// most `tol_f`; otherwise `(+∞, false)`. Failed reduced solves count as a
/// fired guard. With `tol_f = +∞` the estimate is skipped.
pub fn guarded_objective(
    em: &ErrorModel,
    g: &DampingParameter,
    tol_f: f64,
    which: Estimator,
) -> GuardedObjectiveResult {
    if tol_f == f64::INFINITY {
        let rm = em.reduced();
        return match rm.solve_gramian(g) {
            Ok(p) => GuardedObjectiveResult {
                value: rm.squared_response(&p).max(0.0),
                conv: true,
            },
            Err(_) => GuardedObjectiveResult::blocked(),
        };
    }
    match estimate_error(em, g, which) {
        Ok(d) if d.estimate.relative() <= tol_f => GuardedObjectiveResult {
            value: d.estimate.reduced_squared,
            conv: true,
        },
        _ => GuardedObjectiveResult::blocked(),
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    /// Offline basis construction (full solves and sweeps).
    pub offline: f64,
    /// Objective evaluations inside the optimizer.
    pub online: f64,
    /// Full solves and residual sweeps for adaptive enrichment.
    pub enrichment: f64,
}

impl WallTimes {
    pub fn total(&self) -> f64 {
        self.offline + self.online + self.enrichment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub g_opt: DampingParameter,
    pub j_opt: EnergyResponseValue,
    pub converged: bool,
    /// Adaptive enrichments.
    pub restarts: usize,
    pub evals: usize,
    /// `(r, r_err)` after seeding and after each enrichment.
    pub basis_sizes: Vec<(usize, usize)>,
    pub wall_times: WallTimes,
    /// Blocking parameters, in order.
    pub blocked_at: Vec<Vec<f64>>,
}

impl OptimizationOutcome {
    pub fn final_basis_size(&self) -> Option<(usize, usize)> {
        self.basis_sizes.last().copied()
    }
}

/// Minimizes the exact squared response. Solver failures abort the run.
pub fn optimize_exact(
    modal: &ModalRealization,
    g0: &DampingParameter,
    nm: &NelderMeadOptions,
    response: &ResponseOptions,
) -> Result<OptimizationOutcome> {
    let t0 = Instant::now();
    let mut failure = None;
    let run = nelder_mead_abortable(
        |x| match exact_energy_response(modal, &DampingParameter(x.to_vec()), response) {
            Ok(v) => Some(v.squared),
            Err(e) => {
                failure = Some(e);
                None
            }
        },
        &g0.0,
        &modal.bounds,
        nm,
    )?;
    let r = match run {
        NelderMeadRun::Finished(r) => r,
        NelderMeadRun::Aborted { .. } => return Err(failure.expect("abort records the failure")),
    };
    Ok(OptimizationOutcome {
        g_opt: DampingParameter(r.x),
        j_opt: EnergyResponseValue::from_squared(r.f, ResponseSource::Exact),
        converged: r.converged,
        restarts: 0,
        evals: r.evals,
        basis_sizes: Vec::new(),
        wall_times: WallTimes {
            online: t0.elapsed().as_secs_f64(),
            ..WallTimes::default()
        },
        blocked_at: Vec::new(),
    })
}

/// Minimizes the reduced squared response of a fixed basis. Unstable
/// reduced operators count as `+∞`.
pub fn optimize_reduced(
    rm: &ReducedModel,
    g0: &DampingParameter,
    bounds: &[(f64, f64)],
    nm: &NelderMeadOptions,
) -> Result<OptimizationOutcome> {
    optimize_reduced_until(rm, g0, bounds, nm, None)
}

fn optimize_reduced_until(
    rm: &ReducedModel,
    g0: &DampingParameter,
    bounds: &[(f64, f64)],
    nm: &NelderMeadOptions,
    deadline: Option<Instant>,
) -> Result<OptimizationOutcome> {
    let t0 = Instant::now();
    let run = nelder_mead_abortable(
        |x| {
            check_deadline(deadline).ok()?;
            Some(match rm.solve_gramian(&DampingParameter(x.to_vec())) {
                Ok(p) => rm.squared_response(&p).max(0.0),
                Err(_) => f64::INFINITY,
            })
        },
        &g0.0,
        bounds,
        nm,
    )?;
    let NelderMeadRun::Finished(r) = run else {
        return Err(Error::Deadline);
    };
    Ok(OptimizationOutcome {
        g_opt: DampingParameter(r.x),
        j_opt: EnergyResponseValue::from_squared(r.f, ResponseSource::Reduced),
        converged: r.converged && r.f.is_finite(),
        restarts: 0,
        evals: r.evals,
        basis_sizes: vec![(rm.r(), 0)],
        wall_times: WallTimes {
            online: t0.elapsed().as_secs_f64(),
            ..WallTimes::default()
        },
        blocked_at: Vec::new(),
    })
}

/// Offline greedy phase on `test` followed by the online optimization.
pub fn optimize_offline_online(
    modal: &ModalRealization,
    test: &[DampingParameter],
    g0: &DampingParameter,
    rbm: &RbmOptions,
    nm: &NelderMeadOptions,
    undamped: Option<&DMatrix<f64>>,
) -> Result<(OptimizationOutcome, ReducedBasis)> {
    let t0 = Instant::now();
    let offline = offline_rbm(
        modal,
        test,
        rbm,
        OfflineStart {
            undamped,
            ..OfflineStart::default()
        },
    )?;
    let offline_time = t0.elapsed().as_secs_f64();
    let rm = project_reduced_model(modal, &offline.basis.v1)?;
    let mut out = optimize_reduced_until(&rm, g0, &modal.bounds, nm, rbm.deadline)?;
    out.wall_times.offline = offline_time;
    out.basis_sizes = vec![(offline.basis.r(), offline.basis.r_err())];
    Ok((out, offline.basis))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub tol_f: f64,
    pub estimator: Estimator,
    pub nm: NelderMeadOptions,
    pub response: ResponseOptions,
    pub max_restarts: usize,
    pub include_undamped: bool,
    pub orth_tol: f64,
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            tol_f: 1e-3,
            estimator: Estimator::Trace,
            nm: NelderMeadOptions::default(),
            response: ResponseOptions::default(),
            max_restarts: 30,
            include_undamped: true,
            orth_tol: ORTH_TOL,
            deadline: None,
        }
    }
}

/// Adaptive reduced basis optimization.
///
/// The optimizer runs on the guarded reduced objective. The first candidate
/// whose guard fires is the blocking parameter `g_blk`: `V₁` is enriched
/// with `Z₁(g_blk)`, `V₁,err` with `Z₁(g_blk)` and `Z₁(g_rr)` for the test
/// parameter with the largest error-equation residual, and the optimizer
/// restarts from `g_blk`.
pub fn adaptive_rbm_optimize(
    modal: &ModalRealization,
    g0: &DampingParameter,
    g0_rr: &DampingParameter,
    test: &[DampingParameter],
    opts: &AdaptiveOptions,
    undamped: Option<&DMatrix<f64>>,
) -> Result<(OptimizationOutcome, ReducedBasis)> {
    adaptive_rbm_optimize_observed(modal, g0, g0_rr, test, opts, undamped, |_, _| {})
}

/// [`adaptive_rbm_optimize`] that reports every guarded evaluation.
pub fn adaptive_rbm_optimize_observed(
    modal: &ModalRealization,
    g0: &DampingParameter,
    g0_rr: &DampingParameter,
    test: &[DampingParameter],
    opts: &AdaptiveOptions,
    undamped: Option<&DMatrix<f64>>,
    mut observe: impl FnMut(&DampingParameter, GuardedObjectiveResult),
) -> Result<(OptimizationOutcome, ReducedBasis)> {
    if g0 == g0_rr {
        return Err(Error::InvalidInput("g0 and g0_rr must differ".into()));
    }
    if test.is_empty() {
        return Err(Error::InvalidInput("adaptive enrichment needs a test set".into()));
    }
    let mut times = WallTimes::default();
    let t_seed = Instant::now();
    let owned_z0;
    let z0 = match (opts.include_undamped, undamped) {
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
    let mut basis = ReducedBasis::seed(z0, &z_start, &g0.0, &z_rr, &g0_rr.0, opts.orth_tol);
    times.enrichment += t_seed.elapsed().as_secs_f64();

    let mut sizes = vec![(basis.r(), basis.r_err())];
    let mut blocked_at: Vec<Vec<f64>> = Vec::new();
    let mut evals = 0;
    let mut start = g0.clone();
    loop {
        let t_online = Instant::now();
        let em = ErrorModel::new(modal, &basis.v1, &basis.v1_err)?;
        let mut late = false;
        let run = nelder_mead_abortable(
            |x| {
                if check_deadline(opts.deadline).is_err() {
                    late = true;
                    return None;
                }
                let g = DampingParameter(x.to_vec());
                let r = guarded_objective(&em, &g, opts.tol_f, opts.estimator);
                observe(&g, r);
                r.conv.then_some(r.value)
            },
            &start.0,
            &modal.bounds,
            &opts.nm,
        )?;
        times.online += t_online.elapsed().as_secs_f64();
        if late {
            return Err(Error::Deadline);
        }

        let g_blk = match run {
            NelderMeadRun::Finished(r) => {
                evals += r.evals;
                let outcome = OptimizationOutcome {
                    g_opt: DampingParameter(r.x),
                    j_opt: EnergyResponseValue::from_squared(r.f, ResponseSource::Reduced),
                    converged: r.converged,
                    restarts: blocked_at.len(),
                    evals,
                    basis_sizes: sizes,
                    wall_times: times,
                    blocked_at,
                };
                return Ok((outcome, basis));
            }
            NelderMeadRun::Aborted { at, evals: e } => {
                evals += e;
                DampingParameter(at)
            }
        };

        if blocked_at.len() >= opts.max_restarts {
            warn!("adaptive optimization hit the restart cap at {:?}", g_blk.0);
            blocked_at.push(g_blk.0.clone());
            let outcome = OptimizationOutcome {
                g_opt: g_blk,
                j_opt: EnergyResponseValue::from_squared(f64::INFINITY, ResponseSource::Reduced),
                converged: false,
                restarts: blocked_at.len() - 1,
                evals,
                basis_sizes: sizes,
                wall_times: times,
                blocked_at,
            };
            return Ok((outcome, basis));
        }

        let t_enrich = Instant::now();
        let entries = sweep(&em, test, opts.estimator);
        let unused: Vec<bool> = test
            .iter()
            .map(|g| !basis.rr_params.iter().any(|u| u == &g.0))
            .collect();
        let residuals = entries.iter().map(|e| e.residual);
        let k_rr = crate::rbm::argmax_allowed(residuals.clone(), &unused)
            .or_else(|| crate::rbm::argmax_allowed(residuals, &vec![true; test.len()]))
            .map(|(k, _)| k)
            .expect("test set is nonempty");
        let pair = [g_blk.clone(), test[k_rr].clone()];
        let mut zs = par::map(&pair, |g| position_factor(modal, g, &opts.response));
        let z_rr = zs.pop().expect("two solves")?;
        let z = zs.pop().expect("two solves")?;
        let r_before = basis.r();
        basis.enrich(&z, &pair[0].0, &z_rr, &pair[1].0);
        times.enrichment += t_enrich.elapsed().as_secs_f64();
        if basis.r() == r_before {
            warn!("enrichment at {:?} added no direction", g_blk.0);
        }
        info!(
            "adaptive restart {}: blocked at {:?}, r = {}, r_err = {}",
            blocked_at.len() + 1,
            g_blk.0,
            basis.r(),
            basis.r_err()
        );
        sizes.push((basis.r(), basis.r_err()));
        blocked_at.push(g_blk.0.clone());
        start = g_blk;
    }
}
