//! The two benchmark families at arbitrary scale, damping-configuration
//! enumeration, test grids and the campaign runner with its CSV format.
//!
//! Index conventions are 1-based (mass `j` is row `j − 1`), as in the
//! benchmark descriptions. Desk-scale instances rescale every index
//! proportionally from the full-size layout (`n = 1900` for Example 1,
//! `d = 1000` for Example 2).

use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{modal_transform, DampingParameter, ModalRealization, SecondOrderSystem};
use crate::optimize::{
    adaptive_rbm_optimize, optimize_exact, optimize_offline_online, AdaptiveOptions, NelderMeadOptions,
    OptimizationOutcome,
};
use crate::rbm::{undamped_factor, Estimator, RbmOptions, ORTH_TOL};
use crate::response::ResponseOptions;
use crate::{par, Error, Result};

const EX1_FULL: f64 = 1900.0;
const EX2_FULL: f64 = 1000.0;
const EX1_J: [f64; 4] = [50.0, 150.0, 250.0, 350.0];
const EX2_J: [f64; 4] = [250.0, 450.0, 650.0, 850.0];
const EX2_K: [f64; 7] = [1150.0, 1250.0, 1350.0, 1450.0, 1550.0, 1650.0, 1750.0];

fn ex1_k() -> Vec<f64> {
    (0..11).map(|i| 850.0 + 100.0 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Example1,
    Example2,
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(Self::Example1),
            "example2" => Ok(Self::Example2),
            other => Err(Error::InvalidInput(format!("unknown family {other:?}"))),
        }
    }
}

/// Optional changes to the benchmark constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub alpha: Option<f64>,
    /// Example 1 uniform spring constant.
    pub k: Option<f64>,
    /// Example 2 spring constants `(k₁, k₂, k₃)`.
    pub k123: Option<[f64; 3]>,
    /// Common gain bounds.
    pub bounds: Option<(f64, f64)>,
    pub test_points: Option<usize>,
}

/// A benchmark family at a given scale: `n` for Example 1, `d` for
/// Example 2 (`n = 2d + 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub family: Family,
    pub scale: usize,
    #[serde(default)]
    pub overrides: Overrides,
    /// Restrict a campaign to these 1-based configuration ids.
    #[serde(default)]
    pub configs: Option<Vec<usize>>,
}

/// `round(i · scale)` clamped to `[lo, hi]`.
fn scaled_index(i: f64, scale: f64, lo: usize, hi: usize) -> usize {
    ((i * scale).round() as usize).clamp(lo, hi)
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i - 1] = 1.0;
    e
}

/// Example 1: `n` masses in a row with neighbor and next-neighbor springs.
///
/// Dampers are placed for the first configuration; use
/// [`example1_dampers`] for the others.
pub fn example1_system(n: usize, ov: &Overrides) -> Result<SecondOrderSystem> {
    if n < 40 {
        return Err(Error::Generation(format!("example 1 needs n >= 40, got {n}")));
    }
    let s = n as f64 / EX1_FULL;
    let k = ov.k.unwrap_or(500.0);

    let breakpoint = n.div_ceil(4);
    let mass = DVector::from_fn(n, |r, _| {
        let t = (r + 1) as f64 / s;
        if r < breakpoint {
            144.0 - 0.15 * t
        } else {
            t / 10.0 + 25.0
        }
    });

    // uniform constants: diagonal 2k_j + 2k_{j+1}, −k to both neighbors and
    // both next neighbors
    let mut stiff = DMatrix::zeros(n, n);
    for i in 0..n {
        stiff[(i, i)] = 4.0 * k;
        for off in 1..=2 {
            if i + off < n {
                stiff[(i, i + off)] = -k;
                stiff[(i + off, i)] = -k;
            }
        }
    }

    let start = scaled_index(471.0, s, 1, n - 9);
    let weights = [10.0, 20.0, 30.0, 40.0, 50.0, 50.0, 40.0, 30.0, 20.0, 10.0];
    let mut input = DMatrix::zeros(n, 10);
    for (c, w) in weights.iter().enumerate() {
        input[(start - 1 + c, c)] = *w;
    }

    let stride = n / 19;
    let mut output = DMatrix::zeros(18, n);
    for p in 0..18 {
        output[(p, (p + 1) * stride - 1)] = 1.0;
    }

    let (j, kk) = example1_configs(n)[0];
    let bounds = ov.bounds.unwrap_or((500.0, 4000.0));
    SecondOrderSystem::new(
        DMatrix::from_diagonal(&mass),
        stiff,
        ov.alpha.unwrap_or(0.005),
        input,
        output,
        example1_dampers(n, j, kk),
        vec![0, 0, 1, 1],
        vec![bounds; 2],
    )
}

/// Positions `(j, k)`, j-major then ascending `k`.
pub fn example1_configs(n: usize) -> Vec<(usize, usize)> {
    let s = n as f64 / EX1_FULL;
    let mut out = Vec::with_capacity(44);
    for j in EX1_J {
        for k in ex1_k() {
            out.push((scaled_index(j, s, 1, n - 1), scaled_index(k, s, 1, n - 1)));
        }
    }
    out
}

/// Grounded dampers at masses `j, j+1, k, k+1`.
pub fn example1_dampers(n: usize, j: usize, k: usize) -> DMatrix<f64> {
    let cols = [unit(n, j), unit(n, j + 1), unit(n, k), unit(n, k + 1)];
    DMatrix::from_columns(&cols)
}

/// Offsets of the Example 2 dampers (`5`, `20`, `25` at full size), kept
/// distinct at small scale.
fn ex2_offsets(d: usize) -> (usize, usize) {
    let s = d as f64 / EX2_FULL;
    let a = ((5.0 * s).round() as usize).max(1);
    let b = ((20.0 * s).round() as usize).max(a + 1);
    (a, b)
}

/// Example 2: two lines of `d` masses coupled through a last mass.
pub fn example2_system(d: usize, ov: &Overrides) -> Result<SecondOrderSystem> {
    if d < 30 {
        return Err(Error::Generation(format!("example 2 needs d >= 30, got {d}")));
    }
    let n = 2 * d + 1;
    let s = d as f64 / EX2_FULL;
    let [k1, k2, k3] = ov.k123.unwrap_or([400.0, 100.0, 300.0]);

    let mass = DVector::from_fn(n, |r, _| {
        if r == n - 1 {
            return 100.0;
        }
        if r < d {
            let t = (r + 1) as f64 / s;
            if r + 1 <= d / 2 {
                100.0 - t / 10.0
            } else {
                t / 30.0 + 33.0
            }
        } else {
            let u = (r + 1 - d) as f64 / s + EX2_FULL;
            100.0 - (u - 999.0) * 5.0 / 20.0 + (u - 999.0).powi(2) / 5000.0
        }
    });

    let mut stiff = DMatrix::zeros(n, n);
    for (line, kl) in [(0, k1), (d, k2)] {
        for i in 0..d {
            stiff[(line + i, line + i)] = 2.0 * kl;
            if i + 1 < d {
                stiff[(line + i, line + i + 1)] = -kl;
                stiff[(line + i + 1, line + i)] = -kl;
            }
        }
        stiff[(line + d - 1, n - 1)] = kl;
        stiff[(n - 1, line + d - 1)] = kl;
    }
    stiff[(n - 1, n - 1)] = k1 + k2 + k3;

    let mut input = DMatrix::zeros(n, 21);
    for c in 0..10 {
        let w = 1000.0 - 100.0 * c as f64;
        input[(c, c)] = w;
        input[(d + c, 10 + c)] = w;
    }
    input[(n - 1, 20)] = 2000.0;

    let center = scaled_index(500.0, s, 11, d - 10);
    let mut output = DMatrix::zeros(42, n);
    for c in 0..21 {
        output[(c, center - 11 + c)] = 1.0;
        output[(21 + c, d + center - 11 + c)] = 1.0;
    }

    let (j, k) = example2_configs(d)[0];
    let bounds = ov.bounds.unwrap_or((350.0, 7000.0));
    SecondOrderSystem::new(
        DMatrix::from_diagonal(&mass),
        stiff,
        ov.alpha.unwrap_or(0.003),
        input,
        output,
        example2_dampers(d, j, k),
        vec![0, 1, 2, 3],
        vec![bounds; 4],
    )
}

/// Positions `(j, k)` with `k` in the second line, j-major.
pub fn example2_configs(d: usize) -> Vec<(usize, usize)> {
    let s = d as f64 / EX2_FULL;
    let (a, b) = ex2_offsets(d);
    let reach = a + b;
    let mut out = Vec::with_capacity(28);
    for j in EX2_J {
        for k in EX2_K {
            let jj = scaled_index(j, s, 1, d - reach);
            let kk = d + scaled_index(k - EX2_FULL, s, 1, d - reach);
            out.push((jj, kk));
        }
    }
    out
}

/// Relative dampers `e_j − e_{j+5}`, `e_{j+20} − e_{j+25}` and likewise at `k`.
pub fn example2_dampers(d: usize, j: usize, k: usize) -> DMatrix<f64> {
    let n = 2 * d + 1;
    let (a, b) = ex2_offsets(d);
    let pair = |p: usize, q: usize| unit(n, p) - unit(n, q);
    let cols = [
        pair(j, j + a),
        pair(j + b, j + b + a),
        pair(k, k + a),
        pair(k + b, k + b + a),
    ];
    DMatrix::from_columns(&cols)
}

/// `i`-th element (from 1) of the van der Corput sequence in `base`.
pub fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut out = 0.0;
    while i > 0 {
        f /= base as f64;
        out += f * (i % base) as f64;
        i /= base;
    }
    out
}

/// `count` test parameters in the box: a tensor grid with endpoints when
/// `count` is a perfect power of the dimension, otherwise the first `count`
/// Halton points with the box corners `lo` and `hi` in front.
pub fn test_grid(bounds: &[(f64, f64)], count: usize) -> Vec<DampingParameter> {
    let dim = bounds.len();
    if count == 0 || dim == 0 {
        return Vec::new();
    }
    let per_axis = (count as f64).powf(1.0 / dim as f64).round() as usize;
    if per_axis >= 2 && per_axis.pow(dim as u32) == count {
        let mut points = vec![Vec::new()];
        for (lo, hi) in bounds {
            let axis: Vec<f64> = (0..per_axis)
                .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                .collect();
            points = points
                .into_iter()
                .flat_map(|p| axis.iter().map(move |a| [p.clone(), vec![*a]].concat()))
                .collect();
        }
        return points.into_iter().map(DampingParameter).collect();
    }
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    assert!(dim <= PRIMES.len(), "test grids support up to {} gains", PRIMES.len());
    let corner = |hi: bool| DampingParameter(bounds.iter().map(|(l, h)| if hi { *h } else { *l }).collect());
    let mut out = vec![corner(false)];
    if count > 1 {
        out.push(corner(true));
    }
    let mut i = 1;
    while out.len() < count {
        out.push(DampingParameter(
            bounds
                .iter()
                .zip(PRIMES)
                .map(|((lo, hi), p)| lo + (hi - lo) * radical_inverse(i, p))
                .collect(),
        ));
        i += 1;
    }
    out
}

impl BenchmarkSpec {
    pub fn new(family: Family, scale: usize) -> Self {
        Self {
            family,
            scale,
            overrides: Overrides::default(),
            configs: None,
        }
    }

    pub fn n(&self) -> usize {
        match self.family {
            Family::Example1 => self.scale,
            Family::Example2 => 2 * self.scale + 1,
        }
    }

    /// The system with the first configuration's dampers.
    pub fn system(&self) -> Result<SecondOrderSystem> {
        match self.family {
            Family::Example1 => example1_system(self.scale, &self.overrides),
            Family::Example2 => example2_system(self.scale, &self.overrides),
        }
    }

    /// All positions; configuration `i` (1-based) is entry `i − 1`.
    pub fn all_configs(&self) -> Vec<(usize, usize)> {
        match self.family {
            Family::Example1 => example1_configs(self.scale),
            Family::Example2 => example2_configs(self.scale),
        }
    }

    /// `(config_id, j, k)` after the filter.
    pub fn selected_configs(&self) -> Result<Vec<(usize, usize, usize)>> {
        let all = self.all_configs();
        let ids: Vec<usize> = match &self.configs {
            Some(ids) => ids.clone(),
            None => (1..=all.len()).collect(),
        };
        ids.into_iter()
            .map(|id| {
                all.get(id.wrapping_sub(1))
                    .map(|&(j, k)| (id, j, k))
                    .ok_or_else(|| Error::InvalidInput(format!("configuration {id} out of range 1..={}", all.len())))
            })
            .collect()
    }

    pub fn dampers(&self, j: usize, k: usize) -> DMatrix<f64> {
        match self.family {
            Family::Example1 => example1_dampers(self.scale, j, k),
            Family::Example2 => example2_dampers(self.scale, j, k),
        }
    }

    /// Default test-set size: 36 points for two gains, 21 for four.
    pub fn test_points(&self) -> usize {
        self.overrides.test_points.unwrap_or(match self.family {
            Family::Example1 => 36,
            Family::Example2 => 21,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Rbm,
    Adaptive,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Rbm => "rbm",
            Self::Adaptive => "adaptive",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "rbm" => Ok(Self::Rbm),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// Tolerances and start points of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOptions {
    pub methods: Vec<Method>,
    pub tol_f: f64,
    pub opt_tol: f64,
    pub max_evals: usize,
    pub estimator: Estimator,
    pub response: ResponseOptions,
    /// Start gain for every coordinate.
    pub g0: f64,
    /// First error-space parameter for every coordinate.
    pub g0_rr: f64,
    pub max_restarts: usize,
}

impl CampaignOptions {
    /// The benchmark protocol: start at 1000, error-space seed at 100, and
    /// the family's tolerances.
    pub fn protocol(family: Family) -> Self {
        let (tol_f, opt_tol) = match family {
            Family::Example1 => (1e-3, 1e-4),
            Family::Example2 => (1e-2, 5e-4),
        };
        Self {
            methods: vec![Method::Exact, Method::Rbm, Method::Adaptive],
            tol_f,
            opt_tol,
            max_evals: 2000,
            estimator: Estimator::Trace,
            response: ResponseOptions::default(),
            g0: 1000.0,
            g0_rr: 100.0,
            max_restarts: 30,
        }
    }

    pub fn nelder_mead(&self) -> NelderMeadOptions {
        NelderMeadOptions {
            tol: self.opt_tol,
            max_evals: self.max_evals,
        }
    }

    pub fn rbm(&self) -> RbmOptions {
        RbmOptions {
            tol_f: self.tol_f,
            estimator: self.estimator,
            orth_tol: ORTH_TOL,
            response: self.response.clone(),
            include_undamped: true,
            deadline: None,
        }
    }

    pub fn adaptive(&self) -> AdaptiveOptions {
        AdaptiveOptions {
            tol_f: self.tol_f,
            estimator: self.estimator,
            nm: self.nelder_mead(),
            response: self.response.clone(),
            max_restarts: self.max_restarts,
            include_undamped: true,
            orth_tol: ORTH_TOL,
            deadline: None,
        }
    }
}

/// One CSV row: one method on one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigResult {
    pub config_id: usize,
    pub j: usize,
    pub k: usize,
    pub method: Method,
    pub g_opt: Vec<f64>,
    pub j_opt: f64,
    /// `‖g − g_exact‖₂ / ‖g_exact‖₂`, when the exact run is available.
    pub rel_gain_err: Option<f64>,
    pub wall_time_s: f64,
    pub basis_r: Option<usize>,
    pub basis_re: Option<usize>,
    pub restarts: usize,
    /// `converged`, `not_converged` or `error: …`.
    pub status: String,
}

impl ConfigResult {
    pub fn from_outcome(id: usize, j: usize, k: usize, method: Method, out: &OptimizationOutcome) -> Self {
        let (r, re) = match (method, out.final_basis_size()) {
            (Method::Exact, _) | (_, None) => (None, None),
            (_, Some((r, re))) => (Some(r), Some(re)),
        };
        Self {
            config_id: id,
            j,
            k,
            method,
            g_opt: out.g_opt.0.clone(),
            j_opt: out.j_opt.value,
            rel_gain_err: None,
            wall_time_s: out.wall_times.total(),
            basis_r: r,
            basis_re: re,
            restarts: out.restarts,
            status: if out.converged { "converged" } else { "not_converged" }.into(),
        }
    }

    pub fn failed(id: usize, j: usize, k: usize, method: Method, dim: usize, err: &Error) -> Self {
        Self {
            config_id: id,
            j,
            k,
            method,
            g_opt: vec![f64::NAN; dim],
            j_opt: f64::NAN,
            rel_gain_err: None,
            wall_time_s: 0.0,
            basis_r: None,
            basis_re: None,
            restarts: 0,
            status: format!("error: {err}"),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == "converged"
    }
}

pub fn relative_gain_error(g: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = g.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = reference.iter().map(|b| b * b).sum();
    (diff / norm).sqrt()
}

/// The modal model of a configuration, sharing the modes of `base`.
pub fn config_modal(spec: &BenchmarkSpec, base: &ModalRealization, j: usize, k: usize) -> Result<ModalRealization> {
    base.with_dampers(&spec.dampers(j, k), base.gain_map.clone(), base.bounds.clone())
}

/// Runs the requested methods on one configuration.
pub fn run_config(
    spec: &BenchmarkSpec,
    base: &ModalRealization,
    undamped: &DMatrix<f64>,
    (id, j, k): (usize, usize, usize),
    opts: &CampaignOptions,
) -> Vec<ConfigResult> {
    let dim = base.num_gains();
    let modal = match config_modal(spec, base, j, k) {
        Ok(m) => m,
        Err(e) => {
            return opts
                .methods
                .iter()
                .map(|&m| ConfigResult::failed(id, j, k, m, dim, &e))
                .collect()
        }
    };
    let g0 = DampingParameter(vec![opts.g0; dim]).clamped(&modal.bounds);
    let g0_rr = DampingParameter(vec![opts.g0_rr; dim]);
    let test = test_grid(&modal.bounds, spec.test_points());

    let mut rows = Vec::new();
    for &method in &opts.methods {
        let t0 = Instant::now();
        let outcome = match method {
            Method::Exact => optimize_exact(&modal, &g0, &opts.nelder_mead(), &opts.response),
            Method::Rbm => {
                optimize_offline_online(&modal, &test, &g0, &opts.rbm(), &opts.nelder_mead(), Some(undamped))
                    .map(|(o, _)| o)
            }
            Method::Adaptive => {
                adaptive_rbm_optimize(&modal, &g0, &g0_rr, &test, &opts.adaptive(), Some(undamped)).map(|(o, _)| o)
            }
        };
        match outcome {
            Ok(out) => {
                info!(
                    "config {id} ({j}, {k}) {}: J = {:.6}, g = {:?}, {:.2} s",
                    method.as_str(),
                    out.j_opt.value,
                    out.g_opt.0,
                    t0.elapsed().as_secs_f64()
                );
                rows.push(ConfigResult::from_outcome(id, j, k, method, &out));
            }
            Err(e) => {
                warn!("config {id} {} failed: {e}", method.as_str());
                rows.push(ConfigResult::failed(id, j, k, method, dim, &e));
            }
        }
    }

    let exact = rows
        .iter()
        .find(|r| r.method == Method::Exact && r.converged())
        .map(|r| r.g_opt.clone());
    if let Some(reference) = exact {
        for r in rows
            .iter_mut()
            .filter(|r| r.method != Method::Exact && !r.status.starts_with("error"))
        {
            r.rel_gain_err = Some(relative_gain_error(&r.g_opt, &reference));
        }
    }
    rows
}

/// Runs a campaign: every selected configuration with every method from
/// the common start point. `Z₁(0)` is computed once and shared; its cost is
/// not part of any wall time.
pub fn run_campaign(spec: &BenchmarkSpec, opts: &CampaignOptions) -> Result<Vec<ConfigResult>> {
    if opts.methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    if !(opts.tol_f > 0.0 && opts.opt_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let configs = spec.selected_configs()?;
    let base = modal_transform(&spec.system()?)?;
    let needs_z0 = opts.methods.iter().any(|m| *m != Method::Exact);
    let undamped = if needs_z0 {
        undamped_factor(&base, &opts.response)?
    } else {
        DMatrix::zeros(base.n(), 0)
    };
    let per_config = par::map(&configs, |&c| run_config(spec, &base, &undamped, c, opts));
    Ok(per_config.into_iter().flatten().collect())
}

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["config_id", "j", "k", "method"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=dim).map(|i| format!("g_opt_{i}")));
    h.extend(
        [
            "J_opt",
            "rel_gain_err",
            "wall_time_s",
            "basis_r",
            "basis_re",
            "restarts",
            "status",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

/// Writes the campaign CSV. All rows must have the same number of gains.
pub fn write_csv<W: Write>(rows: &[ConfigResult], w: W) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.g_opt.len());
    if rows.iter().any(|r| r.g_opt.len() != dim) {
        return Err(Error::InvalidInput("rows differ in gain count".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(dim))?;
    for r in rows {
        let mut rec = vec![
            r.config_id.to_string(),
            r.j.to_string(),
            r.k.to_string(),
            r.method.as_str().into(),
        ];
        rec.extend(r.g_opt.iter().map(f64::to_string));
        rec.extend([
            r.j_opt.to_string(),
            opt(&r.rel_gain_err),
            r.wall_time_s.to_string(),
            opt(&r.basis_r),
            opt(&r.basis_re),
            r.restarts.to_string(),
            r.status.clone(),
        ]);
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad {name} field {:?}", rec.get(i))))
}

fn opt_field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, name).map(Some),
    }
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ConfigResult>> {
    let mut rdr = csv::Reader::from_reader(r);
    let head = rdr.headers()?.clone();
    let dim = head.iter().filter(|h| h.starts_with("g_opt_")).count();
    if head.iter().collect::<Vec<_>>() != header(dim) {
        return Err(Error::Format("unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let g_opt = (0..dim).map(|i| field(&rec, 4 + i, "g_opt")).collect::<Result<_>>()?;
        let at = 4 + dim;
        rows.push(ConfigResult {
            config_id: field(&rec, 0, "config_id")?,
            j: field(&rec, 1, "j")?,
            k: field(&rec, 2, "k")?,
            method: field(&rec, 3, "method")?,
            g_opt,
            j_opt: field(&rec, at, "J_opt")?,
            rel_gain_err: opt_field(&rec, at + 1, "rel_gain_err")?,
            wall_time_s: field(&rec, at + 2, "wall_time_s")?,
            basis_r: opt_field(&rec, at + 3, "basis_r")?,
            basis_re: opt_field(&rec, at + 4, "basis_re")?,
            restarts: field(&rec, at + 5, "restarts")?,
            status: rec.get(at + 6).unwrap_or_default().to_string(),
        });
    }
    Ok(rows)
}
