//! Energy response `J(g) = trace(C P11(g) Cᵀ)^{1/2}`: exact (full Lyapunov
//! solve), reduced (projected solve) and a frequency-domain quadrature used
//! as an independent oracle.

use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lyap::{sign_solve, solve_dense, LowRankFactor, SignOptions};
use crate::model::{DampingParameter, ModalRealization, DENSE_CAP};
use crate::rbm::ReducedModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Exact,
    Reduced,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyResponseValue {
    pub value: f64,
    pub squared: f64,
    pub source: ResponseSource,
}

impl EnergyResponseValue {
    /// Clamps rounding-level negative traces to zero.
    pub fn from_squared(squared: f64, source: ResponseSource) -> Self {
        let squared = squared.max(0.0);
        Self {
            value: squared.sqrt(),
            squared,
            source,
        }
    }
}

/// Solver settings for full-order Gramians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseOptions {
    pub sign: SignOptions,
    /// Systems with `2n` at most this size are solved densely.
    pub dense_cap: usize,
    /// Eigenvalue cut-off, relative to the largest, when a dense Gramian is
    /// turned into a factor.
    pub factor_tol: f64,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        Self {
            sign: SignOptions::default(),
            dense_cap: DENSE_CAP,
            factor_tol: 1e-12,
        }
    }
}

impl ResponseOptions {
    /// Always use the sign iteration.
    pub fn sign_only(sign: SignOptions) -> Self {
        Self {
            sign,
            dense_cap: 0,
            ..Self::default()
        }
    }

    fn use_dense(&self, modal: &ModalRealization) -> bool {
        2 * modal.n() <= self.dense_cap
    }
}

fn dense_gramian(modal: &ModalRealization, g: &DampingParameter, cap: usize) -> Result<DMatrix<f64>> {
    let op = modal.operator(g)?;
    let a = op.to_dense_capped(cap)?;
    let b = modal.rhs();
    solve_dense(&a, &(&b * b.transpose()), cap)
}

/// Low-rank factor `Z(g)` of the full controllability Gramian.
pub fn gramian_factor(modal: &ModalRealization, g: &DampingParameter, opts: &ResponseOptions) -> Result<LowRankFactor> {
    if opts.use_dense(modal) {
        let p = dense_gramian(modal, g, opts.dense_cap)?;
        LowRankFactor::from_psd(&p, opts.factor_tol)
    } else {
        let op = modal.operator(g)?;
        sign_solve(&op, &modal.rhs(), &opts.sign)
    }
}

pub fn exact_energy_response(
    modal: &ModalRealization,
    g: &DampingParameter,
    opts: &ResponseOptions,
) -> Result<EnergyResponseValue> {
    let n = modal.n();
    let squared = if opts.use_dense(modal) {
        let p = dense_gramian(modal, g, opts.dense_cap)?;
        let p11 = p.view((0, 0), (n, n));
        let cp = &modal.output * p11;
        crate::linalg::frob_inner(&cp, &modal.output)
    } else {
        let op = modal.operator(g)?;
        let z = sign_solve(&op, &modal.rhs(), &opts.sign)?;
        crate::linalg::frob_sq(&(&modal.output * z.z1()))
    };
    Ok(EnergyResponseValue::from_squared(squared, ResponseSource::Exact))
}

/// `trace(Ĉ P̂ Ĉᵀ)` from the `2r`-dimensional reduced Lyapunov equation.
pub fn reduced_energy_response(rm: &ReducedModel, g: &DampingParameter) -> Result<EnergyResponseValue> {
    let p = rm.solve_gramian(g)?;
    Ok(EnergyResponseValue::from_squared(
        rm.squared_response(&p),
        ResponseSource::Reduced,
    ))
}

/// Adaptive Gauss–Kronrod settings for the frequency-domain oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureOptions {
    /// Target for the estimated error relative to the integral.
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Relative half-width of the refinement windows around each `ω_i`.
    pub resonance_width: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_intervals: 200_000,
            resonance_width: 0.05,
        }
    }
}

/// Transfer-function integrand `‖Cm (Ω² − w² I + i w D̂)⁻¹ Bm‖_F²` with
/// `D̂ = 2αΩ + Fm G Fmᵀ`, solved as a real 2n×2n system.
struct Integrand {
    stiff: DVector<f64>,
    damping: DMatrix<f64>,
    input: DMatrix<f64>,
    output: DMatrix<f64>,
}

impl Integrand {
    fn new(modal: &ModalRealization, g: &DampingParameter) -> Result<Self> {
        let gains = modal.damper_gains(g)?;
        let fg = &modal.dampers * DMatrix::from_diagonal(&gains);
        let mut damping = fg * modal.dampers.transpose();
        for i in 0..modal.n() {
            damping[(i, i)] += 2.0 * modal.alpha * modal.omega[i];
        }
        Ok(Self {
            stiff: modal.omega.map(|w| w * w),
            damping,
            input: modal.input.clone(),
            output: modal.output.clone(),
        })
    }

    fn eval(&self, w: f64) -> f64 {
        let n = self.stiff.len();
        let m = self.input.ncols();
        // [K − w²I, −wD; wD, K − w²I] [xr; xi] = [B; 0]
        let mut sys = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                let wd = w * self.damping[(i, j)];
                sys[(i, n + j)] = -wd;
                sys[(n + i, j)] = wd;
            }
            let k = self.stiff[j] - w * w;
            sys[(j, j)] = k;
            sys[(n + j, n + j)] = k;
        }
        let mut rhs = DMatrix::zeros(2 * n, m);
        rhs.rows_mut(0, n).copy_from(&self.input);
        let x = match sys.lu().solve(&rhs) {
            Some(x) => x,
            None => return f64::INFINITY,
        };
        let yr = &self.output * x.rows(0, n);
        let yi = &self.output * x.rows(n, n);
        crate::linalg::frob_sq(&yr) + crate::linalg::frob_sq(&yi)
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights on the odd-indexed Kronrod nodes.
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One G7–K15 panel: `(kronrod, |kronrod − gauss|)`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_WEIGHTS[7] * fc;
    let mut gs = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += KRONROD_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gs += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - gs) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive bisection starting from the given breakpoints.
/// Returns `(integral, error estimate)`.
fn adaptive_integrate(f: &impl Fn(f64) -> f64, points: &[f64], rel_tol: f64, max_panels: usize) -> (f64, f64) {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut err = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(f, w[0], w[1]);
            total += value;
            err += error;
            heap.push(Panel {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
    }
    while err > rel_tol * total.abs() && heap.len() < max_panels {
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(f, p.a, mid);
        let (v2, e2) = gk15(f, mid, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel {
            a: p.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: p.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated update rounding
    let (total, err) = heap.iter().fold((0.0, 0.0), |(t, e), p| (t + p.value, e + p.error));
    (total, err)
}

/// `J² = (1/π) ∫₀^∞ ‖G(iw)‖_F² dw`, evaluated on `[0, W]` with breakpoints
/// at and around every eigenfrequency, plus the tail `[W, ∞)` mapped to
/// `(0, 1]` by `w = W/t`. `W` is ten times the largest eigenfrequency.
pub fn quadrature_energy_response(
    modal: &ModalRealization,
    g: &DampingParameter,
    opts: &QuadratureOptions,
) -> Result<EnergyResponseValue> {
    if modal.output.iter().all(|&c| c == 0.0) || modal.input.iter().all(|&b| b == 0.0) {
        return Ok(EnergyResponseValue::from_squared(0.0, ResponseSource::Quadrature));
    }
    let integrand = Integrand::new(modal, g)?;
    let f = |w: f64| integrand.eval(w);
    let w_max = 10.0 * modal.omega.max();

    let mut points = vec![0.0, w_max];
    for &w in modal.omega.iter() {
        for s in [-1.0, -0.2, 0.0, 0.2, 1.0] {
            let p = w * (1.0 + s * opts.resonance_width);
            if p > 0.0 && p < w_max {
                points.push(p);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let (head, head_err) = adaptive_integrate(&f, &points, opts.rel_tol, opts.max_intervals);
    let tail_f = |t: f64| f(w_max / t) * w_max / (t * t);
    let (tail, tail_err) = adaptive_integrate(&tail_f, &[0.0, 1.0], opts.rel_tol, opts.max_intervals);

    let total = head + tail;
    let estimate = head_err + tail_err;
    if !total.is_finite() || estimate > opts.rel_tol * total.abs() {
        return Err(Error::QuadratureAccuracy {
            estimate: estimate / total.abs(),
            target: opts.rel_tol,
        });
    }
    Ok(EnergyResponseValue::from_squared(
        total / std::f64::consts::PI,
        ResponseSource::Quadrature,
    ))
}
