//! Structured sign-function iteration for `A P + P Aᵀ = −B Bᵀ`.
//!
//! `A_k = Ã_k − U_k G_k V_kᵀ` is carried with `Ã_k` as per-mode 2×2 blocks
//! and a low-rank correction. Each Newton step
//! `A_{k+1} = (c_k A_k + A_k⁻¹ / c_k) / 2` maps this form onto itself:
//!
//! ```text
//! Ã_{k+1} = (c Ã_k + Ã_k⁻¹ / c) / 2
//! U_{k+1} = [U_k, Ã_k⁻¹ U_k],  V_{k+1} = [V_k, Ã_k⁻ᵀ V_k]
//! G_{k+1} = diag(c G_k, −S_k⁻¹ / c) / 2,  S_k⁻¹ = (I − G_k V_kᵀ Ã_k⁻¹ U_k)⁻¹ G_k
//! B_{k+1} = [√c B_k, A_k⁻¹ B_k / √c] / √2
//! ```
//!
//! with `A_k⁻¹` applied through Sherman–Morrison–Woodbury. `B_k B_kᵀ`
//! converges to `2P`.

use nalgebra::{DMatrix, DVector};

use super::LowRankFactor;
use crate::linalg::{compress_factor, compress_product, frob_inner};
use crate::model::{ModeBlocks, StructuredStateOperator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignOptions {
    /// Stop when `‖A_k + I‖_F² ≤ tol`.
    pub tol: f64,
    pub iter_max: usize,
    /// Relative singular-value drop tolerance for compressing `B_k`.
    pub trunc_tol: f64,
    /// Drop tolerance for the correction `U_k G_k V_kᵀ`. Kept near machine
    /// precision: a perturbation of `A_k` of relative size `δ` moves the
    /// slowest eigenvalues by about `δ‖A_k‖`, which is not small for heavy
    /// gains.
    pub correction_tol: f64,
    /// Column cap for the factor; `None` means `40·m`.
    pub q_max: Option<usize>,
}

impl Default for SignOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            iter_max: 10,
            trunc_tol: 1e-8,
            correction_tol: 1e-14,
            q_max: None,
        }
    }
}

impl SignOptions {
    pub fn accurate() -> Self {
        Self {
            tol: 1e-12,
            iter_max: 60,
            ..Self::default()
        }
    }
}

/// Snapshot of the iteration, recorded on request for inspection.
#[derive(Debug, Clone)]
pub struct SignIterationState {
    pub iteration: usize,
    pub blocks: ModeBlocks,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Scaling used to leave this state (0 for the final state).
    pub scaling: f64,
}

impl SignIterationState {
    pub fn dense_operator(&self) -> DMatrix<f64> {
        self.blocks.to_dense() - &self.u * &self.g * self.v.transpose()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SignTrace {
    /// `‖A_k + I‖_F²` for every visited iterate.
    pub distance_sq: Vec<f64>,
    pub scalings: Vec<f64>,
    pub ranks: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub capped: bool,
    pub states: Vec<SignIterationState>,
}

struct Iterate {
    blocks: ModeBlocks,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

/// `‖U G Vᵀ‖_F²` through small Gram matrices.
fn lowrank_frob_sq(u: &DMatrix<f64>, g: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    if u.ncols() == 0 {
        return 0.0;
    }
    let utu = u.transpose() * u;
    let vtv = v.transpose() * v;
    frob_inner(&(g.transpose() * utu * g), &vtv)
}

/// `‖M − U G Vᵀ‖_F²` for mode blocks `M`, expanded through small Gram
/// matrices. Subject to cancellation once `M ≈ U G Vᵀ`.
fn structured_frob_sq(m: &ModeBlocks, u: &DMatrix<f64>, g: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    structured_frob_sq_parts(m, u, g, v).0
}

/// Expanded value and the size of its largest term.
fn structured_frob_sq_parts(m: &ModeBlocks, u: &DMatrix<f64>, g: &DMatrix<f64>, v: &DMatrix<f64>) -> (f64, f64) {
    let base = m.frob_sq();
    if u.ncols() == 0 {
        return (base, base);
    }
    let cross = frob_inner(&m.apply(v), &(u * g));
    let low = lowrank_frob_sq(u, g, v);
    ((base - 2.0 * cross + low).max(0.0), base.max(low))
}

/// `‖M − U G Vᵀ‖_F²` accumulated over column blocks, O(n² r) work and
/// O(n) columns of storage at a time.
fn streamed_frob_sq(m: &ModeBlocks, u: &DMatrix<f64>, g: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    const BLOCK: usize = 64;
    let dim = 2 * m.n();
    let ug = u * g;
    let mut total = 0.0;
    let mut j0 = 0;
    while j0 < dim {
        let w = BLOCK.min(dim - j0);
        let mut cols = DMatrix::zeros(dim, w);
        for t in 0..w {
            let j = j0 + t;
            let i = j % m.n();
            let [[a, b], [c, d]] = m.block(i);
            if j < m.n() {
                cols[(i, t)] = a;
                cols[(m.n() + i, t)] = c;
            } else {
                cols[(i, t)] = b;
                cols[(m.n() + i, t)] = d;
            }
        }
        if u.ncols() > 0 {
            cols -= &ug * v.rows(j0, w).transpose();
        }
        total += crate::linalg::frob_sq(&cols);
        j0 += w;
    }
    total
}

/// Stopping quantity `‖A_k + I‖_F²`: the expansion when it is resolvable,
/// otherwise the streamed evaluation.
fn distance_to_minus_identity(it: &Iterate) -> f64 {
    let shifted = it.blocks.shifted(1.0);
    let (value, scale) = structured_frob_sq_parts(&shifted, &it.u, &it.g, &it.v);
    if value <= 1e3 * f64::EPSILON * scale {
        streamed_frob_sq(&shifted, &it.u, &it.g, &it.v)
    } else {
        value
    }
}

struct Step {
    base_inv: ModeBlocks,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    cap_inv: DMatrix<f64>,
    /// `‖A_k⁻¹‖_F`.
    norm_inv: f64,
}

fn smw_step(it: &Iterate) -> Option<Step> {
    let base_inv = it.blocks.inverse()?;
    let x = base_inv.apply(&it.u);
    let y = base_inv.apply_transpose(&it.v);
    // S⁻¹ = (G⁻¹ − VᵀX)⁻¹ = (I − G VᵀX)⁻¹ G, no inverse of G needed
    let r = x.ncols();
    let t = DMatrix::identity(r, r) - &it.g * (it.v.transpose() * &x);
    let cap_inv = if r == 0 {
        DMatrix::zeros(0, 0)
    } else {
        t.lu().solve(&it.g)?
    };
    if !crate::linalg::all_finite(&cap_inv) {
        return None;
    }
    let norm_inv = if x.ncols() == 0 {
        base_inv.frob_sq()
    } else {
        let cross = frob_inner(&base_inv.apply(&y), &(&x * &cap_inv));
        (base_inv.frob_sq() + 2.0 * cross + lowrank_frob_sq(&x, &cap_inv, &y)).max(0.0)
    }
    .sqrt();
    Some(Step {
        base_inv,
        x,
        y,
        cap_inv,
        norm_inv,
    })
}

pub fn sign_solve(op: &StructuredStateOperator, rhs: &DMatrix<f64>, opts: &SignOptions) -> Result<LowRankFactor> {
    sign_solve_traced(op, rhs, opts, false).map(|(f, _)| f)
}

pub fn sign_solve_traced(
    op: &StructuredStateOperator,
    rhs: &DMatrix<f64>,
    opts: &SignOptions,
    record_states: bool,
) -> Result<(LowRankFactor, SignTrace)> {
    let n = op.n();
    if rhs.nrows() != 2 * n {
        return Err(Error::Dimension(format!(
            "rhs has {} rows, operator dimension is {}",
            rhs.nrows(),
            2 * n
        )));
    }
    if !(opts.tol > 0.0) || opts.iter_max == 0 {
        return Err(Error::InvalidInput(
            "sign iteration needs tol > 0 and iter_max >= 1".into(),
        ));
    }
    let q_max = opts.q_max.unwrap_or(40 * rhs.ncols().max(1));

    // zero-gain dampers drop out of U G Uᵀ
    let active: Vec<usize> = (0..op.gains.len()).filter(|&j| op.gains[j] != 0.0).collect();
    let u0 = {
        let full = op.u_full();
        DMatrix::from_fn(2 * n, active.len(), |i, j| full[(i, active[j])])
    };
    let gains = DVector::from_iterator(active.len(), active.iter().map(|&j| op.gains[j]));
    let mut it = Iterate {
        blocks: op.base.clone(),
        v: u0.clone(),
        u: u0,
        g: DMatrix::from_diagonal(&gains),
        b: rhs.clone(),
    };

    let mut trace = SignTrace::default();
    for k in 0..opts.iter_max {
        let dist = distance_to_minus_identity(&it);
        trace.distance_sq.push(dist);
        trace.ranks.push(it.b.ncols());
        if !dist.is_finite() {
            return Err(Error::Divergence { iteration: k });
        }
        if dist <= opts.tol {
            trace.converged = true;
            break;
        }

        let Step {
            base_inv,
            x,
            y,
            cap_inv,
            norm_inv,
        } = smw_step(&it).ok_or(Error::Breakdown { iteration: k })?;

        // A_k⁻¹ B_k = Ã⁻¹B + X S⁻¹ (Yᵀ B)
        let mut ainv_b = base_inv.apply(&it.b);
        if x.ncols() > 0 {
            ainv_b += &x * (&cap_inv * (y.transpose() * &it.b));
        }

        let norm_a = structured_frob_sq(&it.blocks, &it.u, &it.g, &it.v).sqrt();
        let c = (norm_inv / norm_a).sqrt();
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Divergence { iteration: k });
        }
        trace.scalings.push(c);
        if record_states {
            trace.states.push(snapshot(&it, k, c));
        }

        let sc = c.sqrt();
        let mut b_next = DMatrix::zeros(2 * n, 2 * it.b.ncols());
        b_next
            .columns_mut(0, it.b.ncols())
            .copy_from(&(&it.b * (sc / 2f64.sqrt())));
        b_next
            .columns_mut(it.b.ncols(), it.b.ncols())
            .copy_from(&(&ainv_b * (1.0 / (sc * 2f64.sqrt()))));
        let compressed = compress_factor(&b_next, opts.trunc_tol, q_max);
        if compressed.capped && !trace.capped {
            log::warn!(
                "sign iteration: factor rank capped at {q_max} (next singular value {:.2e} relative)",
                compressed.dropped
            );
            trace.capped = true;
        }
        let b_new = compressed.factor;

        let blocks_new = it.blocks.combine(0.5 * c, &base_inv, 0.5 / c);
        let (u_new, g_new, v_new) = if x.ncols() == 0 {
            (it.u.clone(), it.g.clone(), it.v.clone())
        } else {
            let r = it.u.ncols();
            let u_cat = crate::linalg::hcat(&[&it.u, &x]);
            let v_cat = crate::linalg::hcat(&[&it.v, &y]);
            let mut g_cat = DMatrix::zeros(2 * r, 2 * r);
            g_cat.view_mut((0, 0), (r, r)).copy_from(&(&it.g * (0.5 * c)));
            g_cat.view_mut((r, r), (r, r)).copy_from(&(&cap_inv * (-0.5 / c)));
            let lr = compress_product(&u_cat, &g_cat, &v_cat, opts.correction_tol);
            (lr.left, DMatrix::from_diagonal(&lr.sigma), lr.right)
        };

        it = Iterate {
            blocks: blocks_new,
            u: u_new,
            v: v_new,
            g: g_new,
            b: b_new,
        };
        trace.iterations = k + 1;
        if !crate::linalg::all_finite(&it.b) {
            return Err(Error::Divergence { iteration: k + 1 });
        }
    }
    if !trace.converged {
        let dist = distance_to_minus_identity(&it);
        trace.distance_sq.push(dist);
        trace.ranks.push(it.b.ncols());
        trace.converged = dist <= opts.tol;
    }
    if record_states {
        trace.states.push(snapshot(&it, trace.iterations, 0.0));
    }
    let z = it.b / 2f64.sqrt();
    Ok((LowRankFactor::new(z)?, trace))
}

fn snapshot(it: &Iterate, iteration: usize, scaling: f64) -> SignIterationState {
    SignIterationState {
        iteration,
        blocks: it.blocks.clone(),
        u: it.u.clone(),
        v: it.v.clone(),
        g: it.g.clone(),
        b: it.b.clone(),
        scaling,
    }
}
