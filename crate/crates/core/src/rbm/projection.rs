//! Parameter-independent projections of the modal data.
//!
//! For `V = blkdiag(V_q, V_q)` every Galerkin quantity the estimators need,
//! `V_qᵀ A(g) V_p`, `V_qᵀ A(g)ᵀA(g) V_p` and `ℬᵀ A(g) V_q`, is a small
//! polynomial in `G(g)` with cached coefficients. Assembly per parameter is
//! `O(r² ℓ)`.

use nalgebra::{DMatrix, DVector};

use crate::lyap::solve_dense;
use crate::model::{DampingParameter, ModalRealization};
use crate::{Error, Result};

/// `Vᵀ · diag(w) · X`.
fn weighted(v: &DMatrix<f64>, w: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (i, mut row) in wx.row_iter_mut().enumerate() {
        row *= w[i];
    }
    v.transpose() * wx
}

/// `x · diag(g) · yᵀ`.
fn gain_product(x: &DMatrix<f64>, g: &DVector<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xg = x.clone();
    for (j, mut col) in xg.column_iter_mut().enumerate() {
        col *= g[j];
    }
    xg * y.transpose()
}

/// Diagonal weights of the modal model: `Ω²`, `D₀ = 2αΩ` and products.
#[derive(Debug, Clone)]
struct Weights {
    w2: DVector<f64>,
    d0: DVector<f64>,
    w4: DVector<f64>,
    w2d0: DVector<f64>,
    d0sq: DVector<f64>,
}

impl Weights {
    fn new(modal: &ModalRealization) -> Self {
        let w2 = modal.omega.map(|w| w * w);
        let d0 = modal.omega.map(|w| 2.0 * modal.alpha * w);
        Self {
            w4: w2.component_mul(&w2),
            w2d0: w2.component_mul(&d0),
            d0sq: d0.component_mul(&d0),
            w2,
            d0,
        }
    }
}

/// Projections onto a single basis `V` (n×r).
#[derive(Debug, Clone)]
pub(crate) struct BasisData {
    /// `VᵀFm`, `VᵀΩ²Fm`, `VᵀD₀Fm`.
    pub f: DMatrix<f64>,
    pub f_w2: DMatrix<f64>,
    pub f_d0: DMatrix<f64>,
    /// `VᵀBm`, `VᵀΩ²Bm`, `VᵀD₀Bm`.
    pub b: DMatrix<f64>,
    pub b_w2: DMatrix<f64>,
    pub b_d0: DMatrix<f64>,
    /// `Cm V`.
    pub c: DMatrix<f64>,
}

impl BasisData {
    fn new(modal: &ModalRealization, w: &Weights, v: &DMatrix<f64>) -> Self {
        Self {
            f: v.transpose() * &modal.dampers,
            f_w2: weighted(v, &w.w2, &modal.dampers),
            f_d0: weighted(v, &w.d0, &modal.dampers),
            b: v.transpose() * &modal.input,
            b_w2: weighted(v, &w.w2, &modal.input),
            b_d0: weighted(v, &w.d0, &modal.input),
            c: &modal.output * v,
        }
    }

    pub fn dim(&self) -> usize {
        self.c.ncols()
    }
}

/// Cross projections `Q ᵀ diag(·) P` of two bases.
#[derive(Debug, Clone)]
pub(crate) struct CrossData {
    pub qp: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub d0: DMatrix<f64>,
    pub w4: DMatrix<f64>,
    pub w2d0: DMatrix<f64>,
    pub d0sq: DMatrix<f64>,
}

impl CrossData {
    fn new(w: &Weights, q: &DMatrix<f64>, p: &DMatrix<f64>) -> Self {
        Self {
            qp: q.transpose() * p,
            w2: weighted(q, &w.w2, p),
            d0: weighted(q, &w.d0, p),
            w4: weighted(q, &w.w4, p),
            w2d0: weighted(q, &w.w2d0, p),
            d0sq: weighted(q, &w.d0sq, p),
        }
    }

    fn transpose(&self) -> Self {
        Self {
            qp: self.qp.transpose(),
            w2: self.w2.transpose(),
            d0: self.d0.transpose(),
            w4: self.w4.transpose(),
            w2d0: self.w2d0.transpose(),
            d0sq: self.d0sq.transpose(),
        }
    }
}

/// Quantities shared by all bases.
#[derive(Debug, Clone)]
pub(crate) struct Globals {
    /// `FmᵀFm`, `BmᵀFm`.
    pub ftf: DMatrix<f64>,
    pub btf: DMatrix<f64>,
    /// `‖BmᵀBm‖_F²`, i.e. `trace((ℬᵀℬ)²)`.
    pub btb_sq: f64,
}

impl Globals {
    fn new(modal: &ModalRealization) -> Self {
        let btb = modal.input.transpose() * &modal.input;
        Self {
            ftf: modal.dampers.transpose() * &modal.dampers,
            btf: modal.input.transpose() * &modal.dampers,
            btb_sq: crate::linalg::frob_sq(&btb),
        }
    }
}

/// `blkdiag(V_q,V_q)ᵀ A(g) blkdiag(V_p,V_p)`.
pub(crate) fn project_a(q: &BasisData, p: &BasisData, x: &CrossData, gains: &DVector<f64>) -> DMatrix<f64> {
    let (rq, rp) = (q.dim(), p.dim());
    let mut a = DMatrix::zeros(2 * rq, 2 * rp);
    a.view_mut((0, rp), (rq, rp)).copy_from(&x.qp);
    a.view_mut((rq, 0), (rq, rp)).copy_from(&(-&x.w2));
    let d = &x.d0 + gain_product(&q.f, gains, &p.f);
    a.view_mut((rq, rp), (rq, rp)).copy_from(&(-d));
    a
}

/// `blkdiag(V_q,V_q)ᵀ AᵀA blkdiag(V_p,V_p)` with `AᵀA = [Ω⁴ Ω²D; DΩ² I+D²]`.
pub(crate) fn project_ata(
    q: &BasisData,
    p: &BasisData,
    x: &CrossData,
    glob: &Globals,
    gains: &DVector<f64>,
) -> DMatrix<f64> {
    let (rq, rp) = (q.dim(), p.dim());
    let mut m = DMatrix::zeros(2 * rq, 2 * rp);
    m.view_mut((0, 0), (rq, rp)).copy_from(&x.w4);
    let upper = &x.w2d0 + gain_product(&q.f_w2, gains, &p.f);
    m.view_mut((0, rp), (rq, rp)).copy_from(&upper);
    let lower = &x.w2d0 + gain_product(&q.f, gains, &p.f_w2);
    m.view_mut((rq, 0), (rq, rp)).copy_from(&lower);
    let fg = {
        let mut fg = q.f.clone();
        for (j, mut col) in fg.column_iter_mut().enumerate() {
            col *= gains[j];
        }
        fg
    };
    let gfp = {
        let mut pf = p.f.transpose();
        for (i, mut row) in pf.row_iter_mut().enumerate() {
            row *= gains[i];
        }
        pf
    };
    let dd = &x.qp + &x.d0sq + &q.f_d0 * &gfp + &fg * p.f_d0.transpose() + &fg * &glob.ftf * &gfp;
    m.view_mut((rq, rp), (rq, rp)).copy_from(&dd);
    m
}

/// `blkdiag(V,V)ᵀ ℬ = [0; VᵀBm]`.
pub(crate) fn project_b(q: &BasisData) -> DMatrix<f64> {
    let r = q.dim();
    let mut b = DMatrix::zeros(2 * r, q.b.ncols());
    b.view_mut((r, 0), q.b.shape()).copy_from(&q.b);
    b
}

/// `ℬᵀ A(g) blkdiag(V,V) = [−BmᵀΩ²V, −BmᵀD(g)V]`.
pub(crate) fn project_bta(q: &BasisData, glob: &Globals, gains: &DVector<f64>) -> DMatrix<f64> {
    let r = q.dim();
    let m = q.b.ncols();
    let mut out = DMatrix::zeros(m, 2 * r);
    out.view_mut((0, 0), (m, r)).copy_from(&(-q.b_w2.transpose()));
    let dv = q.b_d0.transpose() + gain_product(&glob.btf, gains, &q.f);
    out.view_mut((0, r), (m, r)).copy_from(&(-dv));
    out
}

/// `trace(x y)` without forming the product.
pub(crate) fn trace_of_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(x.ncols(), y.nrows());
    debug_assert_eq!(x.nrows(), y.ncols());
    let mut t = 0.0;
    for i in 0..x.nrows() {
        for k in 0..x.ncols() {
            t += x[(i, k)] * y[(k, i)];
        }
    }
    t
}

/// Galerkin reduced model on `V = blkdiag(V₁, V₁)`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub(crate) data: BasisData,
    pub(crate) cross: CrossData,
    gain_map: Vec<usize>,
    num_gains: usize,
}

impl ReducedModel {
    pub fn r(&self) -> usize {
        self.data.dim()
    }

    pub fn gains(&self, g: &DampingParameter) -> Result<DVector<f64>> {
        crate::model::expand_gains(&self.gain_map, self.num_gains, g)
    }

    /// `Â(g) = Vᵀ A(g) V`.
    pub fn operator(&self, g: &DampingParameter) -> Result<DMatrix<f64>> {
        let gains = self.gains(g)?;
        Ok(project_a(&self.data, &self.data, &self.cross, &gains))
    }

    /// `B̂ = Vᵀℬ`.
    pub fn rhs(&self) -> DMatrix<f64> {
        project_b(&self.data)
    }

    /// `Ĉ = 𝒞V = [Cm V₁, 0]`.
    pub fn output(&self) -> DMatrix<f64> {
        let r = self.r();
        let mut c = DMatrix::zeros(self.data.c.nrows(), 2 * r);
        c.view_mut((0, 0), self.data.c.shape()).copy_from(&self.data.c);
        c
    }

    /// Solves `Â P̂ + P̂ Âᵀ = −B̂ B̂ᵀ`.
    pub fn solve_gramian(&self, g: &DampingParameter) -> Result<DMatrix<f64>> {
        let a = self.operator(g)?;
        let b = self.rhs();
        solve_dense(&a, &(&b * b.transpose()), usize::MAX).map_err(|e| match e {
            Error::Unstable { .. } | Error::EigenFailure { .. } => Error::ReducedUnstable { g: g.0.clone() },
            other => other,
        })
    }

    /// `trace(Cm V₁ P̂₁₁ V₁ᵀ Cmᵀ)`.
    pub fn squared_response(&self, p: &DMatrix<f64>) -> f64 {
        let r = self.r();
        let c = &self.data.c;
        let cp = c * p.view((0, 0), (r, r));
        crate::linalg::frob_inner(&cp, c)
    }
}

/// Builds the cached projections for `V = blkdiag(V₁, V₁)`.
pub fn project_reduced_model(modal: &ModalRealization, v1: &DMatrix<f64>) -> Result<ReducedModel> {
    if v1.ncols() == 0 {
        return Err(Error::EmptyBasis);
    }
    if v1.nrows() != modal.n() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, system has n = {}",
            v1.nrows(),
            modal.n()
        )));
    }
    let w = Weights::new(modal);
    Ok(ReducedModel {
        data: BasisData::new(modal, &w, v1),
        cross: CrossData::new(&w, v1, v1),
        gain_map: modal.gain_map.clone(),
        num_gains: modal.num_gains(),
    })
}

/// Reduced model together with the error-space projections.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    pub(crate) rm: ReducedModel,
    pub(crate) err: BasisData,
    pub(crate) cross_ee: CrossData,
    pub(crate) cross_e1: CrossData,
    pub(crate) cross_1e: CrossData,
    pub(crate) glob: Globals,
    pub(crate) resid: ResidualFactor,
}

impl ErrorModel {
    pub fn new(modal: &ModalRealization, v1: &DMatrix<f64>, v1_err: &DMatrix<f64>) -> Result<Self> {
        if v1_err.ncols() == 0 {
            return Err(Error::EmptyBasis);
        }
        let rm = project_reduced_model(modal, v1)?;
        if v1_err.nrows() != modal.n() {
            return Err(Error::Dimension("error basis row count differs from n".into()));
        }
        let w = Weights::new(modal);
        let cross_e1 = CrossData::new(&w, v1_err, v1);
        Ok(Self {
            err: BasisData::new(modal, &w, v1_err),
            cross_ee: CrossData::new(&w, v1_err, v1_err),
            cross_1e: cross_e1.transpose(),
            cross_e1,
            glob: Globals::new(modal),
            resid: ResidualFactor::new(modal, v1_err, v1),
            rm,
        })
    }

    pub fn reduced(&self) -> &ReducedModel {
        &self.rm
    }

    pub fn r_err(&self) -> usize {
        self.err.dim()
    }
}

/// `[0 V; −Ω²V −D₀V]`, i.e. `Ã blkdiag(V,V)`.
fn base_times(w: &Weights, v: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = v.shape();
    let mut out = DMatrix::zeros(2 * n, 2 * k);
    out.view_mut((0, k), (n, k)).copy_from(v);
    for i in 0..n {
        for j in 0..k {
            out[(n + i, j)] = -w.w2[i] * v[(i, j)];
            out[(n + i, k + j)] = -w.d0[i] * v[(i, j)];
        }
    }
    out
}

/// Triangular factor of the residual range.
///
/// The error-equation residual is `Y K Yᵀ` with
/// `Y = [A V_e, V_e, A V₁, V₁, ℬ]` (block-diagonal `V`). `Y(g)` is affine in
/// the gains, so a QR factorization of `[Ã V_e, V_e, Ã V₁, V₁, ℬ, U]`
/// reduces `‖Y K Yᵀ‖_F` to a small triangular problem without ever forming
/// `AᵀA`.
#[derive(Debug, Clone)]
pub(crate) struct ResidualFactor {
    /// `R` columns of `Y` at zero gain.
    pub ry: DMatrix<f64>,
    /// `R` columns of `U`.
    pub ru: DMatrix<f64>,
    /// `UᵀY` at zero gain: `FmᵀV_e` and `FmᵀV₁` in the velocity halves of
    /// the `A V` blocks, zero elsewhere (d × cols(Y)).
    pub uv: DMatrix<f64>,
    pub re: usize,
    pub r: usize,
}

impl ResidualFactor {
    fn new(modal: &ModalRealization, ve: &DMatrix<f64>, v1: &DMatrix<f64>) -> Self {
        let n = modal.n();
        let w = Weights::new(modal);
        let (re, r) = (ve.ncols(), v1.ncols());
        let vbe = crate::linalg::block_diag(ve, ve);
        let vb1 = crate::linalg::block_diag(v1, v1);
        let b = modal.rhs();
        let mut u = DMatrix::zeros(2 * n, modal.dampers.ncols());
        u.view_mut((n, 0), modal.dampers.shape()).copy_from(&modal.dampers);
        let z = crate::linalg::hcat(&[&base_times(&w, ve), &vbe, &base_times(&w, v1), &vb1, &b, &u]);
        let ny = z.ncols() - u.ncols();
        let rfull = z.qr().r();
        let mut uv = DMatrix::zeros(u.ncols(), ny);
        uv.view_mut((0, re), (u.ncols(), re))
            .copy_from(&(modal.dampers.transpose() * ve));
        uv.view_mut((0, 4 * re + r), (u.ncols(), r))
            .copy_from(&(modal.dampers.transpose() * v1));
        Self {
            ry: rfull.columns(0, ny).into_owned(),
            ru: rfull.columns(ny, u.ncols()).into_owned(),
            uv,
            re,
            r,
        }
    }

    /// `‖Y K Yᵀ‖_F` for per-damper gains and the reduced solutions.
    pub fn norm(&self, gains: &DVector<f64>, p_hat: &DMatrix<f64>, e_hat: &DMatrix<f64>) -> f64 {
        let s = &self.ry - gain_product(&self.ru, gains, &self.uv.transpose());
        let (e2, r2) = (2 * self.re, 2 * self.r);
        let s1 = s.columns(0, e2);
        let s2 = s.columns(e2, e2);
        let s3 = s.columns(2 * e2, r2);
        let s4 = s.columns(2 * e2 + r2, r2);
        let s5 = s.columns(2 * e2 + 2 * r2, s.ncols() - 2 * e2 - 2 * r2);
        let t = s1 * e_hat * s2.transpose() + s3 * p_hat * s4.transpose();
        let m = &t + t.transpose() + s5 * s5.transpose();
        m.norm()
    }
}
