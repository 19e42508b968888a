use nalgebra::{DMatrix, DVector};

use super::operator::StructuredStateOperator;
use super::system::{expand_gains, spd_sqrt_pair, DampingParameter, SecondOrderSystem};
use crate::{Error, Result};

/// Modal coordinates: `Φᵀ M Φ = I`, `Φᵀ K Φ = Ω²`, `Φᵀ D_int Φ = 2αΩ`.
///
/// In these coordinates the first-order system reads
/// `A(g) = [0 I; −Ω² −2αΩ] − U G(g) Uᵀ` with `U = [0; ΦᵀF]`,
/// `ℬ = [0; ΦᵀB]` and `𝒞 = [CΦ 0]`.
#[derive(Debug, Clone)]
pub struct ModalRealization {
    pub phi: DMatrix<f64>,
    /// Eigenfrequencies, ascending.
    pub omega: DVector<f64>,
    pub alpha: f64,
    /// `ΦᵀB`, n×m.
    pub input: DMatrix<f64>,
    /// `CΦ`, p×n.
    pub output: DMatrix<f64>,
    /// `ΦᵀF`, n×d.
    pub dampers: DMatrix<f64>,
    pub gain_map: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
}

impl ModalRealization {
    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn num_gains(&self) -> usize {
        self.bounds.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.input.ncols()
    }

    pub fn damper_gains(&self, g: &DampingParameter) -> Result<DVector<f64>> {
        expand_gains(&self.gain_map, self.num_gains(), g)
    }

    /// Right-hand side factor `ℬ = [0; ΦᵀB]` (2n×m).
    pub fn rhs(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut b = DMatrix::zeros(2 * n, self.num_inputs());
        b.view_mut((n, 0), (n, self.num_inputs())).copy_from(&self.input);
        b
    }

    pub fn operator(&self, g: &DampingParameter) -> Result<StructuredStateOperator> {
        assemble_operator(self, g)
    }

    /// Same modes with a different damper placement `F` (physical
    /// coordinates).
    pub fn with_dampers(&self, dampers: &DMatrix<f64>, gain_map: Vec<usize>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if dampers.nrows() != self.phi.nrows() {
            return Err(Error::Dimension("F must have n rows".into()));
        }
        if gain_map.len() != dampers.ncols() || gain_map.iter().any(|&i| i >= bounds.len()) {
            return Err(Error::Dimension("gain_map inconsistent with dampers/bounds".into()));
        }
        Ok(Self {
            dampers: self.phi.transpose() * dampers,
            gain_map,
            bounds,
            ..self.clone()
        })
    }

    /// Builds a realization directly from modal data, e.g. for tests.
    pub fn from_parts(
        omega: DVector<f64>,
        alpha: f64,
        input: DMatrix<f64>,
        output: DMatrix<f64>,
        dampers: DMatrix<f64>,
        gain_map: Vec<usize>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = omega.len();
        if input.nrows() != n || output.ncols() != n || dampers.nrows() != n {
            return Err(Error::Dimension("modal blocks must have n rows/columns".into()));
        }
        if gain_map.len() != dampers.ncols() || gain_map.iter().any(|&i| i >= bounds.len()) {
            return Err(Error::Dimension("gain_map inconsistent with dampers/bounds".into()));
        }
        if omega.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidInput("eigenfrequencies must be positive".into()));
        }
        Ok(Self {
            phi: DMatrix::identity(n, n),
            omega,
            alpha,
            input,
            output,
            dampers,
            gain_map,
            bounds,
        })
    }
}

/// Simultaneous diagonalization of `M` and `K` via the symmetric
/// eigendecomposition of `M^{-1/2} K M^{-1/2}`.
pub fn modal_transform(sys: &SecondOrderSystem) -> Result<ModalRealization> {
    let (_, inv_root) = spd_sqrt_pair(&sys.mass)?;
    let mut s = &inv_root * &sys.stiffness * &inv_root;
    crate::linalg::symmetrize(&mut s);
    let (vals, vecs) = crate::linalg::sym_eigen(&s).ok_or(Error::EigenFailure { mode: 0 })?;

    let n = sys.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    if let Some(pos) = order.iter().position(|&i| !(vals[i] > 0.0)) {
        return Err(Error::EigenFailure { mode: pos });
    }
    let omega = DVector::from_iterator(n, order.iter().map(|&i| vals[i].sqrt()));
    let u = DMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    let mut phi = inv_root * u;
    for mut col in phi.column_iter_mut() {
        let (imax, _) = col.iter().enumerate().fold(
            (0, 0.0f64),
            |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc },
        );
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }

    Ok(ModalRealization {
        input: phi.transpose() * &sys.input,
        output: &sys.output * &phi,
        dampers: phi.transpose() * &sys.dampers,
        phi,
        omega,
        alpha: sys.alpha,
        gain_map: sys.gain_map.clone(),
        bounds: sys.bounds.clone(),
    })
}

/// `A(g) = Ã − U G(g) Uᵀ` for the given gains.
pub fn assemble_operator(modal: &ModalRealization, g: &DampingParameter) -> Result<StructuredStateOperator> {
    let gains = modal.damper_gains(g)?;
    Ok(StructuredStateOperator::new(
        modal.omega.clone(),
        modal.alpha,
        modal.dampers.clone(),
        gains,
    ))
}
