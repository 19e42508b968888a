use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{extend_basis, orth};
use crate::{Error, Result};

/// Default relative singular-value drop tolerance of `orth`.
pub const ORTH_TOL: f64 = 1e-10;

/// Solution-space basis `V₁` and error-space basis `V₁,err` with the
/// parameters that were used to build them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedBasis {
    pub v1: DMatrix<f64>,
    pub v1_err: DMatrix<f64>,
    /// Enrichment parameters of `V₁` (the set 𝓜).
    pub used_params: Vec<Vec<f64>>,
    /// Parameters whose solutions enriched only `V₁,err`.
    pub rr_params: Vec<Vec<f64>>,
    /// Whether `Z₁(0)` of the undamped system is part of `V₁`.
    pub includes_undamped: bool,
    pub orth_tol: f64,
}

impl ReducedBasis {
    /// `V₁ = orth([Z₁(0), Z₁(g₀)])` (the undamped block optional) and
    /// `V₁,err = orth([V₁, Z₁(g₀^rr)])`.
    pub fn seed(
        undamped: Option<&DMatrix<f64>>,
        z_start: &DMatrix<f64>,
        g_start: &[f64],
        z_rr: &DMatrix<f64>,
        g_rr: &[f64],
        orth_tol: f64,
    ) -> Self {
        let n = z_start.nrows();
        let v1 = match undamped {
            Some(z0) => extend_basis(&orth(z0, orth_tol), z_start, orth_tol),
            None => orth(z_start, orth_tol),
        };
        debug_assert_eq!(v1.nrows(), n);
        let v1_err = extend_basis(&v1, z_rr, orth_tol);
        Self {
            v1,
            v1_err,
            used_params: vec![g_start.to_vec()],
            rr_params: vec![g_rr.to_vec()],
            includes_undamped: undamped.is_some(),
            orth_tol,
        }
    }

    pub fn r(&self) -> usize {
        self.v1.ncols()
    }

    pub fn r_err(&self) -> usize {
        self.v1_err.ncols()
    }

    pub fn n(&self) -> usize {
        self.v1.nrows()
    }

    /// `V₁ ← orth([V₁, Z₁(g)])`, `V₁,err ← orth([V₁,err, Z₁(g), Z₁(g^rr)])`.
    pub fn enrich(&mut self, z: &DMatrix<f64>, g: &[f64], z_rr: &DMatrix<f64>, g_rr: &[f64]) {
        self.v1 = extend_basis(&self.v1, z, self.orth_tol);
        let both = crate::linalg::hcat(&[z, z_rr]);
        self.v1_err = extend_basis(&self.v1_err, &both, self.orth_tol);
        // keep span(V₁) ⊆ span(V₁,err) even when V₁ picked up directions
        // that fell below the drop tolerance of the error basis
        self.v1_err = extend_basis(&self.v1_err, &self.v1, self.orth_tol);
        self.used_params.push(g.to_vec());
        self.rr_params.push(g_rr.to_vec());
    }

    /// `‖(I − V₁,err V₁,errᵀ) V₁‖_F`.
    pub fn inclusion_defect(&self) -> f64 {
        let proj = &self.v1_err * (self.v1_err.transpose() * &self.v1);
        (&self.v1 - proj).norm()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let basis: Self = serde_json::from_reader(r)?;
        if basis.v1.nrows() != basis.v1_err.nrows() {
            return Err(Error::Format("basis row counts differ".into()));
        }
        Ok(basis)
    }
}
