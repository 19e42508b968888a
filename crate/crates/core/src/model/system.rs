use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Damper gains (friction coefficients), one entry per independent gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingParameter(pub Vec<f64>);

impl DampingParameter {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "damping gain {g} must be finite and nonnegative"
            )));
        }
        Ok(Self(gains))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise projection onto the box.
    pub fn clamped(&self, bounds: &[(f64, f64)]) -> Self {
        Self(
            self.0
                .iter()
                .zip(bounds)
                .map(|(g, (lo, hi))| g.clamp(*lo, *hi))
                .collect(),
        )
    }
}

impl From<Vec<f64>> for DampingParameter {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// The vibrational model `M x'' + D(g) x' + K x = B u`, `y = C x` with
/// `D(g) = D_int + F G(g) Fᵀ`.
///
/// Each column of `F` is one damper; `gain_map[j]` names the entry of `g`
/// that drives damper `j`, so several dampers may share a gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSystem {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub alpha: f64,
    pub input: DMatrix<f64>,
    pub output: DMatrix<f64>,
    pub dampers: DMatrix<f64>,
    pub gain_map: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
}

impl SecondOrderSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mass: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        alpha: f64,
        input: DMatrix<f64>,
        output: DMatrix<f64>,
        dampers: DMatrix<f64>,
        gain_map: Vec<usize>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = mass.nrows();
        let dim = |what: &str| Error::Dimension(what.to_string());
        if mass.ncols() != n || stiffness.shape() != (n, n) {
            return Err(dim("M and K must be square of equal size"));
        }
        if input.nrows() != n {
            return Err(dim("B must have n rows"));
        }
        if output.ncols() != n {
            return Err(dim("C must have n columns"));
        }
        if dampers.nrows() != n {
            return Err(dim("F must have n rows"));
        }
        if dampers.ncols() > n {
            return Err(dim("more dampers than degrees of freedom"));
        }
        if gain_map.len() != dampers.ncols() {
            return Err(dim("gain_map must name one gain per damper column"));
        }
        if gain_map.iter().any(|&i| i >= bounds.len()) {
            return Err(dim("gain_map refers to a gain without bounds"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidInput(format!("alpha = {alpha} must be nonnegative")));
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(*lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "bounds for gain {i} must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        check_spd(&mass, "M")?;
        check_spd(&stiffness, "K")?;
        Ok(Self {
            mass,
            stiffness,
            alpha,
            input,
            output,
            dampers,
            gain_map,
            bounds,
        })
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.input.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.output.nrows()
    }

    pub fn num_dampers(&self) -> usize {
        self.dampers.ncols()
    }

    pub fn num_gains(&self) -> usize {
        self.bounds.len()
    }

    /// Per-damper gains `diag(G(g))`.
    pub fn damper_gains(&self, g: &DampingParameter) -> Result<DVector<f64>> {
        expand_gains(&self.gain_map, self.num_gains(), g)
    }

    pub fn internal_damping(&self) -> Result<DMatrix<f64>> {
        build_internal_damping(&self.mass, &self.stiffness, self.alpha)
    }

    /// `D(g) = D_int + F G(g) Fᵀ`.
    pub fn damping(&self, g: &DampingParameter) -> Result<DMatrix<f64>> {
        let gains = self.damper_gains(g)?;
        let fg = &self.dampers * DMatrix::from_diagonal(&gains);
        Ok(self.internal_damping()? + fg * self.dampers.transpose())
    }

    /// First-order realization `[0 I; −M⁻¹K −M⁻¹D(g)]`, `[0; M⁻¹B]` in
    /// physical coordinates. Only used to cross-check the modal path.
    pub fn first_order_dense(&self, g: &DampingParameter) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n();
        let chol = self
            .mass
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { name: "M" })?;
        let d = self.damping(g)?;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a.view_mut((n, 0), (n, n)).copy_from(&(-chol.solve(&self.stiffness)));
        a.view_mut((n, n), (n, n)).copy_from(&(-chol.solve(&d)));
        let mut b = DMatrix::zeros(2 * n, self.num_inputs());
        b.view_mut((n, 0), (n, self.num_inputs()))
            .copy_from(&chol.solve(&self.input));
        Ok((a, b))
    }
}

/// Per-damper gains from the independent gains via `gain_map`.
pub fn expand_gains(gain_map: &[usize], num_gains: usize, g: &DampingParameter) -> Result<DVector<f64>> {
    if g.len() != num_gains {
        return Err(Error::Dimension(format!("expected {num_gains} gains, got {}", g.len())));
    }
    Ok(DVector::from_iterator(gain_map.len(), gain_map.iter().map(|&i| g.0[i])))
}

fn check_spd(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-13 * scale {
                return Err(Error::NotSymmetric { name });
            }
        }
    }
    if n > 0 && m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { name });
    }
    Ok(())
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.iter()
        .enumerate()
        .all(|(k, v)| *v == 0.0 || k % m.nrows() == k / m.nrows())
}

/// `M^{1/2}` and `M^{-1/2}` of an SPD matrix.
pub(crate) fn spd_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if is_diagonal(m) {
        let d = m.diagonal();
        if d.iter().any(|x| *x <= 0.0) {
            return Err(Error::NotPositiveDefinite { name: "M" });
        }
        return Ok((
            DMatrix::from_diagonal(&d.map(f64::sqrt)),
            DMatrix::from_diagonal(&d.map(|x| 1.0 / x.sqrt())),
        ));
    }
    let (vals, q) = crate::linalg::sym_eigen(m).ok_or(Error::EigenFailure { mode: 0 })?;
    if vals.iter().any(|x| *x <= 0.0) {
        return Err(Error::NotPositiveDefinite { name: "M" });
    }
    let root = &q * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * q.transpose();
    let inv_root = &q * DMatrix::from_diagonal(&vals.map(|x| 1.0 / x.sqrt())) * q.transpose();
    Ok((root, inv_root))
}

/// Internal damping as a multiple of critical damping,
/// `2α M^{1/2} (M^{-1/2} K M^{-1/2})^{1/2} M^{1/2}`.
pub fn build_internal_damping(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if mass.shape() != stiffness.shape() || !mass.is_square() {
        return Err(Error::Dimension("M and K must be square of equal size".into()));
    }
    check_spd(mass, "M")?;
    check_spd(stiffness, "K")?;
    let (root, inv_root) = spd_sqrt_pair(mass)?;
    let mut s = &inv_root * stiffness * &inv_root;
    crate::linalg::symmetrize(&mut s);
    let (vals, q) = crate::linalg::sym_eigen(&s).ok_or(Error::EigenFailure { mode: 0 })?;
    let sqrt_s = &q * DMatrix::from_diagonal(&vals.map(|x| x.max(0.0).sqrt())) * q.transpose();
    let mut d = (&root * sqrt_s * &root) * (2.0 * alpha);
    crate::linalg::symmetrize(&mut d);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mass_and_stiffness_give_scaled_identity() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        let d = build_internal_damping(&i3, &i3, 0.005).unwrap();
        assert!((d - i3 * 0.01).norm() < 1e-15);
    }

    #[test]
    fn scalar_case_is_two_alpha_sqrt_mk() {
        let d = build_internal_damping(
            &DMatrix::from_element(1, 1, 4.0),
            &DMatrix::from_element(1, 1, 9.0),
            0.5,
        )
        .unwrap();
        assert!((d[(0, 0)] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn non_spd_inputs_are_named() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match build_internal_damping(&i2, &bad, 0.1) {
            Err(Error::NotPositiveDefinite { name }) => assert_eq!(name, "K"),
            other => panic!("unexpected {other:?}"),
        }
        match build_internal_damping(&bad, &i2, 0.1) {
            Err(Error::NotPositiveDefinite { name }) => assert_eq!(name, "M"),
            other => panic!("unexpected {other:?}"),
        }
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]);
        assert!(matches!(
            build_internal_damping(&i2, &asym, 0.1),
            Err(Error::NotSymmetric { name: "K" })
        ));
    }

    #[test]
    fn rejects_bad_bounds_and_shapes() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let f = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let ok = SecondOrderSystem::new(
            i2.clone(),
            i2.clone(),
            0.1,
            i2.clone(),
            i2.clone(),
            f.clone(),
            vec![0],
            vec![(1.0, 2.0)],
        );
        assert!(ok.is_ok());
        let bad_bounds = SecondOrderSystem::new(
            i2.clone(),
            i2.clone(),
            0.1,
            i2.clone(),
            i2.clone(),
            f.clone(),
            vec![0],
            vec![(0.0, 2.0)],
        );
        assert!(matches!(bad_bounds, Err(Error::InvalidInput(_))));
        let bad_map = SecondOrderSystem::new(
            i2.clone(),
            i2.clone(),
            0.1,
            i2.clone(),
            i2.clone(),
            f,
            vec![1],
            vec![(1.0, 2.0)],
        );
        assert!(matches!(bad_map, Err(Error::Dimension(_))));
    }

    #[test]
    fn damping_parameter_rejects_negative() {
        assert!(DampingParameter::new(vec![1.0, -1.0]).is_err());
        let g = DampingParameter::new(vec![5.0, 0.5]).unwrap();
        assert_eq!(g.clamped(&[(1.0, 4.0), (1.0, 4.0)]).0, vec![4.0, 1.0]);
    }
}
