#![allow(dead_code)]

use dampopt::model::ModalRealization;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Modal data with `ω ∈ [0.3, 6]`, light internal damping, two inputs,
/// three outputs and gains bounded by `[10², 10⁴]`.
pub fn random_modal(rng: &mut ChaCha8Rng, n: usize, dampers: usize) -> ModalRealization {
    let mut omega: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..6.0)).collect();
    omega.sort_by(f64::total_cmp);
    ModalRealization::from_parts(
        DVector::from_vec(omega),
        rng.gen_range(0.002..0.05),
        DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0)),
        DMatrix::from_fn(3, n, |_, _| rng.gen_range(-1.0..1.0)),
        DMatrix::from_fn(n, dampers, |_, _| rng.gen_range(-0.5..0.5)),
        (0..dampers).collect(),
        vec![(1e2, 1e4); dampers],
    )
    .unwrap()
}

pub fn random_gains(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| 10f64.powf(rng.gen_range(2.0..4.0))).collect()
}

/// `n×r` matrix with orthonormal columns.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
    let x = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
    x.qr().q().columns(0, r).into_owned()
}
