use dampopt::lyap::SignOptions;
use dampopt::model::{DampingParameter, ModalRealization};
use dampopt::rbm::project_reduced_model;
use dampopt::response::{
    exact_energy_response, quadrature_energy_response, reduced_energy_response, QuadratureOptions, ResponseOptions,
    ResponseSource,
};
use dampopt::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{random_gains, random_modal, random_orthonormal};

/// `x'' + d x' + x = u`, `y = x`: `J² = 1/(2d)`.
fn scalar(alpha: f64, damper: f64) -> ModalRealization {
    ModalRealization::from_parts(
        DVector::from_element(1, 1.0),
        alpha,
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, damper),
        vec![0],
        vec![(0.1, 10.0)],
    )
    .unwrap()
}

#[test]
fn scalar_oscillator_has_unit_energy() {
    // internal damping alone: 2αω = 0.5
    let modal = scalar(0.25, 0.0);
    let g = DampingParameter(vec![1.0]);
    let exact = exact_energy_response(&modal, &g, &ResponseOptions::default()).unwrap();
    assert_eq!(exact.source, ResponseSource::Exact);
    assert!((exact.squared - 1.0).abs() < 1e-12);
    let quad = quadrature_energy_response(&modal, &g, &QuadratureOptions::default()).unwrap();
    assert!((quad.squared - 1.0).abs() < 1e-6);
}

#[test]
fn damper_adds_to_internal_damping() {
    // 0.1 internal + 0.4 external = 0.5
    let modal = scalar(0.05, 1.0);
    let g = DampingParameter(vec![0.4]);
    let exact = exact_energy_response(&modal, &g, &ResponseOptions::default()).unwrap();
    assert!((exact.squared - 1.0).abs() < 1e-12);
    let sign = exact_energy_response(&modal, &g, &ResponseOptions::sign_only(SignOptions::accurate())).unwrap();
    assert!((sign.squared - 1.0).abs() < 1e-8);
}

#[test]
fn zero_output_gives_zero_response() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut modal = random_modal(&mut rng, 4, 1);
    modal.output.fill(0.0);
    let g = DampingParameter(vec![500.0]);
    let exact = exact_energy_response(&modal, &g, &ResponseOptions::default()).unwrap();
    assert_eq!(exact.value, 0.0);
    let quad = quadrature_energy_response(&modal, &g, &QuadratureOptions::default()).unwrap();
    assert_eq!(quad.value, 0.0);
}

#[test]
fn sign_and_dense_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let modal = random_modal(&mut rng, 12, 2);
    let g = DampingParameter(random_gains(&mut rng, 2));
    let dense = exact_energy_response(&modal, &g, &ResponseOptions::default()).unwrap();
    let sign = exact_energy_response(&modal, &g, &ResponseOptions::sign_only(SignOptions::accurate())).unwrap();
    assert!((dense.squared - sign.squared).abs() <= 1e-8 * dense.squared);
}

#[test]
fn full_basis_reproduces_exact_response() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let modal = random_modal(&mut rng, 7, 2);
    let v = random_orthonormal(&mut rng, 7, 7);
    let rm = project_reduced_model(&modal, &v).unwrap();
    for _ in 0..3 {
        let g = DampingParameter(random_gains(&mut rng, 2));
        let exact = exact_energy_response(&modal, &g, &ResponseOptions::default()).unwrap();
        let red = reduced_energy_response(&rm, &g).unwrap();
        assert_eq!(red.source, ResponseSource::Reduced);
        assert!((red.squared - exact.squared).abs() <= 1e-8 * exact.squared);
    }
}

#[test]
fn empty_basis_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let modal = random_modal(&mut rng, 3, 1);
    let err = project_reduced_model(&modal, &DMatrix::zeros(3, 0)).unwrap_err();
    assert!(matches!(err, Error::EmptyBasis));
}

#[test]
fn argmin_of_squared_matches_argmin_of_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let modal = random_modal(&mut rng, 6, 1);
    let grid: Vec<f64> = (0..15).map(|i| 100.0 * 1.35f64.powi(i)).collect();
    let vals: Vec<_> = grid
        .iter()
        .map(|&g| exact_energy_response(&modal, &DampingParameter(vec![g]), &ResponseOptions::default()).unwrap())
        .collect();
    let by = |f: fn(&dampopt::response::EnergyResponseValue) -> f64| {
        (0..vals.len())
            .min_by(|&a, &b| f(&vals[a]).total_cmp(&f(&vals[b])))
            .unwrap()
    };
    assert_eq!(by(|v| v.squared), by(|v| v.value));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn exact_matches_quadrature(seed in 0u64..10_000, n in 1usize..=10, l in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modal = random_modal(&mut rng, n, l);
        for _ in 0..5 {
            let g = DampingParameter(random_gains(&mut rng, l));
            let exact = exact_energy_response(&modal, &g, &ResponseOptions::default()).unwrap();
            let quad = quadrature_energy_response(&modal, &g, &QuadratureOptions::default()).unwrap();
            prop_assert!((exact.squared - quad.squared).abs() <= 1e-3 * exact.squared,
                "exact {} quadrature {}", exact.squared, quad.squared);
        }
    }
}
