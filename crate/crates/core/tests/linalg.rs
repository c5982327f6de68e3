mod common;

use lipbound::linalg::{
    dft2, idft2, norm2, singular_values_exact, spectral_norm_power,
    ComplexMatrix, Matrix, PowerIterConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;

use common::{naive_dft2, rng, uniform_vec};

#[test]
fn power_matches_svd_on_seeded_50x30() {
    let m = Matrix::random_uniform(50, 30, 42);
    let est = spectral_norm_power(&m, &PowerIterConfig::default()).unwrap();
    let exact = singular_values_exact(&m).unwrap()[0];
    assert!(est.converged);
    assert!((est.sigma_max - exact).abs() <= 1e-6 * exact);
}

#[test]
fn dft2_matches_double_sum_on_6x7() {
    let mut r = rng(5);
    let values: Vec<Complex64> = (0..42)
        .map(|_| {
            let re = uniform_vec(&mut r, 2);
            Complex64::new(re[0], re[1])
        })
        .collect();
    let fast = dft2(&ComplexMatrix::new(6, 7, values.clone()).unwrap());
    let slow = naive_dft2(6, 7, &values);
    for (a, b) in fast.data().iter().zip(&slow) {
        assert!((a - b).norm() <= 1e-10);
    }
}

#[test]
fn singular_values_of_orthogonal_matrix_are_one() {
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let m = Matrix::from_rows(&[[c, -s], [s, c]]);
    for v in singular_values_exact(&m).unwrap() {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

fn small_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..8, 1usize..8, any::<u64>()).prop_map(|(r, c, seed)| Matrix::random_uniform(r, c, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_norm_scales_with_absolute_factor(m in small_matrix(), alpha in -5.0f64..5.0) {
        let cfg = PowerIterConfig::default();
        let base = singular_values_exact(&m).unwrap()[0];
        let scaled = singular_values_exact(&m.scaled(alpha)).unwrap()[0];
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-9 * (1.0 + alpha.abs() * base));
        let est = spectral_norm_power(&m.scaled(alpha), &cfg).unwrap();
        if est.converged {
            prop_assert!((est.sigma_max - scaled).abs() <= 1e-6 * scaled.max(1e-12));
        }
    }

    #[test]
    fn spectral_norm_bounds_every_product(m in small_matrix(), seed in any::<u64>()) {
        let sigma = singular_values_exact(&m).unwrap()[0];
        let x = uniform_vec(&mut rng(seed), m.cols());
        prop_assert!(norm2(&m.matvec(&x)) <= sigma * norm2(&x) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn parseval_holds(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let real = uniform_vec(&mut rng(seed), rows * cols);
        let m = ComplexMatrix::from_real(rows, cols, &real).unwrap();
        let energy: f64 = real.iter().map(|v| v * v).sum();
        let spectral: f64 = dft2(&m).data().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((spectral - (rows * cols) as f64 * energy).abs() <= 1e-8 * spectral.max(1e-300));
    }

    #[test]
    fn dft_round_trips(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let real = uniform_vec(&mut rng(seed), rows * cols);
        let m = ComplexMatrix::from_real(rows, cols, &real).unwrap();
        let back = idft2(&dft2(&m));
        for (z, v) in back.data().iter().zip(&real) {
            prop_assert!((z.re - v).abs() <= 1e-12 && z.im.abs() <= 1e-12);
        }
    }
}
