use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{norm2, Matrix};
use crate::error::{Error, Result};

/// A linear map that can be applied forwards and transposed without being materialised.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y ← A·x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x ← Aᵀ·y`
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]);
}

impl LinearOperator for Matrix {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        self.matvec_transpose_into(y, x);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIterConfig {
    /// Relative change of the estimate between iterations below which the run counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub sigma_max: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

impl SpectralEstimate {
    /// An exactly known norm, e.g. from a closed form or an exact decomposition.
    pub fn exact(sigma_max: f64) -> Self {
        Self {
            sigma_max,
            iterations: 0,
            converged: true,
            residual: 0.0,
        }
    }
}

/// Largest singular value of `m` by power iteration on `MᵀM`.
pub fn spectral_norm_power(m: &Matrix, cfg: &PowerIterConfig) -> Result<SpectralEstimate> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    spectral_norm_operator(m, cfg)
}

/// Power iteration against any [`LinearOperator`]. `MᵀM` is never formed: each step is one
/// forward and one transposed application.
pub fn spectral_norm_operator<O: LinearOperator + ?Sized>(
    op: &O,
    cfg: &PowerIterConfig,
) -> Result<SpectralEstimate> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    if cfg.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be at least 1".into()));
    }
    let (rows, cols) = (op.nrows(), op.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut u = vec![0.0; rows];
    let mut w = vec![0.0; cols];
    let mut prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for iteration in 1..=cfg.max_iters {
        op.apply(&v, &mut u);
        let sigma = norm2(&u);
        if !sigma.is_finite() {
            return Err(Error::InvalidInput(
                "operator produced non-finite values".into(),
            ));
        }
        if sigma == 0.0 {
            // Random start vector annihilated: the operator is zero.
            return Ok(SpectralEstimate {
                sigma_max: 0.0,
                iterations: iteration,
                converged: true,
                residual: 0.0,
            });
        }
        if prev.is_finite() {
            residual = (sigma - prev).abs() / sigma;
            if residual <= cfg.tol {
                return Ok(SpectralEstimate {
                    sigma_max: sigma,
                    iterations: iteration,
                    converged: true,
                    residual,
                });
            }
        }
        prev = sigma;
        op.apply_transpose(&u, &mut w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(SpectralEstimate {
                sigma_max: sigma,
                iterations: iteration,
                converged: true,
                residual: 0.0,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    Ok(SpectralEstimate {
        sigma_max: prev,
        iterations: cfg.max_iters,
        converged: false,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_norm() {
        let est = spectral_norm_power(&Matrix::identity(3), &PowerIterConfig::default()).unwrap();
        assert!(est.converged);
        assert!((est.sigma_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_picks_largest_entry() {
        let m = Matrix::from_rows(&[[3.0, 0.0], [0.0, 4.0]]);
        let est = spectral_norm_power(&m, &PowerIterConfig::default()).unwrap();
        assert!(est.converged);
        assert!((est.sigma_max - 4.0).abs() < 1e-8);
    }

    #[test]
    fn one_by_one_and_zero() {
        let m = Matrix::from_rows(&[[-2.5]]);
        let est = spectral_norm_power(&m, &PowerIterConfig::default()).unwrap();
        assert!((est.sigma_max - 2.5).abs() < 1e-15);
        let z = Matrix::zeros(3, 2);
        let est = spectral_norm_power(&z, &PowerIterConfig::default()).unwrap();
        assert_eq!(est.sigma_max, 0.0);
        assert!(est.converged);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = Matrix::random_uniform(20, 12, 9);
        let cfg = PowerIterConfig {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(
            spectral_norm_power(&m, &cfg).unwrap(),
            spectral_norm_power(&m, &cfg).unwrap()
        );
    }

    #[test]
    fn reports_non_convergence() {
        // Close top singular values converge slowly.
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.999]]);
        let cfg = PowerIterConfig {
            tol: 1e-15,
            max_iters: 3,
            seed: 1,
        };
        let est = spectral_norm_power(&m, &cfg).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 3);
    }

    #[test]
    fn rejects_bad_config() {
        let m = Matrix::identity(2);
        let bad_tol = PowerIterConfig {
            tol: 0.0,
            ..Default::default()
        };
        assert!(spectral_norm_power(&m, &bad_tol).is_err());
        let bad_iters = PowerIterConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(spectral_norm_power(&m, &bad_iters).is_err());
    }
}
