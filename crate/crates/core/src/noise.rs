//! Seeded Gaussian noise.
//!
//! Samples are `L z` where `z` holds independent standard normals drawn with the
//! ziggurat method of `rand_distr::StandardNormal` from a ChaCha8 stream, and `L`
//! is a square root of the covariance (Cholesky when it exists, otherwise the
//! symmetric eigen-decomposition with negative eigenvalues clipped to zero).
//! ChaCha8 output is platform independent, so a seed fixes the whole trajectory.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Process and measurement noise covariances (m²) plus the generator seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    #[serde(rename = "Q")]
    pub q: [[f64; 3]; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub rng_seed: u64,
}

fn diag(v: f64) -> [[f64; 3]; 3] {
    [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]]
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            q: diag(1e-10),
            r: diag(1e-6),
            rng_seed: 0,
        }
    }
}

pub fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

/// Checks symmetry and positive semi-definiteness (eigenvalues ≥ -1e-15 relative).
pub fn validate_covariance(name: &str, m: &Matrix3<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} has non-finite entries")));
    }
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::Config(format!("{name} is not symmetric")));
    }
    let min_eig = m.symmetric_eigenvalues().min();
    if min_eig < -1e-12 * scale {
        return Err(Error::Config(format!(
            "{name} is not positive semi-definite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

fn sqrt_psd(m: &Matrix3<f64>) -> Matrix3<f64> {
    if let Some(ch) = m.cholesky() {
        return ch.l();
    }
    let eig = m.symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&root)
}

/// Draws zero-mean Gaussian 3-vectors with a fixed covariance.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    factor: Matrix3<f64>,
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    /// `stream` separates independent consumers sharing one seed.
    pub fn new(cov: &Matrix3<f64>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussianNoise {
            factor: sqrt_psd(cov),
            rng,
        }
    }

    pub fn sample(&mut self) -> Vector3<f64> {
        let z = Vector3::from_fn(|_, _| self.rng.sample::<f64, _>(StandardNormal));
        self.factor * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_samples() {
        let cov = to_matrix(&diag(2.0));
        let mut a = GaussianNoise::new(&cov, 7, 0);
        let mut b = GaussianNoise::new(&cov, 7, 0);
        let mut c = GaussianNoise::new(&cov, 7, 1);
        let xs: Vec<_> = (0..10).map(|_| a.sample()).collect();
        let ys: Vec<_> = (0..10).map(|_| b.sample()).collect();
        let zs: Vec<_> = (0..10).map(|_| c.sample()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn singular_covariance_is_supported() {
        let mut cov = Matrix3::zeros();
        cov[(0, 0)] = 1.0;
        let mut g = GaussianNoise::new(&cov, 1, 0);
        for _ in 0..100 {
            let s = g.sample();
            assert_eq!(s[1].abs() + s[2].abs(), 0.0);
        }
        let mut zero = GaussianNoise::new(&Matrix3::zeros(), 1, 0);
        assert_eq!(zero.sample(), Vector3::zeros());
    }

    #[test]
    fn covariance_validation() {
        assert!(validate_covariance("Q", &to_matrix(&diag(1e-8))).is_ok());
        assert!(validate_covariance("Q", &Matrix3::zeros()).is_ok());
        let mut asym = to_matrix(&diag(1.0));
        asym[(0, 1)] = 0.5;
        assert!(validate_covariance("Q", &asym).is_err());
        assert!(validate_covariance("Q", &to_matrix(&diag(-1.0))).is_err());
    }
}
