//! Closed-form parameter estimators with the direction `β` known.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::params::{MigParams, SampleBatch};

/// Maximum likelihood: `ξ = x̄`, `Ω = n⁻¹ Σ (xᵢ − x̄)(xᵢ − x̄)ᵀ / βᵀxᵢ`.
pub fn mle(samples: &SampleBatch) -> Result<MigParams> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Estimation(format!("need at least 2 observations, got {n}")));
    }
    let d = samples.dim();
    let mean = samples.mean();
    let h = samples.halfspace();
    let mut omega = DMatrix::zeros(d, d);
    for row in samples.rows() {
        let w = 1.0 / h.project(row);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..=a {
                omega[(a, b)] += w * da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            omega[(b, a)] = omega[(a, b)];
        }
    }
    omega /= n as f64;
    let omega = SpdMatrix::new(omega)
        .map_err(|e| Error::Estimation(format!("scale estimate is singular ({e})")))?;
    MigParams::new(h.clone(), mean.iter().copied().collect(), omega)
}

/// Moment matching: `ξ = x̄`, `Ω = S / βᵀx̄` with `S` the unbiased sample covariance.
pub fn method_of_moments(samples: &SampleBatch) -> Result<MigParams> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Estimation(format!("need at least 2 observations, got {n}")));
    }
    let mean = samples.mean();
    let h = samples.halfspace();
    let bx = h.project(mean.as_slice());
    let omega = SpdMatrix::new(samples.covariance() / bx)
        .map_err(|e| Error::Estimation(format!("sample covariance is singular ({e})")))?;
    MigParams::new(h.clone(), mean.iter().copied().collect(), omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::HalfSpace;

    fn batch(v: &[f64], beta: &[f64]) -> SampleBatch {
        SampleBatch::new(v.to_vec(), HalfSpace::new(beta.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn hand_values_univariate() {
        let b = batch(&[1.0, 3.0], &[1.0]);
        let p = mle(&b).unwrap();
        assert_eq!(p.xi()[0], 2.0);
        assert!((p.omega().matrix()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        let p = method_of_moments(&b).unwrap();
        assert_eq!(p.xi()[0], 2.0);
        assert!((p.omega().matrix()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_samples_fail() {
        let b = batch(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(mle(&b), Err(Error::Estimation(_))));
        assert!(matches!(method_of_moments(&b), Err(Error::Estimation(_))));
        let single = batch(&[1.0, 2.0], &[1.0, 1.0]);
        assert!(mle(&single).is_err());
    }

    #[test]
    fn location_is_the_sample_mean() {
        let b = batch(&[1.0, 2.0, 0.5, 3.0, 2.5, 0.1], &[1.0, 1.0]);
        assert_eq!(mle(&b).unwrap().xi(), &b.mean());
    }
}
