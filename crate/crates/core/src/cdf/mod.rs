//! `Pr(X ≤ q)` for MIG vectors.
//!
//! Two estimators are provided. [`cdf_plain_mc`] counts sampler draws in the
//! orthant. [`cdf_sov`] draws the radius `R = βᵀX` from its truncated law and
//! then integrates the conditional Gaussian one coordinate at a time, so only
//! the last coordinate's probability is left to Monte Carlo error.

mod bivariate;
mod simplex;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use bivariate::{bivariate_bounds, Affine, BivariateBounds, BoundCase};
pub use simplex::{simplex_solve, LinearProgram, LpSolution, LpStatus, Sense};

use crate::error::{check_dim, Error, Result};
use crate::params::MigParams;
use crate::rng::RngStream;
use crate::sampling::{MigSampler, Rotation, TruncatedIg};
use crate::special::{ig_interval_mass, std_normal_interval, truncated_std_normal_from_uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfMethod {
    PlainMc,
    Sov,
}

/// A Monte Carlo probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
    pub method: CdfMethod,
}

/// Range of `βᵀx` over the box `{x ≤ q}`, clipped to the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialBounds {
    pub r_min: f64,
    pub r_max: f64,
}

pub fn radius_bounds(beta: &[f64], q: &[f64]) -> RadialBounds {
    let any_neg = beta.iter().any(|&b| b < 0.0);
    let any_pos = beta.iter().any(|&b| b > 0.0);
    let sum = |keep: fn(f64) -> bool| -> f64 {
        beta.iter()
            .zip(q)
            .filter(|(b, _)| keep(**b))
            .map(|(b, v)| b * v)
            .sum()
    };
    let max = if any_neg { f64::INFINITY } else { sum(|b| b > 0.0) };
    let min = if any_pos { f64::NEG_INFINITY } else { sum(|b| b < 0.0) };
    RadialBounds {
        r_min: min.max(0.0),
        r_max: max.max(0.0),
    }
}

const MIN_DRAWS: usize = 100;
const SOV_BLOCK: usize = 512;

/// Fraction of `n` sampler draws that fall in `{x ≤ q}`.
pub fn cdf_plain_mc(p: &MigParams, q: &[f64], n: usize, stream: &RngStream) -> Result<McEstimate> {
    check_dim(p.dim(), q.len())?;
    if n < MIN_DRAWS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_DRAWS} draws, got {n}")));
    }
    let sampler = MigSampler::try_new(p)?;
    let hits = sampler.count(n, stream, |x| x.iter().zip(q).all(|(a, b)| a <= b))?;
    let value = hits as f64 / n as f64;
    Ok(McEstimate {
        value,
        std_error: (value * (1.0 - value) / n as f64).sqrt(),
        draws: n,
        method: CdfMethod::PlainMc,
    })
}

/// `[z_min, z_max]` for coordinate `i = prefix.len()` of `Q₂x` over
/// `{x ≤ q, βᵀx = r, (Q₂x)ⱼ = prefixⱼ for j < i}`.
pub fn z_bounds_lp(
    beta: &[f64],
    rotation: &Rotation,
    q: &[f64],
    r: f64,
    prefix: &[f64],
) -> Result<(f64, f64)> {
    let d = beta.len();
    check_dim(d, q.len())?;
    let i = prefix.len();
    if i + 1 >= d {
        return Err(Error::InvalidParameter(format!(
            "coordinate {i} out of range for dimension {d}"
        )));
    }
    let q2 = rotation.q2();
    let mut a = DMatrix::zeros(i + 1, d);
    let mut rhs = Vec::with_capacity(i + 1);
    for k in 0..d {
        a[(0, k)] = beta[k];
    }
    rhs.push(r);
    for j in 0..i {
        for k in 0..d {
            a[(j + 1, k)] = q2[(j, k)];
        }
        rhs.push(prefix[j]);
    }
    let lp = LinearProgram::new(q2.row(i).iter().copied().collect(), a, rhs, q.to_vec())?;
    let lo = simplex_solve(&lp, Sense::Minimize)?;
    let hi = simplex_solve(&lp, Sense::Maximize)?;
    if lo.status == LpStatus::Infeasible || hi.status == LpStatus::Infeasible {
        return Err(Error::Infeasible);
    }
    Ok((lo.value, hi.value))
}

/// Separation-of-variables estimator.
pub fn cdf_sov(p: &MigParams, q: &[f64], draws: usize, stream: &RngStream) -> Result<McEstimate> {
    let d = p.dim();
    check_dim(d, q.len())?;
    if draws < MIN_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_DRAWS} draws, got {draws}"
        )));
    }
    let zero = McEstimate {
        value: 0.0,
        std_error: 0.0,
        draws,
        method: CdfMethod::Sov,
    };
    let beta = p.beta();
    let radial = radius_bounds(beta, q);
    if radial.r_max <= radial.r_min {
        return Ok(zero);
    }
    let law = p.radial_law();
    let mass = ig_interval_mass(law.mu, law.lambda, radial.r_min, radial.r_max);
    if !(mass >= 1e-300) {
        return Ok(zero);
    }
    if d == 1 {
        return Ok(McEstimate {
            value: mass.min(1.0),
            ..zero
        });
    }

    let sampler = MigSampler::try_new(p)?;
    let rotation = sampler.rotation();
    let cond = sampler.conditional();
    let chol = cond
        .sigma
        .as_ref()
        .expect("conditional covariance exists for d > 1")
        .chol()
        .clone();
    let planar = if d == 2 { Some(bivariate_bounds(beta, q)?) } else { None };

    let blocks = draws.div_ceil(SOV_BLOCK);
    let weights = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.substream(b as u64).rng();
            let trunc = TruncatedIg::new(law, radial.r_min, radial.r_max, &mut rng)?;
            let len = SOV_BLOCK.min(draws - b * SOV_BLOCK);
            let mut out = Vec::with_capacity(len);
            let m = d - 1;
            let mut y = vec![0.0; m];
            let mut z = vec![0.0; m];
            for _ in 0..len {
                let r = trunc.sample(&mut rng);
                let sr = r.sqrt();
                let mu = cond.mean(r);
                let mut w = 1.0;
                for j in 0..m {
                    let (lo, hi) = match &planar {
                        Some(bb) => bb.interval_for(rotation, r),
                        None => z_bounds_lp(beta, rotation, q, r, &z[..j])?,
                    };
                    let shift: f64 = (0..j).map(|k| chol[(j, k)] * y[k]).sum();
                    let ljj = chol[(j, j)];
                    let a = ((lo - mu[j]) / sr - shift) / ljj;
                    let bnd = ((hi - mu[j]) / sr - shift) / ljj;
                    let pj = std_normal_interval(a, bnd);
                    w *= pj;
                    if w == 0.0 {
                        break;
                    }
                    if j + 1 < m {
                        let u: f64 = rng.random();
                        y[j] = truncated_std_normal_from_uniform(a, bnd, u);
                        z[j] = mu[j] + sr * ((0..=j).map(|k| chol[(j, k)] * y[k]).sum::<f64>());
                    }
                }
                out.push(w);
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let w: Vec<f64> = weights.into_iter().flatten().collect();
    let t = w.len() as f64;
    let mean = w.iter().sum::<f64>() / t;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    Ok(McEstimate {
        value: (mass * mean).clamp(0.0, 1.0),
        std_error: mass * (var / t).sqrt(),
        draws,
        method: CdfMethod::Sov,
    })
}

/// `Pr(X ≤ q)` by the requested method.
pub fn cdf(p: &MigParams, q: &[f64], method: CdfMethod, draws: usize, stream: &RngStream) -> Result<McEstimate> {
    match method {
        CdfMethod::PlainMc => cdf_plain_mc(p, q, draws, stream),
        CdfMethod::Sov => cdf_sov(p, q, draws, stream),
    }
}
