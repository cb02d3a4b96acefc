//! The MIG asymmetric kernel smoother
//!
//! ```text
//! f̂(ξ) = n⁻¹ Σᵢ k_{β,ξ,H}(Xᵢ),
//! ```
//!
//! where the kernel is the MIG density whose *mean* is the evaluation point
//! `ξ`, evaluated at the observations. Kernels therefore change shape across
//! the support and never put mass outside the half-space.

mod plugin;
mod select;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

pub use plugin::{amise_isotropic_h, AmiseObjective, PluginDensity, PluginKind, PluginModel, TruncGaussian};
pub use select::{
    cholesky_params, from_cholesky_params, nelder_mead, optimize_bandwidth, select_bandwidth,
    spherical_bandwidth, Criterion, NelderMead, SphericalVariant, Structure,
};

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::params::SampleBatch;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    AmiseFull,
    AmiseIso,
    LcvFull,
    LcvIso,
    Lscv,
    NormalRef,
}

impl SelectionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AmiseFull => "amise_full",
            Self::AmiseIso => "amise_iso",
            Self::LcvFull => "lcv_full",
            Self::LcvIso => "lcv_iso",
            Self::Lscv => "lscv",
            Self::NormalRef => "normal_ref",
        }
    }
}

/// A smoothing matrix together with how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    pub h: SpdMatrix,
    pub method: SelectionMethod,
    /// The selection criterion at `h`: the AMISE for plug-in rules, the
    /// score for cross-validation and 0 for the normal reference rule.
    pub criterion_value: f64,
}

impl Bandwidth {
    pub fn new(h: SpdMatrix, method: SelectionMethod, criterion_value: f64) -> Result<Self> {
        if !criterion_value.is_finite() {
            return Err(Error::Numerical(format!(
                "{} criterion is not finite",
                method.as_str()
            )));
        }
        Ok(Self {
            h,
            method,
            criterion_value,
        })
    }
}

/// A fitted smoother with the bandwidth-dependent pieces cached.
#[derive(Debug, Clone)]
pub struct MigKde {
    samples: SampleBatch,
    h: SpdMatrix,
    /// `L_H⁻¹ Xᵢ`, row-major.
    white: Vec<f64>,
    ln_proj: Vec<f64>,
    inv_proj: Vec<f64>,
    ln_const: f64,
}

impl MigKde {
    pub fn new(samples: &SampleBatch, h: &SpdMatrix) -> Result<Self> {
        let d = samples.dim();
        check_dim(d, h.dim())?;
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        let mut white = Vec::with_capacity(samples.len() * d);
        let mut ln_proj = Vec::with_capacity(samples.len());
        let mut inv_proj = Vec::with_capacity(samples.len());
        let hs = samples.halfspace();
        for row in samples.rows() {
            white.extend(h.solve_lower(&DVector::from_column_slice(row)).iter());
            let b = hs.project(row);
            ln_proj.push(b.ln());
            inv_proj.push(1.0 / b);
        }
        let ln_const = -0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * h.ln_det();
        Ok(Self {
            samples: samples.clone(),
            h: h.clone(),
            white,
            ln_proj,
            inv_proj,
            ln_const,
        })
    }

    pub fn samples(&self) -> &SampleBatch {
        &self.samples
    }

    pub fn bandwidth(&self) -> &SpdMatrix {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `ln k_{β,ξ,H}(Xⱼ)` with `ξ` given by its whitened coordinates and
    /// projection.
    #[inline]
    fn log_kernel(&self, w: &[f64], ln_bxi: f64, j: usize) -> f64 {
        let d = w.len();
        let row = &self.white[j * d..(j + 1) * d];
        let q: f64 = row.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        self.ln_const + ln_bxi
            - (0.5 * d as f64 + 1.0) * self.ln_proj[j]
            - 0.5 * q * self.inv_proj[j]
    }

    fn prepare(&self, xi: &[f64]) -> Option<(Vec<f64>, f64)> {
        let b = self.samples.halfspace().project(xi);
        if !(b > 0.0) {
            return None;
        }
        let w = self.h.solve_lower(&DVector::from_column_slice(xi));
        Some((w.iter().copied().collect(), b.ln()))
    }

    /// `ln f̂(ξ)`, `−∞` off the support.
    pub fn log_eval(&self, xi: &[f64]) -> Result<f64> {
        check_dim(self.samples.dim(), xi.len())?;
        let Some((w, ln_b)) = self.prepare(xi) else {
            return Ok(f64::NEG_INFINITY);
        };
        let terms = (0..self.len()).map(|j| self.log_kernel(&w, ln_b, j));
        Ok(log_sum_exp(terms) - (self.len() as f64).ln())
    }

    /// `f̂(ξ)`, zero off the support.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        Ok(self.log_eval(xi)?.exp())
    }

    /// `f̂` at many points, in parallel, in input order.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.par_iter().map(|x| self.eval(x)).collect()
    }

    /// `ln f̂⁻⁽ⁱ⁾(xᵢ)` for every `i`.
    pub fn leave_one_out_log(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InvalidParameter("leave-one-out needs n ≥ 2".into()));
        }
        let d = self.samples.dim();
        let ln_n1 = ((n - 1) as f64).ln();
        Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let w = &self.white[i * d..(i + 1) * d];
                let ln_b = self.ln_proj[i];
                let terms = (0..n).filter(|&j| j != i).map(|j| self.log_kernel(w, ln_b, j));
                log_sum_exp(terms) - ln_n1
            })
            .collect())
    }
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `f̂(ξ)` for a single evaluation.
pub fn kde_eval(samples: &SampleBatch, h: &SpdMatrix, xi: &[f64]) -> Result<f64> {
    MigKde::new(samples, h)?.eval(xi)
}

/// Leave-one-out likelihood cross-validation score `n⁻¹ Σ ln f̂⁻⁽ⁱ⁾(xᵢ)`;
/// `−∞` when some held-out density vanishes.
pub fn lcv_score(samples: &SampleBatch, h: &SpdMatrix) -> Result<f64> {
    let loo = MigKde::new(samples, h)?.leave_one_out_log()?;
    Ok(loo.iter().sum::<f64>() / loo.len() as f64)
}

/// Frozen importance-sampling draws for `∫ f̂²`.
#[derive(Debug, Clone)]
pub struct SquareIntegral {
    points: Vec<Vec<f64>>,
    log_g: Vec<f64>,
}

impl SquareIntegral {
    pub fn new(plugin: &PluginModel, stream: &RngStream) -> Result<Self> {
        let draws = plugin.draws(stream)?;
        let points: Vec<Vec<f64>> = draws.rows().map(|r| r.to_vec()).collect();
        let log_g = points.iter().map(|x| plugin.log_density(x)).collect::<Result<_>>()?;
        Ok(Self { points, log_g })
    }

    /// Estimate of `∫ f̂²` with its standard error.
    pub fn estimate(&self, kde: &MigKde) -> Result<(f64, f64)> {
        let ratios = self
            .points
            .par_iter()
            .zip(self.log_g.par_iter())
            .map(|(x, lg)| Ok((2.0 * kde.log_eval(x)? - lg).exp()))
            .collect::<Result<Vec<f64>>>()?;
        let m = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / m;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0);
        Ok((mean, (var / m).sqrt()))
    }
}

/// Least-squares cross-validation score
/// `n⁻¹ Σ f̂⁻⁽ⁱ⁾(xᵢ) − ½ ∫ f̂²`, to be maximized.
pub fn lscv_score_with(samples: &SampleBatch, h: &SpdMatrix, integral: &SquareIntegral) -> Result<f64> {
    let kde = MigKde::new(samples, h)?;
    let loo = kde.leave_one_out_log()?;
    let fit = loo.iter().map(|v| v.exp()).sum::<f64>() / loo.len() as f64;
    Ok(fit - 0.5 * integral.estimate(&kde)?.0)
}

/// [`lscv_score_with`] using `mc_draws` draws from the MIG maximum
/// likelihood fit.
pub fn lscv_score(samples: &SampleBatch, h: &SpdMatrix, mc_draws: usize, stream: &RngStream) -> Result<f64> {
    let plugin = PluginModel::fit(PluginKind::MigMle, samples, mc_draws)?;
    lscv_score_with(samples, h, &SquareIntegral::new(&plugin, stream)?)
}

/// Diagonal rule `H_ii = σ̂ᵢ [4 / ((d + 2) n)]^{1/(d+4)}`.
pub fn normal_reference(samples: &SampleBatch) -> Result<Bandwidth> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Estimation("normal reference rule needs n ≥ 2".into()));
    }
    let d = samples.dim();
    let cov = samples.covariance();
    let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let sd = cov[(i, i)].sqrt();
        if !(sd > 0.0) {
            return Err(Error::Estimation(format!("margin {i} has zero variance")));
        }
        h[(i, i)] = sd * factor;
    }
    Bandwidth::new(SpdMatrix::new(h)?, SelectionMethod::NormalRef, 0.0)
}
