//! Parametric plug-in densities and the AMISE criterion built on them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::density::mvn_log_density;
use crate::error::{Error, Result};
use crate::estimate::{method_of_moments, mle};
use crate::linalg::SpdMatrix;
use crate::params::{HalfSpace, MigParams, SampleBatch};
use crate::rng::RngStream;
use crate::sampling::{MigSampler, BLOCK};
use crate::special::std_normal_ln_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PluginKind {
    MigMle,
    MigMoments,
    TruncGaussian,
}

/// A Gaussian law restricted to the half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncGaussian {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub halfspace: HalfSpace,
    ln_mass: f64,
}

impl TruncGaussian {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix, halfspace: HalfSpace) -> Result<Self> {
        let beta = halfspace.beta_vec();
        let m = beta.dot(&mean);
        let s = (beta.transpose() * cov.matrix() * &beta)[0].sqrt();
        let ln_mass = std_normal_ln_cdf(m / s);
        if !ln_mass.is_finite() {
            return Err(Error::Numerical("Gaussian puts no mass on the half-space".into()));
        }
        Ok(Self {
            mean,
            cov,
            halfspace,
            ln_mass,
        })
    }

    /// `ln Pr(βᵀY > 0)` for the untruncated law.
    pub fn ln_mass(&self) -> f64 {
        self.ln_mass
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if !self.halfspace.contains(x) {
            return f64::NEG_INFINITY;
        }
        mvn_log_density(&self.mean, &self.cov, x) - self.ln_mass
    }

    /// `n` draws by rejection, block `b` on `stream.substream(b)`.
    pub fn sample(&self, n: usize, stream: &RngStream) -> Result<SampleBatch> {
        let d = self.mean.len();
        let l = self.cov.chol();
        let mut data = vec![0.0; n * d];
        data.par_chunks_mut(BLOCK * d).enumerate().for_each(|(b, chunk)| {
            let mut rng = stream.substream(b as u64).rng();
            for row in chunk.chunks_exact_mut(d) {
                loop {
                    let e = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    let x = &self.mean + l * e;
                    if self.halfspace.contains(x.as_slice()) {
                        row.copy_from_slice(x.as_slice());
                        break;
                    }
                }
            }
        });
        SampleBatch::new(data, self.halfspace.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PluginDensity {
    Mig(MigParams),
    TruncGaussian(TruncGaussian),
}

/// A fitted parametric stand-in for the unknown density.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginModel {
    pub kind: PluginKind,
    pub density: PluginDensity,
    pub mc_draws: usize,
}

impl PluginModel {
    pub fn fit(kind: PluginKind, samples: &SampleBatch, mc_draws: usize) -> Result<Self> {
        if mc_draws < 2 {
            return Err(Error::InvalidParameter("plug-in needs at least 2 draws".into()));
        }
        let density = match kind {
            PluginKind::MigMle => PluginDensity::Mig(mle(samples)?),
            PluginKind::MigMoments => PluginDensity::Mig(method_of_moments(samples)?),
            PluginKind::TruncGaussian => {
                let cov = SpdMatrix::new(samples.covariance())
                    .map_err(|e| Error::Estimation(format!("sample covariance ({e})")))?;
                PluginDensity::TruncGaussian(TruncGaussian::new(
                    samples.mean(),
                    cov,
                    samples.halfspace().clone(),
                )?)
            }
        };
        Ok(Self {
            kind,
            density,
            mc_draws,
        })
    }

    pub fn from_mig(params: MigParams, mc_draws: usize) -> Self {
        Self {
            kind: PluginKind::MigMle,
            density: PluginDensity::Mig(params),
            mc_draws,
        }
    }

    pub fn halfspace(&self) -> &HalfSpace {
        match &self.density {
            PluginDensity::Mig(p) => p.halfspace(),
            PluginDensity::TruncGaussian(g) => &g.halfspace,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        match &self.density {
            PluginDensity::Mig(p) => p.log_density(x),
            PluginDensity::TruncGaussian(g) => Ok(g.log_density(x)),
        }
    }

    /// `(ln g, ∇ln g ∇ln gᵀ + ∇²ln g)`, so that `D²g = g·M`.
    pub fn log_density_and_curvature(&self, x: &[f64]) -> Result<(f64, DMatrix<f64>)> {
        match &self.density {
            PluginDensity::Mig(p) => {
                let g = p.grad_log_density(x)?;
                let h = p.hessian_log_density(x)?;
                Ok((p.log_density(x)?, &g * g.transpose() + h))
            }
            PluginDensity::TruncGaussian(t) => {
                let r = DVector::from_column_slice(x) - &t.mean;
                let g = -(t.cov.inverse() * r);
                Ok((t.log_density(x), &g * g.transpose() - t.cov.inverse()))
            }
        }
    }

    pub fn draws(&self, stream: &RngStream) -> Result<SampleBatch> {
        match &self.density {
            PluginDensity::Mig(p) => MigSampler::try_new(p)?.sample(self.mc_draws, stream),
            PluginDensity::TruncGaussian(g) => g.sample(self.mc_draws, stream),
        }
    }
}

/// `AMISE(H) = n⁻¹|H|^{-1/2} A + B(H)` on frozen plug-in draws.
///
/// `A = E_g[(4πβᵀΞ)^{-d/2}]` is a number and `B(H) = E_g[(βᵀΞ)² tr²(H D²g) / 4g]`
/// is a quadratic form in the free entries of `H`, so both are computed
/// once and every later evaluation is `O(d⁴)`.
#[derive(Debug, Clone)]
pub struct AmiseObjective {
    n: usize,
    d: usize,
    variance_integral: f64,
    quad: DMatrix<f64>,
    excluded: usize,
    used: usize,
}

fn pairs(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..d {
        for b in a..d {
            out.push((a, b));
        }
    }
    out
}

impl AmiseObjective {
    pub fn new(plugin: &PluginModel, n: usize, stream: &RngStream) -> Result<Self> {
        let draws = plugin.draws(stream)?;
        Self::from_draws(plugin, n, &draws)
    }

    pub fn from_draws(plugin: &PluginModel, n: usize, draws: &SampleBatch) -> Result<Self> {
        let d = draws.dim();
        let hs = plugin.halfspace();
        let idx = pairs(d);
        let p = idx.len();
        let rows: Vec<Option<(f64, DVector<f64>)>> = draws
            .rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|x| {
                let (lg, m) = plugin.log_density_and_curvature(x)?;
                if !lg.is_finite() {
                    return Ok(None);
                }
                let b = hs.project(x);
                let a = (4.0 * PI * b).powf(-0.5 * d as f64);
                // (βᵀΞ)² tr²(H D²g)/(4g) = [βᵀΞ √g tr(H M) / 2]², D²g = g M.
                let s = 0.5 * b * (0.5 * lg).exp();
                let v = DVector::from_iterator(
                    p,
                    idx.iter()
                        .map(|&(i, j)| if i == j { s * m[(i, i)] } else { 2.0 * s * m[(i, j)] }),
                );
                Ok(Some((a, v)))
            })
            .collect::<Result<_>>()?;
        let mut sum_a = 0.0;
        let mut quad = DMatrix::zeros(p, p);
        let mut used = 0;
        for (a, v) in rows.iter().flatten() {
            sum_a += a;
            quad += v * v.transpose();
            used += 1;
        }
        if used == 0 {
            return Err(Error::Numerical("plug-in density vanished at every draw".into()));
        }
        Ok(Self {
            n,
            d,
            variance_integral: sum_a / used as f64,
            quad: quad / used as f64,
            excluded: rows.len() - used,
            used,
        })
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Draws dropped because the plug-in density underflowed there.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn draws_used(&self) -> usize {
        self.used
    }

    /// `A = ∫ g / (4πβᵀξ)^{d/2}`.
    pub fn variance_integral(&self) -> f64 {
        self.variance_integral
    }

    fn vech(&self, h: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.quad.nrows(), pairs(self.d).into_iter().map(|(i, j)| h[(i, j)]))
    }

    /// `B(H)`.
    pub fn bias_term(&self, h: &DMatrix<f64>) -> f64 {
        let v = self.vech(h);
        (v.transpose() * &self.quad * &v)[0]
    }

    /// `n⁻¹|H|^{-1/2} A`.
    pub fn variance_term(&self, h: &DMatrix<f64>) -> f64 {
        let det = h.determinant();
        if !(det > 0.0) {
            return f64::INFINITY;
        }
        self.variance_integral / (self.n as f64 * det.sqrt())
    }

    pub fn value(&self, h: &DMatrix<f64>) -> f64 {
        self.variance_term(h) + self.bias_term(h)
    }

    /// `C = ∫ (βᵀξ)² (Δg)²`, which equals `4 B(I)`.
    pub fn laplacian_integral(&self) -> f64 {
        4.0 * self.bias_term(&DMatrix::identity(self.d, self.d))
    }

    /// Minimizer of `h ↦ AMISE(h² I)`: `h^{d+4} = d A / (n C)`.
    pub fn isotropic_h(&self) -> Result<f64> {
        let c = self.laplacian_integral();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Numerical(format!("Laplacian integral estimate is {c}")));
        }
        let d = self.d as f64;
        Ok((d * self.variance_integral / (self.n as f64 * c)).powf(1.0 / (d + 4.0)))
    }
}

/// Closed-form isotropic AMISE bandwidth `h` for a sample of size `n`.
pub fn amise_isotropic_h(plugin: &PluginModel, n: usize, stream: &RngStream) -> Result<f64> {
    AmiseObjective::new(plugin, n, stream)?.isotropic_h()
}
