//! Exact MIG sampling.
//!
//! With `Q = (β, Q₂ᵀ)ᵀ` where the rows of `Q₂` span the orthogonal
//! complement of `β`, the pair `(R, Z) = (βᵀX, Q₂X)` factors as
//!
//! ```text
//! R ~ IG(βᵀξ, (βᵀξ)² / βᵀΩβ),      Z | R = r ~ N(μ(r), rΣ),
//! μ(r) = Q₂ξ + Q₂Ωβ (r − βᵀξ) / βᵀΩβ,   Σ = (Q₂Ω⁻¹Q₂ᵀ)⁻¹,
//! ```
//!
//! so a draw is one inverse Gaussian variate, `d − 1` normals and a
//! multiplication by the cached `Q⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::params::{IgParams, MigParams, SampleBatch};
use crate::rng::RngStream;
use crate::special::{ig_cdf, ig_interval_mass, ig_sf};

/// Rows handed to one worker; each block owns a substream.
pub const BLOCK: usize = 4096;

/// `Q`, its inverse, and the complement block `Q₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    q2: DMatrix<f64>,
    q: DMatrix<f64>,
    q_inv: DMatrix<f64>,
}

impl Rotation {
    /// Householder construction: the reflector sending `β/‖β‖` to `±e₁` is
    /// orthogonal and symmetric, so its rows `2..d` are an orthonormal basis
    /// of `β^⊥`.
    pub fn new(beta: &[f64]) -> Result<Self> {
        let d = beta.len();
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if d == 0 || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("direction vector must be nonzero".into()));
        }
        let u = DVector::from_iterator(d, beta.iter().map(|b| b / norm));
        let mut v = u.clone();
        // Reflect towards whichever of ±e₁ is farther, avoiding cancellation.
        if u[0] > 0.0 {
            v[0] += 1.0;
        } else {
            v[0] -= 1.0;
        }
        let vv = v.norm_squared();
        let reflector = DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vv);
        let q2 = reflector.rows(1, d - 1).into_owned();
        let mut q = DMatrix::zeros(d, d);
        for j in 0..d {
            q[(0, j)] = beta[j];
        }
        q.rows_mut(1, d - 1).copy_from(&q2);
        let q_inv = q
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Singular("rotation".into()))?;
        Ok(Self { q2, q, q_inv })
    }

    pub fn q2(&self) -> &DMatrix<f64> {
        &self.q2
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }

    /// `(βᵀx, Q₂x)`.
    pub fn forward(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let y = &self.q * DVector::from_column_slice(x);
        (y[0], y.rows(1, y.len() - 1).into_owned())
    }

    /// `Q⁻¹(r, z)`.
    pub fn inverse(&self, r: f64, z: &[f64]) -> DVector<f64> {
        let d = self.q.nrows();
        let mut x = self.q_inv.column(0) * r;
        for j in 1..d {
            x += self.q_inv.column(j) * z[j - 1];
        }
        x
    }
}

/// The law of `Z = Q₂X` given `βᵀX = r`: `N(intercept + r·slope, rΣ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub mu_slope: DVector<f64>,
    pub mu_intercept: DVector<f64>,
    pub sigma: Option<SpdMatrix>,
}

impl ConditionalGaussian {
    pub fn new(p: &MigParams, rot: &Rotation) -> Result<Self> {
        let beta = p.halfspace().beta_vec();
        let omega = p.omega().matrix();
        let bob = p.beta_omega_beta();
        let q2 = rot.q2();
        let mu_slope = q2 * (omega * &beta) / bob;
        let mu_intercept = q2 * p.xi() - &mu_slope * p.beta_xi();
        let sigma = if p.dim() > 1 {
            let prec = q2 * p.omega().inverse() * q2.transpose();
            let prec = SpdMatrix::new((&prec + prec.transpose()) * 0.5)?;
            let cov = prec.inverse().clone();
            Some(SpdMatrix::new((&cov + cov.transpose()) * 0.5)?)
        } else {
            None
        };
        Ok(Self {
            mu_slope,
            mu_intercept,
            sigma,
        })
    }

    pub fn mean(&self, r: f64) -> DVector<f64> {
        &self.mu_intercept + &self.mu_slope * r
    }
}

/// One IG(μ, λ) variate by the transformation-with-multiple-roots method.
pub fn ig_sample<R: Rng + ?Sized>(p: &IgParams, rng: &mut R) -> f64 {
    let (mu, lam) = (p.mu, p.lambda);
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let my = mu * y;
    // Larger root first; the smaller one is μ²/x₁, which avoids cancellation.
    let big = mu + mu * my / (2.0 * lam) + mu / (2.0 * lam) * (4.0 * lam * my + my * my).sqrt();
    let small = mu * mu / big;
    let u: f64 = rng.random();
    if u * (mu + small) <= mu {
        small
    } else {
        big
    }
}

/// IG(μ, λ) restricted to `[lo, hi]`.
///
/// Draws by rejection from the untruncated law when a 100-draw pilot accepts
/// at least 1% of the time, and by bisection on the closed-form distribution
/// function otherwise.
#[derive(Debug, Clone)]
pub struct TruncatedIg {
    law: IgParams,
    lo: f64,
    hi: f64,
    inversion: bool,
}

impl TruncatedIg {
    pub fn new<R: Rng + ?Sized>(law: IgParams, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let lo = lo.max(0.0);
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
        }
        let mass = ig_interval_mass(law.mu, law.lambda, lo, hi);
        if !(mass >= 1e-300) {
            return Err(Error::Numerical(format!(
                "IG mass of [{lo}, {hi}] is {mass:e}"
            )));
        }
        let inside = (0..100)
            .filter(|_| {
                let x = ig_sample(&law, rng);
                lo <= x && x <= hi
            })
            .count();
        Ok(Self {
            law,
            lo,
            hi,
            inversion: inside < 1,
        })
    }

    pub fn uses_inversion(&self) -> bool {
        self.inversion
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.inversion {
            return self.invert(rng.random());
        }
        loop {
            let x = ig_sample(&self.law, rng);
            if self.lo <= x && x <= self.hi {
                return x;
            }
        }
    }

    fn invert(&self, u: f64) -> f64 {
        let (mu, lam) = (self.law.mu, self.law.lambda);
        // Work with the survival function above the mean so that upper tails
        // keep their relative precision.
        let upper = self.lo >= mu;
        let (g, target) = if upper {
            let s_lo = ig_sf(mu, lam, self.lo);
            let s_hi = ig_sf(mu, lam, self.hi);
            let t = s_lo - u * (s_lo - s_hi);
            (Box::new(move |x: f64| -ig_sf(mu, lam, x)) as Box<dyn Fn(f64) -> f64>, -t)
        } else {
            let f_lo = ig_cdf(mu, lam, self.lo);
            let f_hi = ig_cdf(mu, lam, self.hi);
            let t = f_lo + u * (f_hi - f_lo);
            (Box::new(move |x: f64| ig_cdf(mu, lam, x)) as Box<dyn Fn(f64) -> f64>, t)
        };
        let mut a = self.lo;
        let mut b = if self.hi.is_finite() {
            self.hi
        } else {
            let mut b = self.lo.max(mu) * 2.0 + 1.0;
            while g(b) < target && b < 1e300 {
                b *= 2.0;
            }
            b
        };
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if g(m) < target {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// One draw from IG(μ, λ) conditioned on `[lo, hi]`.
pub fn truncated_ig_sample<R: Rng + ?Sized>(
    law: IgParams,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    Ok(TruncatedIg::new(law, lo, hi, rng)?.sample(rng))
}

/// A reusable MIG sampler; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct MigSampler {
    params: MigParams,
    rotation: Rotation,
    conditional: ConditionalGaussian,
    radial: IgParams,
}

impl MigSampler {
    pub fn new(p: &MigParams) -> Self {
        Self::try_new(p).expect("valid parameters give a valid sampler")
    }

    pub fn try_new(p: &MigParams) -> Result<Self> {
        let rotation = Rotation::new(p.beta())?;
        let conditional = ConditionalGaussian::new(p, &rotation)?;
        Ok(Self {
            params: p.clone(),
            radial: p.radial_law(),
            rotation,
            conditional,
        })
    }

    pub fn params(&self) -> &MigParams {
        &self.params
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn conditional(&self) -> &ConditionalGaussian {
        &self.conditional
    }

    /// Writes one draw into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let d = self.params.dim();
        let r = ig_sample(&self.radial, rng);
        let mut z = self.conditional.mean(r);
        if let Some(sigma) = &self.conditional.sigma {
            let eps = DVector::from_fn(d - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            z += sigma.chol() * eps * r.sqrt();
        }
        let x = self.rotation.inverse(r, z.as_slice());
        let bx = self.params.halfspace().project(x.as_slice());
        if !(bx > 0.0) {
            return Err(Error::Numerical(format!(
                "generated point left the support (βᵀx = {bx:e}, r = {r:e})"
            )));
        }
        out.copy_from_slice(x.as_slice());
        Ok(())
    }

    /// `n` draws. Block `b` of [`BLOCK`] rows uses `stream.substream(b)`, so
    /// the output does not depend on the number of threads.
    pub fn sample(&self, n: usize, stream: &RngStream) -> Result<SampleBatch> {
        let d = self.params.dim();
        let mut data = vec![0.0; n * d];
        data.par_chunks_mut(BLOCK * d)
            .enumerate()
            .try_for_each(|(b, chunk)| {
                let mut rng = stream.substream(b as u64).rng();
                chunk
                    .chunks_exact_mut(d)
                    .try_for_each(|row| self.draw_into(&mut rng, row))
            })?;
        SampleBatch::new(data, self.params.halfspace().clone())
    }

    /// How many of the draws [`sample`](Self::sample) would return satisfy
    /// `keep`, without storing them.
    pub fn count<F>(&self, n: usize, stream: &RngStream, keep: F) -> Result<usize>
    where
        F: Fn(&[f64]) -> bool + Sync,
    {
        let d = self.params.dim();
        let blocks = n.div_ceil(BLOCK);
        let counts = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream.substream(b as u64).rng();
                let len = BLOCK.min(n - b * BLOCK);
                let mut row = vec![0.0; d];
                let mut hits = 0usize;
                for _ in 0..len {
                    self.draw_into(&mut rng, &mut row)?;
                    hits += keep(&row) as usize;
                }
                Ok(hits)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(counts.into_iter().sum())
    }
}

/// `n` draws from MIG(β, ξ, Ω).
pub fn mig_sample(p: &MigParams, n: usize, stream: &RngStream) -> Result<SampleBatch> {
    MigSampler::try_new(p)?.sample(n, stream)
}
