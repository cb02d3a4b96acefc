//! Simulation targets, error metrics and the replicated smoothing study.
//!
//! Four targets live on `H_d(1_d)`:
//!
//! | label | kind               | law |
//! |-------|--------------------|-----|
//! | F1    | `trunc_t`          | t₅ with location `1.1·1`, scale `D R(0.5) D` |
//! | F2    | `mixture`          | `0.6·`t₅(`1`, `R(0.5)`) `+ 0.4·`N(`11·1 − ι`, `D R(−0.2) D`) |
//! | F3    | `trunc_skew_gauss` | skew normal, `ξ = 4·1`, `Ω = D R(0.9) D`, `α = −5·1` |
//! | F4    | `mig`              | MIG(`1`, `2·1`, `R(0.5)`) |
//!
//! Here `R(ρ)` is the equicorrelation matrix, `ι = (1, …, d)` and
//! `D = diag(√ι)`. Each truncated law (and each mixture component) is
//! renormalized on the half-space separately.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::density::mvn_log_density;
use crate::error::{check_dim, Error, Result};
use crate::kde::{select_bandwidth, MigKde, PluginKind, SelectionMethod, TruncGaussian};
use crate::linalg::SpdMatrix;
use crate::params::{HalfSpace, MigParams, SampleBatch};
use crate::rng::RngStream;
use crate::sampling::{MigSampler, BLOCK};
use crate::special::std_normal_ln_cdf;

/// Draws from the untruncated law used to estimate each truncation mass.
pub const NORMALIZATION_DRAWS: usize = 1_000_000;
/// Smallest acceptable truncation mass.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
const NORMALIZATION_SEED: u64 = 0x6d69_675f_6e6f_726d;
const PROPOSAL_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    TruncT,
    Mixture,
    TruncSkewGauss,
    Mig,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [Self::TruncT, Self::Mixture, Self::TruncSkewGauss, Self::Mig];

    /// `F1` … `F4`.
    pub fn label(&self) -> &'static str {
        match self {
            Self::TruncT => "F1",
            Self::Mixture => "F2",
            Self::TruncSkewGauss => "F3",
            Self::Mig => "F4",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TruncT => "trunc_t",
            Self::Mixture => "mixture",
            Self::TruncSkewGauss => "trunc_skew_gauss",
            Self::Mig => "mig",
        }
    }

    /// Accepts the label or the kind name, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(&s) || k.as_str() == s)
    }

    fn index(&self) -> u64 {
        match self {
            Self::TruncT => 1,
            Self::Mixture => 2,
            Self::TruncSkewGauss => 3,
            Self::Mig => 4,
        }
    }
}

/// `(1 − ρ) I + ρ 1 1ᵀ`.
pub fn equicorrelation(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
}

/// `diag(√ι) R(ρ) diag(√ι)` with `ι = (1, …, d)`.
fn graded_scale(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| {
        let r = if i == j { 1.0 } else { rho };
        r * (((i + 1) * (j + 1)) as f64).sqrt()
    })
}

fn standard_normal_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// Gaussian (`dof = None`) or Student-t law.
#[derive(Debug, Clone)]
struct Elliptical {
    loc: DVector<f64>,
    scale: SpdMatrix,
    dof: Option<f64>,
    ln_const: f64,
}

impl Elliptical {
    fn new(loc: DVector<f64>, scale: SpdMatrix, dof: Option<f64>) -> Self {
        let d = loc.len() as f64;
        let ln_const = match dof {
            None => -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * scale.ln_det(),
            Some(nu) => {
                libm::lgamma(0.5 * (nu + d)) - libm::lgamma(0.5 * nu)
                    - 0.5 * d * (nu * std::f64::consts::PI).ln()
                    - 0.5 * scale.ln_det()
            }
        };
        Self {
            loc,
            scale,
            dof,
            ln_const,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let q = self.scale.inv_quad_form(&(DVector::from_column_slice(x) - &self.loc));
        match self.dof {
            None => self.ln_const - 0.5 * q,
            Some(nu) => self.ln_const - 0.5 * (nu + self.loc.len() as f64) * (q / nu).ln_1p(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let z = standard_normal_vec(rng, self.loc.len());
        let mut x = self.scale.chol() * z;
        if let Some(nu) = self.dof {
            let w: f64 = ChiSquared::new(nu).expect("positive dof").sample(rng);
            x *= (nu / w).sqrt();
        }
        for (o, (a, b)) in out.iter_mut().zip(self.loc.iter().zip(x.iter())) {
            *o = a + b;
        }
    }
}

/// Skew normal `2 φ_d(x; ξ, Ω) Φ(αᵀ w⁻¹ (x − ξ))`, `w = diag(Ω)^{1/2}`.
#[derive(Debug, Clone)]
struct SkewNormal {
    xi: DVector<f64>,
    omega: SpdMatrix,
    w: DVector<f64>,
    alpha: DVector<f64>,
    delta: DVector<f64>,
    resid_chol: DMatrix<f64>,
}

impl SkewNormal {
    fn new(xi: DVector<f64>, omega: SpdMatrix, alpha: DVector<f64>) -> Result<Self> {
        let d = xi.len();
        let w = DVector::from_fn(d, |i, _| omega.matrix()[(i, i)].sqrt());
        let corr = DMatrix::from_fn(d, d, |i, j| omega.matrix()[(i, j)] / (w[i] * w[j]));
        let ca = &corr * &alpha;
        let delta = &ca / (1.0 + alpha.dot(&ca)).sqrt();
        let resid = SpdMatrix::new(&corr - &delta * delta.transpose())?;
        Ok(Self {
            xi,
            omega,
            w,
            alpha,
            delta,
            resid_chol: resid.chol().clone(),
        })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let z: f64 = (0..x.len())
            .map(|i| self.alpha[i] * (x[i] - self.xi[i]) / self.w[i])
            .sum();
        std::f64::consts::LN_2 + mvn_log_density(&self.xi, &self.omega, x) + std_normal_ln_cdf(z)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let d = self.xi.len();
        let u0: f64 = StandardNormal.sample(rng);
        let v = &self.resid_chol * standard_normal_vec(rng, d);
        for i in 0..d {
            out[i] = self.xi[i] + self.w[i] * (self.delta[i] * u0.abs() + v[i]);
        }
    }
}

#[derive(Debug, Clone)]
enum Law {
    Elliptical(Elliptical),
    Skew(SkewNormal),
}

impl Law {
    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Law::Elliptical(e) => e.log_density(x),
            Law::Skew(s) => s.log_density(x),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Law::Elliptical(e) => e.draw(rng, out),
            Law::Skew(s) => s.draw(rng, out),
        }
    }
}

/// A law restricted to the half-space and renormalized there.
#[derive(Debug, Clone)]
struct Truncated {
    law: Law,
    ln_mass: f64,
}

impl Truncated {
    /// Mass estimated from [`NORMALIZATION_DRAWS`] untruncated draws.
    fn estimate(law: Law, h: &HalfSpace, stream: &RngStream) -> Result<Self> {
        let d = h.dim();
        let blocks = NORMALIZATION_DRAWS.div_ceil(BLOCK);
        let hits: usize = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream.substream(b as u64).rng();
                let m = BLOCK.min(NORMALIZATION_DRAWS - b * BLOCK);
                let mut x = vec![0.0; d];
                (0..m)
                    .filter(|_| {
                        law.draw(&mut rng, &mut x);
                        h.contains(&x)
                    })
                    .count()
            })
            .sum();
        let mass = hits as f64 / NORMALIZATION_DRAWS as f64;
        if mass < MIN_ACCEPTANCE {
            return Err(Error::Numerical(format!(
                "truncation keeps only a fraction {mass} of the untruncated law"
            )));
        }
        Ok(Self {
            law,
            ln_mass: mass.ln(),
        })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.law.log_density(x) - self.ln_mass
    }

    fn draw(&self, h: &HalfSpace, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        loop {
            self.law.draw(rng, out);
            if h.contains(out) {
                return;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Body {
    Single(Truncated),
    Mixture(Vec<(f64, Truncated)>),
    Mig(MigSampler),
}

/// A simulation target: normalized log density and exact sampler on the
/// half-space, plus a heavier truncated Gaussian used as a defensive
/// importance-sampling component.
#[derive(Debug, Clone)]
pub struct TargetDistribution {
    kind: TargetKind,
    halfspace: HalfSpace,
    body: Body,
    proposal: TruncGaussian,
}

impl TargetDistribution {
    /// Target `kind` in dimension `d ≥ 2` on `H_d(1_d)`.
    pub fn build(kind: TargetKind, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("targets need d ≥ 2, got {d}")));
        }
        let h = HalfSpace::new(vec![1.0; d])?;
        let ones = DVector::from_element(d, 1.0);
        let iota = DVector::from_fn(d, |i, _| (i + 1) as f64);
        let stream = |c: u64| RngStream::new(NORMALIZATION_SEED, 64 * kind.index() + 8 * c + d as u64);
        let body = match kind {
            TargetKind::TruncT => {
                let law = Elliptical::new(&ones * 1.1, SpdMatrix::new(graded_scale(d, 0.5))?, Some(5.0));
                Body::Single(Truncated::estimate(Law::Elliptical(law), &h, &stream(0))?)
            }
            TargetKind::Mixture => {
                let t = Elliptical::new(ones.clone(), SpdMatrix::new(equicorrelation(d, 0.5))?, Some(5.0));
                let loc = &ones * 11.0 - &iota;
                let scale = SpdMatrix::new(graded_scale(d, -0.2))?;
                let beta = h.beta_vec();
                let s = (beta.transpose() * scale.matrix() * &beta)[0].sqrt();
                let gauss = Truncated {
                    ln_mass: std_normal_ln_cdf(beta.dot(&loc) / s),
                    law: Law::Elliptical(Elliptical::new(loc, scale, None)),
                };
                Body::Mixture(vec![
                    (0.6, Truncated::estimate(Law::Elliptical(t), &h, &stream(0))?),
                    (0.4, gauss),
                ])
            }
            TargetKind::TruncSkewGauss => {
                let law = SkewNormal::new(
                    &ones * 4.0,
                    SpdMatrix::new(graded_scale(d, 0.9))?,
                    &ones * -5.0,
                )?;
                Body::Single(Truncated::estimate(Law::Skew(law), &h, &stream(0))?)
            }
            TargetKind::Mig => {
                let p = MigParams::new(h.clone(), vec![2.0; d], SpdMatrix::new(equicorrelation(d, 0.5))?)?;
                Body::Mig(MigSampler::try_new(&p)?)
            }
        };
        Self::assemble(kind, h, body, &stream(7))
    }

    /// A MIG target with arbitrary parameters (any dimension).
    pub fn from_mig(params: &MigParams) -> Result<Self> {
        let stream = RngStream::new(NORMALIZATION_SEED, 64 * TargetKind::Mig.index() + params.dim() as u64);
        Self::assemble(
            TargetKind::Mig,
            params.halfspace().clone(),
            Body::Mig(MigSampler::try_new(params)?),
            &stream,
        )
    }

    fn assemble(kind: TargetKind, halfspace: HalfSpace, body: Body, stream: &RngStream) -> Result<Self> {
        let provisional = Self {
            kind,
            proposal: TruncGaussian::new(
                DVector::zeros(halfspace.dim()),
                SpdMatrix::identity(halfspace.dim()),
                halfspace.clone(),
            )?,
            halfspace,
            body,
        };
        let draws = provisional.sample(PROPOSAL_DRAWS, stream)?;
        let cov = SpdMatrix::new(draws.covariance() * 2.0)?;
        let proposal = TruncGaussian::new(draws.mean(), cov, provisional.halfspace.clone())?;
        Ok(Self {
            proposal,
            ..provisional
        })
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.halfspace.dim()
    }

    pub fn halfspace(&self) -> &HalfSpace {
        &self.halfspace
    }

    /// `ln` of the normalizing factor of each truncated piece (empty for F4).
    pub fn log_norm_consts(&self) -> Vec<f64> {
        match &self.body {
            Body::Single(t) => vec![-t.ln_mass],
            Body::Mixture(parts) => parts.iter().map(|(_, t)| -t.ln_mass).collect(),
            Body::Mig(_) => Vec::new(),
        }
    }

    /// The MIG parameters of an F4-type target.
    pub fn mig_params(&self) -> Option<&MigParams> {
        match &self.body {
            Body::Mig(s) => Some(s.params()),
            _ => None,
        }
    }

    /// The defensive component used by [`rmise_estimate`].
    pub fn proposal(&self) -> &TruncGaussian {
        &self.proposal
    }

    /// Normalized log density, `-∞` off the half-space.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if !self.halfspace.contains(x) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(match &self.body {
            Body::Single(t) => t.log_density(x),
            Body::Mixture(parts) => {
                let terms: Vec<f64> = parts.iter().map(|(w, t)| w.ln() + t.log_density(x)).collect();
                let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            }
            Body::Mig(s) => s.params().log_density(x)?,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        match &self.body {
            Body::Single(t) => t.draw(&self.halfspace, rng, out),
            Body::Mixture(parts) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let last = parts.len() - 1;
                for (i, (w, t)) in parts.iter().enumerate() {
                    acc += w;
                    if u < acc || i == last {
                        t.draw(&self.halfspace, rng, out);
                        break;
                    }
                }
            }
            Body::Mig(s) => s.draw_into(rng, out)?,
        }
        Ok(())
    }

    /// `n` draws; block `b` of [`BLOCK`] rows uses `stream.substream(b)`.
    pub fn sample(&self, n: usize, stream: &RngStream) -> Result<SampleBatch> {
        let d = self.dim();
        let mut data = vec![0.0; n * d];
        data.par_chunks_mut(BLOCK * d)
            .enumerate()
            .try_for_each(|(b, chunk)| {
                let mut rng = stream.substream(b as u64).rng();
                chunk.chunks_exact_mut(d).try_for_each(|row| self.draw(&mut rng, row))
            })?;
        SampleBatch::new(data, self.halfspace.clone())
    }
}

/// A Monte Carlo estimate of an error metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
    /// Draws at which the estimate's log density was `-∞`; a positive count
    /// makes a divergence estimate infinite.
    pub infinite: usize,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, s)
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// `√∫(f̂ − f)²` on the half-space.
///
/// Half the draws come from the target `f` and half from its defensive
/// truncated Gaussian `t`, and every draw is weighted by
/// `(f̂ − f)² / (½f + ½t)`. Sampling from `f` alone would give an estimator
/// of infinite variance whenever `f` vanishes faster than `f̂` at the
/// boundary. The standard error is carried through the square root by the
/// delta method.
pub fn rmise_estimate<F>(
    target: &TargetDistribution,
    log_fhat: F,
    mc_draws: usize,
    stream: &RngStream,
) -> Result<MetricEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if mc_draws < 4 {
        return Err(Error::InvalidParameter("RMISE needs at least 4 draws".into()));
    }
    let half = mc_draws / 2;
    let from_target = target.sample(half, &stream.substream(0))?;
    let from_proposal = target.proposal.sample(mc_draws - half, &stream.substream(1))?;
    let weigh = |batch: &SampleBatch| -> Result<Vec<f64>> {
        let rows: Vec<&[f64]> = batch.rows().collect();
        rows.par_iter()
            .map(|x| {
                let lf = target.log_density(x)?;
                let lh = log_fhat(x)?;
                let lg = log_add(lf, target.proposal.log_density(x)) - std::f64::consts::LN_2;
                let diff = lh.exp() - lf.exp();
                Ok(if diff == 0.0 {
                    0.0
                } else {
                    (2.0 * diff.abs().ln() - lg).exp()
                })
            })
            .collect()
    };
    let a = weigh(&from_target)?;
    let b = weigh(&from_proposal)?;
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let ise = (0.5 * (ma + mb)).max(0.0);
    let ise_se = 0.5 * (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    let value = ise.sqrt();
    let std_error = if value > 0.0 { ise_se / (2.0 * value) } else { ise_se.sqrt() };
    if !value.is_finite() {
        return Err(Error::Numerical("RMISE estimate is not finite".into()));
    }
    Ok(MetricEstimate {
        value,
        std_error,
        draws: mc_draws,
        infinite: 0,
    })
}

/// `KL(f ‖ f̂) = E_f[ln f − ln f̂] ≥ 0` from `mc_draws` target draws.
pub fn kl_estimate<F>(
    target: &TargetDistribution,
    log_fhat: F,
    mc_draws: usize,
    stream: &RngStream,
) -> Result<MetricEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    Ok(target_draw_metrics(target, log_fhat, mc_draws, stream)?.0)
}

/// `√E_f[(f̂ − f)²]`, the squared error weighted by the target density.
///
/// This is the quantity the published simulation tables track; the
/// unweighted [`rmise_estimate`] is larger by roughly the inverse square
/// root of a typical density value.
pub fn weighted_rmise_estimate<F>(
    target: &TargetDistribution,
    log_fhat: F,
    mc_draws: usize,
    stream: &RngStream,
) -> Result<MetricEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    Ok(target_draw_metrics(target, log_fhat, mc_draws, stream)?.1)
}

/// KL divergence and weighted RMISE from one set of target draws.
pub fn target_draw_metrics<F>(
    target: &TargetDistribution,
    log_fhat: F,
    mc_draws: usize,
    stream: &RngStream,
) -> Result<(MetricEstimate, MetricEstimate)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if mc_draws < 2 {
        return Err(Error::InvalidParameter("needs at least 2 draws".into()));
    }
    let draws = target.sample(mc_draws, stream)?;
    let rows: Vec<&[f64]> = draws.rows().collect();
    let terms: Vec<(f64, f64)> = rows
        .par_iter()
        .map(|x| Ok((target.log_density(x)?, log_fhat(x)?)))
        .collect::<Result<_>>()?;
    let sq: Vec<f64> = terms.iter().map(|(lf, lh)| (lh.exp() - lf.exp()).powi(2)).collect();
    let (msq, vsq) = mean_var(&sq);
    let w = msq.sqrt();
    let w_se = (vsq / mc_draws as f64).sqrt();
    let weighted = MetricEstimate {
        value: w,
        std_error: if w > 0.0 { w_se / (2.0 * w) } else { w_se.sqrt() },
        draws: mc_draws,
        infinite: 0,
    };
    let infinite = terms.iter().filter(|(_, lh)| *lh == f64::NEG_INFINITY).count();
    if infinite > 0 {
        let kl = MetricEstimate {
            value: f64::INFINITY,
            std_error: f64::NAN,
            draws: mc_draws,
            infinite,
        };
        return Ok((kl, weighted));
    }
    let v: Vec<f64> = terms.iter().map(|(lf, lh)| lf - lh).collect();
    let (m, s) = mean_var(&v);
    let kl = MetricEstimate {
        value: m,
        std_error: (s / mc_draws as f64).sqrt(),
        draws: mc_draws,
        infinite: 0,
    };
    Ok((kl, weighted))
}

/// The bandwidth rules compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StudyMethod {
    /// Full matrix minimizing the AMISE with a MIG plug-in.
    B1,
    /// Full matrix maximizing the likelihood cross-validation score.
    B2,
    /// Isotropic AMISE bandwidth after whitening, MIG plug-in.
    B3,
    /// Isotropic cross-validated bandwidth after whitening.
    B4,
    /// Diagonal normal reference rule.
    B6,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 5] = [Self::B1, Self::B2, Self::B3, Self::B4, Self::B6];

    pub fn label(&self) -> &'static str {
        match self {
            Self::B1 => "B1",
            Self::B2 => "B2",
            Self::B3 => "B3",
            Self::B4 => "B4",
            Self::B6 => "B6",
        }
    }

    pub fn selection(&self) -> SelectionMethod {
        match self {
            Self::B1 => SelectionMethod::AmiseFull,
            Self::B2 => SelectionMethod::LcvFull,
            Self::B3 => SelectionMethod::AmiseIso,
            Self::B4 => SelectionMethod::LcvIso,
            Self::B6 => SelectionMethod::NormalRef,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub dims: Vec<usize>,
    pub targets: Vec<TargetKind>,
    pub methods: Vec<StudyMethod>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Monte Carlo draws per metric and replication.
    pub mc_draws: usize,
    /// Plug-in draws for the AMISE rules.
    pub plugin_draws: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 3, 4],
            targets: TargetKind::ALL.to_vec(),
            methods: StudyMethod::ALL.to_vec(),
            sample_sizes: vec![250, 500],
            replications: 1000,
            seed: 1,
            mc_draws: 10_000,
            plugin_draws: 10_000,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty()
            || self.targets.is_empty()
            || self.methods.is_empty()
            || self.sample_sizes.is_empty()
            || self.replications == 0
        {
            return Err(Error::InvalidParameter("every study selection must be nonempty".into()));
        }
        if let Some(d) = self.dims.iter().find(|d| !(2..=4).contains(*d)) {
            return Err(Error::InvalidParameter(format!("study dimension {d} not in 2..=4")));
        }
        if let Some(n) = self.sample_sizes.iter().find(|n| **n < 10) {
            return Err(Error::InvalidParameter(format!("sample size {n} below 10")));
        }
        if self.mc_draws < 4 || self.plugin_draws < 2 {
            return Err(Error::InvalidParameter("too few Monte Carlo draws".into()));
        }
        Ok(())
    }
}

/// Errors of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricResult {
    pub rmise: MetricEstimate,
    pub kl: MetricEstimate,
    pub weighted_rmise: MetricEstimate,
    pub wall_time_s: f64,
}

/// All replications of one `(d, target, n, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub d: usize,
    pub target: TargetKind,
    pub n: usize,
    pub method: StudyMethod,
    pub replications: Vec<MetricResult>,
    pub n_failures: usize,
    /// More than 10% of the replications failed.
    pub failed: bool,
    pub wall_time_s: f64,
}

impl CellResult {
    pub fn rmise_values(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.rmise.value).collect()
    }

    pub fn kl_values(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.kl.value).collect()
    }

    pub fn weighted_rmise_values(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.weighted_rmise.value).collect()
    }
}

/// One output row; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub d: usize,
    pub target: &'static str,
    pub n: usize,
    pub method: &'static str,
    pub metric: &'static str,
    pub median: f64,
    pub iqr: f64,
    pub n_replications: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub cells: Vec<CellResult>,
}

pub const QUARTILE_CONVENTION: &str = "linear interpolation between order statistics (type 7)";
pub const KL_CONVENTION: &str = "KL(f || fhat) = E_f[ln f - ln fhat], nonnegative";
pub const WEIGHTED_RMISE_DEFINITION: &str = "rmise_weighted = sqrt(E_f[(fhat - f)^2]) over target draws";
pub const RMISE_SCHEME: &str =
    "importance sampling from 0.5 f + 0.5 truncated Gaussian (target mean, twice target covariance)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTiming {
    pub d: usize,
    pub target: &'static str,
    pub n: usize,
    pub method: &'static str,
    pub n_failures: usize,
    pub failed: bool,
    pub wall_time_s: f64,
}

/// Metadata written next to the study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyManifest {
    pub crate_version: &'static str,
    pub config: StudyConfig,
    pub quartile_convention: &'static str,
    pub kl_convention: &'static str,
    pub rmise_scheme: &'static str,
    pub weighted_rmise_definition: &'static str,
    pub plugin: &'static str,
    pub cells: Vec<CellTiming>,
}

impl StudyReport {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::with_capacity(3 * self.cells.len());
        for c in &self.cells {
            let metrics = [
                ("rmise", c.rmise_values()),
                ("kl", c.kl_values()),
                ("rmise_weighted", c.weighted_rmise_values()),
            ];
            for (metric, values) in metrics {
                let (median, iqr) = if c.failed || values.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    median_iqr(&values)
                };
                rows.push(SummaryRow {
                    d: c.d,
                    target: c.target.label(),
                    n: c.n,
                    method: c.method.label(),
                    metric,
                    median,
                    iqr,
                    n_replications: c.replications.len() + c.n_failures,
                    n_failures: c.n_failures,
                });
            }
        }
        rows
    }

    pub fn manifest(&self, config: &StudyConfig) -> StudyManifest {
        StudyManifest {
            crate_version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            quartile_convention: QUARTILE_CONVENTION,
            kl_convention: KL_CONVENTION,
            rmise_scheme: RMISE_SCHEME,
            weighted_rmise_definition: WEIGHTED_RMISE_DEFINITION,
            plugin: "mig_mle",
            cells: self
                .cells
                .iter()
                .map(|c| CellTiming {
                    d: c.d,
                    target: c.target.label(),
                    n: c.n,
                    method: c.method.label(),
                    n_failures: c.n_failures,
                    failed: c.failed,
                    wall_time_s: c.wall_time_s,
                })
                .collect(),
        }
    }
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// `(median, Q3 − Q1)`.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25),
    )
}

/// One replication: sample, select, fit, measure.
pub fn run_replication(
    target: &TargetDistribution,
    n: usize,
    method: StudyMethod,
    config: &StudyConfig,
    stream: &RngStream,
) -> Result<MetricResult> {
    let start = Instant::now();
    let data = target.sample(n, &stream.substream(0))?;
    let bw = select_bandwidth(
        &data,
        method.selection(),
        PluginKind::MigMle,
        config.plugin_draws,
        &stream.substream(1),
    )?;
    let kde = MigKde::new(&data, &bw.h)?;
    let log_fhat = |x: &[f64]| kde.log_eval(x);
    let rmise = rmise_estimate(target, log_fhat, config.mc_draws, &stream.substream(2))?;
    let (kl, weighted_rmise) = target_draw_metrics(target, log_fhat, config.mc_draws, &stream.substream(3))?;
    Ok(MetricResult {
        rmise,
        kl,
        weighted_rmise,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs every cell of the study.
///
/// Replication `r` of data cell `(d, target, n)` uses
/// `RngStream::new(seed, cell).substream(r)`, so all methods see the same
/// samples and the output does not depend on the thread count.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut data_cell = 0u64;
    for &d in &config.dims {
        for &kind in &config.targets {
            let target = TargetDistribution::build(kind, d)?;
            for &n in &config.sample_sizes {
                let base = RngStream::new(config.seed, data_cell);
                data_cell += 1;
                for &method in &config.methods {
                    let start = Instant::now();
                    let outcomes: Vec<Result<MetricResult>> = (0..config.replications)
                        .into_par_iter()
                        .map(|r| run_replication(&target, n, method, config, &base.substream(r as u64)))
                        .collect();
                    let n_failures = outcomes.iter().filter(|o| o.is_err()).count();
                    cells.push(CellResult {
                        d,
                        target: kind,
                        n,
                        method,
                        replications: outcomes.into_iter().filter_map(|o| o.ok()).collect(),
                        n_failures,
                        failed: 10 * n_failures > config.replications,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    });
                }
            }
        }
    }
    Ok(StudyReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_iqr_hand_values() {
        assert_eq!(median_iqr(&[1.0, 2.0, 3.0, 4.0, 100.0]), (3.0, 2.0));
        assert_eq!(median_iqr(&[4.0, 1.0]), (2.5, 1.5));
        assert_eq!(median_iqr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn labels_round_trip() {
        for k in TargetKind::ALL {
            assert_eq!(TargetKind::parse(k.label()), Some(k));
            assert_eq!(TargetKind::parse(k.as_str()), Some(k));
        }
        for m in StudyMethod::ALL {
            assert_eq!(StudyMethod::parse(m.label()), Some(m));
        }
        assert_eq!(TargetKind::parse("F5"), None);
    }

    #[test]
    fn graded_scale_matches_definition() {
        let s = graded_scale(3, 0.5);
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(2, 2)], 3.0);
        assert!((s[(0, 1)] - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert!((s[(1, 2)] - 0.5 * 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn f4_parameters() {
        let t = TargetDistribution::build(TargetKind::Mig, 2).unwrap();
        let p = t.mig_params().unwrap();
        assert_eq!(p.beta(), &[1.0, 1.0]);
        assert_eq!(p.xi().as_slice(), &[2.0, 2.0]);
        assert_eq!(p.omega_row_major(), vec![1.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = StudyConfig::default();
        assert!(c.validate().is_ok());
        c.dims = vec![5];
        assert!(c.validate().is_err());
        c.dims = vec![];
        assert!(c.validate().is_err());
    }
}
