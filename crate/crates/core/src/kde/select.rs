//! Bandwidth selection: Nelder–Mead over a Cholesky parametrization, the
//! spherical pre-whitening pipeline and the named selection rules.

use nalgebra::DMatrix;

use super::plugin::{AmiseObjective, PluginKind, PluginModel};
use super::{lcv_score, lscv_score_with, normal_reference, Bandwidth, SelectionMethod, SquareIntegral};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::params::SampleBatch;
use crate::rng::RngStream;

const TOL: f64 = 1e-4;
const MAX_ITER: usize = 500;

/// Outcome of a Nelder–Mead run.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMead {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with initial simplex offsets `step`; stops when
/// every vertex is within `tol` (max-norm) of the best one or after
/// `max_iter` iterations. Non-finite values are treated as `+∞`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], tol: f64, max_iter: usize) -> Result<NelderMead>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let f0 = f(x0);
    if f0.is_nan() {
        return Err(Error::Numerical("objective is NaN at the starting point".into()));
    }
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), if f0.is_finite() { f0 } else { f64::INFINITY })];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let fx = eval(&x);
                    *v = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Ok(NelderMead {
        x,
        value,
        iterations,
        converged,
    })
}

/// `(ln L₁₁, …, ln L_dd, L₂₁, L₃₁, L₃₂, …)` for `H = LLᵀ`.
pub fn cholesky_params(h: &SpdMatrix) -> Vec<f64> {
    let l = h.chol();
    let d = h.dim();
    let mut out: Vec<f64> = (0..d).map(|i| l[(i, i)].ln()).collect();
    for i in 1..d {
        for j in 0..i {
            out.push(l[(i, j)]);
        }
    }
    out
}

pub fn from_cholesky_params(theta: &[f64], d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    for i in 0..d {
        l[(i, i)] = theta[i].exp();
    }
    let mut k = d;
    for i in 1..d {
        for j in 0..i {
            l[(i, j)] = theta[k];
            k += 1;
        }
    }
    &l * l.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Full,
    Isotropic,
}

/// A selection criterion with any Monte Carlo pieces already frozen.
#[derive(Debug, Clone)]
pub enum Criterion {
    Amise(AmiseObjective),
    Lcv,
    Lscv(SquareIntegral),
}

impl Criterion {
    /// Value in its natural orientation (AMISE is minimized, scores maximized).
    pub fn evaluate(&self, samples: &SampleBatch, h: &SpdMatrix) -> Result<f64> {
        match self {
            Self::Amise(obj) => Ok(obj.value(h.matrix())),
            Self::Lcv => lcv_score(samples, h),
            Self::Lscv(int) => lscv_score_with(samples, h, int),
        }
    }

    fn loss(&self, samples: &SampleBatch, h: &DMatrix<f64>) -> f64 {
        if let Self::Amise(obj) = self {
            return obj.value(h);
        }
        let Ok(spd) = SpdMatrix::new(h.clone()) else {
            return f64::INFINITY;
        };
        match self.evaluate(samples, &spd) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    }

    fn method(&self, structure: Structure) -> SelectionMethod {
        match (self, structure) {
            (Self::Amise(_), Structure::Full) => SelectionMethod::AmiseFull,
            (Self::Amise(_), Structure::Isotropic) => SelectionMethod::AmiseIso,
            (Self::Lcv, Structure::Full) => SelectionMethod::LcvFull,
            (Self::Lcv, Structure::Isotropic) => SelectionMethod::LcvIso,
            (Self::Lscv(_), _) => SelectionMethod::Lscv,
        }
    }
}

/// Numerical bandwidth optimization started from the normal reference rule.
pub fn optimize_bandwidth(samples: &SampleBatch, criterion: &Criterion, structure: Structure) -> Result<Bandwidth> {
    let d = samples.dim();
    let start = normal_reference(samples)?.h;
    let (h, _) = match structure {
        Structure::Full => {
            let theta0 = cholesky_params(&start);
            let l = start.chol();
            let mut step = vec![0.5; d];
            for i in 1..d {
                for j in 0..i {
                    step.push(0.3 * (l[(i, i)] * l[(j, j)]).sqrt());
                }
            }
            let nm = nelder_mead(
                |t| criterion.loss(samples, &from_cholesky_params(t, d)),
                &theta0,
                &step,
                TOL,
                MAX_ITER,
            )?;
            (from_cholesky_params(&nm.x, d), nm.value)
        }
        Structure::Isotropic => {
            let ln_h0 = start.ln_det() / (2.0 * d as f64);
            let iso = |lh: f64| DMatrix::identity(d, d) * (2.0 * lh).exp();
            let nm = nelder_mead(|t| criterion.loss(samples, &iso(t[0])), &[ln_h0], &[0.5], TOL, MAX_ITER)?;
            (iso(nm.x[0]), nm.value)
        }
    };
    let h = SpdMatrix::new(h)?;
    let value = criterion.evaluate(samples, &h)?;
    Bandwidth::new(h, criterion.method(structure), value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphericalVariant {
    /// Whiten by the Cholesky factor of the sample covariance.
    Rotation,
    /// Divide each margin by its standard deviation.
    ScalingOnly,
}

/// Runs `inner` on pre-whitened data `L⁻¹x` (on the half-space of `Lᵀβ`) to
/// get an isotropic `h` and its criterion value, then returns `H = h² LLᵀ`.
pub fn spherical_bandwidth<F>(
    samples: &SampleBatch,
    variant: SphericalVariant,
    method: SelectionMethod,
    inner: F,
) -> Result<Bandwidth>
where
    F: FnOnce(&SampleBatch) -> Result<(f64, f64)>,
{
    let d = samples.dim();
    let cov = samples.covariance();
    let scale = match variant {
        SphericalVariant::Rotation => cov,
        SphericalVariant::ScalingOnly => DMatrix::from_diagonal(&cov.diagonal()),
    };
    let s = SpdMatrix::new(scale).map_err(|e| Error::Estimation(format!("sample covariance ({e})")))?;
    let l = s.chol();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Singular("sample covariance factor".into()))?;
    let beta = l.transpose() * samples.halfspace().beta_vec();
    let white = samples.map_linear(&l_inv, beta.iter().copied().collect())?;
    let (h, value) = inner(&white)?;
    Bandwidth::new(s.scale(h * h)?, method, value)
}

/// The named selection rules used by the command line and the study.
///
/// `amise_full` and `lcv_full` optimize a full matrix on the raw data; the
/// isotropic rules and `lscv` select `h` on pre-whitened data and return
/// `h² S`.
pub fn select_bandwidth(
    samples: &SampleBatch,
    method: SelectionMethod,
    plugin: PluginKind,
    mc_draws: usize,
    stream: &RngStream,
) -> Result<Bandwidth> {
    let n = samples.len();
    match method {
        SelectionMethod::NormalRef => normal_reference(samples),
        SelectionMethod::AmiseFull => {
            let model = PluginModel::fit(plugin, samples, mc_draws)?;
            let obj = AmiseObjective::new(&model, n, stream)?;
            optimize_bandwidth(samples, &Criterion::Amise(obj), Structure::Full)
        }
        SelectionMethod::LcvFull => optimize_bandwidth(samples, &Criterion::Lcv, Structure::Full),
        SelectionMethod::AmiseIso => spherical_bandwidth(samples, SphericalVariant::Rotation, method, |w| {
            let model = PluginModel::fit(plugin, w, mc_draws)?;
            let obj = AmiseObjective::new(&model, n, stream)?;
            let h = obj.isotropic_h()?;
            Ok((h, obj.value(&(DMatrix::identity(w.dim(), w.dim()) * (h * h)))))
        }),
        SelectionMethod::LcvIso => spherical_bandwidth(samples, SphericalVariant::Rotation, method, |w| {
            let b = optimize_bandwidth(w, &Criterion::Lcv, Structure::Isotropic)?;
            Ok((b.h.matrix()[(0, 0)].sqrt(), b.criterion_value))
        }),
        SelectionMethod::Lscv => spherical_bandwidth(samples, SphericalVariant::Rotation, method, |w| {
            let model = PluginModel::fit(plugin, w, mc_draws)?;
            let int = SquareIntegral::new(&model, stream)?;
            let b = optimize_bandwidth(w, &Criterion::Lscv(int), Structure::Isotropic)?;
            Ok((b.h.matrix()[(0, 0)].sqrt(), b.criterion_value))
        }),
    }
}
