//! Gaussian approximation of the IG and MIG laws.
//!
//! For large `μ` the IG(μ, λ) law is close to `N(μ, μ³/λ)` and MIG(β, μξ₀, ωΩ₀)
//! is close to `N(μξ₀, μωβᵀξ₀ Ω₀)`. This module evaluates the exact log ratio of
//! the two densities, its power series in the standardized coordinate, the
//! worst-case truncation errors over a bulk region, and two distances between
//! the univariate laws.
//!
//! Both log ratios reduce to the same closed form. With `y` the relative
//! deviation of the projection `βᵀx` from its mean and `δ` the standardized
//! point,
//!
//! ```text
//! LR = −(d/2 + 1) ln(1 + y) + ½ δᵀδ y / (1 + y)
//!    = Σ_{k≥1} (−1)^k ((d + 2)/(2k) − δᵀδ/2) y^k,     |y| < 1.
//! ```

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::params::{HalfSpace, IgParams};
use crate::special::{ig_cdf, ig_sf, std_normal_cdf, std_normal_ln_pdf};

/// Half-width of the bulk in standardized units and the grid resolution used
/// to search it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BulkSpec {
    pub tau: f64,
    pub grid_points: usize,
}

impl Default for BulkSpec {
    fn default() -> Self {
        Self {
            tau: 1.0,
            grid_points: 10_000,
        }
    }
}

/// Bulk suprema `E₁, E₂, E₃` along a grid of `μ`, with fitted decay exponents.
///
/// `e_n[k][i]` is the supremum of `|LR − S_k|` at `mu_values[i]`, where `S_k`
/// is the series truncated after `k` terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub mu_values: Vec<f64>,
    pub e_n: [Vec<f64>; 3],
    pub slopes: [f64; 3],
}

fn exact_from_coords(d: usize, y: f64, dd: f64) -> f64 {
    -(0.5 * d as f64 + 1.0) * y.ln_1p() + 0.5 * dd * y / (1.0 + y)
}

fn series_from_coords(d: usize, y: f64, dd: f64, n_terms: usize) -> f64 {
    let c = d as f64 + 2.0;
    let mut sum = 0.0;
    let mut pow = 1.0;
    for k in 1..=n_terms {
        pow *= -y;
        sum += pow * (c / (2.0 * k as f64) - 0.5 * dd);
    }
    sum
}

fn check_series_region(y: f64) -> Result<()> {
    if y.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "point outside the bulk where the series converges (|y| = {})",
            y.abs()
        )))
    }
}

/// Standardized coordinates `(y, δ²)` of `x` under IG(μ, λ).
fn univariate_coords(mu: f64, lambda: f64, x: f64) -> Result<(f64, f64)> {
    let p = IgParams::new(mu, lambda)?;
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite point {x}")));
    }
    let delta = (x - mu) / p.variance().sqrt();
    let y = (x - mu) / mu;
    check_series_region(y)?;
    Ok((y, delta * delta))
}

/// `ln{k_{μ,λ}(x) / φ_{μ,μ³/λ}(x)}` from the closed form.
///
/// ```
/// let v = mig::llt::lr_exact_univariate(4.0, 16.0, 5.0).unwrap();
/// assert!((v + 0.309_715_326_971_314_6).abs() < 1e-15);
/// ```
pub fn lr_exact_univariate(mu: f64, lambda: f64, x: f64) -> Result<f64> {
    let (y, dd) = univariate_coords(mu, lambda, x)?;
    Ok(exact_from_coords(1, y, dd))
}

/// The log ratio's series through `n_terms` powers of `δ√(μ/λ)`.
pub fn lr_series_univariate(mu: f64, lambda: f64, x: f64, n_terms: usize) -> Result<f64> {
    let (y, dd) = univariate_coords(mu, lambda, x)?;
    Ok(series_from_coords(1, y, dd, n_terms))
}

/// The base point `(β, ξ₀, Ω₀)` of the family MIG(β, μξ₀, ωΩ₀).
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateBase {
    halfspace: HalfSpace,
    xi0: DVector<f64>,
    omega0: SpdMatrix,
    beta_xi0: f64,
    /// `‖L₀ᵀβ‖`.
    beta_scale: f64,
    window: f64,
}

impl MultivariateBase {
    /// Default radius of the `δ`-ball confining the supremum search.
    pub const DEFAULT_WINDOW: f64 = 6.0;

    pub fn new(beta: &[f64], xi0: &[f64], omega0: SpdMatrix) -> Result<Self> {
        let halfspace = HalfSpace::new(beta.to_vec())?;
        let d = halfspace.dim();
        check_dim(d, xi0.len())?;
        check_dim(d, omega0.dim())?;
        let beta_xi0 = halfspace.project(xi0);
        if !(beta_xi0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "βᵀξ₀ must be positive, got {beta_xi0}"
            )));
        }
        let beta_scale = (omega0.chol().transpose() * halfspace.beta_vec()).norm();
        Ok(Self {
            halfspace,
            xi0: DVector::from_column_slice(xi0),
            omega0,
            beta_xi0,
            beta_scale,
            window: Self::DEFAULT_WINDOW,
        })
    }

    /// Replace the search window radius.
    pub fn with_window(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("window radius {radius}")));
        }
        self.window = radius;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.halfspace.dim()
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn halfspace(&self) -> &HalfSpace {
        &self.halfspace
    }

    pub fn xi0(&self) -> &DVector<f64> {
        &self.xi0
    }

    pub fn omega0(&self) -> &SpdMatrix {
        &self.omega0
    }

    /// `δ = (μωβᵀξ₀)^{-1/2} L₀⁻¹(x − μξ₀)`.
    pub fn standardize(&self, mu: f64, omega: f64, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        if !(mu > 0.0 && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale factors must be positive (μ = {mu}, ω = {omega})"
            )));
        }
        let r = DVector::from_column_slice(x) - &self.xi0 * mu;
        Ok(self.omega0.solve_lower(&r) / (mu * omega * self.beta_xi0).sqrt())
    }

    fn coords(&self, mu: f64, omega: f64, x: &[f64]) -> Result<(f64, f64)> {
        let delta = self.standardize(mu, omega, x)?;
        let r = DVector::from_column_slice(x) - &self.xi0 * mu;
        let y = self.halfspace.project(r.as_slice()) / (mu * self.beta_xi0);
        check_series_region(y)?;
        Ok((y, delta.norm_squared()))
    }

    /// Largest `|a|` with `δ = a e` inside both the slab of half-width `tau`
    /// and, for `d ≥ 2`, the search window; `e` is the unit vector along `L₀ᵀβ`.
    fn slab_extent(&self, tau: f64) -> f64 {
        let slab = tau * self.beta_xi0.sqrt() / self.beta_scale;
        if self.dim() == 1 {
            slab
        } else {
            slab.min(self.window)
        }
    }
}

/// Exact log ratio of MIG(β, μξ₀, ωΩ₀) to its Gaussian approximation at `x`.
pub fn lr_exact_multivariate(base: &MultivariateBase, mu: f64, omega: f64, x: &[f64]) -> Result<f64> {
    let (y, dd) = base.coords(mu, omega, x)?;
    Ok(exact_from_coords(base.dim(), y, dd))
}

/// Partial sum of the multivariate log-ratio series through `n_terms`.
pub fn lr_series_multivariate(
    base: &MultivariateBase,
    mu: f64,
    omega: f64,
    x: &[f64],
    n_terms: usize,
) -> Result<f64> {
    let (y, dd) = base.coords(mu, omega, x)?;
    Ok(series_from_coords(base.dim(), y, dd, n_terms))
}

/// Which family the bulk suprema are computed for.
#[derive(Debug, Clone, PartialEq)]
pub enum LltModel {
    /// IG(μ, μ²).
    Univariate,
    /// MIG(β, μξ₀, Ω₀).
    Multivariate(MultivariateBase),
}

/// Suprema of `|LR − S_{n−1}|`, `n = 1, 2, 3`, for one `μ` with `ω = 1`.
///
/// In the univariate case the bulk `|δ| ≤ τ` is scanned on a uniform grid.
/// In the multivariate case write `δ = a e + u` with `u ⊥ e`. Then `y`
/// depends on `a` alone and the remainder is affine in `δᵀδ = a² + ‖u‖²`,
/// so for each `a` on the grid the supremum over `u` in the window is
/// attained at `‖u‖ = 0` or on the window's boundary.
fn bulk_sup_at(model: &LltModel, bulk: &BulkSpec, mu: f64) -> Result<[f64; 3]> {
    if !(bulk.tau < mu.sqrt()) {
        return Err(Error::Domain(format!(
            "bulk radius {} reaches the divergence region at μ = {mu}",
            bulk.tau
        )));
    }
    let (d, extent, y_per_a, window) = match model {
        LltModel::Univariate => (1, bulk.tau, 1.0 / mu.sqrt(), None),
        LltModel::Multivariate(base) => {
            let extent = base.slab_extent(bulk.tau);
            let y_per_a = base.beta_scale / (base.beta_xi0 * mu).sqrt();
            let window = (base.dim() > 1).then_some(base.window);
            (base.dim(), extent, y_per_a, window)
        }
    };
    let m = bulk.grid_points.max(2);
    let mut sup = [0.0f64; 3];
    for i in 0..m {
        let a = -extent + 2.0 * extent * i as f64 / (m - 1) as f64;
        let y = a * y_per_a;
        let mut update = |dd: f64| {
            let lr = exact_from_coords(d, y, dd);
            for (n, s) in sup.iter_mut().enumerate() {
                let r = (lr - series_from_coords(d, y, dd, n)).abs();
                if r > *s {
                    *s = r;
                }
            }
        };
        update(a * a);
        if let Some(w) = window {
            update(w * w);
        }
    }
    if sup.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Numerical(format!("degenerate bulk supremum at μ = {mu}: {sup:?}")));
    }
    Ok(sup)
}

/// Least-squares slope of `−ln e` on `ln μ` over the upper half of the grid.
pub fn decay_slope(mu: &[f64], e: &[f64]) -> f64 {
    let m = mu.len();
    let start = m / 2;
    let xs: Vec<f64> = mu[start..].iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e[start..].iter().map(|v| -v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Bulk suprema over a grid of `μ` (`ω = 1`, so `λ = μ²` in the univariate
/// case) and their fitted decay exponents.
pub fn bulk_sup_errors(model: &LltModel, bulk: &BulkSpec, mu_grid: &[f64]) -> Result<ErrorCurve> {
    if mu_grid.len() < 2 {
        return Err(Error::InvalidParameter("μ grid needs at least two points".into()));
    }
    if mu_grid.windows(2).any(|w| !(w[1] > w[0])) || !(mu_grid[0] > 0.0) {
        return Err(Error::InvalidParameter("μ grid must be positive and increasing".into()));
    }
    if !(bulk.tau > 0.0) {
        return Err(Error::InvalidParameter(format!("bulk radius {}", bulk.tau)));
    }
    let rows: Vec<[f64; 3]> = mu_grid
        .par_iter()
        .map(|&mu| bulk_sup_at(model, bulk, mu))
        .collect::<Result<_>>()?;
    let e_n: [Vec<f64>; 3] = std::array::from_fn(|n| rows.iter().map(|r| r[n]).collect());
    let slopes = std::array::from_fn(|n| decay_slope(mu_grid, &e_n[n]));
    Ok(ErrorCurve {
        mu_values: mu_grid.to_vec(),
        e_n,
        slopes,
    })
}

/// `{2^lo, …, 2^hi}`.
pub fn dyadic_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive 7–15 point Gauss–Kronrod quadrature to absolute error `tol`.
///
/// The interval with the largest error estimate is bisected until the summed
/// estimate drops below `tol`; more than 5000 subintervals is an error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 5000;
    if !(a.is_finite() && b.is_finite() && b >= a) {
        return Err(Error::InvalidParameter(format!("interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gauss_kronrod(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if !total_err.is_finite() {
            return Err(Error::Numerical("non-finite quadrature estimate".into()));
        }
        if total_err <= tol {
            return Ok(parts.iter().map(|p| p.2).sum());
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge (error estimate {total_err:e})"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::Numerical("quadrature interval underflow".into()));
        }
        let (v1, e1) = gauss_kronrod(&f, lo, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Hellinger distance `H² = ½∫(√k − √φ)²` between IG(μ, λ) and `N(μ, μ³/λ)`.
///
/// The integral over `x > 0` is computed by adaptive quadrature up to a
/// point beyond which the IG survival function is below `1e-16`; on
/// `x ≤ 0` only the Gaussian has mass, contributing `Φ(−μ/σ)`.
pub fn hellinger_univariate(mu: f64, lambda: f64) -> Result<f64> {
    let p = IgParams::new(mu, lambda)?;
    let sigma = p.variance().sqrt();
    let ig_term = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let lk = p.log_density(x).unwrap_or(f64::NEG_INFINITY);
        let lp = std_normal_ln_pdf((x - mu) / sigma) - sigma.ln();
        let lr = lk - lp;
        if lr <= 0.0 {
            lp.exp() * (0.5 * lr).exp_m1().powi(2)
        } else {
            lk.exp() * (-0.5 * lr).exp_m1().powi(2)
        }
    };
    let lo = (mu - 15.0 * sigma).max(0.0);
    let mid = mu + 15.0 * sigma;
    let mut hi = mid;
    while ig_sf(mu, lambda, hi) > 1e-16 {
        hi = mu + 2.0 * (hi - mu);
    }
    let tol = 1e-15;
    let mut total = integrate(ig_term, lo, mid, tol)? + integrate(ig_term, mid, hi, tol)?;
    if lo > 0.0 {
        total += integrate(ig_term, 0.0, lo, tol)?;
    }
    let h2 = 0.5 * (total + std_normal_cdf(-mu / sigma));
    Ok(h2.max(0.0).sqrt())
}

/// Kolmogorov distance `sup |F_IG − F_N|` between IG(μ, λ) and `N(μ, μ³/λ)`.
///
/// Evaluated on `10⁵` equispaced points covering the mass of both laws, plus
/// the origin, below which the IG distribution function vanishes.
pub fn kolmogorov_univariate(mu: f64, lambda: f64) -> Result<f64> {
    let p = IgParams::new(mu, lambda)?;
    let sigma = p.variance().sqrt();
    let lo = (mu - 12.0 * sigma).max(0.0);
    let hi = mu + 20.0 * sigma;
    const POINTS: usize = 100_000;
    let grid_sup = (0..POINTS)
        .into_par_iter()
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (POINTS - 1) as f64;
            (ig_cdf(mu, lambda, x) - std_normal_cdf((x - mu) / sigma)).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(grid_sup.max(std_normal_cdf(-mu / sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ratio_reference_value() {
        // mpmath, 50 digits.
        let want = -0.309_715_326_971_314_633_649_442_6;
        assert!((lr_exact_univariate(4.0, 16.0, 5.0).unwrap() - want).abs() < 1e-15);
        assert_eq!(lr_exact_univariate(4.0, 16.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn exact_ratio_domain() {
        assert!(lr_exact_univariate(4.0, 16.0, 8.0).is_err());
        assert!(lr_exact_univariate(4.0, 16.0, 0.0).is_err());
        assert!(lr_exact_univariate(-4.0, 16.0, 3.0).is_err());
        assert!(lr_series_univariate(4.0, 16.0, 8.5, 3).is_err());
    }

    #[test]
    fn series_limits() {
        assert_eq!(lr_series_univariate(4.0, 16.0, 5.0, 0).unwrap(), 0.0);
        // |δ√(μ/λ)| = 0.5
        let (mu, lambda) = (4.0, 16.0);
        let x = mu * 1.5;
        let exact = lr_exact_univariate(mu, lambda, x).unwrap();
        let s = lr_series_univariate(mu, lambda, x, 200).unwrap();
        assert!((s - exact).abs() < 1e-12);
    }

    #[test]
    fn multivariate_series_matches_exact() {
        let omega0 = SpdMatrix::from_row_major(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let base = MultivariateBase::new(&[0.5, 0.5], &[1.0, 1.0], omega0).unwrap();
        assert_eq!(lr_exact_multivariate(&base, 100.0, 1.0, &[100.0, 100.0]).unwrap(), 0.0);
        for x in [[103.0, 98.0], [91.0, 104.0], [110.0, 112.0]] {
            let e = lr_exact_multivariate(&base, 100.0, 1.0, &x).unwrap();
            let s = lr_series_multivariate(&base, 100.0, 1.0, &x, 50).unwrap();
            assert!((e - s).abs() < 1e-10, "{x:?}: {e} vs {s}");
        }
        assert!(lr_exact_multivariate(&base, 100.0, 1.0, &[-1.0, -1.0]).is_err());
    }

    #[test]
    fn quadrature_polynomial_and_gaussian() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-13).unwrap();
        assert!((v - (64.0 / 6.0 - 8.0)).abs() < 1e-12);
        let v = integrate(|x| (-0.5 * x * x).exp(), -40.0, 40.0, 1e-13).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn univariate_model_is_the_one_dimensional_base() {
        let base = MultivariateBase::new(&[1.0], &[1.0], SpdMatrix::identity(1)).unwrap();
        let bulk = BulkSpec {
            tau: 1.0,
            grid_points: 501,
        };
        let grid = dyadic_grid(2, 6);
        let a = bulk_sup_errors(&LltModel::Univariate, &bulk, &grid).unwrap();
        let b = bulk_sup_errors(&LltModel::Multivariate(base), &bulk, &grid).unwrap();
        for n in 0..3 {
            for (x, y) in a.e_n[n].iter().zip(&b.e_n[n]) {
                assert!((x - y).abs() <= 1e-14 * x.abs());
            }
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let mu = dyadic_grid(1, 10);
        let e: Vec<f64> = mu.iter().map(|m| 3.0 * m.powf(-1.25)).collect();
        assert!((decay_slope(&mu, &e) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn bulk_must_fit_the_convergence_region() {
        let bulk = BulkSpec {
            tau: 2.0,
            grid_points: 10,
        };
        assert!(bulk_sup_errors(&LltModel::Univariate, &bulk, &[2.0, 8.0]).is_err());
    }

    #[test]
    fn distances_are_proper() {
        let h = hellinger_univariate(1.0, 1.0).unwrap();
        let k = kolmogorov_univariate(1.0, 1.0).unwrap();
        assert!(h > 0.0 && h < 1.0, "{h}");
        assert!(k > 0.0 && k < 1.0, "{k}");
    }
}
