//! Densities, derivatives, moments and bounds of the IG and MIG laws.
//!
//! Everything is computed on the log scale; the linear-scale density is only
//! ever obtained as `exp` of the log density. Off the half-space the density
//! is zero and the log density is `-∞`.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;
use crate::params::{HalfSpace, IgParams, MigParams};

impl IgParams {
    /// `ln k_{μ,λ}(x)`.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("IG density needs x > 0, got {x}")));
        }
        let (mu, lam) = (self.mu, self.lambda);
        let dev = x - mu;
        Ok(0.5 * (lam / (2.0 * PI)).ln() - 1.5 * x.ln() - lam * dev * dev / (2.0 * mu * mu * x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        crate::special::ig_cdf(self.mu, self.lambda, x)
    }
}

impl MigParams {
    /// `ln k_{β,ξ,Ω}(x)`; `-∞` off the support.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let bx = self.halfspace().project(x);
        if !(bx > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let r = DVector::from_column_slice(x) - self.xi();
        let q = self.omega().inv_quad_form(&r);
        Ok(self.ln_norm() - (0.5 * self.dim() as f64 + 1.0) * bx.ln() - q / (2.0 * bx))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// `(E X, Var X) = (ξ, βᵀξ Ω)`.
    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        (self.xi().clone(), self.omega().matrix() * self.beta_xi())
    }

    fn interior(&self, x: &[f64]) -> Result<(f64, DVector<f64>, DVector<f64>)> {
        check_dim(self.dim(), x.len())?;
        let bx = self.halfspace().project(x);
        if !(bx > 0.0) {
            return Err(Error::Domain(format!(
                "derivatives need βᵀx > 0, got {bx}"
            )));
        }
        let r = DVector::from_column_slice(x) - self.xi();
        let w = self.omega().inverse() * &r;
        Ok((bx, r, w))
    }

    /// Gradient of the log density in `x`.
    pub fn grad_log_density(&self, x: &[f64]) -> Result<DVector<f64>> {
        let (bx, r, w) = self.interior(x)?;
        let beta = self.halfspace().beta_vec();
        let q = r.dot(&w);
        let c = 1.0 + 0.5 * self.dim() as f64;
        Ok(-(beta.clone() * c + &w) / bx + beta * (q / (2.0 * bx * bx)))
    }

    /// Hessian of the log density in `x`.
    pub fn hessian_log_density(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (bx, r, w) = self.interior(x)?;
        let beta = self.halfspace().beta_vec();
        let q = r.dot(&w);
        let c = 1.0 + 0.5 * self.dim() as f64;
        let bb = &beta * beta.transpose();
        let wb = &w * beta.transpose();
        let cross = &wb + wb.transpose();
        Ok(-self.omega().inverse() / bx + (bb.clone() * c + cross) / (bx * bx)
            - bb * (q / (bx * bx * bx)))
    }

    /// Hessian of the density, `f (∇ln f ∇ln fᵀ + ∇²ln f)`.
    pub fn hessian_density(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.grad_log_density(x)?;
        let h = self.hessian_log_density(x)?;
        let f = self.density(x)?;
        Ok((&g * g.transpose() + h) * f)
    }

    /// Uniform bound on the density over the half-space.
    pub fn density_upper_bound(&self) -> f64 {
        let d = self.dim() as f64;
        let m = self.beta_xi();
        let beta_sq: f64 = self.beta().iter().map(|b| b * b).sum();
        let near = 2.0 / m;
        let far = (d / 2.0 + 1.0) / E * 8.0 * self.omega().spectral_norm() * beta_sq / (m * m);
        (self.ln_norm() + (d / 2.0 + 1.0) * near.max(far).ln()).exp()
    }

    /// Parameters of `L⁻¹X` when `X` has these parameters.
    pub fn affine_transform(&self, l: &DMatrix<f64>) -> Result<MigParams> {
        let d = self.dim();
        if l.nrows() != d || l.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: l.nrows(),
            });
        }
        let lu = l.clone().lu();
        let l_inv = lu
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular("transformation matrix".into()))?;
        let beta = l.transpose() * self.halfspace().beta_vec();
        let xi = &l_inv * self.xi();
        let omega = &l_inv * self.omega().matrix() * l_inv.transpose();
        let omega = (&omega + omega.transpose()) * 0.5;
        MigParams::new(
            HalfSpace::new(beta.iter().copied().collect())?,
            xi.iter().copied().collect(),
            SpdMatrix::new(omega)?,
        )
    }
}

/// Multivariate normal log density with mean `m` and covariance `c`.
pub fn mvn_log_density(m: &DVector<f64>, c: &SpdMatrix, x: &[f64]) -> f64 {
    let d = m.len() as f64;
    let r = DVector::from_column_slice(x) - m;
    -0.5 * d * (2.0 * PI).ln() - 0.5 * c.ln_det() - 0.5 * c.inv_quad_form(&r)
}
