use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, SpdMatrix};

/// The half-space `{x : βᵀx > 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    beta: Vec<f64>,
}

impl HalfSpace {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParameter("empty direction vector".into()));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite direction".into()));
        }
        if beta.iter().all(|&b| b == 0.0) {
            return Err(Error::InvalidParameter("direction vector is zero".into()));
        }
        Ok(Self { beta })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }

    /// `βᵀx`.
    pub fn project(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.project(x) > 0.0
    }
}

/// Inverse Gaussian law IG(μ, λ) with mean μ and shape λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgParams {
    pub mu: f64,
    pub lambda: f64,
}

impl IgParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("IG mean {mu}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("IG shape {lambda}")));
        }
        Ok(Self { mu, lambda })
    }

    /// The `(μ, ω)` form, `λ = μ²/ω`.
    pub fn from_mean_dispersion(mu: f64, omega: f64) -> Result<Self> {
        Self::new(mu, mu * mu / omega)
    }

    /// `ω = μ²/λ`.
    pub fn dispersion(&self) -> f64 {
        self.mu * self.mu / self.lambda
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.mu.powi(3) / self.lambda
    }
}

/// MIG(β, ξ, Ω) on the half-space `H_d(β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MigParams {
    halfspace: HalfSpace,
    xi: DVector<f64>,
    omega: SpdMatrix,
    beta_xi: f64,
    ln_norm: f64,
}

impl MigParams {
    pub fn new(halfspace: HalfSpace, xi: Vec<f64>, omega: SpdMatrix) -> Result<Self> {
        let d = halfspace.dim();
        check_dim(d, xi.len())?;
        check_dim(d, omega.dim())?;
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite location".into()));
        }
        let beta_xi = halfspace.project(&xi);
        if !(beta_xi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "location outside the half-space (βᵀξ = {beta_xi})"
            )));
        }
        let ln_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() + beta_xi.ln()
            - 0.5 * omega.ln_det();
        Ok(Self {
            halfspace,
            xi: DVector::from_vec(xi),
            omega,
            beta_xi,
            ln_norm,
        })
    }

    /// Convenience constructor from raw slices, Ω given row-major.
    pub fn from_slices(beta: &[f64], xi: &[f64], omega_row_major: &[f64]) -> Result<Self> {
        let d = beta.len();
        Self::new(
            HalfSpace::new(beta.to_vec())?,
            xi.to_vec(),
            SpdMatrix::from_row_major(d, omega_row_major)?,
        )
    }

    /// MIG(β, μξ₀, ωΩ₀).
    pub fn from_factored(
        halfspace: HalfSpace,
        mu: f64,
        xi0: &[f64],
        omega: f64,
        omega0: &SpdMatrix,
    ) -> Result<Self> {
        if !(mu > 0.0) || !(omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale factors must be positive (μ = {mu}, ω = {omega})"
            )));
        }
        let xi = xi0.iter().map(|v| mu * v).collect();
        Self::new(halfspace, xi, omega0.scale(omega)?)
    }

    pub fn dim(&self) -> usize {
        self.halfspace.dim()
    }

    pub fn halfspace(&self) -> &HalfSpace {
        &self.halfspace
    }

    pub fn beta(&self) -> &[f64] {
        self.halfspace.beta()
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn omega(&self) -> &SpdMatrix {
        &self.omega
    }

    /// `βᵀξ`.
    pub fn beta_xi(&self) -> f64 {
        self.beta_xi
    }

    /// `ln{(2π)^{-d/2} βᵀξ |Ω|^{-1/2}}`.
    pub(crate) fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// `βᵀΩβ`.
    pub fn beta_omega_beta(&self) -> f64 {
        let b = self.halfspace.beta_vec();
        (b.transpose() * self.omega.matrix() * &b)[0]
    }

    /// Law of the projection `βᵀX`.
    pub fn radial_law(&self) -> IgParams {
        let m = self.beta_xi;
        IgParams {
            mu: m,
            lambda: m * m / self.beta_omega_beta(),
        }
    }

    pub fn omega_row_major(&self) -> Vec<f64> {
        row_major(self.omega.matrix())
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// An `n × d` sample stored row-major; every row lies in the half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Vec<f64>,
    n: usize,
    halfspace: HalfSpace,
}

impl SampleBatch {
    pub fn new(data: Vec<f64>, halfspace: HalfSpace) -> Result<Self> {
        let d = halfspace.dim();
        if data.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: data.len() % d,
            });
        }
        let n = data.len() / d;
        for (i, row) in data.chunks_exact(d).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("row {i} is not finite")));
            }
            if !halfspace.contains(row) {
                return Err(Error::Domain(format!(
                    "row {i} lies outside the half-space (βᵀx = {})",
                    halfspace.project(row)
                )));
            }
        }
        Ok(Self { data, n, halfspace })
    }

    pub fn from_rows(rows: &[Vec<f64>], halfspace: HalfSpace) -> Result<Self> {
        let d = halfspace.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            check_dim(d, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(data, halfspace)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.halfspace.dim()
    }

    pub fn halfspace(&self) -> &HalfSpace {
        &self.halfspace
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> DVector<f64> {
        let d = self.dim();
        let mut m = DVector::zeros(d);
        for row in self.rows() {
            for k in 0..d {
                m[k] += row[k];
            }
        }
        m / self.n as f64
    }

    /// Sample covariance with denominator `n − 1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let m = self.mean();
        let mut s = DMatrix::zeros(d, d);
        for row in self.rows() {
            for a in 0..d {
                let da = row[a] - m[a];
                for b in 0..=a {
                    s[(a, b)] += da * (row[b] - m[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                s[(b, a)] = s[(a, b)];
            }
        }
        s / (self.n as f64 - 1.0)
    }

    /// The sample mapped through `x ↦ M x`, living on `H_d(M⁻ᵀβ)`.
    pub fn map_linear(&self, m: &DMatrix<f64>, new_beta: Vec<f64>) -> Result<Self> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            let x = DVector::from_column_slice(row);
            let y = m * x;
            out.extend(y.iter().take(d));
        }
        Self::new(out, HalfSpace::new(new_beta)?)
    }
}
