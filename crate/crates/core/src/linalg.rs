//! Small dense linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A symmetric positive definite matrix together with its lower Cholesky
/// factor `L` (`A = L Lᵀ`) and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::NotPositiveDefinite(format!(
                "shape {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let d = entries.nrows();
        for i in 0..d {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        // Symmetrize so that the factor does not depend on which triangle is read.
        let sym = (&entries + entries.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(sym.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let l = chol.l();
        if (0..d).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
            return Err(Error::NotPositiveDefinite("non-positive pivot".into()));
        }
        let inverse = chol.inverse();
        Ok(Self {
            entries: sym,
            chol: l,
            inverse,
        })
    }

    pub fn from_row_major(d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, values))
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is SPD")
    }

    /// `c·I`, `c > 0`.
    pub fn scaled_identity(d: usize, c: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * c)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular Cholesky factor.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.chol[(i, i)].ln()).sum::<f64>()
    }

    pub fn det(&self) -> f64 {
        self.ln_det().exp()
    }

    /// `L⁻¹ v` by forward substitution.
    pub fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `vᵀ A⁻¹ v`.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> f64 {
        self.solve_lower(v).norm_squared()
    }

    /// `c·A` for `c > 0`, reusing the factorization.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scale factor {c}")));
        }
        Ok(Self {
            entries: &self.entries * c,
            chol: &self.chol * c.sqrt(),
            inverse: &self.inverse / c,
        })
    }

    /// Largest eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm_sym(&self.entries)
    }
}

/// Largest-magnitude eigenvalue of a symmetric matrix by power iteration
/// (at most 200 sweeps, stopping at a relative change of 1e-12).
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    // Start off any eigenvector that a structured matrix is likely to have.
    let mut v = DVector::from_fn(d, |i, _| 1.0 + 0.1 * (i as f64 + 1.0).sqrt());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.abs()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
