//! Dense two-phase simplex for the small programs behind the truncation
//! bounds.
//!
//! Programs have the shape `min/max cᵀx` subject to `Ax = b` and `x ≤ u`
//! with `u` possibly infinite and `x` otherwise free. Bounded variables are
//! rewritten as `x = u − w` with `w ≥ 0` and free ones split as `x = p − m`,
//! which gives a standard form solved by Bland's rule.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal value; `±∞` when unbounded and NaN when infeasible.
    pub value: f64,
    /// A maximizer or minimizer when one exists.
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        eq_matrix: DMatrix<f64>,
        eq_rhs: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = objective.len();
        if eq_matrix.ncols() != n || upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: eq_matrix.ncols().max(upper.len()),
            });
        }
        if eq_matrix.nrows() != eq_rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: eq_matrix.nrows(),
                got: eq_rhs.len(),
            });
        }
        Ok(Self {
            objective,
            eq_matrix,
            eq_rhs,
            upper,
        })
    }
}

pub fn simplex_solve(lp: &LinearProgram, sense: Sense) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.eq_rhs.len();
    let sign = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Column map from standard-form variables back to x.
    enum Col {
        Shifted(usize),
        Plus(usize),
        Minus(usize),
    }
    let mut cols = Vec::new();
    let mut rhs = lp.eq_rhs.clone();
    let mut offset = 0.0;
    for j in 0..n {
        let u = lp.upper[j];
        if u.is_finite() {
            cols.push(Col::Shifted(j));
            for i in 0..m {
                rhs[i] -= lp.eq_matrix[(i, j)] * u;
            }
            offset += sign * lp.objective[j] * u;
        } else {
            cols.push(Col::Plus(j));
            cols.push(Col::Minus(j));
        }
    }
    let ns = cols.len();
    let mut a = DMatrix::zeros(m, ns);
    let mut c = vec![0.0; ns];
    for (k, col) in cols.iter().enumerate() {
        let (j, s) = match *col {
            Col::Shifted(j) => (j, -1.0),
            Col::Plus(j) => (j, 1.0),
            Col::Minus(j) => (j, -1.0),
        };
        for i in 0..m {
            a[(i, k)] = s * lp.eq_matrix[(i, j)];
        }
        c[k] = s * sign * lp.objective[j];
    }

    let (status, value, y) = standard_form(a, rhs, &c)?;
    let mut x = vec![f64::NAN; n];
    let value = match status {
        LpStatus::Optimal => {
            for (k, col) in cols.iter().enumerate() {
                match *col {
                    Col::Shifted(j) => x[j] = lp.upper[j] - y[k],
                    Col::Plus(j) => x[j] = if x[j].is_nan() { y[k] } else { x[j] + y[k] },
                    Col::Minus(j) => x[j] = if x[j].is_nan() { -y[k] } else { x[j] - y[k] },
                }
            }
            sign * (value + offset)
        }
        LpStatus::Unbounded => -sign * f64::INFINITY,
        LpStatus::Infeasible => f64::NAN,
    };
    Ok(LpSolution { status, value, x })
}

/// `min cᵀy` subject to `Ay = b`, `y ≥ 0`.
fn standard_form(a: DMatrix<f64>, mut b: Vec<f64>, c: &[f64]) -> Result<(LpStatus, f64, Vec<f64>)> {
    let (m, n) = a.shape();
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = DMatrix::zeros(m + 1, width);
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        b[i] *= flip;
        for j in 0..n {
            t[(i, j)] = flip * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, rhs)] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut alive = vec![true; m];
    let obj = m;
    // Phase 1 reduced costs: minimize the sum of artificials.
    for j in 0..n {
        t[(obj, j)] = -(0..m).map(|i| t[(i, j)]).sum::<f64>();
    }
    t[(obj, rhs)] = -b.iter().sum::<f64>();

    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut iters = 0;
    if !run(&mut t, &mut basis, &alive, n + m, &mut iters)? {
        // Phase 1 is bounded below by zero.
        return Err(Error::Numerical("unbounded auxiliary program".into()));
    }
    if -t[(obj, rhs)] > 1e-9 * scale {
        return Ok((LpStatus::Infeasible, f64::NAN, Vec::new()));
    }

    for i in 0..m {
        if basis[i] < n {
            continue;
        }
        match (0..n).find(|&j| t[(i, j)].abs() > EPS) {
            Some(j) => pivot(&mut t, &mut basis, i, j),
            None => alive[i] = false,
        }
    }

    for j in 0..width {
        t[(obj, j)] = 0.0;
    }
    for j in 0..n {
        t[(obj, j)] = c[j];
    }
    for i in 0..m {
        if alive[i] && basis[i] < n {
            let cb = c[basis[i]];
            if cb != 0.0 {
                for j in 0..width {
                    t[(obj, j)] -= cb * t[(i, j)];
                }
            }
        }
    }
    // Artificials may not re-enter.
    if !run(&mut t, &mut basis, &alive, n, &mut iters)? {
        return Ok((LpStatus::Unbounded, f64::NEG_INFINITY, Vec::new()));
    }
    let mut y = vec![0.0; n];
    for i in 0..m {
        if alive[i] && basis[i] < n {
            y[basis[i]] = t[(i, rhs)];
        }
    }
    Ok((LpStatus::Optimal, -t[(obj, rhs)], y))
}

/// Pivots until optimal (`true`) or unbounded (`false`); only the first
/// `allowed` columns may enter.
fn run(
    t: &mut DMatrix<f64>,
    basis: &mut [usize],
    alive: &[bool],
    allowed: usize,
    iters: &mut usize,
) -> Result<bool> {
    let m = basis.len();
    let rhs = t.ncols() - 1;
    loop {
        let Some(enter) = (0..allowed).find(|&j| t[(m, j)] < -EPS) else {
            return Ok(true);
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if !alive[i] || t[(i, enter)] <= EPS {
                continue;
            }
            let ratio = t[(i, rhs)] / t[(i, enter)];
            let better = match leave {
                None => true,
                Some(l) => ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[l]),
            };
            if better {
                best = ratio.min(best);
                leave = Some(i);
            }
        }
        let Some(row) = leave else {
            return Ok(false);
        };
        pivot(t, basis, row, enter);
        *iters += 1;
        if *iters > MAX_ITER {
            return Err(Error::Numerical(format!(
                "simplex exceeded {MAX_ITER} iterations"
            )));
        }
    }
}

fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize) {
    let p = t[(row, col)];
    let width = t.ncols();
    for j in 0..width {
        t[(row, j)] /= p;
    }
    for i in 0..t.nrows() {
        if i == row {
            continue;
        }
        let f = t[(i, col)];
        if f != 0.0 {
            for j in 0..width {
                let v = t[(row, j)];
                t[(i, j)] -= f * v;
            }
        }
    }
    basis[row] = col;
}
