//! Symmetric sparse matrices and the preconditioned conjugate gradient solver.

use crate::error::{MatmiError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.col_idx[k] == i)
                    .map_or(0.0, |k| self.values[k])
            })
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi]
            .binary_search(&j)
            .map_or(0.0, |k| self.values[lo + k])
    }

    /// Replaces row and column `i` by the identity.
    pub(crate) fn pin_row(&mut self, i: usize, pinned: &[bool]) {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            let j = self.col_idx[k];
            self.values[k] = if j == i { 1.0 } else { 0.0 };
            if j != i && !pinned[j] {
                let (lo, hi) = (self.row_ptr[j], self.row_ptr[j + 1]);
                let kk = lo
                    + self.col_idx[lo..hi]
                        .binary_search(&i)
                        .expect("symmetric pattern");
                self.values[kk] = 0.0;
            }
        }
    }
}

/// How a discrete elliptic system is closed.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// Homogeneous Dirichlet values on the boundary nodes.
    DirichletZero,
    /// Pure Neumann problem; the solution is normalised so that the
    /// weighted mean vanishes.
    ZeroMean {
        weights: Vec<f64>,
    },
    None,
}

#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constraint: Constraint,
    /// Magnitude of the element contributions to the right-hand side, used to
    /// judge cancellation in the Neumann compatibility check.
    pub rhs_scale: f64,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>, constraint: Constraint) -> Self {
        let rhs_scale = rhs.iter().map(|v| v.abs()).sum();
        Self {
            matrix,
            rhs,
            constraint,
            rhs_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the system; singular Neumann systems are handled by working in the
/// complement of the constants.
pub fn solve(system: &SparseSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolveInfo)> {
    let n = system.matrix.nrows();
    if system.rhs.len() != n {
        return Err(MatmiError::Usage(
            "right-hand side length does not match the matrix".into(),
        ));
    }
    let diag = system.matrix.diagonal();
    match &system.constraint {
        Constraint::ZeroMean { weights } => {
            let sum: f64 = system.rhs.iter().sum();
            let scale = system
                .rhs_scale
                .max(system.rhs.iter().map(|v| v.abs()).sum());
            if sum.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(MatmiError::Model(format!(
                    "Neumann right-hand side is incompatible: sum {sum:.3e} against magnitude {scale:.3e}"
                )));
            }
            let mean = sum / n as f64;
            let b: Vec<f64> = system.rhs.iter().map(|v| v - mean).collect();
            let (mut x, info) = pcg(|v, out| system.matrix.matvec(v, out), &diag, &b, opts, true)?;
            let wsum: f64 = weights.iter().sum();
            let shift: f64 = weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() / wsum;
            for v in x.iter_mut() {
                *v -= shift;
            }
            Ok((x, info))
        }
        _ => pcg(
            |v, out| system.matrix.matvec(v, out),
            &diag,
            &system.rhs,
            opts,
            false,
        ),
    }
}

/// Jacobi-preconditioned conjugate gradients. With `deflate_constants` the
/// residual is kept orthogonal to the constant vector.
pub fn pcg<F>(
    apply: F,
    diag: &[f64],
    b: &[f64],
    opts: &SolverOptions,
    deflate_constants: bool,
) -> Result<(Vec<f64>, SolveInfo)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveInfo {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(MatmiError::Model(
            "matrix has a non-positive diagonal entry".into(),
        ));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    if deflate_constants {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(MatmiError::Model(
                "matrix is not positive definite on the search space".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if deflate_constants {
            remove_mean(&mut r);
        }
        let res = norm(&r) / bnorm;
        if res <= opts.tol {
            return Ok((
                x,
                SolveInfo {
                    iterations: it,
                    residual: res,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        if deflate_constants {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    apply(&x, &mut ap);
    let res = norm(
        &b.iter()
            .zip(&ap)
            .map(|(bi, ai)| bi - ai)
            .collect::<Vec<_>>(),
    ) / bnorm;
    Err(MatmiError::Solver {
        iterations: opts.max_iter,
        residual: res,
    })
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
