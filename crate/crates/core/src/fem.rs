//! P1 finite element assembly and discrete differential operators.
//!
//! Scalars are continuous piecewise-linear (one value per node); vector
//! fields are piecewise constant (one value per triangle).

use crate::error::{MatmiError, Result};
use crate::mesh::Mesh;
use crate::sparse::{pcg, Constraint, CsrMatrix, SolverOptions, SparseSystem};

/// Coefficient of the elliptic operator `-div(C grad u)`.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a> {
    /// Nodal scalar, averaged to triangle centroids.
    Nodal(&'a [f64]),
    /// Scalar per triangle.
    PerTriangle(&'a [f64]),
    /// Symmetric tensor per triangle stored as `[xx, xy, yy]`.
    Tensor(&'a [[f64; 3]]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous natural condition; the solution has zero mean.
    Natural,
    DirichletZero,
}

impl Coefficient<'_> {
    fn tensor(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        match *self {
            Coefficient::Nodal(v) => {
                let tri = mesh.triangles()[t];
                let s = (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0;
                [s, 0.0, s]
            }
            Coefficient::PerTriangle(v) => [v[t], 0.0, v[t]],
            Coefficient::Tensor(v) => v[t],
        }
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        let len_ok = match *self {
            Coefficient::Nodal(v) => v.len() == mesh.num_nodes(),
            Coefficient::PerTriangle(v) => v.len() == mesh.num_triangles(),
            Coefficient::Tensor(v) => v.len() == mesh.num_triangles(),
        };
        if !len_ok {
            return Err(MatmiError::Usage(
                "coefficient length does not match the mesh".into(),
            ));
        }
        for t in 0..mesh.num_triangles() {
            let c = self.tensor(mesh, t);
            let det = c[0] * c[2] - c[1] * c[1];
            if !(c[0] > 0.0 && det > 0.0) || !det.is_finite() {
                return Err(MatmiError::Model(format!(
                    "coefficient is not positive definite on triangle {t}"
                )));
            }
        }
        Ok(())
    }
}

fn apply_tensor(c: &[f64; 3], v: [f64; 2]) -> [f64; 2] {
    [c[0] * v[0] + c[1] * v[1], c[1] * v[0] + c[2] * v[1]]
}

/// Stiffness matrix of `-div(C grad u)` without boundary conditions.
pub fn stiffness(mesh: &Mesh, coeff: Coefficient) -> Result<CsrMatrix> {
    coeff.check(mesh)?;
    let pat = mesh.pattern();
    let mut values = vec![0.0; pat.col_idx.len()];
    for t in 0..mesh.num_triangles() {
        let c = coeff.tensor(mesh, t);
        let g = mesh.hat_gradients(t);
        let area = mesh.area(t);
        let slots = &pat.slots[t];
        for a in 0..3 {
            let cg = apply_tensor(&c, g[a]);
            for b in 0..3 {
                values[slots[3 * a + b]] += area * (cg[0] * g[b][0] + cg[1] * g[b][1]);
            }
        }
    }
    Ok(CsrMatrix {
        row_ptr: pat.row_ptr.clone(),
        col_idx: pat.col_idx.clone(),
        values,
    })
}

/// Consistent P1 mass matrix.
pub fn mass_matrix(mesh: &Mesh) -> CsrMatrix {
    let pat = mesh.pattern();
    let mut values = vec![0.0; pat.col_idx.len()];
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        let slots = &pat.slots[t];
        for a in 0..3 {
            for b in 0..3 {
                values[slots[3 * a + b]] += area * if a == b { 2.0 } else { 1.0 } / 12.0;
            }
        }
    }
    CsrMatrix {
        row_ptr: pat.row_ptr.clone(),
        col_idx: pat.col_idx.clone(),
        values,
    }
}

/// Load vector `b_i = ∫ f φ_i` of a nodal field.
pub fn load_vector(mesh: &Mesh, f: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        let s = f[tri[0]] + f[tri[1]] + f[tri[2]];
        for &i in tri {
            b[i] += area * (s + f[i]) / 12.0;
        }
    }
    b
}

/// Flux load vector `b_i = -∫ (C q)·grad φ_i`, the weak form of `div(C q)`
/// including its natural boundary term.
pub fn flux_load(mesh: &Mesh, coeff: Coefficient, q: &[[f64; 2]]) -> Vec<f64> {
    flux_load_with_scale(mesh, coeff, q).0
}

fn flux_load_with_scale(mesh: &Mesh, coeff: Coefficient, q: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let mut b = vec![0.0; mesh.num_nodes()];
    let mut scale = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let cq = apply_tensor(&coeff.tensor(mesh, t), q[t]);
        let g = mesh.hat_gradients(t);
        let area = mesh.area(t);
        for a in 0..3 {
            let c = area * (cq[0] * g[a][0] + cq[1] * g[a][1]);
            b[tri[a]] -= c;
            scale += c.abs();
        }
    }
    (b, scale)
}

fn close(
    mesh: &Mesh,
    mut matrix: CsrMatrix,
    mut rhs: Vec<f64>,
    scale: f64,
    bc: BoundaryCondition,
) -> SparseSystem {
    match bc {
        BoundaryCondition::Natural => SparseSystem {
            matrix,
            rhs,
            constraint: Constraint::ZeroMean {
                weights: mesh.lumped_mass().to_vec(),
            },
            rhs_scale: scale,
        },
        BoundaryCondition::DirichletZero => {
            let pinned: Vec<bool> = (0..mesh.num_nodes())
                .map(|i| mesh.is_boundary_node(i))
                .collect();
            for i in mesh.boundary_nodes() {
                matrix.pin_row(i, &pinned);
                rhs[i] = 0.0;
            }
            SparseSystem {
                matrix,
                rhs,
                constraint: Constraint::DirichletZero,
                rhs_scale: scale,
            }
        }
    }
}

/// Assembles `-div(C (grad u + q)) = 0`, i.e. stiffness matrix and the flux load of `q`.
pub fn assemble_elliptic(
    mesh: &Mesh,
    coeff: Coefficient,
    rhs_flux: &[[f64; 2]],
    bc: BoundaryCondition,
) -> Result<SparseSystem> {
    if rhs_flux.len() != mesh.num_triangles() {
        return Err(MatmiError::Usage(
            "flux field length does not match the mesh".into(),
        ));
    }
    let k = stiffness(mesh, coeff)?;
    let (b, scale) = flux_load_with_scale(mesh, coeff, rhs_flux);
    Ok(close(mesh, k, b, scale, bc))
}

/// Assembles `-div(C grad u) = f` with a nodal source `f`.
pub fn assemble_poisson(
    mesh: &Mesh,
    coeff: Coefficient,
    f: &[f64],
    bc: BoundaryCondition,
) -> Result<SparseSystem> {
    if f.len() != mesh.num_nodes() {
        return Err(MatmiError::Usage(
            "source length does not match the mesh".into(),
        ));
    }
    let k = stiffness(mesh, coeff)?;
    let b = load_vector(mesh, f);
    let scale = b.iter().map(|v| v.abs()).sum();
    Ok(close(mesh, k, b, scale, bc))
}

/// Assembles `-div(C grad u) = b` for an already integrated nodal load `b`.
pub fn assemble_with_load(
    mesh: &Mesh,
    coeff: Coefficient,
    b: Vec<f64>,
    bc: BoundaryCondition,
) -> Result<SparseSystem> {
    if b.len() != mesh.num_nodes() {
        return Err(MatmiError::Usage(
            "load length does not match the mesh".into(),
        ));
    }
    let k = stiffness(mesh, coeff)?;
    let scale = b.iter().map(|v| v.abs()).sum();
    Ok(close(mesh, k, b, scale, bc))
}

/// Per-triangle gradient of a nodal field.
pub fn gradient(mesh: &Mesh, u: &[f64]) -> Vec<[f64; 2]> {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let g = mesh.hat_gradients(t);
            let mut d = [0.0, 0.0];
            for a in 0..3 {
                d[0] += u[tri[a]] * g[a][0];
                d[1] += u[tri[a]] * g[a][1];
            }
            d
        })
        .collect()
}

/// Rotated gradient `(-∂y w, ∂x w)` per triangle.
pub fn curl_scalar(mesh: &Mesh, w: &[f64]) -> Vec<[f64; 2]> {
    gradient(mesh, w)
        .into_iter()
        .map(|g| [-g[1], g[0]])
        .collect()
}

/// Scalar curl `∂x f2 - ∂y f1` of a piecewise-constant field. The weak curl,
/// including the tangential boundary term, is divided by the lumped mass.
pub fn curl_vector(mesh: &Mesh, f: &[[f64; 2]]) -> Result<Vec<f64>> {
    if f.len() != mesh.num_triangles() {
        return Err(MatmiError::Usage(
            "vector field length does not match the mesh".into(),
        ));
    }
    let mut b = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.hat_gradients(t);
        let area = mesh.area(t);
        for a in 0..3 {
            // f · (-∂y φ, ∂x φ)
            b[tri[a]] -= area * (-f[t][0] * g[a][1] + f[t][1] * g[a][0]);
        }
    }
    for e in mesh.boundary_edges() {
        let tau = [-e.normal[1], e.normal[0]];
        let ft = f[e.triangle];
        let s = 0.5 * e.length * (ft[0] * tau[0] + ft[1] * tau[1]);
        b[e.nodes[0]] += s;
        b[e.nodes[1]] += s;
    }
    Ok(b.iter()
        .zip(mesh.lumped_mass())
        .map(|(v, m)| v / m)
        .collect())
}

/// Solves `M x = b` with the consistent mass matrix.
pub fn solve_mass(mesh: &Mesh, b: &[f64]) -> Result<Vec<f64>> {
    let m = mass_matrix(mesh);
    let diag = m.diagonal();
    let opts = SolverOptions {
        tol: 1e-13,
        max_iter: 2000,
    };
    pcg(|x, y| m.matvec(x, y), &diag, b, &opts, false).map(|(x, _)| x)
}

/// `∫ u v` for nodal fields.
pub fn l2_inner(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let (su, sv) = (
                u[tri[0]] + u[tri[1]] + u[tri[2]],
                v[tri[0]] + v[tri[1]] + v[tri[2]],
            );
            let diag: f64 = tri.iter().map(|&i| u[i] * v[i]).sum();
            mesh.area(t) * (diag + su * sv) / 12.0
        })
        .sum()
}

pub fn l2_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    l2_inner(mesh, u, u).max(0.0).sqrt()
}

/// `∫ |f|²` for piecewise-constant vector fields, square-rooted.
pub fn vector_l2_norm(mesh: &Mesh, f: &[[f64; 2]]) -> f64 {
    f.iter()
        .enumerate()
        .map(|(t, v)| mesh.area(t) * (v[0] * v[0] + v[1] * v[1]))
        .sum::<f64>()
        .sqrt()
}

/// `∫ f·g` for piecewise-constant vector fields.
pub fn vector_l2_inner(mesh: &Mesh, f: &[[f64; 2]], g: &[[f64; 2]]) -> f64 {
    f.iter()
        .zip(g)
        .enumerate()
        .map(|(t, (a, b))| mesh.area(t) * (a[0] * b[0] + a[1] * b[1]))
        .sum()
}

pub fn h1_seminorm(mesh: &Mesh, u: &[f64]) -> f64 {
    vector_l2_norm(mesh, &gradient(mesh, u))
}

/// Discrete divergence residuals `∫ f·grad φ_i` at every node.
pub fn weak_divergence(mesh: &Mesh, f: &[[f64; 2]]) -> Vec<f64> {
    let mut r = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.hat_gradients(t);
        for a in 0..3 {
            r[tri[a]] += mesh.area(t) * (f[t][0] * g[a][0] + f[t][1] * g[a][1]);
        }
    }
    r
}

/// Averages a per-triangle scalar to the nodes with area weights.
pub fn triangle_to_nodes(mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; mesh.num_nodes()];
    let mut w = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &i in tri {
            acc[i] += mesh.area(t) * v[t];
            w[i] += mesh.area(t);
        }
    }
    acc.iter().zip(&w).map(|(a, b)| a / b).collect()
}

/// Centroid average of a nodal field on each triangle.
pub fn nodes_to_triangles(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .map(|t| (u[t[0]] + u[t[1]] + u[t[2]]) / 3.0)
        .collect()
}
