//! Orthogonal-field method: the potential is transported along `F = J⊥`,
//! regularised by a small isotropic viscosity, and σ is read off from
//! `|J| / |grad U + A|` up to a scale fixed near the boundary.

use super::{InversionConfig, Measurement, ReconstructionReport};
use crate::error::{MatmiError, Result};
use crate::fem::{self, BoundaryCondition, Coefficient};
use crate::field::{ScalarField, ScalarRole, VectorField, VectorRole};
use crate::forward::Excitation;
use crate::mesh::Mesh;
use crate::sparse::{solve, SolverOptions};
use std::collections::VecDeque;

/// Rotation of `J` by a quarter turn, `(-J₂, J₁)`.
pub fn orthogonal_field(j: &VectorField) -> VectorField {
    VectorField::new(
        VectorRole::OrthogonalField,
        j.values.iter().map(|v| [-v[1], v[0]]).collect(),
    )
}

/// Solves `div((ηI + FFᵀ)(grad U + A)) = 0` with the natural boundary
/// condition and zero mean.
///
/// Since `div A = 0` and `F·ν = 0` on the boundary, this is the same problem
/// as `div((ηI + FFᵀ) grad U) = -div(FFᵀ A)` with `∂U/∂ν = -A·ν`.
pub fn viscosity_solve(
    mesh: &Mesh,
    f: &VectorField,
    exc: &Excitation,
    eta: f64,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(MatmiError::Parameter(format!(
            "viscosity must be positive, got {eta}"
        )));
    }
    f.check_mesh(mesh)?;
    let tensor: Vec<[f64; 3]> = f
        .values
        .iter()
        .map(|v| [eta + v[0] * v[0], v[0] * v[1], eta + v[1] * v[1]])
        .collect();
    let a = exc.potential.triangle_averages(mesh);
    let sys = fem::assemble_elliptic(
        mesh,
        Coefficient::Tensor(&tensor),
        &a,
        BoundaryCondition::Natural,
    )?;
    let (u, _) = solve(&sys, opts)?;
    Ok(ScalarField::new(ScalarRole::OrthogonalPotential, u))
}

#[derive(Debug, Clone)]
pub struct Resistivity {
    /// Conductivity `|J| / |grad U + A|`, nearest-filled where unreliable.
    pub sigma: ScalarField,
    /// Nodes with no reliable triangle around them.
    pub unreliable: Vec<bool>,
}

impl Resistivity {
    pub fn unreliable_count(&self) -> usize {
        self.unreliable.iter().filter(|&&u| u).count()
    }
}

/// Conductivity from `1/σ = |grad U + A| / |J|` on triangles where `|J| ≥ floor`,
/// averaged to nodes by area. Nodes with no such triangle take the value of
/// the nearest reliable node in the mesh graph.
pub fn resistivity_from_potential(
    mesh: &Mesh,
    u: &ScalarField,
    exc: &Excitation,
    j: &VectorField,
    floor: f64,
) -> Result<Resistivity> {
    if !(floor > 0.0) {
        return Err(MatmiError::Parameter(format!(
            "current floor must be positive, got {floor}"
        )));
    }
    u.check_mesh(mesh)?;
    j.check_mesh(mesh)?;
    let e = super::misfit::field_strength(mesh, &u.values, exc);
    let mut acc = vec![0.0; mesh.num_nodes()];
    let mut weight = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let jn = j.values[t][0].hypot(j.values[t][1]);
        let en = e[t][0].hypot(e[t][1]);
        if !(jn >= floor && en > 0.0) {
            continue;
        }
        for &i in tri {
            acc[i] += mesh.area(t) * jn / en;
            weight[i] += mesh.area(t);
        }
    }
    let unreliable: Vec<bool> = weight.iter().map(|&w| !(w > 0.0)).collect();
    let mut sigma: Vec<f64> = acc
        .iter()
        .zip(&weight)
        .map(|(a, w)| if *w > 0.0 { a / w } else { f64::NAN })
        .collect();
    if unreliable.iter().all(|&u| u) {
        return Err(MatmiError::Data(format!(
            "|J| is below the floor {floor:.3e} everywhere"
        )));
    }
    // breadth-first fill from all reliable nodes at once
    let nbrs = mesh.neighbours();
    let mut queue: VecDeque<usize> = (0..mesh.num_nodes()).filter(|&i| !unreliable[i]).collect();
    while let Some(i) = queue.pop_front() {
        for &k in &nbrs[i] {
            if sigma[k].is_nan() {
                sigma[k] = sigma[i];
                queue.push_back(k);
            }
        }
    }
    Ok(Resistivity {
        sigma: ScalarField::new(ScalarRole::Conductivity, sigma),
        unreliable,
    })
}

/// Nodes within `width` of the boundary polygon.
pub fn reference_region(mesh: &Mesh, width: f64) -> Vec<bool> {
    let p = mesh.nodes();
    let edges = mesh.boundary_edges();
    (0..mesh.num_nodes())
        .map(|i| {
            mesh.is_boundary_node(i)
                || edges.iter().any(|e| {
                    let (a, b) = (p[e.nodes[0]], p[e.nodes[1]]);
                    let ab = [b[0] - a[0], b[1] - a[1]];
                    let az = [p[i][0] - a[0], p[i][1] - a[1]];
                    let t = ((az[0] * ab[0] + az[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1]))
                        .clamp(0.0, 1.0);
                    (az[0] - t * ab[0]).hypot(az[1] - t * ab[1]) <= width
                })
        })
        .collect()
}

/// Multiplies `raw` by `σ0 / mean(raw)`, the mean taken with lumped-mass
/// weights over `region`. Returns the scaled field and the factor.
pub fn rescale(
    mesh: &Mesh,
    raw: &ScalarField,
    region: &[bool],
    sigma0: f64,
) -> Result<(ScalarField, f64)> {
    raw.check_mesh(mesh)?;
    if region.len() != mesh.num_nodes() || !region.iter().any(|&r| r) {
        return Err(MatmiError::Data("reference region is empty".into()));
    }
    let (mut s, mut w) = (0.0, 0.0);
    for (i, m) in mesh.lumped_mass().iter().enumerate() {
        if region[i] {
            s += m * raw.values[i];
            w += m;
        }
    }
    let mean = s / w;
    if !(mean != 0.0 && mean.is_finite()) {
        return Err(MatmiError::Data(format!(
            "mean over the reference region is {mean}"
        )));
    }
    let k = sigma0 / mean;
    Ok((
        ScalarField::new(
            ScalarRole::Conductivity,
            raw.values.iter().map(|v| v * k).collect(),
        ),
        k,
    ))
}

/// Full orthogonal-field reconstruction: viscosity solve, resistivity,
/// rescale on the reference region, clamp.
pub fn orthogonal_field_invert(
    mesh: &Mesh,
    data: &Measurement,
    cfg: &InversionConfig,
) -> Result<(ScalarField, ReconstructionReport)> {
    cfg.validate()?;
    data.current.check_mesh(mesh)?;
    let mut report = ReconstructionReport::new(cfg);
    let f = orthogonal_field(&data.current);
    let u = viscosity_solve(mesh, &f, &data.excitation, cfg.viscosity, &cfg.solver)?;
    let jmax = data
        .current
        .values
        .iter()
        .map(|v| v[0].hypot(v[1]))
        .fold(0.0, f64::max);
    if !(jmax > 0.0) {
        return Err(MatmiError::Data(
            "measured current vanishes identically".into(),
        ));
    }
    let res = resistivity_from_potential(
        mesh,
        &u,
        &data.excitation,
        &data.current,
        cfg.current_floor * jmax,
    )?;
    let region = reference_region(mesh, cfg.reference.width);
    let (mut sigma, k) = rescale(mesh, &res.sigma, &region, cfg.reference.sigma0)?;
    cfg.clamp(&mut sigma.values);
    report.notes.push(format!("scale factor {k:.6e}"));
    report.notes.push(format!(
        "{} nodes filled from the nearest reliable value",
        res.unreliable_count()
    ));
    Ok((sigma, report))
}
