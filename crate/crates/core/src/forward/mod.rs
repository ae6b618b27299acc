//! Synthetic ground truth: induced potential, eddy currents, the Lorentz-force
//! acoustic source and the boundary pressure record.

mod excitation;
mod phantom;
pub mod wave;

pub use excitation::{Excitation, Pulse, VectorPotential};
pub use phantom::{evaluate_phantom, Inclusion, PhantomSpec};
pub use wave::{simulate_wave, BoundaryRecord, WaveConfig, WaveOutput};

use crate::error::{MatmiError, Result};
use crate::fem::{self, BoundaryCondition, Coefficient};
use crate::field::{ScalarField, ScalarRole, VectorField, VectorRole};
use crate::mesh::Mesh;
use crate::sparse::{solve, SolverOptions};
use serde::{Deserialize, Serialize};

/// Homogeneous acoustic background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticMedium {
    pub rho0: f64,
    pub lambda0: f64,
}

impl Default for AcousticMedium {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            lambda0: 1.0,
        }
    }
}

impl AcousticMedium {
    pub fn new(rho0: f64, lambda0: f64) -> Result<Self> {
        let m = Self { rho0, lambda0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0
            && self.lambda0 > 0.0
            && self.rho0.is_finite()
            && self.lambda0.is_finite())
        {
            return Err(MatmiError::Parameter(
                "density and bulk modulus must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn c0(&self) -> f64 {
        (self.lambda0 / self.rho0).sqrt()
    }
}

/// Solves `div(σ (grad V + A)) = 0` with the natural boundary condition and zero mean.
pub fn solve_potential(
    mesh: &Mesh,
    sigma: &ScalarField,
    exc: &Excitation,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    sigma.check_mesh(mesh)?;
    let a = exc.potential.triangle_averages(mesh);
    let sys = fem::assemble_elliptic(
        mesh,
        Coefficient::Nodal(&sigma.values),
        &a,
        BoundaryCondition::Natural,
    )?;
    let (v, _) = solve(&sys, opts)?;
    Ok(ScalarField::new(ScalarRole::Potential, v))
}

/// `J = σ (grad V + A)` on each triangle, with σ taken at the centroid.
pub fn current_density(
    mesh: &Mesh,
    sigma: &ScalarField,
    v: &ScalarField,
    exc: &Excitation,
) -> Result<VectorField> {
    sigma.check_mesh(mesh)?;
    v.check_mesh(mesh)?;
    let a = exc.potential.triangle_averages(mesh);
    let s = fem::nodes_to_triangles(mesh, &sigma.values);
    let g = fem::gradient(mesh, &v.values);
    let j = (0..mesh.num_triangles())
        .map(|t| [s[t] * (g[t][0] + a[t][0]), s[t] * (g[t][1] + a[t][1])])
        .collect();
    Ok(VectorField::new(VectorRole::Current, j))
}

/// Solves for the potential and forms the current in one call.
pub fn forward_current(
    mesh: &Mesh,
    sigma: &ScalarField,
    exc: &Excitation,
    opts: &SolverOptions,
) -> Result<(ScalarField, VectorField)> {
    let v = solve_potential(mesh, sigma, exc, opts)?;
    let j = current_density(mesh, sigma, &v, exc)?;
    Ok((v, j))
}

/// Acoustic source `(|B0| (u(T) - u(0)) / ρ0) curl J`.
pub fn lorentz_source(
    mesh: &Mesh,
    j: &VectorField,
    exc: &Excitation,
    medium: &AcousticMedium,
) -> Result<ScalarField> {
    j.check_mesh(mesh)?;
    exc.validate()?;
    medium.validate()?;
    let factor = exc.source_factor() / medium.rho0;
    let c = fem::curl_vector(mesh, &j.values)?;
    Ok(ScalarField::new(
        ScalarRole::Source,
        c.into_iter().map(|v| factor * v).collect(),
    ))
}

/// Sum of the consistent boundary fluxes `|∫ J·grad φ_i|` over boundary
/// nodes, relative to `‖J‖`; zero when the natural condition holds weakly.
pub fn boundary_flux_defect(mesh: &Mesh, j: &[[f64; 2]]) -> f64 {
    let r = fem::weak_divergence(mesh, j);
    let total: f64 = mesh.boundary_nodes().map(|i| r[i].abs()).sum();
    let norm = fem::vector_l2_norm(mesh, j);
    if norm == 0.0 {
        0.0
    } else {
        total / norm
    }
}

/// Largest interior weak divergence `|∫ J·grad φ_i|`, relative to `‖J‖`.
pub fn interior_divergence_defect(mesh: &Mesh, j: &[[f64; 2]]) -> f64 {
    let r = fem::weak_divergence(mesh, j);
    let worst = (0..mesh.num_nodes())
        .filter(|&i| !mesh.is_boundary_node(i))
        .map(|i| r[i].abs())
        .fold(0.0, f64::max);
    let norm = fem::vector_l2_norm(mesh, j);
    if norm == 0.0 {
        0.0
    } else {
        worst / norm
    }
}
