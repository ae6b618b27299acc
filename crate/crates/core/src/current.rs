//! Interior current from the acoustic source.
//!
//! The current is divergence free with vanishing normal flux, so `J = curl w`
//! for a stream function `w` that is constant (zero) on the boundary. Since
//! `curl curl w = Δw` in the plane, `w` solves a Dirichlet Poisson problem
//! driven by the source.

use crate::error::{MatmiError, Result};
use crate::fem::{self, BoundaryCondition, Coefficient};
use crate::field::{ScalarField, ScalarRole, VectorField, VectorRole};
use crate::forward::{AcousticMedium, Excitation};
use crate::mesh::Mesh;
use crate::sparse::{solve, SolverOptions};

/// Solves `Δw = ρ0 f / (|B0| (u(T) - u(0)))` with `w = 0` on the boundary.
///
/// The load is the lumped `m_i f_i`, which inverts the lumped weak curl used
/// to form the source exactly.
pub fn recover_stream(
    mesh: &Mesh,
    f: &ScalarField,
    exc: &Excitation,
    medium: &AcousticMedium,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    f.check_mesh(mesh)?;
    medium.validate()?;
    let factor = exc.source_factor();
    if !(factor.abs() > 0.0) || !factor.is_finite() {
        return Err(MatmiError::Parameter(
            "need |B0| > 0 and u(T) ≠ u(0) to recover the stream function".into(),
        ));
    }
    let scale = medium.rho0 / factor;
    let load: Vec<f64> = f
        .values
        .iter()
        .zip(mesh.lumped_mass())
        .map(|(v, m)| -scale * m * v)
        .collect();
    let ones = vec![1.0; mesh.num_nodes()];
    let sys = fem::assemble_with_load(
        mesh,
        Coefficient::Nodal(&ones),
        load,
        BoundaryCondition::DirichletZero,
    )?;
    let (w, _) = solve(&sys, opts)?;
    Ok(ScalarField::new(ScalarRole::StreamFunction, w))
}

/// `J = curl w = (-∂y w, ∂x w)` per triangle.
pub fn recover_current(mesh: &Mesh, w: &ScalarField) -> Result<VectorField> {
    w.check_mesh(mesh)?;
    Ok(VectorField::new(
        VectorRole::Current,
        fem::curl_scalar(mesh, &w.values),
    ))
}
