//! Projected gradient descent on the current misfit.

use super::{
    misfit, misfit_gradient, relative_change, InversionConfig, Measurement, ReconstructionReport,
};
use crate::error::{MatmiError, Result};
use crate::field::{ScalarField, ScalarRole, VectorField};
use crate::mesh::Mesh;

/// Consecutive misfit increases tolerated before giving up.
const MAX_INCREASES: usize = 5;
/// Step halvings tried per iteration when backtracking.
const MAX_HALVINGS: usize = 40;

/// Smallest `|J1 × J2| / (|J1| |J2|)` over the triangles where both currents
/// are nonzero, i.e. the sine of the smallest angle between them.
pub fn nonparallel_margin(j1: &VectorField, j2: &VectorField) -> f64 {
    j1.values
        .iter()
        .zip(&j2.values)
        .filter_map(|(a, b)| {
            let n = a[0].hypot(a[1]) * b[0].hypot(b[1]);
            (n > 0.0).then(|| (a[0] * b[1] - a[1] * b[0]).abs() / n)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Iterates `σ ← T[σ] - μ dJ[T[σ]]` from a constant guess and returns `T[σ]`.
///
/// With several measurements this is the Landweber scheme on the stacked
/// residual. A misfit that rises [`MAX_INCREASES`] times in a row is a step
/// size error; with `backtracking` the step is halved instead.
pub fn optimal_control_invert(
    mesh: &Mesh,
    data: &[Measurement],
    cfg: &InversionConfig,
) -> Result<(ScalarField, ReconstructionReport)> {
    cfg.validate()?;
    let mut report = ReconstructionReport::new(cfg);
    if data.len() >= 2 {
        let m = nonparallel_margin(&data[0].current, &data[1].current);
        report.notes.push(format!(
            "smallest sine between the first two currents: {m:.3e}"
        ));
    }
    let opts = &cfg.solver;
    let mut sigma = vec![cfg.initial_guess(); mesh.num_nodes()];
    cfg.clamp(&mut sigma);
    let field = |v: Vec<f64>| ScalarField::new(ScalarRole::Conductivity, v);
    let mut current = misfit(mesh, &field(sigma.clone()), data, opts)?;
    let mut mu = cfg.step_size;
    let mut increases = 0;
    for _ in 0..cfg.iterations() {
        let g = misfit_gradient(mesh, &field(sigma.clone()), data, opts)?;
        let mut halvings = 0;
        let (next, value) = loop {
            let mut next: Vec<f64> = sigma
                .iter()
                .zip(&g.values)
                .map(|(s, d)| s - mu * d)
                .collect();
            cfg.clamp(&mut next);
            let value = misfit(mesh, &field(next.clone()), data, opts)?;
            if !cfg.backtracking || value <= current || halvings == MAX_HALVINGS {
                break (next, value);
            }
            mu *= 0.5;
            halvings += 1;
        };
        if halvings > 0 {
            report.notes.push(format!(
                "iteration {}: step halved {halvings} times to {mu:.3e}",
                report.iterations + 1
            ));
        }
        let change = relative_change(mesh, &next, &sigma);
        increases = if value > current { increases + 1 } else { 0 };
        report.iterations += 1;
        report.misfit_history.push(value);
        report.update_history.push(change);
        sigma = next;
        current = value;
        if increases >= MAX_INCREASES {
            return Err(MatmiError::StepSize(format!(
                "misfit increased {MAX_INCREASES} times in a row (now {value:.6e}) with step {mu:.3e}"
            )));
        }
        if change < cfg.tol {
            break;
        }
    }
    Ok((field(sigma), report))
}
