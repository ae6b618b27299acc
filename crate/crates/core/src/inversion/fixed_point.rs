//! Clamped fixed-point iteration `σ ← T[smooth(E·J / |E|²)]`.

use super::misfit::field_strength;
use super::{
    forward_op, mean_edge_length, misfit, relative_change, InversionConfig, Measurement,
    ReconstructionReport,
};
use crate::error::Result;
use crate::field::{ScalarField, ScalarRole};
use crate::mesh::Mesh;
use crate::sparse::SolverOptions;

/// `|E|` below this fraction of its maximum makes `E·J / |E|²` unusable.
const FIELD_FLOOR: f64 = 1e-6;

/// One unsmoothed, unclamped update.
#[derive(Debug, Clone)]
pub struct FixedPointStep {
    /// `E·J / |E|²` averaged to nodes, previous value where no usable triangle touches.
    pub sigma: Vec<f64>,
    /// Nodes touched by at least one mask triangle.
    pub mask: Vec<bool>,
    /// Mask triangles skipped because `|E|` was below the floor.
    pub fallbacks: usize,
}

/// Evaluates `G̃[σ] = (E·J) / |E|²` with `E = grad V[σ] + A` on the triangles
/// where `|J| > floor · max |J|`.
pub fn fixed_point_update(
    mesh: &Mesh,
    sigma: &ScalarField,
    data: &Measurement,
    floor: f64,
    opts: &SolverOptions,
) -> Result<FixedPointStep> {
    let v = forward_op(mesh, sigma, &data.excitation, opts)?;
    let e = field_strength(mesh, &v.values, &data.excitation);
    let j = &data.current.values;
    let jmax = j.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let emax = e.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let mut acc = vec![0.0; mesh.num_nodes()];
    let mut weight = vec![0.0; mesh.num_nodes()];
    let mut fallbacks = 0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !(j[t][0].hypot(j[t][1]) > floor * jmax) {
            continue;
        }
        let e2 = e[t][0] * e[t][0] + e[t][1] * e[t][1];
        if !(e2.sqrt() > FIELD_FLOOR * emax) {
            fallbacks += 1;
            continue;
        }
        let g = (e[t][0] * j[t][0] + e[t][1] * j[t][1]) / e2;
        for &i in tri {
            acc[i] += mesh.area(t) * g;
            weight[i] += mesh.area(t);
        }
    }
    let mask: Vec<bool> = weight.iter().map(|&w| w > 0.0).collect();
    let out = (0..mesh.num_nodes())
        .map(|i| {
            if mask[i] {
                acc[i] / weight[i]
            } else {
                sigma.values[i]
            }
        })
        .collect();
    Ok(FixedPointStep {
        sigma: out,
        mask,
        fallbacks,
    })
}

/// Normalised Gaussian convolution `Σ m_j K(x_i - x_j) u_j / Σ m_j K(x_i - x_j)`
/// with `K(d) = exp(-d² / 2s²)` truncated at `3s`, `m_j` the lumped mass.
/// Only nodes with `mask[j]` contribute; a node with no contributing
/// neighbour keeps its value.
pub fn gaussian_smooth(mesh: &Mesh, u: &[f64], s: f64, mask: Option<&[bool]>) -> Vec<f64> {
    if !(s > 0.0) {
        return u.to_vec();
    }
    let nodes = mesh.nodes();
    let cut = 3.0 * s;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let dims = [0, 1].map(|k| (((hi[k] - lo[k]) / cut).floor() as usize + 1).max(1));
    let cell = |p: &[f64; 2]| [0, 1].map(|k| (((p[k] - lo[k]) / cut) as usize).min(dims[k] - 1));
    let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
    for (i, p) in nodes.iter().enumerate() {
        let c = cell(p);
        buckets[c[1] * dims[0] + c[0]].push(i);
    }
    let mass = mesh.lumped_mass();
    let used = |j: usize| mask.is_none_or(|m| m[j]);
    nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = cell(p);
            let (mut num, mut den) = (0.0, 0.0);
            for cy in c[1].saturating_sub(1)..=(c[1] + 1).min(dims[1] - 1) {
                for cx in c[0].saturating_sub(1)..=(c[0] + 1).min(dims[0] - 1) {
                    for &j in buckets[cy * dims[0] + cx].iter().filter(|&&j| used(j)) {
                        let d2 = (p[0] - nodes[j][0]).powi(2) + (p[1] - nodes[j][1]).powi(2);
                        if d2 <= cut * cut {
                            let w = mass[j] * (-d2 / (2.0 * s * s)).exp();
                            num += w * u[j];
                            den += w;
                        }
                    }
                }
            }
            if den > 0.0 {
                num / den
            } else {
                u[i]
            }
        })
        .collect()
}

/// Runs the fixed-point iteration from a constant guess. Nodes outside the
/// mask keep their previous value; every iterate is clamped to `[a, b]`.
pub fn fixed_point_invert(
    mesh: &Mesh,
    data: &Measurement,
    cfg: &InversionConfig,
) -> Result<(ScalarField, ReconstructionReport)> {
    cfg.validate()?;
    data.current.check_mesh(mesh)?;
    let mut report = ReconstructionReport::new(cfg);
    let width = cfg.smoothing_width * mean_edge_length(mesh);
    let mut sigma = vec![cfg.initial_guess(); mesh.num_nodes()];
    cfg.clamp(&mut sigma);
    let mut fallbacks = 0;
    let mut masked_out = 0;
    for _ in 0..cfg.iterations() {
        let field = ScalarField::new(ScalarRole::Conductivity, sigma.clone());
        let step = fixed_point_update(mesh, &field, data, cfg.current_floor, &cfg.solver)?;
        fallbacks += step.fallbacks;
        masked_out = step.mask.iter().filter(|&&m| !m).count();
        let mut next = gaussian_smooth(mesh, &step.sigma, width, Some(&step.mask));
        for i in 0..next.len() {
            if !step.mask[i] {
                next[i] = sigma[i];
            }
        }
        cfg.clamp(&mut next);
        let change = relative_change(mesh, &next, &sigma);
        sigma = next;
        let value = misfit(
            mesh,
            &ScalarField::new(ScalarRole::Conductivity, sigma.clone()),
            std::slice::from_ref(data),
            &cfg.solver,
        )?;
        report.iterations += 1;
        report.misfit_history.push(value);
        report.update_history.push(change);
        if change < cfg.tol {
            break;
        }
    }
    report.notes.push(format!(
        "{masked_out} nodes outside the current mask held their previous value"
    ));
    if fallbacks > 0 {
        report.notes.push(format!(
            "{fallbacks} mask triangles skipped because |grad V + A| was below the floor"
        ));
    }
    Ok((ScalarField::new(ScalarRole::Conductivity, sigma), report))
}
