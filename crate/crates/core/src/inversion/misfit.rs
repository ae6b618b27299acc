//! Misfit functional, its derivative and the adjoint gradient.

use super::Measurement;
use crate::error::{MatmiError, Result};
use crate::fem::{self, BoundaryCondition, Coefficient};
use crate::field::{ScalarField, ScalarRole};
use crate::forward::{solve_potential, Excitation};
use crate::mesh::Mesh;
use crate::sparse::{solve, SolverOptions};

/// The potential `F[σ]`, solving `div(σ (grad F + A)) = 0` with zero mean.
pub fn forward_op(
    mesh: &Mesh,
    sigma: &ScalarField,
    exc: &Excitation,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    solve_potential(mesh, sigma, exc, opts)
}

/// Electric field `grad V + A` per triangle.
pub(crate) fn field_strength(mesh: &Mesh, v: &[f64], exc: &Excitation) -> Vec<[f64; 2]> {
    let a = exc.potential.triangle_averages(mesh);
    fem::gradient(mesh, v)
        .iter()
        .zip(&a)
        .map(|(g, a)| [g[0] + a[0], g[1] + a[1]])
        .collect()
}

/// Directional derivative `q = F'[σ] h`, solving
/// `div(σ grad q) = -div(h (grad F[σ] + A))` with the natural condition and zero mean.
pub fn frechet_derivative(
    mesh: &Mesh,
    sigma: &ScalarField,
    h: &ScalarField,
    exc: &Excitation,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    h.check_mesh(mesh)?;
    let v = forward_op(mesh, sigma, exc, opts)?;
    let e = field_strength(mesh, &v.values, exc);
    let s = fem::nodes_to_triangles(mesh, &sigma.values);
    let ht = fem::nodes_to_triangles(mesh, &h.values);
    // flux load is formed as C q with C = σ, so divide it out
    let q: Vec<[f64; 2]> = (0..mesh.num_triangles())
        .map(|t| [ht[t] * e[t][0] / s[t], ht[t] * e[t][1] / s[t]])
        .collect();
    let sys = fem::assemble_elliptic(
        mesh,
        Coefficient::Nodal(&sigma.values),
        &q,
        BoundaryCondition::Natural,
    )?;
    let (dq, _) = solve(&sys, opts)?;
    Ok(ScalarField::new(ScalarRole::Potential, dq))
}

fn check(mesh: &Mesh, sigma: &ScalarField, data: &[Measurement]) -> Result<()> {
    sigma.check_mesh(mesh)?;
    if data.is_empty() {
        return Err(MatmiError::Usage(
            "at least one measured current is required".into(),
        ));
    }
    for m in data {
        m.current.check_mesh(mesh)?;
    }
    Ok(())
}

/// Residual current `σ (grad F + A) - J` and field strength for one excitation.
fn residual(
    mesh: &Mesh,
    sigma: &ScalarField,
    m: &Measurement,
    opts: &SolverOptions,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let v = forward_op(mesh, sigma, &m.excitation, opts)?;
    let e = field_strength(mesh, &v.values, &m.excitation);
    let s = fem::nodes_to_triangles(mesh, &sigma.values);
    let r = (0..mesh.num_triangles())
        .map(|t| {
            [
                s[t] * e[t][0] - m.current.values[t][0],
                s[t] * e[t][1] - m.current.values[t][1],
            ]
        })
        .collect();
    Ok((r, e))
}

/// `½ Σ_i ∫ |σ (grad F⁽ⁱ⁾ + A⁽ⁱ⁾) - J_i|²`.
pub fn misfit(
    mesh: &Mesh,
    sigma: &ScalarField,
    data: &[Measurement],
    opts: &SolverOptions,
) -> Result<f64> {
    check(mesh, sigma, data)?;
    let mut total = 0.0;
    for m in data {
        let (r, _) = residual(mesh, sigma, m, opts)?;
        total += 0.5 * fem::vector_l2_inner(mesh, &r, &r);
    }
    Ok(total)
}

/// Gradient of the discrete misfit as a nodal field `g` with
/// `⟨dJ, h⟩ = Σ_i m_i g_i h_i` (lumped-mass Riesz representative).
///
/// Per triangle the density is `r·E + grad s·E`, where `r = σE - J`,
/// `E = grad F + A`, and the adjoint `s` solves `K(σ) s = -ℓ` with
/// `ℓ_i = ∫ σ r·grad φ_i`.
pub fn misfit_gradient(
    mesh: &Mesh,
    sigma: &ScalarField,
    data: &[Measurement],
    opts: &SolverOptions,
) -> Result<ScalarField> {
    check(mesh, sigma, data)?;
    let mut density = vec![0.0; mesh.num_triangles()];
    for m in data {
        let (r, e) = residual(mesh, sigma, m, opts)?;
        let s_adj = adjoint_state(mesh, sigma, &r, opts)?;
        let gs = fem::gradient(mesh, &s_adj);
        for t in 0..mesh.num_triangles() {
            density[t] += (r[t][0] + gs[t][0]) * e[t][0] + (r[t][1] + gs[t][1]) * e[t][1];
        }
    }
    let mut g = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let c = mesh.area(t) * density[t] / 3.0;
        for &i in tri {
            g[i] += c;
        }
    }
    for (gi, m) in g.iter_mut().zip(mesh.lumped_mass()) {
        *gi /= m;
    }
    Ok(ScalarField::new(ScalarRole::Conductivity, g))
}

/// Solves `K(σ) s = -ℓ`, `ℓ_i = ∫ σ r·grad φ_i`, with zero mean.
fn adjoint_state(
    mesh: &Mesh,
    sigma: &ScalarField,
    r: &[[f64; 2]],
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    // flux load gives b_i = -∫ σ q·grad φ_i, which is -ℓ for q = r
    let sys = fem::assemble_elliptic(
        mesh,
        Coefficient::Nodal(&sigma.values),
        r,
        BoundaryCondition::Natural,
    )?;
    Ok(solve(&sys, opts)?.0)
}

/// Both sides of the adjoint identity
/// `∫ σ r·grad(F'[σ]h) = ∫ h grad s·E` for one excitation.
pub fn adjoint_identity_sides(
    mesh: &Mesh,
    sigma: &ScalarField,
    h: &ScalarField,
    data: &Measurement,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    check(mesh, sigma, std::slice::from_ref(data))?;
    h.check_mesh(mesh)?;
    let (r, e) = residual(mesh, sigma, data, opts)?;
    let dq = frechet_derivative(mesh, sigma, h, &data.excitation, opts)?;
    let gq = fem::gradient(mesh, &dq.values);
    let s_adj = adjoint_state(mesh, sigma, &r, opts)?;
    let gs = fem::gradient(mesh, &s_adj);
    let st = fem::nodes_to_triangles(mesh, &sigma.values);
    let ht = fem::nodes_to_triangles(mesh, &h.values);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let a = mesh.area(t);
        lhs += a * st[t] * (r[t][0] * gq[t][0] + r[t][1] * gq[t][1]);
        rhs += a * ht[t] * (gs[t][0] * e[t][0] + gs[t][1] * e[t][1]);
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use crate::forward::{forward_current, Inclusion, PhantomSpec};
    use crate::geometry::Ellipse;
    use crate::mesh::build_ellipse_mesh;

    fn setup(h: f64) -> (Mesh, ScalarField, Measurement) {
        let e = Ellipse::new(2.0, 1.0).unwrap();
        let mesh = build_ellipse_mesh(&e, h).unwrap();
        let spec = PhantomSpec {
            sigma0: 1.0,
            lower: 0.5,
            upper: 4.0,
            guard_band: 0.1,
            inclusions: vec![Inclusion {
                center: [0.6, 0.1],
                radius: 0.5,
                amplitude: 1.0,
                exponent: 2.0,
            }],
        };
        let sigma = crate::forward::evaluate_phantom(&spec, &e, &mesh).unwrap();
        let exc = Excitation::reference();
        let (_, j) = forward_current(&mesh, &sigma, &exc, &SolverOptions::default()).unwrap();
        (
            mesh,
            sigma,
            Measurement {
                excitation: exc,
                current: j,
            },
        )
    }

    fn smooth(mesh: &Mesh, k: f64) -> ScalarField {
        ScalarField::from_fn(mesh, ScalarRole::Conductivity, |p| {
            (k * p[0]).sin() * (1.0 + p[1]) + 0.3
        })
    }

    #[test]
    fn derivative_vanishes_for_zero_direction() {
        let (m, s, d) = setup(0.2);
        let h = ScalarField::new(ScalarRole::Conductivity, vec![0.0; m.num_nodes()]);
        let q = frechet_derivative(&m, &s, &h, &d.excitation, &SolverOptions::default()).unwrap();
        assert!(q.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn taylor_remainder_is_second_order() {
        let (m, s, d) = setup(0.15);
        let opts = SolverOptions {
            tol: 1e-13,
            ..SolverOptions::default()
        };
        let h = smooth(&m, 1.3);
        let f0 = forward_op(&m, &s, &d.excitation, &opts).unwrap();
        let q = frechet_derivative(&m, &s, &h, &d.excitation, &opts).unwrap();
        let mut rem = Vec::new();
        for t in [1e-2, 1e-3] {
            let st = ScalarField::new(
                ScalarRole::Conductivity,
                s.values
                    .iter()
                    .zip(&h.values)
                    .map(|(a, b)| a + t * b)
                    .collect(),
            );
            let ft = forward_op(&m, &st, &d.excitation, &opts).unwrap();
            let r: Vec<f64> = (0..m.num_nodes())
                .map(|i| ft.values[i] - f0.values[i] - t * q.values[i])
                .collect();
            rem.push(fem::l2_norm(&m, &r));
        }
        let order = (rem[0] / rem[1]).log10();
        assert!(order > 1.9, "{rem:?}");
    }

    #[test]
    fn misfit_vanishes_at_truth() {
        let (m, s, d) = setup(0.15);
        let j0 = misfit(&m, &s, std::slice::from_ref(&d), &SolverOptions::default()).unwrap();
        let norm = fem::vector_l2_norm(&m, &d.current.values);
        assert!(j0 < 1e-14 * norm * norm, "{j0}");
    }

    #[test]
    fn misfit_zero_for_zero_data() {
        let (m, s, _) = setup(0.3);
        let exc = Excitation {
            potential: crate::forward::VectorPotential::ZERO,
            ..Excitation::reference()
        };
        let d = Measurement {
            excitation: exc,
            current: VectorField::new(
                crate::field::VectorRole::Current,
                vec![[0.0; 2]; m.num_triangles()],
            ),
        };
        assert_eq!(
            misfit(&m, &s, &[d], &SolverOptions::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (m, _, d) = setup(0.2);
        let opts = SolverOptions {
            tol: 1e-13,
            ..SolverOptions::default()
        };
        let s = ScalarField::new(ScalarRole::Conductivity, vec![1.5; m.num_nodes()]);
        let g = misfit_gradient(&m, &s, std::slice::from_ref(&d), &opts).unwrap();
        for k in [0.7, 2.1] {
            let h = smooth(&m, k);
            let dir: f64 = (0..m.num_nodes())
                .map(|i| m.lumped_mass()[i] * g.values[i] * h.values[i])
                .sum();
            let t = 1e-4;
            let shift = |sgn: f64| {
                ScalarField::new(
                    ScalarRole::Conductivity,
                    s.values
                        .iter()
                        .zip(&h.values)
                        .map(|(a, b)| a + sgn * t * b)
                        .collect(),
                )
            };
            let jp = misfit(&m, &shift(1.0), std::slice::from_ref(&d), &opts).unwrap();
            let jm = misfit(&m, &shift(-1.0), std::slice::from_ref(&d), &opts).unwrap();
            let fd = (jp - jm) / (2.0 * t);
            assert!((dir - fd).abs() < 1e-6 * fd.abs(), "{dir} vs {fd}");
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let (m, _, d) = setup(0.2);
        let opts = SolverOptions {
            tol: 1e-13,
            ..SolverOptions::default()
        };
        let s = smooth(&m, 0.4);
        let s = ScalarField::new(
            ScalarRole::Conductivity,
            s.values.iter().map(|v| v + 1.5).collect(),
        );
        let h = smooth(&m, 1.9);
        let (a, b) = adjoint_identity_sides(&m, &s, &h, &d, &opts).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
    }
}
