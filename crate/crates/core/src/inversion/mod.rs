//! Conductivity reconstruction from interior current data.
//!
//! Three methods are provided: projected gradient descent on the current
//! misfit (`optimal_control_invert`), a clamped fixed-point iteration
//! (`fixed_point_invert`) and the orthogonal-field method with vanishing
//! viscosity followed by a rescale (`orthogonal_field_invert`).

mod fixed_point;
mod misfit;
mod optimal_control;
mod orthogonal;

pub use fixed_point::{fixed_point_invert, fixed_point_update, gaussian_smooth, FixedPointStep};
pub use misfit::{adjoint_identity_sides, forward_op, frechet_derivative, misfit, misfit_gradient};
pub use optimal_control::{nonparallel_margin, optimal_control_invert};
pub use orthogonal::{
    orthogonal_field, orthogonal_field_invert, reference_region, rescale,
    resistivity_from_potential, viscosity_solve, Resistivity,
};

use crate::error::{MatmiError, Result};
use crate::fem;
use crate::field::{ScalarField, VectorField};
use crate::forward::Excitation;
use crate::mesh::Mesh;
use crate::sparse::SolverOptions;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// A measured current together with the excitation that produced it.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub excitation: Excitation,
    pub current: VectorField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[serde(alias = "oc")]
    OptimalControl,
    #[serde(alias = "fp")]
    FixedPoint,
    #[serde(alias = "of")]
    OrthogonalField,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::OptimalControl => "optimal-control",
            Algorithm::FixedPoint => "fixed-point",
            Algorithm::OrthogonalField => "orthogonal-field",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Algorithm::OptimalControl => "oc",
            Algorithm::FixedPoint => "fp",
            Algorithm::OrthogonalField => "of",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Algorithm::OptimalControl,
            Algorithm::FixedPoint,
            Algorithm::OrthogonalField,
        ]
        .into_iter()
        .find(|a| a.tag() == s || a.short() == s)
    }
}

/// Where σ is assumed known: all nodes within `width` of the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRegion {
    pub width: f64,
    pub sigma0: f64,
}

impl Default for ReferenceRegion {
    fn default() -> Self {
        Self {
            width: 0.1,
            sigma0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub algorithm: Algorithm,
    /// Lower clamp bound `a`.
    pub lower: f64,
    /// Upper clamp bound `b`.
    pub upper: f64,
    pub step_size: f64,
    /// Defaults to 50 for optimal control and 9 for the fixed point.
    pub max_iter: Option<usize>,
    /// Constant initial guess; defaults to 3 for optimal control and 1 for the fixed point.
    pub initial: Option<f64>,
    pub viscosity: f64,
    /// Fraction of `max |J|` below which the current is treated as unreliable.
    pub current_floor: f64,
    /// Gaussian smoothing width in units of the mean edge length.
    pub smoothing_width: f64,
    pub reference: ReferenceRegion,
    /// Relative update norm that stops the iterative methods.
    pub tol: f64,
    /// Halve the step whenever the misfit would increase.
    pub backtracking: bool,
    pub solver: SolverOptions,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::OrthogonalField,
            lower: 0.5,
            upper: 5.0,
            step_size: 8e-7,
            max_iter: None,
            initial: None,
            viscosity: 5e-4,
            current_floor: 0.05,
            smoothing_width: 2.0,
            reference: ReferenceRegion::default(),
            tol: 1e-6,
            backtracking: false,
            solver: SolverOptions::default(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MatmiError::Parameter(m));
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper.is_finite()) {
            return bad(format!(
                "clamp bounds must satisfy 0 < a < b, got a = {}, b = {}",
                self.lower, self.upper
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!(
                "step size must be positive, got {}",
                self.step_size
            ));
        }
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return bad(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            ));
        }
        if !(self.current_floor > 0.0 && self.current_floor < 1.0) {
            return bad(format!(
                "current floor must lie in (0, 1), got {}",
                self.current_floor
            ));
        }
        if !(self.smoothing_width >= 0.0 && self.smoothing_width.is_finite()) {
            return bad("smoothing width must be non-negative".into());
        }
        if !(self.reference.width >= 0.0 && self.reference.sigma0 > 0.0) {
            return bad("reference region needs a non-negative width and a positive σ0".into());
        }
        if !(self.tol >= 0.0) {
            return bad("tolerance must be non-negative".into());
        }
        if let Some(s0) = self.initial {
            if !(s0 > 0.0 && s0.is_finite()) {
                return bad(format!("initial guess must be positive, got {s0}"));
            }
        }
        if self.max_iter == Some(0) {
            return bad("iteration cap must be at least 1".into());
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.max_iter.unwrap_or(match self.algorithm {
            Algorithm::FixedPoint => 9,
            _ => 50,
        })
    }

    pub fn initial_guess(&self) -> f64 {
        self.initial.unwrap_or(match self.algorithm {
            Algorithm::FixedPoint => 1.0,
            _ => 3.0,
        })
    }

    /// `T[f] = min(max(f, a), b)`.
    pub fn clamp(&self, v: &mut [f64]) {
        clamp(v, self.lower, self.upper);
    }
}

pub fn clamp(v: &mut [f64], a: f64, b: f64) {
    for x in v {
        *x = x.max(a).min(b);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub algorithm: Algorithm,
    pub params: InversionConfig,
    pub iterations: usize,
    /// Misfit after each iteration.
    pub misfit_history: Vec<f64>,
    /// Relative L2 change of σ in each iteration.
    pub update_history: Vec<f64>,
    pub final_error: Option<f64>,
    pub wall_ms: u64,
    pub notes: Vec<String>,
}

impl ReconstructionReport {
    pub(crate) fn new(cfg: &InversionConfig) -> Self {
        Self {
            algorithm: cfg.algorithm,
            params: cfg.clone(),
            iterations: 0,
            misfit_history: Vec::new(),
            update_history: Vec::new(),
            final_error: None,
            wall_ms: 0,
            notes: Vec::new(),
        }
    }
}

/// `‖σ_rec - σ_true‖ / ‖σ_true‖` in L2.
pub fn relative_error(mesh: &Mesh, rec: &ScalarField, truth: &ScalarField) -> Result<f64> {
    rec.check_mesh(mesh)?;
    truth.check_mesh(mesh)?;
    let norm = fem::l2_norm(mesh, &truth.values);
    if norm == 0.0 {
        return Err(MatmiError::Data("reference field has zero norm".into()));
    }
    let d: Vec<f64> = rec
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| a - b)
        .collect();
    Ok(fem::l2_norm(mesh, &d) / norm)
}

/// Runs the configured algorithm; `truth`, when given, fills in the final error.
pub fn invert(
    mesh: &Mesh,
    data: &[Measurement],
    cfg: &InversionConfig,
    truth: Option<&ScalarField>,
) -> Result<(ScalarField, ReconstructionReport)> {
    let start = Instant::now();
    let (sigma, mut report) = match cfg.algorithm {
        Algorithm::OptimalControl => optimal_control_invert(mesh, data, cfg)?,
        Algorithm::FixedPoint => {
            let m = data
                .first()
                .ok_or_else(|| MatmiError::Usage("no measured current".into()))?;
            fixed_point_invert(mesh, m, cfg)?
        }
        Algorithm::OrthogonalField => {
            let m = data
                .first()
                .ok_or_else(|| MatmiError::Usage("no measured current".into()))?;
            orthogonal_field_invert(mesh, m, cfg)?
        }
    };
    if let Some(t) = truth {
        report.final_error = Some(relative_error(mesh, &sigma, t)?);
    }
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok((sigma, report))
}

/// Mean edge length, the unit for smoothing widths.
pub fn mean_edge_length(mesh: &Mesh) -> f64 {
    let p = mesh.nodes();
    let total: f64 = mesh
        .triangles()
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
        .map(|(i, j)| (p[i][0] - p[j][0]).hypot(p[i][1] - p[j][1]))
        .sum();
    total / (3 * mesh.num_triangles()) as f64
}

pub(crate) fn relative_change(mesh: &Mesh, new: &[f64], old: &[f64]) -> f64 {
    let d: Vec<f64> = new.iter().zip(old).map(|(a, b)| a - b).collect();
    fem::l2_norm(mesh, &d) / fem::l2_norm(mesh, old).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ellipse;
    use crate::mesh::build_ellipse_mesh;
    use proptest::prelude::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = InversionConfig {
            algorithm: Algorithm::FixedPoint,
            max_iter: Some(4),
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: InversionConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let short: InversionConfig = toml::from_str("algorithm = \"oc\"").unwrap();
        assert_eq!(short.algorithm, Algorithm::OptimalControl);
        assert_eq!(short.iterations(), 50);
        assert_eq!(short.initial_guess(), 3.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = InversionConfig::default();
        for cfg in [
            InversionConfig {
                lower: 2.0,
                upper: 1.0,
                ..base.clone()
            },
            InversionConfig {
                lower: 0.0,
                ..base.clone()
            },
            InversionConfig {
                step_size: 0.0,
                ..base.clone()
            },
            InversionConfig {
                viscosity: -1.0,
                ..base.clone()
            },
            InversionConfig {
                current_floor: 0.0,
                ..base.clone()
            },
            InversionConfig {
                max_iter: Some(0),
                ..base.clone()
            },
        ] {
            assert!(
                matches!(cfg.validate(), Err(MatmiError::Parameter(_))),
                "{cfg:?}"
            );
        }
        assert!(base.validate().is_ok());
    }

    #[test]
    fn relative_error_homogeneous() {
        let m = build_ellipse_mesh(&Ellipse::new(2.0, 1.0).unwrap(), 0.2).unwrap();
        let t = ScalarField::from_fn(&m, crate::field::ScalarRole::Conductivity, |p| {
            1.0 + p[0] * p[0]
        });
        assert_eq!(relative_error(&m, &t, &t).unwrap(), 0.0);
        let r = ScalarField::new(t.role, t.values.iter().map(|v| 1.1 * v).collect());
        assert!((relative_error(&m, &r, &t).unwrap() - 0.1).abs() < 1e-12);
        let z = ScalarField::new(t.role, vec![0.0; m.num_nodes()]);
        assert!(matches!(
            relative_error(&m, &t, &z),
            Err(MatmiError::Data(_))
        ));
    }

    #[test]
    fn relative_error_matches_dense_midpoint_rule() {
        let m = build_ellipse_mesh(&Ellipse::new(2.0, 1.0).unwrap(), 0.15).unwrap();
        let t = ScalarField::from_fn(&m, crate::field::ScalarRole::Conductivity, |p| {
            2.0 + p[0].sin() * p[1]
        });
        let r = ScalarField::from_fn(&m, crate::field::ScalarRole::Conductivity, |p| {
            2.1 + p[1] * p[1]
        });
        // centroid rule on n² sub-triangles per element; the integrands are
        // quadratic, so the rule's error is exactly C/n² and one Richardson
        // step removes it
        let sums = |n: usize| {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, tri) in m.triangles().iter().enumerate() {
                let sub = m.area(k) / (n * n) as f64;
                for i in 0..n {
                    for j in 0..n - i {
                        let mut cents = vec![[i as f64 + 1.0 / 3.0, j as f64 + 1.0 / 3.0]];
                        if i + j + 1 < n {
                            cents.push([i as f64 + 2.0 / 3.0, j as f64 + 2.0 / 3.0]);
                        }
                        for c in cents {
                            let (l1, l2) = (c[0] / n as f64, c[1] / n as f64);
                            let lam = [1.0 - l1 - l2, l1, l2];
                            let val = |f: &ScalarField| {
                                (0..3).map(|a| lam[a] * f.values[tri[a]]).sum::<f64>()
                            };
                            let (rv, tv) = (val(&r), val(&t));
                            num += sub * (rv - tv).powi(2);
                            den += sub * tv * tv;
                        }
                    }
                }
            }
            (num, den)
        };
        let (n1, d1) = sums(4);
        let (n2, d2) = sums(8);
        let (num, den) = ((4.0 * n2 - n1) / 3.0, (4.0 * d2 - d1) / 3.0);
        let oracle = (num / den).sqrt();
        let got = relative_error(&m, &r, &t).unwrap();
        assert!((got - oracle).abs() < 1e-6 * oracle, "{got} vs {oracle}");
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent_and_bounded(v in proptest::collection::vec(-10.0f64..10.0, 1..50), a in 0.1f64..2.0, w in 0.1f64..5.0) {
            let b = a + w;
            let mut once = v.clone();
            clamp(&mut once, a, b);
            let mut twice = once.clone();
            clamp(&mut twice, a, b);
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.iter().all(|&x| x >= a && x <= b));
            for (x, y) in v.iter().zip(&once) {
                if *x >= a && *x <= b {
                    prop_assert_eq!(x, y);
                }
            }
        }
    }
}
