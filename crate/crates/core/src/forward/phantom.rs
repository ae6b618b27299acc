use crate::error::{MatmiError, Result};
use crate::field::{ScalarField, ScalarRole};
use crate::geometry::Ellipse;
use crate::mesh::Mesh;
use serde::{Deserialize, Serialize};

/// Smooth bump `amplitude * max(0, 1 - (r/radius)^2)^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    2.0
}

impl Inclusion {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        let r2 = ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2))
            / (self.radius * self.radius);
        if r2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - r2).powf(self.exponent)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub sigma0: f64,
    /// Lower clamp bound.
    pub lower: f64,
    /// Upper clamp bound.
    pub upper: f64,
    pub guard_band: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

impl PhantomSpec {
    /// Background 2 on the 2 × 1 ellipse with one conducting and one resistive
    /// smooth inclusion; values span roughly [1.2, 3.5].
    pub fn reference() -> Self {
        Self {
            sigma0: 2.0,
            lower: 0.5,
            upper: 5.0,
            guard_band: 0.1,
            inclusions: vec![
                Inclusion {
                    center: [0.9, 0.1],
                    radius: 0.5,
                    amplitude: 1.5,
                    exponent: 2.0,
                },
                Inclusion {
                    center: [-0.9, -0.1],
                    radius: 0.45,
                    amplitude: -0.8,
                    exponent: 2.0,
                },
            ],
        }
    }

    pub fn validate(&self, domain: &Ellipse) -> Result<()> {
        if !(self.lower > 0.0 && self.lower < self.upper) {
            return Err(MatmiError::Parameter(format!(
                "clamp bounds must satisfy 0 < a < b, got a = {}, b = {}",
                self.lower, self.upper
            )));
        }
        if !(self.sigma0 >= self.lower && self.sigma0 <= self.upper) {
            return Err(MatmiError::Parameter(format!(
                "background {} outside [a, b]",
                self.sigma0
            )));
        }
        if !(self.guard_band >= 0.0) {
            return Err(MatmiError::Parameter(
                "guard band must be non-negative".into(),
            ));
        }
        for (k, inc) in self.inclusions.iter().enumerate() {
            if !(inc.radius > 0.0 && inc.exponent > 0.0 && inc.amplitude.is_finite()) {
                return Err(MatmiError::Parameter(format!(
                    "inclusion {k} has invalid shape parameters"
                )));
            }
            if !domain.contains(inc.center)
                || domain.distance_to_boundary(inc.center) < inc.radius + self.guard_band
            {
                return Err(MatmiError::Parameter(format!(
                    "inclusion {k} overlaps the guard band"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        self.sigma0 + self.inclusions.iter().map(|inc| inc.value(p)).sum::<f64>()
    }
}

/// Evaluates the phantom at the mesh nodes and checks the clamp bounds.
pub fn evaluate_phantom(spec: &PhantomSpec, domain: &Ellipse, mesh: &Mesh) -> Result<ScalarField> {
    spec.validate(domain)?;
    let field = ScalarField::from_fn(mesh, ScalarRole::Conductivity, |p| spec.value(p));
    if let Some(v) = field
        .values
        .iter()
        .find(|&&v| v < spec.lower || v > spec.upper)
    {
        return Err(MatmiError::Parameter(format!(
            "phantom value {v} leaves the clamp bounds [{}, {}]",
            spec.lower, spec.upper
        )));
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ellipse_mesh;

    fn spec() -> PhantomSpec {
        PhantomSpec {
            sigma0: 1.0,
            lower: 0.5,
            upper: 3.0,
            guard_band: 0.15,
            inclusions: vec![
                Inclusion {
                    center: [-0.8, 0.1],
                    radius: 0.4,
                    amplitude: 1.0,
                    exponent: 2.0,
                },
                Inclusion {
                    center: [0.7, -0.2],
                    radius: 0.35,
                    amplitude: -0.4,
                    exponent: 2.0,
                },
            ],
        }
    }

    #[test]
    fn uniform_without_inclusions() {
        let e = Ellipse::new(2.0, 1.0).unwrap();
        let m = build_ellipse_mesh(&e, 0.2).unwrap();
        let s = PhantomSpec {
            inclusions: vec![],
            ..spec()
        };
        let f = evaluate_phantom(&s, &e, &m).unwrap();
        assert!(f.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bump_above_upper_bound_rejected() {
        let e = Ellipse::new(2.0, 1.0).unwrap();
        let m = build_ellipse_mesh(&e, 0.1).unwrap();
        let mut s = spec();
        s.inclusions[0].amplitude = 5.0;
        assert!(evaluate_phantom(&s, &e, &m).is_err());
    }

    #[test]
    fn guard_band_overlap_rejected() {
        let e = Ellipse::new(2.0, 1.0).unwrap();
        let mut s = spec();
        s.inclusions[0].center = [0.0, 0.7];
        assert!(s.validate(&e).is_err());
    }

    #[test]
    fn phantom_audit() {
        let e = Ellipse::new(2.0, 1.0).unwrap();
        let m = build_ellipse_mesh(&e, 0.05).unwrap();
        let s = spec();
        let f = evaluate_phantom(&s, &e, &m).unwrap();
        for (p, v) in m.nodes().iter().zip(&f.values) {
            assert!(*v >= s.lower && *v <= s.upper);
            if e.distance_to_boundary(*p) < s.guard_band || !e.contains(*p) {
                assert_eq!(*v, s.sigma0);
            }
        }
    }

    #[test]
    fn reference_phantom_fits_the_ellipse() {
        let e = Ellipse::new(2.0, 1.0).unwrap();
        let spec = PhantomSpec::reference();
        spec.validate(&e).unwrap();
        let m = build_ellipse_mesh(&e, 0.1).unwrap();
        let f = evaluate_phantom(&spec, &e, &m).unwrap();
        let (lo, hi) = f
            .values
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo > 1.1 && lo < 1.5 && hi > 3.2 && hi <= 3.5, "{lo} {hi}");
    }
}
