use crate::error::{MatmiError, Result};
use crate::mesh::Mesh;
use serde::{Deserialize, Serialize};

/// Quadratic polynomial vector potential. Each component holds the
/// coefficients of `1, x, y, x², xy, y²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorPotential {
    pub ax: [f64; 6],
    pub ay: [f64; 6],
}

fn poly(c: &[f64; 6], p: [f64; 2]) -> f64 {
    let (x, y) = (p[0], p[1]);
    c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
}

impl VectorPotential {
    pub const ZERO: VectorPotential = VectorPotential {
        ax: [0.0; 6],
        ay: [0.0; 6],
    };

    /// `10⁻² (y/2 + 1, -x/2 + 1)`, a uniform field plus a constant gradient.
    pub fn reference() -> Self {
        Self {
            ax: [1e-2, 0.0, 0.5e-2, 0.0, 0.0, 0.0],
            ay: [1e-2, -0.5e-2, 0.0, 0.0, 0.0, 0.0],
        }
    }

    /// `c (-y, x)`, whose curl is `2c`.
    pub fn rotation(c: f64) -> Self {
        Self {
            ax: [0.0, 0.0, -c, 0.0, 0.0, 0.0],
            ay: [0.0, c, 0.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        [poly(&self.ax, p), poly(&self.ay, p)]
    }

    /// Coefficients of the divergence `d0 + d1 x + d2 y`.
    pub fn divergence_coefficients(&self) -> [f64; 3] {
        let (a, b) = (&self.ax, &self.ay);
        [a[1] + b[2], 2.0 * a[3] + b[4], a[4] + 2.0 * b[5]]
    }

    /// Scalar curl `∂x Ay - ∂y Ax`, i.e. the induced magnetic field.
    pub fn curl(&self, p: [f64; 2]) -> f64 {
        let (a, b) = (&self.ax, &self.ay);
        (b[1] + 2.0 * b[3] * p[0] + b[4] * p[1]) - (a[2] + a[4] * p[0] + 2.0 * a[5] * p[1])
    }

    pub fn is_zero(&self) -> bool {
        self.ax.iter().chain(self.ay.iter()).all(|&c| c == 0.0)
    }

    /// Exact triangle averages, using the edge-midpoint rule.
    pub fn triangle_averages(&self, mesh: &Mesh) -> Vec<[f64; 2]> {
        mesh.triangles()
            .iter()
            .map(|tri| {
                let mut s = [0.0, 0.0];
                for k in 0..3 {
                    let p = mesh.nodes()[tri[k]];
                    let q = mesh.nodes()[tri[(k + 1) % 3]];
                    let v = self.eval([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                    s[0] += v[0] / 3.0;
                    s[1] += v[1] / 3.0;
                }
                s
            })
            .collect()
    }
}

/// Uniformly sampled pulse `u(t)` on `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub duration: f64,
    pub samples: Vec<f64>,
}

impl Pulse {
    /// Smooth ramp `sin²(πt / 2T)` rising from 0 to 1.
    pub fn smooth_ramp(duration: f64, n: usize) -> Self {
        let n = n.max(2);
        let samples = (0..n)
            .map(|k| {
                let s = (std::f64::consts::FRAC_PI_2 * k as f64 / (n - 1) as f64).sin();
                s * s
            })
            .collect();
        Self { duration, samples }
    }

    /// `u(T) - u(0)`.
    pub fn amplitude(&self) -> f64 {
        self.samples.last().copied().unwrap_or(0.0) - self.samples.first().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub potential: VectorPotential,
    /// Magnitude of the static field along e3.
    pub b0: f64,
    pub pulse: Pulse,
}

impl Excitation {
    pub fn new(potential: VectorPotential, b0: f64, pulse: Pulse) -> Result<Self> {
        let e = Self {
            potential,
            b0,
            pulse,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.potential.divergence_coefficients();
        let scale = self
            .potential
            .ax
            .iter()
            .chain(self.potential.ay.iter())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        if d.iter()
            .any(|c| c.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
        {
            return Err(MatmiError::Parameter(
                "vector potential is not divergence free".into(),
            ));
        }
        if !(self.pulse.duration > 0.0) || self.pulse.samples.len() < 2 {
            return Err(MatmiError::Parameter(
                "pulse needs a positive duration and at least two samples".into(),
            ));
        }
        if self.pulse.amplitude() == 0.0 || !self.pulse.amplitude().is_finite() {
            return Err(MatmiError::Parameter(
                "degenerate pulse: u(T) equals u(0)".into(),
            ));
        }
        if !self.b0.is_finite() {
            return Err(MatmiError::Parameter("static field must be finite".into()));
        }
        Ok(())
    }

    pub fn reference() -> Self {
        Self {
            potential: VectorPotential::reference(),
            b0: 1.0,
            pulse: Pulse::smooth_ramp(1.0, 65),
        }
    }

    /// Factor `|B0| (u(T) - u(0))` linking the curl of J to the acoustic source.
    pub fn source_factor(&self) -> f64 {
        self.b0.abs() * self.pulse.amplitude()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_potential_is_gauge_free_with_constant_curl() {
        let a = VectorPotential::reference();
        assert_eq!(a.divergence_coefficients(), [0.0, 0.0, 0.0]);
        for p in [[0.0, 0.0], [1.3, -0.4], [-1.9, 0.2]] {
            assert!((a.curl(p) + 1e-2).abs() < 1e-15);
        }
        let v = a.eval([2.0, 2.0]);
        assert!((v[0] - 2e-2).abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn divergent_potential_rejected() {
        let a = VectorPotential {
            ax: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            ay: [0.0; 6],
        };
        assert!(Excitation::new(a, 1.0, Pulse::smooth_ramp(1.0, 10)).is_err());
    }

    #[test]
    fn flat_pulse_rejected() {
        let p = Pulse {
            duration: 1.0,
            samples: vec![0.3, 0.7, 0.3],
        };
        assert!(Excitation::new(VectorPotential::reference(), 1.0, p).is_err());
    }

    #[test]
    fn ramp_endpoints() {
        let p = Pulse::smooth_ramp(2.0, 33);
        assert_eq!(p.samples[0], 0.0);
        assert!((p.amplitude() - 1.0).abs() < 1e-15);
    }
}
