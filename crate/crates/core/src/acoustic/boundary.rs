use super::kernel::green_normal_derivative;
use crate::error::{MatmiError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Midpoint quadrature on a closed counter-clockwise sensor polygon.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub points: Vec<[f64; 2]>,
    /// Outward unit normals.
    pub normals: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl BoundaryQuadrature {
    pub fn from_closed_curve(points: &[[f64; 2]]) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(MatmiError::Data(
                "need at least three boundary points".into(),
            ));
        }
        let signed: f64 = (0..n)
            .map(|i| {
                let (p, q) = (points[i], points[(i + 1) % n]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum();
        if !(signed > 0.0) {
            return Err(MatmiError::Data(
                "boundary points must run counter-clockwise".into(),
            ));
        }
        let mut normals = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        for i in 0..n {
            let a = points[(i + n - 1) % n];
            let b = points[i];
            let c = points[(i + 1) % n];
            let t = [c[0] - a[0], c[1] - a[1]];
            let tl = t[0].hypot(t[1]);
            normals.push([t[1] / tl, -t[0] / tl]);
            let lab = (b[0] - a[0]).hypot(b[1] - a[1]);
            let lbc = (c[0] - b[0]).hypot(c[1] - b[1]);
            weights.push(0.5 * (lab + lbc));
            let cross = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            curvature.push(2.0 * cross / (lab * lbc * tl));
        }
        Ok(Self {
            points: points.to_vec(),
            normals,
            weights,
            curvature,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest distance from `z` to the polygon, negative outside.
    pub fn signed_distance(&self, z: [f64; 2]) -> f64 {
        let n = self.len();
        let mut d = f64::INFINITY;
        let mut winding = 0i32;
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let az = [z[0] - a[0], z[1] - a[1]];
            let t =
                ((az[0] * ab[0] + az[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
            d = d.min((az[0] - t * ab[0]).hypot(az[1] - t * ab[1]));
            let cross = ab[0] * az[1] - ab[1] * az[0];
            if a[1] <= z[1] {
                if b[1] > z[1] && cross > 0.0 {
                    winding += 1;
                }
            } else if b[1] <= z[1] && cross < 0.0 {
                winding -= 1;
            }
        }
        if winding != 0 {
            d
        } else {
            -d
        }
    }

    pub fn spacing(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.len() as f64
    }
}

/// Applies `(½ I + K*)` at wavenumber `k`. The smooth kernel's diagonal limit
/// `κ / 4π` is used on the self term.
pub fn half_plus_kstar(
    quad: &BoundaryQuadrature,
    k: f64,
    g: &[Complex64],
) -> Result<Vec<Complex64>> {
    if g.len() != quad.len() {
        return Err(MatmiError::Usage(
            "boundary data length does not match the quadrature".into(),
        ));
    }
    let n = quad.len();
    Ok((0..n)
        .map(|i| {
            let mut s = g[i] * (0.5 + quad.curvature[i] / (4.0 * PI) * quad.weights[i]);
            for j in 0..n {
                if j != i {
                    s +=
                        green_normal_derivative(k, quad.points[i], quad.points[j], quad.normals[i])
                            * (g[j] * quad.weights[j]);
                }
            }
            s
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::kernel::hankel0;

    fn circle(n: usize, r: f64) -> BoundaryQuadrature {
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        BoundaryQuadrature::from_closed_curve(&pts).unwrap()
    }

    #[test]
    fn geometry_of_circle() {
        let q = circle(200, 1.5);
        let per: f64 = q.weights.iter().sum();
        assert!((per - 3.0 * PI).abs() < 1e-3);
        for (p, (n, k)) in q.points.iter().zip(q.normals.iter().zip(&q.curvature)) {
            assert!((p[0] / 1.5 - n[0]).abs() < 1e-12 && (p[1] / 1.5 - n[1]).abs() < 1e-12);
            assert!((k - 1.0 / 1.5).abs() < 1e-4);
        }
        assert!((q.signed_distance([0.0, 0.0]) - 1.5).abs() < 1e-3);
        assert!(q.signed_distance([2.0, 0.0]) < 0.0);
    }

    #[test]
    fn static_limit_matches_laplace_double_layer() {
        // dense oracle: (1/2π) ∮ (x - y)·ν_x / |x - y|² ds(y) evaluated with many points
        let q = circle(128, 1.0);
        let ones = vec![Complex64::new(1.0, 0.0); q.len()];
        let out = half_plus_kstar(&q, 1e-7, &ones).unwrap();
        let x = q.points[5];
        let nu = q.normals[5];
        let m = 20_000;
        let mut oracle = 0.5;
        for j in 0..m {
            let t = 2.0 * PI * (j as f64 + 0.25) / m as f64;
            let y = [t.cos(), t.sin()];
            let d = [x[0] - y[0], x[1] - y[1]];
            oracle += (d[0] * nu[0] + d[1] * nu[1]) / (d[0] * d[0] + d[1] * d[1]) / (2.0 * PI)
                * (2.0 * PI / m as f64);
        }
        // chord weights on a 128-gon carry an O(h²) quadrature error
        assert!((out[5].re - oracle).abs() < 2e-4, "{} vs {oracle}", out[5]);
        assert!(out[5].im.abs() < 1e-6);
    }

    #[test]
    fn maps_cavity_data_to_free_space_data() {
        // disk of radius R, point source at the centre: the Dirichlet Green
        // function's normal derivative maps to the free-space one
        let r0 = 1.0;
        let k = 4.3;
        let q = circle(256, r0);
        let h1 = |x: f64| Complex64::new(puruspe::Jn(1, x), puruspe::Yn(1, x));
        let i = Complex64::i();
        let cavity = i / 4.0 * k * h1(k * r0)
            - i / 4.0 * hankel0(k * r0) / puruspe::Jn(0, k * r0) * k * puruspe::Jn(1, k * r0);
        let free = i / 4.0 * k * h1(k * r0);
        let out = half_plus_kstar(&q, k, &vec![cavity; q.len()]).unwrap();
        for v in &out {
            assert!((v - free).norm() < 1e-3 * free.norm(), "{v} vs {free}");
        }
    }

    #[test]
    fn linear_in_data() {
        let q = circle(40, 1.0);
        let a: Vec<Complex64> = (0..40)
            .map(|k| Complex64::new((k as f64).sin(), 0.3))
            .collect();
        let b: Vec<Complex64> = (0..40)
            .map(|k| Complex64::new(0.1, (k as f64).cos()))
            .collect();
        let s: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (oa, ob, os) = (
            half_plus_kstar(&q, 2.0, &a).unwrap(),
            half_plus_kstar(&q, 2.0, &b).unwrap(),
            half_plus_kstar(&q, 2.0, &s).unwrap(),
        );
        for i in 0..40 {
            assert!((os[i] - oa[i] - ob[i]).norm() < 1e-12);
        }
        let zero = half_plus_kstar(&q, 2.0, &vec![Complex64::new(0.0, 0.0); 40]).unwrap();
        assert!(zero.iter().all(|v| v.norm() == 0.0));
    }
}
