//! Ellipse geometry shared by the mesher, the wave solver and the sensor layout.

use crate::error::{ensure, Result};
use std::f64::consts::PI;

/// Axis-aligned ellipse `(x/a)^2 + (y/b)^2 < 1` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        ensure(a.is_finite() && a > 0.0, || {
            format!("semi-axis a must be positive, got {a}")
        })?;
        ensure(b.is_finite() && b > 0.0, || {
            format!("semi-axis b must be positive, got {b}")
        })?;
        Ok(Self { a, b })
    }

    pub fn level(&self, p: [f64; 2]) -> f64 {
        (p[0] / self.a).powi(2) + (p[1] / self.b).powi(2)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.level(p) < 1.0
    }

    pub fn point(&self, t: f64) -> [f64; 2] {
        [self.a * t.cos(), self.b * t.sin()]
    }

    /// Outward unit normal at parameter `t`.
    pub fn normal(&self, t: f64) -> [f64; 2] {
        let n = [self.b * t.cos(), self.a * t.sin()];
        let len = n[0].hypot(n[1]);
        [n[0] / len, n[1] / len]
    }

    fn speed(&self, t: f64) -> f64 {
        (self.a * t.sin()).hypot(self.b * t.cos())
    }

    fn arc_table(&self, m: usize) -> Vec<f64> {
        let dt = 2.0 * PI / m as f64;
        let mut s = vec![0.0; m + 1];
        for k in 0..m {
            let t0 = k as f64 * dt;
            // Simpson on each panel
            let f0 = self.speed(t0);
            let f1 = self.speed(t0 + 0.5 * dt);
            let f2 = self.speed(t0 + dt);
            s[k + 1] = s[k] + dt * (f0 + 4.0 * f1 + f2) / 6.0;
        }
        s
    }

    pub fn perimeter(&self) -> f64 {
        *self.arc_table(4096).last().unwrap()
    }

    /// Parameters of `n` points equally spaced in arc length, starting at `t = 0`.
    pub fn arc_length_parameters(&self, n: usize) -> Vec<f64> {
        let m = (64 * n).max(8192);
        let table = self.arc_table(m);
        let total = table[m];
        let dt = 2.0 * PI / m as f64;
        let mut out = Vec::with_capacity(n);
        let mut k = 0usize;
        for i in 0..n {
            let target = total * i as f64 / n as f64;
            while k + 1 < m && table[k + 1] < target {
                k += 1;
            }
            let frac = (target - table[k]) / (table[k + 1] - table[k]);
            let mut t = (k as f64 + frac) * dt;
            // one Newton correction against the panel start
            let s_t = table[k] + self.partial(k as f64 * dt, t);
            t -= (s_t - target) / self.speed(t);
            out.push(t);
        }
        out
    }

    fn partial(&self, t0: f64, t1: f64) -> f64 {
        // 5-point Gauss-Legendre on [t0, t1]
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let c = 0.5 * (t0 + t1);
        let r = 0.5 * (t1 - t0);
        X.iter()
            .zip(W.iter())
            .map(|(x, w)| w * self.speed(c + r * x))
            .sum::<f64>()
            * r
    }

    /// Parameter of the closest boundary point together with the unsigned distance.
    pub fn closest(&self, p: [f64; 2]) -> (f64, f64) {
        let (a, b) = (self.a, self.b);
        let (x, y) = (p[0], p[1]);
        let f = |t: f64| a * x * t.sin() - b * y * t.cos() - (a * a - b * b) * t.sin() * t.cos();
        let df = |t: f64| a * x * t.cos() + b * y * t.sin() - (a * a - b * b) * (2.0 * t).cos();
        let starts = [
            (a * y).atan2(b * x),
            y.atan2(x),
            0.0,
            0.5 * PI,
            PI,
            1.5 * PI,
        ];
        let mut best = (0.0, f64::INFINITY);
        for &t0 in &starts {
            let mut t = t0;
            for _ in 0..40 {
                let d = df(t);
                if d.abs() < 1e-300 {
                    break;
                }
                let step = f(t) / d;
                t -= step.clamp(-0.5, 0.5);
                if step.abs() < 1e-14 {
                    break;
                }
            }
            let q = self.point(t);
            let dist = (x - q[0]).hypot(y - q[1]);
            if dist < best.1 {
                best = (t, dist);
            }
        }
        best
    }

    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        self.closest(p).1
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }
}
