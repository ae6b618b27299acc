//! Explicit finite-difference propagation of the impulsive acoustic source.
//!
//! The pressure lives on a Cartesian grid covering the bounding box of the
//! ellipse; nodes outside the ellipse are held at zero (sound-soft boundary).
//! The source enters as the initial velocity `∂t p(0) = λ0 f`.

use super::AcousticMedium;
use crate::error::{MatmiError, Result};
use crate::field::ScalarField;
use crate::geometry::Ellipse;
use crate::mesh::Mesh;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveConfig {
    /// Grid spacing.
    pub dx: f64,
    /// Courant number `c0 dt / dx`, at most 0.5.
    pub cfl: f64,
    pub t_final: f64,
    pub sensors: usize,
    /// Number of time steps between recorded samples.
    pub record_stride: usize,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            dx: 0.01,
            cfl: 0.5,
            t_final: 12.0,
            sensors: 256,
            record_stride: 16,
        }
    }
}

/// Normal derivative of the pressure sampled at boundary sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    /// Sensor positions in counter-clockwise order.
    pub sensors: Vec<[f64; 2]>,
    pub dt: f64,
    /// `samples[s][n]` is the value at sensor `s` and time `n dt`.
    pub samples: Vec<Vec<f64>>,
}

impl BoundaryRecord {
    pub fn num_steps(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.num_steps().saturating_sub(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.len() < 3 || self.samples.len() != self.sensors.len() {
            return Err(MatmiError::Data(
                "record needs one sample row per sensor and at least three sensors".into(),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(MatmiError::Data("record time step must be positive".into()));
        }
        let n = self.num_steps();
        if self.samples.iter().any(|r| r.len() != n) {
            return Err(MatmiError::Data(
                "sample rows have different lengths".into(),
            ));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "matmi-record v1")?;
        writeln!(w, "{}", self.sensors.len())?;
        for p in &self.sensors {
            writeln!(w, "{:e} {:e}", p[0], p[1])?;
        }
        writeln!(w, "{:e} {}", self.dt, self.num_steps())?;
        for row in &self.samples {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = crate::io::Lines::new(r);
        lines.expect_header("matmi-record v1")?;
        let ns = lines.count("sensor count")?;
        let mut sensors = Vec::with_capacity(ns);
        for _ in 0..ns {
            let v = lines.floats(2)?;
            sensors.push([v[0], v[1]]);
        }
        let line = lines.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || MatmiError::Format(format!("line {}: expected 'dt steps'", lines.line_no()));
        if parts.len() != 2 {
            return Err(bad());
        }
        let dt: f64 = parts[0].parse().map_err(|_| bad())?;
        let steps: usize = parts[1].parse().map_err(|_| bad())?;
        let mut samples = Vec::with_capacity(ns);
        for _ in 0..ns {
            let row = lines.float_row()?;
            if row.len() != steps {
                return Err(MatmiError::Format(format!(
                    "line {}: expected {steps} samples, found {}",
                    lines.line_no(),
                    row.len()
                )));
            }
            samples.push(row);
        }
        let rec = Self {
            sensors,
            dt,
            samples,
        };
        rec.validate()?;
        Ok(rec)
    }
}

#[derive(Debug, Clone)]
pub struct WaveOutput {
    pub record: BoundaryRecord,
    /// Discrete energy at each half step.
    pub energy: Vec<f64>,
    pub dt: f64,
}

struct Grid {
    x0: f64,
    y0: f64,
    dx: f64,
    nx: usize,
    ny: usize,
    inside: Vec<bool>,
    /// Diagonal of the negated Laplacian times `dx²`.
    diag: Vec<f64>,
}

/// Nodes closer than this fraction of `dx` to the boundary along an axis are
/// held at zero, which keeps the cut-cell diagonal bounded.
const MIN_CUT: f64 = 0.25;

impl Grid {
    fn new(ellipse: &Ellipse, dx: f64) -> Self {
        let mx = (ellipse.a / dx).ceil() as usize + 2;
        let my = (ellipse.b / dx).ceil() as usize + 2;
        let (nx, ny) = (2 * mx + 1, 2 * my + 1);
        let (x0, y0) = (-(mx as f64) * dx, -(my as f64) * dx);
        const DIRS: [[f64; 2]; 4] = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        // distance to the ellipse along each axis direction, in units of dx
        let cut = |q: [f64; 2], d: [f64; 2]| -> f64 {
            let (ia, ib) = (1.0 / (ellipse.a * ellipse.a), 1.0 / (ellipse.b * ellipse.b));
            let qa = d[0] * d[0] * ia + d[1] * d[1] * ib;
            let qb = 2.0 * (q[0] * d[0] * ia + q[1] * d[1] * ib);
            let qc = q[0] * q[0] * ia + q[1] * q[1] * ib - 1.0;
            (-qb + (qb * qb - 4.0 * qa * qc).max(0.0).sqrt()) / (2.0 * qa) / dx
        };
        let at = |i: usize, j: usize| [x0 + i as f64 * dx, y0 + j as f64 * dx];
        let mut inside = vec![false; nx * ny];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let q = at(i, j);
                inside[j * nx + i] =
                    ellipse.contains(q) && DIRS.iter().all(|&d| cut(q, d) >= MIN_CUT);
            }
        }
        let mut diag = vec![0.0; nx * ny];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let k = j * nx + i;
                if !inside[k] {
                    continue;
                }
                let nbrs = [k + 1, k - 1, k + nx, k - nx];
                diag[k] = nbrs
                    .iter()
                    .zip(DIRS)
                    .map(|(&n, d)| {
                        if inside[n] {
                            1.0
                        } else {
                            1.0 / cut(at(i, j), d)
                        }
                    })
                    .sum();
            }
        }
        Self {
            x0,
            y0,
            dx,
            nx,
            ny,
            inside,
            diag,
        }
    }

    fn bilinear(&self, p: &[f64], q: [f64; 2]) -> f64 {
        let fx = (q[0] - self.x0) / self.dx;
        let fy = (q[1] - self.y0) / self.dx;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let at = |i: usize, j: usize| p[j * self.nx + i];
        (1.0 - tx) * (1.0 - ty) * at(i, j)
            + tx * (1.0 - ty) * at(i + 1, j)
            + (1.0 - tx) * ty * at(i, j + 1)
            + tx * ty * at(i + 1, j + 1)
    }

    /// Five-point Laplacian times `dx²` with a symmetric cut-cell treatment of
    /// the Dirichlet boundary: a missing neighbour at fractional distance `θ`
    /// contributes `-p/θ` (linear extrapolation to zero on the curve).
    fn laplacian(&self, p: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        for j in 1..self.ny - 1 {
            for i in 1..nx - 1 {
                let k = j * nx + i;
                out[k] = if self.inside[k] {
                    // values off the active set are zero
                    p[k - 1] + p[k + 1] + p[k - nx] + p[k + nx] - self.diag[k] * p[k]
                } else {
                    0.0
                };
            }
        }
    }
}

/// Half-width of the decimation filter in output samples.
const FILTER_HALF_WIDTH: usize = 32;

/// Keeps every `stride`-th sample after a Blackman-windowed sinc low-pass
/// with cutoff at the output Nyquist frequency. The pass band is flat to
/// about 0.8 of that frequency and everything folding into it is suppressed.
/// Samples before the start of the trace are zero (causal signal).
fn decimate(trace: &[f64], stride: usize, kept: usize) -> Vec<f64> {
    if stride == 1 {
        return trace[..kept].to_vec();
    }
    let half = (FILTER_HALF_WIDTH * stride) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|m| {
            let x = m as f64 / stride as f64;
            let sinc = if m == 0 {
                1.0
            } else {
                (PI * x).sin() / (PI * x)
            };
            let u = PI * (m + half) as f64 / half as f64;
            sinc * (0.42 - 0.5 * u.cos() + 0.08 * (2.0 * u).cos())
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    (0..kept)
        .map(|j| {
            let c = (j * stride) as isize;
            (-half..=half)
                .zip(&taps)
                .filter_map(|(m, t)| trace.get(usize::try_from(c - m).ok()?).map(|x| t * x))
                .sum()
        })
        .collect()
}

/// Propagates the source and records `∂p/∂ν` at sensors equally spaced in
/// arc length along the ellipse.
pub fn simulate_wave(
    mesh: &Mesh,
    ellipse: &Ellipse,
    f: &ScalarField,
    medium: &AcousticMedium,
    cfg: &WaveConfig,
) -> Result<WaveOutput> {
    f.check_mesh(mesh)?;
    medium.validate()?;
    if !(cfg.dx > 0.0) || cfg.dx >= ellipse.a.min(ellipse.b) {
        return Err(MatmiError::Parameter(format!(
            "invalid wave grid spacing {}",
            cfg.dx
        )));
    }
    if !(cfg.cfl > 0.0 && cfg.cfl <= 0.5) {
        return Err(MatmiError::Parameter(format!(
            "Courant number {} violates the bound 0.5",
            cfg.cfl
        )));
    }
    if cfg.sensors < 3 || cfg.record_stride == 0 || !(cfg.t_final > 0.0) {
        return Err(MatmiError::Parameter(
            "need at least three sensors, a positive stride and duration".into(),
        ));
    }
    let c0 = medium.c0();
    let dt = cfg.cfl * cfg.dx / c0;
    let grid = Grid::new(ellipse, cfg.dx);
    let n = grid.nx * grid.ny;

    let mut v0 = vec![0.0; n];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = j * grid.nx + i;
            if grid.inside[k] {
                let q = [grid.x0 + i as f64 * grid.dx, grid.y0 + j as f64 * grid.dx];
                v0[k] = medium.lambda0 * mesh.interpolate(&f.values, q);
            }
        }
    }

    let ts = ellipse.arc_length_parameters(cfg.sensors);
    let sensors: Vec<[f64; 2]> = ts.iter().map(|&t| ellipse.point(t)).collect();
    let normals: Vec<[f64; 2]> = ts.iter().map(|&t| ellipse.normal(t)).collect();
    // probes at least 2dx inside so no interpolation stencil touches a held node
    let delta = 2.0 * cfg.dx;
    let probe = |p: &[f64], s: usize| -> f64 {
        let (x, nrm) = (sensors[s], normals[s]);
        let at = |m: f64| grid.bilinear(p, [x[0] - m * delta * nrm[0], x[1] - m * delta * nrm[1]]);
        // cubic through p = 0 on the boundary and three inward samples; the
        // outward derivative is minus the inward one
        -(18.0 * at(1.0) - 9.0 * at(2.0) + 2.0 * at(3.0)) / (6.0 * delta)
    };

    let steps = (cfg.t_final / dt).ceil() as usize;
    let half = FILTER_HALF_WIDTH * cfg.record_stride;
    // extra steps feed the anti-aliasing filter at the end of the record
    let total = if cfg.record_stride > 1 {
        steps + half
    } else {
        steps
    };
    let r = (c0 * dt / cfg.dx).powi(2);
    let mut prev = vec![0.0; n];
    let mut lap = vec![0.0; n];
    // Taylor start: p(dt) = dt v0 + dt³/6 c0² Δ v0
    grid.laplacian(&v0, &mut lap);
    let mut cur: Vec<f64> = (0..n).map(|k| dt * v0[k] + dt * r / 6.0 * lap[k]).collect();
    let mut next = vec![0.0; n];

    let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(total + 1); cfg.sensors];
    for row in traces.iter_mut() {
        row.push(0.0);
    }
    let mut energy = Vec::with_capacity(total);
    let cell = cfg.dx * cfg.dx;
    for _ in 1..=total {
        for (s, row) in traces.iter_mut().enumerate() {
            row.push(probe(&cur, s));
        }
        grid.laplacian(&cur, &mut lap);
        for k in 0..n {
            next[k] = if grid.inside[k] {
                2.0 * cur[k] - prev[k] + r * lap[k]
            } else {
                0.0
            };
        }
        // staggered energy between cur and next
        let mut kin = 0.0;
        let mut pot = 0.0;
        for k in 0..n {
            if grid.inside[k] {
                let v = (next[k] - cur[k]) / dt;
                kin += v * v;
                pot -= next[k] * lap[k];
            }
        }
        energy.push(0.5 * cell * (kin + c0 * c0 / cell * pot));
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    let kept = steps / cfg.record_stride + 1;
    let samples = traces
        .iter()
        .map(|t| decimate(t, cfg.record_stride, kept))
        .collect();

    let record = BoundaryRecord {
        sensors,
        dt: dt * cfg.record_stride as f64,
        samples,
    };
    Ok(WaveOutput { record, energy, dt })
}
