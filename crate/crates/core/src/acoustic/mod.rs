//! Source reconstruction from boundary Neumann data.
//!
//! The record is transformed to the frequency domain, mapped to free-space
//! data by `(½ I + K*)`, correlated against the outgoing kernel and
//! integrated over frequency:
//!
//! `f⁰(z) = -(C / (i ρ0)) ∫ ω I(z, ω) dω`,  `C = 1 / (π c0²)`,
//!
//! for the transform `ĝ(ω) = ∫ g(t) e^{iωt} dt`.

mod boundary;
mod frequency;
mod imaging;
pub mod kernel;

pub use boundary::{half_plus_kstar, BoundaryQuadrature};
pub use frequency::{taper, to_frequency, FrequencyGrid};
pub use imaging::{imaging_index, DistanceTable};

use crate::error::{MatmiError, Result};
use crate::field::{ScalarField, ScalarRole};
use crate::forward::{AcousticMedium, BoundaryRecord};
use crate::mesh::Mesh;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Normalisation of the frequency integral in two dimensions.
pub fn inversion_constant(medium: &AcousticMedium) -> f64 {
    1.0 / (PI * medium.c0() * medium.c0())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReconstructionConfig {
    /// Upper frequency; defaults to 0.8 of the record's Nyquist frequency.
    pub omega_max: Option<f64>,
    /// Frequency spacing; defaults to `π / T`.
    pub d_omega: Option<f64>,
    /// Evaluation grid spacing; defaults to a quarter of the Rayleigh cell.
    pub grid_spacing: Option<f64>,
    /// Fraction of the record tapered to zero at its end.
    pub taper_fraction: f64,
    /// Points closer than this many sensor spacings to the boundary are skipped.
    pub boundary_margin: f64,
}

impl Default for SourceReconstructionConfig {
    fn default() -> Self {
        Self {
            omega_max: None,
            d_omega: None,
            grid_spacing: None,
            taper_fraction: 0.25,
            boundary_margin: 1.0,
        }
    }
}

/// Regular evaluation grid; `values` are stored for every grid node, with
/// zeros at skipped nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub x0: f64,
    pub y0: f64,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub active: Vec<bool>,
}

impl EvalGrid {
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x0 + i as f64 * self.spacing,
            self.y0 + j as f64 * self.spacing,
        ]
    }

    pub fn active_points(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.active[j * self.nx + i] {
                    out.push(self.point(i, j));
                }
            }
        }
        out
    }

    /// Bilinear interpolation of grid values; zero outside the grid.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> f64 {
        let fx = (p[0] - self.x0) / self.spacing;
        let fy = (p[1] - self.y0) / self.spacing;
        if fx < 0.0 || fy < 0.0 || fx > (self.nx - 1) as f64 || fy > (self.ny - 1) as f64 {
            return 0.0;
        }
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let at = |i: usize, j: usize| values[j * self.nx + i];
        (1.0 - tx) * (1.0 - ty) * at(i, j)
            + tx * (1.0 - ty) * at(i + 1, j)
            + (1.0 - tx) * ty * at(i, j + 1)
            + tx * ty * at(i + 1, j + 1)
    }
}

/// Reconstructed source on the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceImage {
    pub grid: EvalGrid,
    pub values: Vec<f64>,
    pub inversion_constant: f64,
    pub omega_max: f64,
    pub d_omega: f64,
}

impl SourceImage {
    /// Samples the image at the mesh nodes.
    pub fn to_mesh(&self, mesh: &Mesh) -> ScalarField {
        ScalarField::from_fn(mesh, ScalarRole::Source, |p| {
            self.grid.interpolate(&self.values, p)
        })
    }

    pub fn rayleigh_cell(&self, medium: &AcousticMedium) -> f64 {
        medium.c0() * PI / self.omega_max
    }

    /// Location of the largest value.
    pub fn peak(&self) -> [f64; 2] {
        let k = (0..self.values.len())
            .filter(|&k| self.grid.active[k])
            .max_by(|&a, &b| self.values[a].partial_cmp(&self.values[b]).unwrap())
            .unwrap_or(0);
        self.grid.point(k % self.grid.nx, k / self.grid.nx)
    }
}

/// Imaging index for every frequency of the grid, `[frequency][point]`.
pub fn index_all_frequencies(
    quad: &BoundaryQuadrature,
    ghat: &[Vec<Complex64>],
    freqs: &FrequencyGrid,
    points: &[[f64; 2]],
    medium: &AcousticMedium,
) -> Result<Vec<Vec<Complex64>>> {
    let dist = DistanceTable::new(quad, points);
    let c0 = medium.c0();
    freqs
        .omegas
        .iter()
        .zip(ghat)
        .map(|(&omega, g)| {
            let k = omega / c0;
            let phi = half_plus_kstar(quad, k, g)?;
            Ok(imaging_index(quad, &dist, k, &phi))
        })
        .collect()
}

/// `f⁰(z) = -(C / (i ρ0)) Σ_ω ω I(z, ω) w_ω`. The minus sign follows from
/// `ĝ = -ρ0 ∫ ∂νΓ f` for the `e^{iωt}` transform with the outgoing kernel.
pub fn reconstruct_from_index(
    index: &[Vec<Complex64>],
    freqs: &FrequencyGrid,
    medium: &AcousticMedium,
) -> Vec<f64> {
    let c = inversion_constant(medium) / medium.rho0;
    let npts = index.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; npts];
    for ((row, &omega), &w) in index.iter().zip(&freqs.omegas).zip(&freqs.weights) {
        for (o, v) in out.iter_mut().zip(row) {
            // v / i = v.im for purely imaginary v
            *o -= c * omega * w * v.im;
        }
    }
    out
}

/// Full reconstruction from a boundary record.
pub fn reconstruct_source(
    record: &BoundaryRecord,
    medium: &AcousticMedium,
    cfg: &SourceReconstructionConfig,
) -> Result<SourceImage> {
    record.validate()?;
    medium.validate()?;
    let quad = BoundaryQuadrature::from_closed_curve(&record.sensors)?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &quad.points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let diameter = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    let c0 = medium.c0();
    let mut freqs = FrequencyGrid::for_record(record, c0, diameter, cfg.omega_max)?;
    if let Some(d) = cfg.d_omega {
        freqs = FrequencyGrid::new(d, freqs.omega_max, record.dt)?;
    }
    let spacing = cfg.grid_spacing.unwrap_or(0.25 * c0 * PI / freqs.omega_max);
    if !(spacing > 0.0) {
        return Err(MatmiError::Parameter(
            "evaluation grid spacing must be positive".into(),
        ));
    }
    let nx = ((hi[0] - lo[0]) / spacing).ceil() as usize + 1;
    let ny = ((hi[1] - lo[1]) / spacing).ceil() as usize + 1;
    let (x0, y0) = (
        0.5 * (lo[0] + hi[0]) - 0.5 * (nx - 1) as f64 * spacing,
        0.5 * (lo[1] + hi[1]) - 0.5 * (ny - 1) as f64 * spacing,
    );
    let margin = cfg.boundary_margin * quad.spacing();
    let mut active = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let p = [x0 + i as f64 * spacing, y0 + j as f64 * spacing];
            active[j * nx + i] = quad.signed_distance(p) > margin;
        }
    }
    let grid = EvalGrid {
        x0,
        y0,
        spacing,
        nx,
        ny,
        active,
    };
    let points = grid.active_points();
    let ghat = to_frequency(record, &freqs, cfg.taper_fraction)?;
    let index = index_all_frequencies(&quad, &ghat, &freqs, &points, medium)?;
    let f = reconstruct_from_index(&index, &freqs, medium);
    let mut values = vec![0.0; nx * ny];
    let mut it = f.into_iter();
    for (v, &a) in values.iter_mut().zip(&grid.active) {
        if a {
            *v = it.next().unwrap();
        }
    }
    Ok(SourceImage {
        grid,
        values,
        inversion_constant: inversion_constant(medium),
        omega_max: freqs.omega_max,
        d_omega: freqs.d_omega,
    })
}
