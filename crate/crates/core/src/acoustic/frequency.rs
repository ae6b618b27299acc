use crate::error::{MatmiError, Result};
use crate::forward::BoundaryRecord;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Uniform angular frequency samples `Δω, 2Δω, ..., ω_max` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
    pub weights: Vec<f64>,
    pub d_omega: f64,
    pub omega_max: f64,
}

impl FrequencyGrid {
    pub fn new(d_omega: f64, omega_max: f64, record_dt: f64) -> Result<Self> {
        if !(d_omega > 0.0 && omega_max >= d_omega) {
            return Err(MatmiError::Parameter(format!(
                "invalid frequency grid Δω = {d_omega}, ω_max = {omega_max}"
            )));
        }
        let nyquist = PI / record_dt;
        if omega_max > nyquist * (1.0 + 1e-12) {
            return Err(MatmiError::Parameter(format!(
                "ω_max = {omega_max} exceeds the record's Nyquist frequency {nyquist}"
            )));
        }
        let n = (omega_max / d_omega).round().max(1.0) as usize;
        let d = omega_max / n as f64;
        let omegas: Vec<f64> = (1..=n).map(|k| k as f64 * d).collect();
        let mut weights = vec![d; n];
        weights[n - 1] = 0.5 * d;
        Ok(Self {
            omegas,
            weights,
            d_omega: d,
            omega_max,
        })
    }

    /// Default grid: `ω_max` at 0.8 of the record's Nyquist frequency and
    /// `Δω = π / T`, capped by `π c0 / diameter`.
    pub fn for_record(
        record: &BoundaryRecord,
        c0: f64,
        diameter: f64,
        omega_max: Option<f64>,
    ) -> Result<Self> {
        let omega_max = omega_max.unwrap_or(0.8 * PI / record.dt);
        let d_omega = (PI / record.duration().max(record.dt)).min(PI * c0 / diameter);
        Self::new(d_omega, omega_max, record.dt)
    }
}

/// Cosine taper applied to the trailing `fraction` of the record.
pub fn taper(n: usize, fraction: f64) -> Vec<f64> {
    let m = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    (0..n)
        .map(|k| {
            if m == 0 || k + m < n {
                1.0
            } else {
                let s = (k + m + 1 - n) as f64 / m as f64;
                0.5 * (1.0 + (PI * s).cos())
            }
        })
        .collect()
}

/// `ĝ(ω) = Σ_n g(t_n) w_n e^{iω t_n} dt` for every grid frequency; result is
/// indexed `[frequency][sensor]`.
pub fn to_frequency(
    record: &BoundaryRecord,
    grid: &FrequencyGrid,
    taper_fraction: f64,
) -> Result<Vec<Vec<Complex64>>> {
    record.validate()?;
    if grid.omega_max > PI / record.dt * (1.0 + 1e-12) {
        return Err(MatmiError::Parameter(
            "frequency grid exceeds the record's Nyquist frequency".into(),
        ));
    }
    let n = record.num_steps();
    let w = taper(n, taper_fraction);
    Ok(grid
        .omegas
        .iter()
        .map(|&omega| {
            let phase: Vec<Complex64> = (0..n)
                .map(|k| {
                    let (s, c) = (omega * k as f64 * record.dt).sin_cos();
                    Complex64::new(c, s) * (w[k] * record.dt)
                })
                .collect();
            record
                .samples
                .iter()
                .map(|row| row.iter().zip(&phase).map(|(g, e)| e * g).sum())
                .collect()
        })
        .collect())
}
