use super::boundary::BoundaryQuadrature;
use super::kernel::green;
use num_complex::Complex64;
use rayon::prelude::*;

/// Squared distances between sensors and evaluation points, reused across
/// frequencies; indexed `[point][sensor]`.
pub struct DistanceTable {
    pub r: Vec<Vec<f64>>,
}

impl DistanceTable {
    pub fn new(quad: &BoundaryQuadrature, points: &[[f64; 2]]) -> Self {
        let r = points
            .iter()
            .map(|z| {
                quad.points
                    .iter()
                    .map(|x| (x[0] - z[0]).hypot(x[1] - z[1]))
                    .collect()
            })
            .collect();
        Self { r }
    }
}

/// `I(z) = ∮ [conj(Γ(x, z)) Φ(x) - Γ(x, z) conj(Φ(x))] ds(x)` at wavenumber `k`.
pub fn imaging_index(
    quad: &BoundaryQuadrature,
    dist: &DistanceTable,
    k: f64,
    phi: &[Complex64],
) -> Vec<Complex64> {
    dist.r
        .par_iter()
        .map(|row| {
            let mut a = Complex64::new(0.0, 0.0);
            for ((r, p), w) in row.iter().zip(phi).zip(&quad.weights) {
                a += green(k, *r).conj() * p * *w;
            }
            a - a.conj()
        })
        .collect()
}
