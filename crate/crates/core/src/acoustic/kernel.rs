//! Outgoing fundamental solution of the two-dimensional Helmholtz operator.

use crate::error::{MatmiError, Result};
use crate::forward::AcousticMedium;
use num_complex::Complex64;

/// Hankel function of the first kind, order zero.
pub fn hankel0(x: f64) -> Complex64 {
    Complex64::new(puruspe::Jn(0, x), puruspe::Yn(0, x))
}

/// Hankel function of the first kind, order one.
pub fn hankel1(x: f64) -> Complex64 {
    Complex64::new(puruspe::Jn(1, x), puruspe::Yn(1, x))
}

/// `-(i/4) H0(k r)` for `r > 0`.
#[inline]
pub fn green(k: f64, r: f64) -> Complex64 {
    let x = k * r;
    Complex64::new(0.25 * puruspe::Yn(0, x), -0.25 * puruspe::Jn(0, x))
}

/// Derivative of the kernel with respect to `x` along `nu`, for `x ≠ y`.
#[inline]
pub fn green_normal_derivative(k: f64, x: [f64; 2], y: [f64; 2], nu: [f64; 2]) -> Complex64 {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r = d[0].hypot(d[1]);
    let c = (d[0] * nu[0] + d[1] * nu[1]) / r;
    let kr = k * r;
    // (i/4) k H1(kr) c
    Complex64::new(
        -0.25 * k * puruspe::Yn(1, kr) * c,
        0.25 * k * puruspe::Jn(1, kr) * c,
    )
}

/// `Γ(x, y) = -(i/4) H0(ω |x - y| / c0)`.
pub fn fundamental_solution(
    omega: f64,
    x: [f64; 2],
    y: [f64; 2],
    medium: &AcousticMedium,
) -> Result<Complex64> {
    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
    if r == 0.0 {
        return Err(MatmiError::Parameter(
            "fundamental solution is singular at x = y".into(),
        ));
    }
    if !(omega > 0.0) {
        return Err(MatmiError::Parameter("frequency must be positive".into()));
    }
    Ok(green(omega / medium.c0(), r))
}
