//! Shared numerical kernels: graded radial meshes, radially-reduced
//! quadrature in dimension `n`, the radial Newtonian potential, a
//! conservative discrete radial Laplacian and bordered (saddle) solves.

pub mod fd;
pub mod grid;
pub mod potential;
pub mod quad;
pub mod solve;
pub mod special;
pub mod stable;

pub use fd::{fd_weights, radial_laplacian};
pub use grid::{RadialField, RadialGrid};
pub use potential::newtonian_potential;
pub use quad::{radial_integral, radial_integral_to, QuadOpts};
pub use solve::{bordered_solve, bordered_solve_with_columns, solve_dense};
pub use special::{gamma_half_integer, surface_area};

/// Least-squares slope/intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let m = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    (slope, intercept)
}

/// Spread of a list of positive quantities as max/min, the yardstick used by
/// the sweep-stability criteria.
pub fn max_over_min(values: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi / lo
}
