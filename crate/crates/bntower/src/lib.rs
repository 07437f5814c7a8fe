//! Numerical construction of sign-changing bubble towers for the
//! Brezis-Nirenberg problem `Δu − εu = |u|^{4/(n−2)} u` on the unit ball
//! in dimension `n ≥ 7`, with Dirichlet boundary conditions and
//! `Δ = −Σ ∂_i²`.
//!
//! The pipeline mirrors a finite-dimensional reduction:
//!
//! 1. [`profiles`] — closed-form bubbles, kernel functions, projected
//!    bubbles, the tower ansatz and the concentration weight `Ψ_ε`.
//! 2. [`greens`] — Green/Robin functions of the Dirichlet Laplacian
//!    (analytic on the ball, fundamental-solution collocation on
//!    star-shaped perturbations) and Robin critical points.
//! 3. [`numerics`] — graded radial meshes, high-dimensional radial
//!    quadrature, a conservative radial Laplacian and bordered solves.
//! 4. [`linear_theory`] — the projected linearized problem, its Lagrange
//!    multipliers and pointwise diagnostics.
//! 5. [`reduction`] — the residual, the weighted Picard fixed point,
//!    kernel-coefficient extraction and the constants `D1, D2, D3`.
//! 6. [`reduced_solver`] — the exact-rational `γ` schedule, the explicit
//!    zeros `t_{ℓ,0}` and Newton on the reduced system.
//! 7. [`pde`] — direct Newton/continuation solves of the full radial
//!    problem used as ground truth for the predicted scaling laws.
//! 8. [`cli`] — batch entry points with deterministic tabular output.

pub mod cli;
pub mod error;
pub mod greens;
pub mod linear_theory;
pub mod numerics;
pub mod pde;
pub mod profiles;
pub mod reduced_solver;
pub mod reduction;

pub use error::{Error, Result};
