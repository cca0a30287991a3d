//! Pseudo-spectral solver for the fractional Stokes-Magneto system on the
//! periodic torus `T^d = [0, 2π]^d`, together with the diagnostics and
//! mild-solution machinery used to check its analytical properties.
//!
//! The magnetic field `b` is advanced by the induction equation
//!
//! ```text
//! ∂t b + η Λ^{2β} b + (u·∇) b = (b·∇) u,      div b = 0,
//! ```
//!
//! where the velocity solves the quasi-static balance
//! `ν Λ^{2α} u + ∇p̄ = (b·∇) b`, `div u = 0`.
//!
//! Module map:
//! - [`spectral`]: grids, transforms, Fourier multipliers, Leray projection, dealiasing.
//! - [`fields`]: initial conditions and Lebesgue/Sobolev norms.
//! - [`stokes`]: velocity and pressure recovery from `b`.
//! - [`evolve`]: integrating-factor RK4 time stepping and trajectories.
//! - [`mild`]: heat semigroup, Duhamel quadrature and the Picard solver.
//! - [`regimes`]: exponent arithmetic and well-posedness classification.
//! - [`diagnostics`]: energy, helicity, balance residuals and experiments.
//! - [`io`]: run configuration, NDJSON output and checkpoints.
//! - [`cli`]: the `smag` command-line front end.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod fields;
pub mod io;
pub mod mild;
pub mod regimes;
pub mod spectral;
pub mod stokes;

pub use error::{Error, Result};
pub use evolve::{SimParams, Simulation, Trajectory, TrajectoryStatus};
pub use fields::{InitialCondition, NormRequest};
pub use spectral::{Grid, SpectralScalar, SpectralVectorField};
