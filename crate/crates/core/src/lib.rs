//! Degenerate traveling waves of the strongly irreversible Allen-Cahn equation
//! `u_t = (u_xx - f(u))_+`: profile shooting, obstacle-problem time stepping,
//! comparison envelopes and long-time diagnostics.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below cover the common case.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analysis;
pub mod comparison;
pub mod config;
pub mod error;
pub mod io;
pub mod pde;
pub mod potential;
pub mod profile;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use potential::{check_alpha, validate_bistable, AdmissibleAlpha, Nonlinearity, NonlinearitySpec, Polynomial};
pub use profile::{
    evaluate_profile, evaluate_profile_derivative, integrate_profile_ode, profile_bounds, profile_family,
    solve_profile, solve_profile_regularized, velocity_identity, Classification, ProfileSolution,
    ShootingOptions,
};
pub use scalar::Scalar;

pub type NonlinearityF64 = Nonlinearity<f64>;
pub type NonlinearityF32 = Nonlinearity<f32>;
pub type ProfileF64 = ProfileSolution<f64>;
pub type ProfileF32 = ProfileSolution<f32>;
