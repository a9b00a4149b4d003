//! Image denoising under Bernoulli, Poisson and multiplicative (speckle)
//! noise by minimizing a reparameterized negative log-likelihood plus an
//! isotropic total-variation penalty.
//!
//! The estimate is `x̂ = f(θ̂)` where
//! `θ̂ = argmin_θ φ(f(θ), y) + τ·TV(θ)` and `f` is a reparameterization
//! chosen so that the data-fit is convex with a Lipschitz gradient in `θ`.
//! The problem is solved with a SpaRSA-style proximal-gradient loop whose
//! TV proximal step is computed with FGP.
//!
//! Modules, bottom-up:
//!
//! - [`image`]: image container, relative RMSE, rescaling, Shepp-Logan phantom
//! - [`noise`]: seeded forward noise simulators
//! - [`reparam`]: reparameterization families `f`, `f⁻¹`, `f′`
//! - [`datafit`]: data-fit values, gradients and curvature bounds
//! - [`optim`]: TV norm, FGP proximal operator and the outer solver
//! - [`harness`]: empirical-risk sweeps and report emission
//! - [`io`] and [`cli`]: file formats and the command-line front end

pub mod cli;
pub mod datafit;
mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod noise;
pub mod optim;
pub mod reparam;

pub use datafit::{DataFit, ExpFamilySpec, FitKind};
pub use error::{Error, Result};
pub use harness::{ExperimentSpec, RiskReport};
pub use image::{rmse_relative, scale_to, shepp_logan, Image, IntensityRange, ScaleMode};
pub use noise::{NoiseModel, Seed};
pub use optim::{denoise, solve, solve_baseline, tv_norm, tv_prox, SolveResult, SolverConfig};
pub use reparam::ReparamFamily;
