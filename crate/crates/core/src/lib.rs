//! Reconstruction toolkit for time-sequential dynamic tomography.
//!
//! The object is modeled by a rank-K partially separable factorization
//! f = Lambda Psi^T with a fixed temporal interpolation basis Psi = U Z, and
//! recovered from one projection per time frame by a bilinear ADMM whose
//! spatial prior is an explicit denoiser-induced regularizer
//! rho(f) = 1/2 f^T (f - D(f)). Also here: the acquisition simulator
//! (warped phantoms, bit-reversed schedules, noisy projections),
//! total-variation baselines, image quality metrics, and the raw tensor and
//! CSV formats shared by the command-line tools.

pub mod denoise;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod phantom;
pub mod psm;
pub mod red;
pub mod solver;
pub mod tomo;
pub mod tv;

pub use denoise::{CnnMode, CnnWeights, Denoiser, DenoiserKind};
pub use error::{Error, Result};
pub use image::{DynamicObject, ImageFrame};
pub use psm::{PsmFactors, TemporalBasis};
pub use solver::{AdmmSolver, Diagnostics, FStep, InitScheme, RunOutput, SolverConfig, SolverState};
pub use tomo::{DynamicOperator, Projection, Sinogram};
pub use tv::{TvConfig, TvVariant};
