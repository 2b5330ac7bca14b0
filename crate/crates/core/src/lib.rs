//! Closed-loop stability of linear plants driven by a score-based denoising
//! controller.
//!
//! The plant `ẋ = A·x + B·u` tracks a setpoint `r`; the controller draws its
//! action by denoising against a Gaussian expert `u ~ N(−K·e, Σ)` with
//! `e = x − r`. The crate simulates the coupled system, classifies it
//! analytically and empirically, sweeps parameter regions and audits
//! demonstration datasets.

pub mod analysis;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod io;
pub mod matrixkit;
pub mod plant;
pub mod sim;

pub use analysis::{analytic_1d, analytic_ndim, StabilityVerdict};
pub use diffusion::{DiffusionParams, Drift};
pub use error::{Result, StabError};
pub use exec::Execution;
pub use matrixkit::Matrix;
pub use plant::{ExpertPolicy, PlantModel};
pub use sim::{simulate, CouplingConfig, CouplingMode, Label, Trajectory};
