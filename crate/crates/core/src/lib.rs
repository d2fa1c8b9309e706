//! Road-constrained multi-target tracking for an airborne range/elevation/azimuth sensor.
//!
//! The crate is organised bottom-up:
//!
//! * [`roadmap`] compiles road center-lines into straight segments.
//! * [`models`] holds the constant-velocity dynamics, the sensor model and the EKF steps.
//! * [`constraints`] builds segment constraint matrices and applies the projection correction.
//! * [`jpda`] does gating, joint hypothesis enumeration and marginal association probabilities.
//! * [`track_manager`] propagates track existence and runs the confirmation/termination logic.
//! * [`vsmm`] ties everything together into the per-scan tracker with segment hypotheses.
//! * [`metrics`] computes the OSPA distance with an exact assignment solver.
//! * [`sim`] generates scenarios, truth, measurements and Monte-Carlo statistics.
//! * [`cli`] implements the `roadmtt` command-line tool.

pub mod assignment;
pub mod cli;
pub mod constraints;
pub mod error;
pub mod jpda;
pub mod metrics;
pub mod models;
pub mod quadrature;
pub mod roadmap;
pub mod sim;
pub mod track_manager;
pub mod vsmm;

pub use error::{Error, Result};
