//! Simulation-based verification of closed-loop systems with active learning.
//!
//! A closed-loop system is simulated over a discretised set of uncertain
//! parameters `θ`. Each trajectory is labelled safe or unsafe by a metric
//! temporal logic requirement, and a cost-weighted RBF support vector
//! machine learns the boundary between the two regions. Active sampling
//! chooses which parameters to simulate next so that the boundary is
//! located with far fewer simulations than uniform sampling.
//!
//! | module      | contents                                                   |
//! |-------------|------------------------------------------------------------|
//! | [`ode`]     | fixed-step RK4, trajectories, divergence handling          |
//! | [`systems`] | Van der Pol, concurrent-learning MRAC with optional hedging |
//! | [`mtl`]     | requirement formulas, parser and robust boolean monitor    |
//! | [`svm`]     | cost-weighted SVM trained by SMO, model persistence        |
//! | [`active`]  | selection criteria and the sampling loops                  |
//! | [`verify`]  | grids, ground truth, error metrics, replication            |
//! | [`cli`]     | experiment configs and result files                        |

pub mod active;
pub mod cli;
pub mod error;
pub mod mtl;
pub mod ode;
pub mod svm;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
pub use mtl::{Formula, Label};
pub use ode::{IntegratorConfig, Trajectory};
pub use svm::{CostMatrix, SvmConfig, SvmModel, TrainingSet};
pub use systems::System;
pub use verify::{build_grid, Axis, Grid, GridSpec, GroundTruth};
