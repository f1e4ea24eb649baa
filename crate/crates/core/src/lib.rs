//! Structure-preserving model reduction for swing-equation power networks.
//!
//! The pipeline lifts the second-order nonlinear network model to an exact
//! quadratic system, runs quadratic IRKA on it, and uses the angle block of
//! the resulting basis to project the original second-order model.

pub mod baselines;
pub mod error;
pub mod lift;
pub mod linalg;
pub mod network;
pub mod qirka;
pub mod sim;
pub mod strh2;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
pub use network::{Coupling, Node, OutputSpec, PowerNetwork, SecondOrderModel, Topology};
pub use tensor::{commutation_apply, IndexPermutation, SparseTensor3};
pub use lift::{LiftedModel, QuadraticModel};
pub use qirka::{QirkaMode, QirkaOptions, QirkaResult};
pub use sim::{SimOptions, Trajectory};
pub use strh2::{ReducedSecondOrderModel, StrH2Options, StrH2Output, Variant};
pub use sweep::{Method, SweepConfig, SweepRecord};
