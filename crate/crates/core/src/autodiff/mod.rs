//! Minimal reverse-mode differentiation, Gaussian-output MLPs and Adam.

mod adam;
mod gradcheck;
mod matrix;
mod network;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, FD_STEP};
pub use matrix::Matrix;
pub use network::{Activation, BoundNet, Dense, GaussVars, GaussianNet, NetGrads};
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
