//! Active-inference agent for noisy continuous mountain car: Gaussian
//! utilities, a small reverse-mode autodiff library, the latent world
//! model, preferred-state priors, an expected-free-energy planner, a habit
//! policy and the reproducible pipeline that ties them together.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod gaussian;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod policy;
pub mod prior;
pub mod series;
