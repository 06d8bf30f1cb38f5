pub mod baselines;
pub mod collective;
pub mod energy;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod plangen;
pub mod rl;
pub mod scenario;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
