pub mod ambient;
pub mod config;
pub mod drivers;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pde;
pub mod stats;
pub mod theta_calc;
pub mod uncertainty;

pub use error::{Error, Result};
