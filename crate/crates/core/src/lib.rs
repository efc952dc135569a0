pub mod asymptotics;
pub mod divergence;
pub mod error;
pub mod models;
pub mod modular;
pub mod operator;
pub mod random;
pub mod testing;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
