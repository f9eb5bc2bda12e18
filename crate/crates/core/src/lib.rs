pub mod decoder;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod risk;
pub mod sda;
pub mod subsets;
pub mod theory;

pub use error::{Error, Result};
pub use ndarray;
