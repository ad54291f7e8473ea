pub mod error;
pub mod numerics;
pub mod orthopoly;
pub mod process;
pub mod distances;
pub mod simulate;
pub mod experiments;

pub use error::{Error, Result};
