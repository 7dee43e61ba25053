pub mod assignment;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod mda;
pub mod network;
pub mod objective;
pub mod tensor;
pub mod train;

pub use error::{MdaError, Result};
