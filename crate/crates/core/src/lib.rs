pub mod data;
pub mod error;
pub mod estimates;
pub mod linalg;
pub mod mcmc;
pub mod network;
pub mod pairwise;
pub mod report;
pub mod simulate;
pub mod summary;
pub mod survival;
pub mod synthesis;

pub use error::{Error, Result};
