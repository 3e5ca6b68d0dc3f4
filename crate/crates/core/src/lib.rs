pub mod acquisition;
pub mod analysis;
pub mod bench;
pub mod bo_loop;
pub mod error;
pub mod kernels;
pub mod mtgp;
pub mod optim;
pub mod qmc;
pub mod synthetic;

pub use error::{Error, Result};
