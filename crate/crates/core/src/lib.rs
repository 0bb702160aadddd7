pub mod error;
pub mod estimators;
pub mod generator;
pub mod gpd;
pub mod lmoments;
pub mod optim;
pub mod prior;
pub mod quadrature;
pub mod rjmcmc;
pub mod rng;
pub mod site;
pub mod study;

pub use error::{Error, Result};
