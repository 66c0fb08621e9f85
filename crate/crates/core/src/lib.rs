pub mod config;
pub mod error;
pub mod geometry;
pub mod lp;
pub mod market;
pub mod recursion;
pub mod report;
pub mod riskmeasures;
pub mod strategy;
pub mod tree;
pub mod vop;

pub use error::{Error, Result};
