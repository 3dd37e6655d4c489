//! Bootstrapped mining of regular event pairs with temporal relations.

pub mod bootstrap;
pub mod cnn;
pub mod config;
pub mod contexts;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod events;
pub mod mining;
pub mod synthetic;

pub use error::{Error, Result};
