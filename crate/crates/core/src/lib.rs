pub mod cli;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod ideal;
pub mod ocp;
pub mod terminal;

pub use error::{Error, Result};
