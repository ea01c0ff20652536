pub mod agents;
pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod game;
pub mod knowledge;
pub mod planner;
pub mod radio;
pub mod world;

pub use error::{Error, Result};
