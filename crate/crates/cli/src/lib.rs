//! Experiment driver for the game-option shortfall solver.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod report;
