//! Shortfall-risk minimization for game options on a binomial market.

pub mod brute;
pub mod counterexample;
pub mod duality;
pub mod dynkin;
pub mod envelope;
pub mod error;
pub mod export;
pub mod lattice;
pub mod shortfall;
pub mod transfer;

pub use dynkin::{GamePayoff, GameValue, Measure, Sense, StopValue, StoppingRule};
pub use envelope::{GapIntervals, PiecewiseLinearFn, TwoPointMixture};
pub use error::{Error, Result};
pub use lattice::{Lattice, ModelParams, NodeTable};
pub use shortfall::{GridSpec, HedgePlan, RiskSolution, ValueSurface};
pub use transfer::{TransferChild, TransferSolution};
