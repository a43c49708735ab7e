//! Deep memory network for attitude identification: joint target detection
//! (present/absent) and polarity classification (positive/negative/neutral)
//! over a shared set of targets, with per-target projection matrices,
//! hand-derived gradients, and a finite-difference checker for all of them.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod model;
pub mod numeric;
pub mod snapshot;
pub mod train;

pub use error::{Error, Result};
