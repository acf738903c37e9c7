//! Radio resource management for uplink MU-MIMO/OFDMA with zero-forcing
//! reception at the base station.
//!
//! The crate is organised bottom-up:
//!
//! * [`mcs`]: MCS table lookups and the fitted rate curve.
//! * [`channel`]: drop generation and frequency-selective MIMO channels.
//! * [`zf`]: stream signatures, Gram-matrix bookkeeping and effective channels.
//! * [`power`]: per-user power management (capped water-filling, MCS
//!   quantization, equal power).
//! * [`search`]: the greedy-up stream selection for one time slot.
//! * [`fairness`]: proportional-fair scheduling over a realization.
//! * [`experiment`]: configuration files, sweeps and result files.

// `!(x > 0.0)` is the intended way to reject NaN along with non-positives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod mcs;
pub mod power;
pub mod search;
pub mod zf;

pub use error::{Error, Result};
pub use mcs::{FittedRateModel, McsTable};
pub use power::PowerScheme;
pub use search::{run_gus, SearchParams, StrategyKind, TsAllocationResult, TsChannels};
