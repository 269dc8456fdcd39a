//! Hardware-aware search of early-exit neural networks.
//!
//! The crate is organised along the pipeline:
//!
//! - [`arch`]: backbone and exit search space, chromosome encoding, layer graphs
//! - [`quant`]: linear quantization with KL-calibrated clipping
//! - [`eval`]: exit semantics, accuracy aggregation, toy trainer, synthetic
//!   oracle and the external evaluator file protocol
//! - [`hwcost`]: analytical multi-core accelerator energy/latency model
//! - [`predict`]: ridge-regression weak predictors
//! - [`nas`]: the constrained genetic search loop and Pareto analysis

pub mod arch;
pub mod eval;
pub mod hwcost;
pub mod io;
pub mod nas;
pub mod predict;
pub mod quant;
