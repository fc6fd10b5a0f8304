//! Vanilla LSTM and three gate-simplified variants, with hand-derived
//! backpropagation through time, an RMSprop training harness and a CLI.
//!
//! The variants differ only in what feeds the three gates:
//!
//! * `Vanilla`: input signal, hidden signal and bias.
//! * `NoInput` (LSTM1): hidden signal and bias.
//! * `NoInputNoBias` (LSTM2): hidden signal only.
//! * `BiasOnly` (LSTM3): bias only.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod linalg;
pub mod optim;
pub mod report;

pub use cells::{param_count, GateVariant, LstmParams};
pub use error::{Error, Result};
pub use harness::{Model, RunConfig, Task};
pub use linalg::{Matrix, Rng, Vector};
