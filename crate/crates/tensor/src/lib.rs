//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Small on purpose: every operation the downstream perception stack needs
//! has a hand-derived backward, validated against central finite differences.
//! Includes an AdamW-style optimizer, a deterministic counter-based RNG, and
//! the `BMOS` binary record format used for checkpoints and datasets.

mod checkpoint;
mod error;
pub mod gradcheck;
pub mod ops;
mod optim;
mod param;
mod rng;
mod tensor;

pub use checkpoint::{read_records, write_records, Record, MAGIC, VERSION};
pub use error::{Result, TensorError};
pub use optim::{Adam, AdamConfig};
pub use param::{ParamSet, Parameter};
pub use rng::CounterRng;
pub use tensor::{BackwardFn, GradStore, Tensor};
