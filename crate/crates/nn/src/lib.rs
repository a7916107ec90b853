//! A small, closed-set neural network engine.
//!
//! Networks are stacks of a fixed set of layer kinds (dense, 2D convolution,
//! max-pool, GRU, LSTM, elementwise activations, flatten and time
//! distribution). Every layer carries a hand-written backward pass. The same
//! backward pass doubles as a DeepLIFT multiplier propagator when it is given
//! the forward record of a reference input: nonlinearities switch from
//! derivatives to secant slopes and gate products switch to midpoint
//! factors, so multipliers times input deltas sum exactly to the output delta.

mod error;
mod branched;
pub mod exec;
pub mod io;
mod kernels;
pub mod layer;
pub mod optim;
mod real;
pub mod sequential;
mod tensor;

pub use branched::{Branched, BranchedTape};
pub use error::NnError;
pub use layer::{Activation, Cache, Layer, LayerSpec};
pub use optim::{Adam, AdamConfig};
pub use real::Real;
pub use sequential::{Parametrized, Sequential, Tape};
pub use tensor::Tensor;

pub type Result<T, E = NnError> = std::result::Result<T, E>;
