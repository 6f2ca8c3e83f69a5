//! Tape-based reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Build a [`Tape`], bind inputs and parameters, compose operations, then
//! call [`Tape::backward`] on a scalar loss:
//!
//! ```
//! use trajkit_autodiff::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::scalar(3.0));
//! let mut tape = Tape::new();
//! let wv = tape.param(&store, w);
//! let zero = tape.constant(Tensor::scalar(0.0));
//! let loss = tape.mse_loss(wv, zero).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.param(w).unwrap().item(), 6.0);
//! ```

pub mod error;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{glorot_uniform, read_checkpoint, sgd_step, Adam, ParamId, ParamStore, Parameter};
pub use tape::{GradAccumulator, Gradients, Tape, Var};
pub use tensor::{softmax, Tensor};
