//! Fixed-size representations of variable-length vector sequences.
//!
//! The central encoder is the RNN Fisher Vector: the gradient of a
//! next-element-prediction RNN's negative log-likelihood with respect to the
//! network weights, computed by backpropagation at inference time. Two
//! order-invariant baselines are included (mean pooling and the classic
//! diagonal-covariance GMM Fisher Vector), together with the normalization
//! chain (Fisher-information diagonal, signed power, L2) and downstream heads
//! for classification (one-vs-all linear SVM) and cross-modal retrieval
//! (regularized CCA plus cosine ranking).
//!
//! See the `examples/` directory for runnable end-to-end walkthroughs and the
//! `rnnfv` binary for the command-line pipeline.

pub mod error;
pub mod eval;
pub mod fv;
pub mod numeric;
pub mod pipeline;
pub mod rnn;

pub use error::{Error, Result};
