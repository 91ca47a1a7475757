//! Next-element sequence model: an optional fully-connected layer with
//! leaky-ReLU, an LSTM, and a linear (regression) or softmax (classification)
//! output layer. Backpropagation through time is exact and is used both for
//! training and for gradient extraction at inference time.

mod backprop;
mod forward;
mod model;
mod sequence;
mod train;

pub use backprop::{rnn_backprop, Gradient};
pub use forward::{nll_classification, nll_regression, rnn_forward, ForwardTrace};
pub use model::{rnn_init, ParamLayout, RnnArchitecture, RnnMode, RnnModel, RnnWeights};
pub use sequence::{EmbeddingTable, FeatureSequence, SequenceRef, SymbolSequence};
pub use train::{rnn_train, Checkpoint, TrainConfig};
