//! Downstream heads and metrics: one-vs-all linear SVM classification and
//! bidirectional retrieval evaluation with similarity fusion.

mod retrieval;
mod svm;

pub use retrieval::{
    rank_matrix, rankings_from_similarity, retrieval_metrics, similarity_fuse, similarity_matrix,
    RetrievalMetrics, SimilarityMatrix,
};
pub use svm::{classify_accuracy, svm_decision_values, svm_predict, svm_train, LinearSvmModel};
