//! Political-leaning classification of parliamentary speeches and
//! explanation of the trained models.
//!
//! The pipeline reads a speech corpus, labels speeches by party position,
//! selects a topic, builds TF-IDF n-gram features, trains a linear SVM with
//! nested cross-validation, and explains the final model with hyperplane
//! weights and Shapley-value attributions.

pub mod corpus;
pub mod evaluation;
pub mod explain;
pub mod features;
pub mod pipeline;
pub mod report;
pub mod sparse;
pub mod svm;
pub mod synthetic;
