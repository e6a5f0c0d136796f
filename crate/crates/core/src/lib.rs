//! Sparse, non-negative concept embeddings learned from odd-one-out triplet
//! judgments.
//!
//! Each concept is a non-negative vector; the similarity of two concepts is
//! the dot product of their vectors, and the probability that a pair is
//! judged most similar within a triplet is the softmax of the three pairwise
//! similarities. Fitting minimizes the negative log-likelihood plus an L1
//! penalty with projected Adam, picks the penalty on a held-out split, and
//! prunes dimensions the penalty has shrunk away.

pub mod data;
pub mod downstream;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod training;

pub mod cli;

pub use data::{
    split_train_validation, ConceptVocabulary, Embedding, FeatureTable, Pair, SimilarityMatrix,
    TrainConfig, TripletDataset, TripletJudgment,
};
pub use error::{ErrorCategory, Result, SposeError};
