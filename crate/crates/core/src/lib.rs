//! Sentence encoders that learn Tree-LSTM composition together with a latent
//! binary parse, using a soft CYK-style chart that stays differentiable end to
//! end. Bag-of-words, LSTM and fixed-tree baselines share the same machinery,
//! along with an entailment classifier and a reverse-dictionary ranker.

pub mod autodiff;
pub mod data;
pub mod embeddings;
pub mod encoders;
pub mod error;
pub mod gradsuite;
pub mod heads;
pub mod model;
pub mod training;

pub use error::{Error, Result};
