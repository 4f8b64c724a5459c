//! Extractive summarization with hierarchical structure injection.
//!
//! Sentences are encoded by a small Transformer encoder; their hierarchical
//! positions (section index, sentence-in-section index) and section title
//! embeddings are added to the sentence representations before two
//! inter-sentence Transformer layers and a sigmoid classifier score each
//! sentence for extraction.

pub mod autodiff;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod labeling;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod posenc;
pub mod summarizer;

pub use corpus::{Document, LabeledDocument};
pub use model::{HiStructModel, ModelConfig};

pub use error::{Error, Result};
