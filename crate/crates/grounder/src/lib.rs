//! Temporal grounding of language queries in untrimmed videos.
//!
//! The model encodes a video as a fixed-length clip sequence and a query as a
//! pair of pooled word features (a relation feature over nouns/verbs and a
//! modified feature over the remaining words). The modified feature is treated
//! as the center of a Gaussian so that sampled query variants produce diverse
//! span predictions; a min-loss over the variants trains the multi-output
//! branch, and at inference the sampled predictions are clustered with K-means
//! into a fixed-size, ranked prediction set. The crate also ships the
//! multi-label recall metrics used to evaluate such prediction sets and a
//! synthetic data generator that manufactures query paraphrases and
//! multi-annotator label disagreement.

pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod pos;
pub mod regressor;
pub mod rng;
pub mod span;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
