//! Benchmark engine for LLM summaries of public deliberation: opinion
//! sampling, summary generation, ring-matched comparison pairs, four-dimension
//! judging, and aggregate reports.

pub mod aggregate;
pub mod chat;
pub mod corpus;
pub mod io;
pub mod ringmatch;
pub mod rng;
pub mod sampler;
pub mod scores;
pub mod stats;
pub mod summarizer;

pub use corpus::{Corpus, Opinion, Question, Summary};
pub use scores::{Dimension, ScoreVector};
