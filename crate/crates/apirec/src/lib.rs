//! Hierarchical two-stage Web API recommendation.
//!
//! A multi-label neural filter scores every API in the repository from a
//! requirement description, the top-H candidates are rescored by a
//! cross-encoding matcher, and a weighted fusion of both score vectors
//! produces the final top-N ranking. The crate ships the full stack: corpus
//! ingestion, WordPiece tokenization, a small transformer encoder with its
//! own reverse-mode autodiff, training (Adam, two-phase learning rate, early
//! stopping), rank metrics, a CLI, and an HTTP query service.

pub mod autograd;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod filter;
pub mod matcher;
pub mod metrics;
pub mod tokenizer;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use corpus::{load_corpus, Corpus, Mashup, Preprocessor, SplitCorpus, SplitManifest, WebApi};
pub use encoder::{mean_pool, EncoderConfig, EncoderOutput, EncoderParams};
pub use error::{Error, Result};
pub use filter::{
    category_scores, relevance_scores, select_candidates, CandidateSet, FusionHead, ScoreSpace,
    ScoreVector,
};
pub use matcher::{score_candidates, similarity, MatchHead, MatchMode};
pub use metrics::{
    ap_at, evaluate, ndcg_at, precision_at, recall_at, IdcgMode, MetricsReport, QueryJudgment,
};
pub use tokenizer::{encode_pair, encode_single, TokenizedSequence, Vocab};
