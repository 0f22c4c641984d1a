//! Mixed extractive-abstractive summarization with a learned editor.
//!
//! An extractor picks sentences, an abstractor rewrites each of them, and a
//! small editor network decides per sentence whether to keep the extracted
//! version (E), the abstracted version (A) or neither (R). The editor is
//! trained on soft labels computed by exhaustively scoring every decision
//! sequence with a ROUGE-based reward.

pub mod editor;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod rouge;
pub mod summarizers;
pub mod synth;
pub mod text;
pub mod trainer;

pub use editor::{edit, Checkpoint, Decision, DecisionDistribution, EditorParams, MixedSummary, SoftLabel};
pub use encoder::EncoderConfig;
pub use error::{Error, Result};
pub use oracle::{DecisionSequence, LabeledExample, OracleConfig};
pub use rouge::{reward, RewardWeights, RougeScore};
pub use summarizers::{Abstractor, ExtractResult, Extractor, GreedyOracleExtractor, LeadExtractor, SalienceAbstractor};
pub use text::{tokenize, Document, Example, ReferenceSummary, Token};
pub use trainer::{evaluate, train, Report, TrainConfig};
