//! Entity-only skip-gram/CBOW trainer and its file formats.

mod config;
mod sgns;
mod table;
mod train;

use thiserror::Error;

pub use config::{Mode, TrainConfig, CONVENTIONAL_DEFAULTS};
pub use sgns::{cbow_loss_and_gradient, loss_and_gradient, SgnsGradient};
pub(crate) use table::parse_header;
pub use table::{file_key, sidecar, EmbeddingTable, FileFormat, Matrix, Provenance};
pub use train::{train, train_split, TrainReport};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no bio has two in-vocabulary identities")]
    EmptyCorpus,
    #[error("vocabulary has {0} entries; at least 2 are needed")]
    VocabularyTooSmall(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in epoch {epoch} at example {step}")]
    NonFiniteLoss { epoch: usize, step: u64 },
}
