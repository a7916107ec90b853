use std::path::PathBuf;

use uavxai_nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid arena: {0}")]
    InvalidArena(String),
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("replay holds {len} transitions, sampling needs more than {warmup}")]
    NotWarmedUp { len: usize, warmup: usize },
    #[error("training diverged at episode {episode} after {batches} non-finite batches")]
    Diverged { episode: usize, batches: usize },
    #[error("exact Shapley enumeration supports at most {max} features, got {count}")]
    TooManyFeatures { count: usize, max: usize },
    #[error("unexpected architecture: {0}")]
    Architecture(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("bad record file: {0}")]
    Record(String),
    #[error("missing {}: run `{stage}` first", .path.display())]
    MissingPrerequisite { stage: String, path: PathBuf },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
}
