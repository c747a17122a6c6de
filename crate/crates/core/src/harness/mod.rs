//! Experiment orchestration: building the market and agents from a config,
//! the stepped and realtime run loops, pretraining, checkpoints and outputs.

mod config;
mod output;
mod realtime;
mod sim;

pub use config::{
    BookSeed, Endowment, ExperimentConfig, Group, Mode, RealtimeSection, RecordSection, RlSection,
    ZiSection, PRESETS,
};
pub use output::{
    checkpoint_file_name, load_run_manifest, sha256_file, write_run, RunManifest, MANIFEST_FILE,
};
pub use sim::{
    execute, pretrain, run, seed_book, ExecutedOrder, RosterEntry, RunKind, RunLog, RunOutput, Simulation,
    SnapshotRow, StateRow, UTILITY_AGENT,
};

use thiserror::Error;

use crate::lob::AgentId;
use crate::rl::CheckpointError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("agent {agent} ({class}) produced a non-finite loss")]
    NonFiniteLoss { agent: AgentId, class: &'static str },
    #[error("conservation audit failed: {0}")]
    Conservation(String),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        #[source]
        source: CheckpointError,
    },
    #[error("output directory {0} already exists")]
    OutputExists(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Independent sub-seed for one consumer of randomness (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
