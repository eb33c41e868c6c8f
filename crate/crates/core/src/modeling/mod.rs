//! Backend contract, task mixtures and the training loop.

mod backend;
pub mod backends;
mod mixture;
mod schedule;
mod task;
mod train;

use serde::Serialize;

pub use backend::{
    Backend, BackendCheckpoint, BackendError, BackendSpec, CheckpointMeta, GenOutput, GoldEntry, GoldTable,
    CHECKPOINT_META, CHECKPOINT_PAYLOAD,
};
pub use mixture::{build_mixture, BatchStream, Mixture, MixtureEntry, MixtureError, MixturePolicy, Slot};
pub use schedule::{lr_schedule, TrainConfig};
pub use task::TaskSpec;
pub use train::{
    train, train_observed, validation_score, LogEvent, StopReason, TrainError, TrainingLog, ValidationSet,
};

/// First 16 hex digits of the SHA-256 of the value's JSON encoding.
///
/// Struct fields serialise in declaration order and maps in this crate are
/// `BTreeMap`s, so equal values always hash equally.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialise");
    crate::util::sha256_hex(&bytes)[..16].to_string()
}
