//! Data collection, record files, checkpoints, experiment configuration and
//! the experiment runner.

mod checkpoint;
mod config;
mod experiment;
mod play;
mod records;

pub use checkpoint::{
    load_checkpoint, meta_path, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CheckpointMeta,
    CHECKPOINT_VERSION,
};
pub use config::ExperimentConfig;
pub use experiment::{prepare_model, run_experiment, scene_seed, write_outputs, ExperimentError, ExperimentOutput};
pub use play::{collect_random_play, positive_fraction, PlayConfig};
pub use records::{
    load_chunk, load_dataset, load_logs, read_records, save_chunk, save_dataset, save_logs, ChunkRecord, EpisodeMeta,
    Header, Record, RecordError, RecordWriter, RECORD_VERSION,
};
