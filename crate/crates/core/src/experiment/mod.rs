//! Configuration, experiment drivers, and metrics persistence.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::{parse_config, parse_config_str, DatasetSpec, ExperimentConfig, Strategy};
pub use metrics::{git_blob_sha256, EpisodeRecord, MetricsWriter, RoundRecord};
pub use run::{
    ablation, defect_plan, load_data, rounds_to_target, run_fl, run_fl_with, sweep, train_dearfsac,
    train_qeen_phase, train_variant, RunSummary, SweepAxis, SweepRow, TrainOutputs, Variant,
    CORPUS_RUN, TRAIN_RUN_OFFSET,
};
