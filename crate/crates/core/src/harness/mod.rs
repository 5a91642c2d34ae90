//! Batch experiments: specs, execution, persistence and statistics.

pub mod runner;
pub mod spec;
pub mod stats;

pub use runner::{
    load_results, replay, run_experiment, run_seed, summarize, summarize_dir, ExperimentResults, Manifest,
    ReplayReport, Summary, FORMAT_VERSION,
};
pub use spec::{BiasAssumption, DomainKind, ExperimentSpec, ModeSpec, Preset};
pub use stats::{mean_se, wilcoxon_signed_rank, MeanSe, WilcoxonResult};
