//! File formats, ingestion, synthetic cohorts and staged orchestration.

pub mod config;
pub mod formats;
pub mod ingest;
pub mod report;
pub mod runner;
pub mod stages;
pub mod synth;

pub use config::{parse_stages, PipelineConfig, Stage, TaskScoreKind};
pub use formats::{Code, Diagnostic, Label, LabelKind, Severity};
pub use ingest::{discover, ingest, read_scalar_signal, Dataset, Ingested, ParticipantBundle};
pub use report::Summary;
pub use runner::{run, RunOutcome};
pub use synth::{synth, Manifest, SynthSpec};

use crate::error::Error;

/// Process exit status for a failed command: 2 for invalid input or
/// configuration, 3 for a failure inside a stage.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation { .. } | Error::InvalidInput(_) => 2,
        _ => 3,
    }
}
