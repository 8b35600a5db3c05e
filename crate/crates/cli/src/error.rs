use perturbkit::data::DataError;
use perturbkit::metrics::MetricsError;
use perturbkit::model::ModelError;
use perturbkit::regress::PartitionError;
use perturbkit::report::AttackError;
use perturbkit::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed files, empty datasets.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Diverged { .. } => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Attack failure on one example.
    pub fn at(index: usize, e: AttackError) -> Self {
        let msg = format!("example {index}: {e}");
        if is_config(&e) {
            CliError::Config(msg)
        } else {
            CliError::Runtime(msg)
        }
    }
}

fn is_config(e: &AttackError) -> bool {
    matches!(
        e,
        AttackError::InvalidConfig(_)
            | AttackError::UnsupportedExponent(_)
            | AttackError::TooManySubsets { .. }
            | AttackError::TooManySigns(..)
            | AttackError::Partition(_)
            | AttackError::ClassOutOfRange { .. }
            | AttackError::TargetIsSource(_)
            | AttackError::NoCompetitor(_)
    )
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Attack { index, source } => CliError::at(index, source),
            MetricsError::NoLabels
            | MetricsError::InvalidPeak(_)
            | MetricsError::LengthMismatch(..) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { epoch, loss } => CliError::Diverged { epoch, loss },
            TrainError::Model(ModelError::NonFinite { .. }) => CliError::Runtime(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        CliError::Config(format!("partition: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
