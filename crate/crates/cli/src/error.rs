use fsnt_core::eval::EvalError;
use fsnt_core::features::FeatureError;
use fsnt_core::flowdata::FlowDataError;
use fsnt_core::learn::LearnError;
use fsnt_core::pipeline::PipelineError;
use fsnt_core::preprocess::PreprocessError;
use fsnt_core::trafficgen::GenError;
use fsnt_detectd::{ReplayError, ServiceError};
use thiserror::Error;

pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const DATA: i32 = 4;
    pub const NOT_LABELED: i32 = 5;
    pub const INVALID_PARAM: i32 = 6;
    pub const MODEL_FILE: i32 = 7;
    pub const SERVICE: i32 = 8;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
    #[error("dataset is not labeled")]
    NotLabeled,
    #[error("{0}")]
    InvalidParam(String),
    #[error("{0}")]
    ModelFile(String),
    #[error("{0}")]
    Service(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) => exit::IO,
            CliError::Data(_) => exit::DATA,
            CliError::NotLabeled => exit::NOT_LABELED,
            CliError::InvalidParam(_) => exit::INVALID_PARAM,
            CliError::ModelFile(_) => exit::MODEL_FILE,
            CliError::Service(_) => exit::SERVICE,
            CliError::Other(_) => exit::OTHER,
        }
    }

    /// Errors while reading or writing a model file.
    pub fn model_file(e: LearnError) -> Self {
        match e {
            LearnError::Io(io) => CliError::ModelFile(format!("model file: {io}")),
            other => CliError::ModelFile(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FlowDataError> for CliError {
    fn from(e: FlowDataError) -> Self {
        match e {
            FlowDataError::NotLabeled => CliError::NotLabeled,
            FlowDataError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::NotLabeled => CliError::NotLabeled,
            PreprocessError::InvalidFraction(_) => CliError::InvalidParam(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::KTooLarge { .. } => CliError::InvalidParam(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::InvalidHyperparameter { .. } | LearnError::UnknownKind(_) => {
                CliError::InvalidParam(e.to_string())
            }
            LearnError::VersionMismatch { .. } | LearnError::CorruptFile(_) => CliError::ModelFile(e.to_string()),
            LearnError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Learn(l) => l.into(),
            EvalError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(e) => e.into(),
            PipelineError::Preprocess(e) => e.into(),
            PipelineError::Feature(e) => e.into(),
            PipelineError::Learn(e) => e.into(),
            PipelineError::Eval(e) => e.into(),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::InvalidParam(e.to_string())
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Config(c) => CliError::InvalidParam(c.to_string()),
            ServiceError::Model { .. } => CliError::ModelFile(e.to_string()),
            other => CliError::Service(other.to_string()),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::InvalidOption(m) => CliError::InvalidParam(m),
            other => CliError::Service(other.to_string()),
        }
    }
}
