use thiserror::Error;

use crate::classic::ClassifierError;
use crate::datasetgen::DatasetError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::image::ImageError;
use crate::ingest::IngestError;
use crate::neural::NeuralError;
use crate::splitting::SplitError;
use crate::synth::SynthError;

/// Crate-level error, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Name of the module that raised the error, used in CLI diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Ingest(_) => "ingest",
            Error::Dataset(_) => "datasetgen",
            Error::Split(_) => "splitting",
            Error::Feature(_) => "features",
            Error::Image(_) => "image",
            Error::Classifier(_) => "classic_ml",
            Error::Neural(_) => "neural",
            Error::Eval(_) => "eval_report",
            Error::Synth(_) => "synth",
            Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } => "io",
            Error::Usage(_) => "cli",
        }
    }

    /// Variant name of the underlying error, e.g. `InvalidK`.
    pub fn kind(&self) -> String {
        let debug = match self {
            Error::Ingest(e) => format!("{e:?}"),
            Error::Dataset(e) => format!("{e:?}"),
            Error::Split(e) => format!("{e:?}"),
            Error::Feature(e) => format!("{e:?}"),
            Error::Image(e) => format!("{e:?}"),
            Error::Classifier(e) => format!("{e:?}"),
            Error::Neural(e) => format!("{e:?}"),
            Error::Eval(e) => format!("{e:?}"),
            Error::Synth(e) => format!("{e:?}"),
            Error::Io { .. } => return "Io".into(),
            Error::Json { .. } => return "Json".into(),
            Error::Csv { .. } => return "Csv".into(),
            Error::Usage(_) => return "Usage".into(),
        };
        debug
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect()
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
