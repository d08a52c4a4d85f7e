use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("unknown format `{0}` (expected csv or jsonl)")]
    UnknownFormat(String),

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("corpus_empty: no advertisements survive cleaning")]
    CorpusEmpty,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid skill scheme: {0}")]
    Scheme(String),

    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,

    #[error("zero_variance:{0}")]
    ZeroVariance(String),

    #[error("rank-deficient design; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("too few observations: n = {n}, need more than {required}")]
    TooFewObservations { n: usize, required: usize },

    #[error("row alignment: {0}")]
    Alignment(String),

    #[error("invalid model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
