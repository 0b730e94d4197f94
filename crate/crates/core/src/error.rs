use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("requested battery power {p_bat_w} W exceeds the pack maximum {p_max_w} W")]
    InfeasiblePower { p_bat_w: f64, p_max_w: f64 },

    #[error("injection infeasible in block {block}: i_c bounds [{i_c_min}, {i_c_max}] are empty")]
    InfeasibleInjection {
        block: usize,
        i_c_min: f64,
        i_c_max: f64,
    },

    #[error("no feasible control sequence: {0}")]
    Infeasible(String),

    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
