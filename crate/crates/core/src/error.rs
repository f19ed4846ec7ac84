use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("field length {found} does not match mesh node count {expected}")]
    MeshMismatch { expected: usize, found: usize },

    #[error("incompatible meshes: {0}")]
    IncompatibleMeshes(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("non-finite value at node {node}: {value}")]
    Evaluation { node: usize, value: f64 },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
