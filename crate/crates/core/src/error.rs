use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::BoundaryTag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("state ({psi0}, {psi1x}, {psi1y}) is not realizable")]
    NotRealizable { psi0: f64, psi1x: f64, psi1y: f64 },

    #[error("jacobian is singular on the realizability boundary (f = {f})")]
    Singular { f: f64 },

    #[error("eigenvector matrix is numerically defective (condition estimate {condition_estimate:e})")]
    Conditioning { condition_estimate: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("mesh validation error in element {element}: {message}")]
    MeshValidation { element: usize, message: String },

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("non-finite initial data in cell {cell}")]
    Data { cell: usize },

    #[error("non-finite rate in cell {cell} ({context})")]
    BlowUp { cell: usize, context: String },

    #[error("no boundary condition configured for tag {0:?}")]
    UnconfiguredBoundary(BoundaryTag),

    #[error("cell means not strictly realizable in {} cell(s), first few: {:?}", cells.len(), &cells[..cells.len().min(8)])]
    NonRealizableMeans { cells: Vec<usize> },

    #[error("time step is not positive ({0})")]
    TimeStep(f64),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
