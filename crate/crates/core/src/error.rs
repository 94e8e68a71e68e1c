use thiserror::Error;

use crate::lattice::{Edge, Site};

/// Everything that can go wrong inside the simulation core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coordinate overflow: |coordinate| would reach 2^62")]
    CoordinateOverflow,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0} (supported: 1..={max})", max = crate::lattice::MAX_DIM)]
    UnsupportedDimension(usize),

    #[error("edge {0} is unrevealed")]
    UnrevealedEdge(Edge),

    #[error("never-unrevealed violation: a leftward letter at {site} queried an unrevealed edge at letter-time {t}")]
    NeverUnrevealed { site: Site, t: u64 },

    #[error("line index {0} out of range (max 40)")]
    LineIndexOutOfRange(u32),

    #[error("stage {0} was never reached by the walk")]
    MissingTau(u32),

    #[error("transcript step {step} uses an edge that is not on the path")]
    PathInconsistency { step: usize },

    #[error("population cap {cap} exceeded at time {time}")]
    PopulationCap { cap: u64, time: usize, partial: Vec<u64> },

    #[error("sites {0} and {1} are not connected")]
    Disconnected(Site, Site),

    #[error("site {0} has degree zero")]
    ZeroDegree(Site),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient points for fit: need {need}, have {have}")]
    InsufficientPoints { need: usize, have: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
