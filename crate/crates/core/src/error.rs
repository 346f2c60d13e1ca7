use thiserror::Error;

use crate::hexgeo::CellIndex;

/// Errors raised across the model, geometry, analytic and oracle layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pilot length B = {pilot_len} exceeds the coherence block T = {coherence_block}")]
    PilotOverflow {
        pilot_len: usize,
        coherence_block: usize,
    },

    #[error("P-ZFC needs N > B, got N = {n_antennas} and B = {pilot_len}")]
    InsufficientAntennas { n_antennas: usize, pilot_len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported reuse factor {0}, the hexagonal grid allows 1, 3, 4 or 7")]
    UnsupportedReuse(u32),

    #[error("index out of range: {0}")]
    Index(String),

    #[error(
        "moment table did not converge within {max_tiers} tiers \
         (last relative increment {last_increment:.3e}, tolerance {tolerance:.1e})"
    )]
    Convergence {
        max_tiers: usize,
        last_increment: f64,
        tolerance: f64,
    },

    #[error("moment table has no entry for offset ({}, {})", .0.a1, .0.a2)]
    MissingMoment(CellIndex),

    #[error("SINR denominator is not positive ({0:e})")]
    DegenerateDenominator(f64),

    #[error("Gram matrix is numerically singular (condition number {0:.3e})")]
    RankDeficient(f64),

    #[error("no feasible (K, beta) pair for N = {n_antennas} ({scheme}, {mode})")]
    EmptyFeasibleSet {
        n_antennas: usize,
        scheme: String,
        mode: String,
    },

    #[error("not found: {0}")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;
