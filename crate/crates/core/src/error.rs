use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector failed the simplex invariants (positivity, unit sum, finiteness).
    InvalidComposition(String),
    /// A Dirichlet concentration or other parameter left its domain.
    Domain(String),
    /// Two objects that must agree in shape did not.
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// The recursion asked for an observation that is not in the history.
    MissingHistory { t: usize, needed: usize },
    /// `z_t . gamma` left the +/-700 guard band.
    PrecisionOverflow { t: usize, log_precision: f64 },
    /// A non-finite value appeared while evaluating the likelihood at time `t`.
    LikelihoodEvaluation { t: usize },
    /// Forward simulation produced a non-finite state at time `t`.
    SimulationDiverged { t: usize },
    /// Invalid model, prior, sampler or study configuration.
    Config(String),
    /// No finite starting point was found for a chain.
    InitializationFailed { chain: usize, attempts: usize },
    /// R-hat needs at least two chains with enough draws.
    RhatUnavailable(String),
    /// Not enough observations for the requested operation.
    InsufficientData { needed: usize, available: usize },
    /// Lookup of a named built-in (study, data-generating process, prior family).
    UnknownName { kind: &'static str, name: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidComposition(msg) => write!(f, "invalid composition: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Shape {
                what,
                expected,
                found,
            } => write!(f, "shape mismatch for {what}: expected {expected}, found {found}"),
            Error::MissingHistory { t, needed } => {
                write!(f, "history too short at t={t}: need index {needed}")
            }
            Error::PrecisionOverflow { t, log_precision } => write!(
                f,
                "log precision {log_precision} at t={t} exceeds the +/-700 guard"
            ),
            Error::LikelihoodEvaluation { t } => {
                write!(f, "non-finite likelihood contribution at t={t}")
            }
            Error::SimulationDiverged { t } => write!(f, "simulation diverged at t={t}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::InitializationFailed { chain, attempts } => write!(
                f,
                "chain {chain}: no finite initial point after {attempts} attempts"
            ),
            Error::RhatUnavailable(msg) => write!(f, "R-hat unavailable: {msg}"),
            Error::InsufficientData { needed, available } => write!(
                f,
                "insufficient data: need {needed} observations, have {available}"
            ),
            Error::UnknownName { kind, name } => write!(f, "unknown {kind} '{name}'"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn shape(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            found,
        })
    }
}
