use alloc::string::String;
use core::fmt;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ShapeMismatch { op: &'static str, detail: String },
    NonFinite { op: &'static str },
    EmptyInput { op: &'static str },
    InvalidLambda(f64),
    TooLarge { op: &'static str, n: usize, max: usize },
    NotScalar { shape: alloc::vec::Vec<usize> },
    /// A node id was out of range or did not precede its consumer.
    BadNode(usize),
    OutOfVocabulary { index: usize, vocab: usize },
    /// The raw importance vector was identically zero.
    DegenerateImportance(&'static str),
    /// `||h_p|| == 0`, where the norm is not differentiable.
    ZeroNorm { position: usize },
    /// Entropy normalisation needs at least two outcomes.
    SingleOutcome,
    /// One side of a rank correlation is fully tied.
    FullyTied,
    Config(String),
    Divergence { epoch: usize, detail: String },
    ArchitectureMismatch(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch ({detail})"),
            Error::NonFinite { op } => write!(f, "{op}: non-finite result"),
            Error::EmptyInput { op } => write!(f, "{op}: empty input"),
            Error::InvalidLambda(l) => write!(f, "sparsegen lambda must be < 1, got {l}"),
            Error::TooLarge { op, n, max } => write!(f, "{op}: n = {n} exceeds limit {max}"),
            Error::NotScalar { shape } => write!(f, "backward root must be scalar, got shape {shape:?}"),
            Error::BadNode(id) => write!(f, "invalid tape node {id}"),
            Error::OutOfVocabulary { index, vocab } => {
                write!(f, "token index {index} out of vocabulary of size {vocab}")
            }
            Error::DegenerateImportance(what) => write!(f, "{what}: all raw importances are zero"),
            Error::ZeroNorm { position } => write!(f, "h_{position} has zero norm"),
            Error::SingleOutcome => write!(f, "normalized entropy undefined for n = 1"),
            Error::FullyTied => write!(f, "kendall tau-b undefined: one side fully tied"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Divergence { epoch, detail } => write!(f, "training diverged in epoch {epoch}: {detail}"),
            Error::ArchitectureMismatch(msg) => write!(f, "architecture mismatch: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
