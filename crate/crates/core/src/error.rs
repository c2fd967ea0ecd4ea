use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duplicate basis mode id `{0}`")]
    DuplicateMode(String),

    #[error("EPR pair `{0}` is not matched by exactly one half with index 1 and one with index 2 at equal squeezing")]
    UnmatchedEpr(String),

    #[error("squeezing factor must be finite and non-negative, got {0}")]
    NegativeSqueezing(f64),

    #[error("unknown basis mode id `{0}`")]
    UnknownMode(String),

    #[error("expressions belong to different basis registries")]
    RegistryMismatch,

    #[error("parameter `{name}` = {value} out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("feedforward gain diverges at R = 1")]
    SingularGain,

    #[error("cloning with M = {m} requires R = {expected}, got R = {got}")]
    CloningReflectivity { m: u32, expected: f64, got: f64 },

    #[error("mode `{0}` is not an unused vacuum")]
    ConsumedMode(String),

    #[error("ancilla count {got} does not match the {expected} required")]
    AncillaCount { expected: usize, got: usize },

    #[error("expression is not a physical single mode: {0}")]
    Unphysical(String),

    #[error("covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("{0}")]
    Config(String),
}
