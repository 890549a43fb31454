use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("energy {energy} outside the admissible range ({lo}, {hi})")]
    EnergyOutOfRange { energy: f64, lo: f64, hi: f64 },

    #[error("no sign change of V(x) - E bracketed while searching for {which} at E = {energy}")]
    RootNotBracketed { which: &'static str, energy: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid spacing {h} exceeds 0.2 oscillator lengths ({limit})")]
    GridTooCoarse { h: f64, limit: f64 },

    #[error("position {x} is outside the usable grid interior")]
    OutOfGrid { x: f64 },

    #[error("eigenvalue iteration failed to converge at index {index}")]
    SolverFailure { index: usize },

    #[error("no localized resonances found")]
    NoResonancesFound,

    #[error("resonances {first} and {second} are closer than their widths")]
    DuplicateLevel { first: usize, second: usize },

    #[error("overlap matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("coefficient vector has length {coefficients}, basis has {basis}")]
    IndexMismatch { coefficients: usize, basis: usize },

    #[error("coherent displacement {center} + 3d exceeds the harmonic region ending at {limit}")]
    DisplacementTooLarge { center: f64, limit: f64 },

    #[error("saddle iteration left the tabulated range at n = {n}")]
    SaddleDiverged { n: f64 },

    #[error("saddle iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("complex continuation out of trust region (|Im E| = {im_energy}, limit {limit})")]
    ContinuationOutOfRange { im_energy: f64, limit: f64 },

    #[error("Crank-Nicolson step {step} increased the norm by {growth:e}")]
    StepUnstable { step: usize, growth: f64 },

    #[error("series do not overlap on the requested window")]
    NoOverlap,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
