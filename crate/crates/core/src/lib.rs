//! Tunneling out of a driven metastable well: resonant states of an
//! absorbing-potential Hamiltonian, semiclassical estimates, the
//! resonance-expansion current and its saddle-point approximation, and a
//! Crank-Nicolson reference propagator.

pub mod current;
pub mod decomposition;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod grid;
pub mod linalg;
pub mod potential;
pub mod saddle;
pub mod spectral;
pub mod spline;
pub mod wkb;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{Boundary, Grid, GridSpec, Hamiltonian};
pub use potential::{Potential, PotentialSpec, TurningPoints};
