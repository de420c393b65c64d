//! Ground states of the spin-boson model from a multi-coherent-state
//! variational ansatz.
//!
//! * [`bath`] turns a power-law spectral density into discrete modes.
//! * [`ansatz`] holds the trial state, its energy and analytic gradient.
//! * [`optimizer`] runs quasi-Newton multi-start searches with annealing.
//! * [`observables`] evaluates spin, bath and symmetry observables.
//! * [`oracle`] diagonalizes tiny baths exactly to validate the above.
//! * [`analysis`] sweeps couplings, locates the transition and fits
//!   power laws, exponentials and logarithmic extrapolations.

pub mod analysis;
pub mod ansatz;
pub mod bath;
pub mod error;
pub mod observables;
pub mod optimizer;
pub mod oracle;

pub use ansatz::{ModelParams, VariationalState};
pub use bath::{BathDiscretization, MeshScheme, MeshSpec, SpectralDensity};
pub use error::{Result, SbmError};
pub use optimizer::{GroundStateSolution, OptimizerOptions};
