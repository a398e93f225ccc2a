//! Linear vibronic coupling models and three ways to run them: an exact
//! truncated-Fock propagator, a mean-field Ehrenfest ensemble, and an
//! emulator of the trapped-ion pulse schedule that would simulate them.
//!
//! The numerical core is generic over [`numeric::Real`]; the aliases below
//! fix it to `f64`.

pub mod config;
pub mod ehrenfest;
pub mod emulator;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod hardware;
pub mod hilbert;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod numeric;
pub mod pulse;
pub mod trace;
pub mod units;

pub use error::{Error, Result};

pub type Complex = num_complex::Complex64;
pub type Matrix = linalg::DenseMatrix<f64>;
pub type Spec = model::LvcmSpec<f64>;
pub type Trace = trace::PopulationTrace<f64>;
pub type Request = exact::PropagationRequest<f64>;
pub type Trajectory = ehrenfest::TrajectoryState<f64>;
pub type Ensemble = ehrenfest::EnsembleConfig<f64>;
