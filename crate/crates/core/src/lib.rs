//! Simulation and fitting toolkit for atoms trapped in a Morse-like potential
//! next to an optical nanofiber and probed through its evanescent field.
//!
//! The crate is organised bottom-up:
//!
//! * [`constants`]: physical constants and the cesium D2 line.
//! * [`morse`]: ground/excited radial potentials and the analytic bound-state table.
//! * [`fd_oracle`]: finite-difference diagonalisation used to cross-check [`morse`].
//! * [`coupling`]: distance-dependent coupling, thermal occupations and ensemble averages.
//! * [`heating`]: scattering rate and Monte-Carlo dipole-force heating per scattered photon.
//! * [`dynamics`]: probe/cool/wait schedules and the resulting transmission traces.
//! * [`fitting`]: Levenberg-Marquardt engine and the transmission/lifetime/saturation models.
//! * [`setup`]: default trap parameters and the calibration pipeline tying the above together.
//!
//! All internal quantities are SI. Temperatures are kelvin; energies quoted in
//! µK are converted through the Boltzmann constant only at I/O boundaries.

pub mod constants;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod fd_oracle;
pub mod fitting;
pub mod heating;
pub mod morse;
pub mod ode;
pub mod quadrature;
pub mod setup;
pub mod spline;

pub use error::{Error, Result};
