//! Variational Monte Carlo with restricted Boltzmann machine wavefunctions for
//! early-time out-of-time-ordered correlators (OTOCs) of lattice spin models.
//!
//! The pipeline is:
//!
//! * [`rbm`]: the wavefunction, its log-derivatives, and exact Pauli
//!   operator updates on the parameters;
//! * [`sampler`]: Metropolis chains over `|Psi|^2`;
//! * [`hamiltonian`]: local energies for the transverse-field Ising model;
//! * [`dynamics`]: stochastic reconfiguration for ground-state training and
//!   real-time evolution with global-phase tracking;
//! * [`overlap`] and [`otoc`]: two-sided overlap estimator and the OTOC
//!   drivers (pure state, trained ground state, infinite temperature);
//! * [`ed`]: dense state-vector oracle for small systems;
//! * [`fit`]: wavefront fit of `Re F(t)`;
//! * [`experiment`]: configuration files, manifests and result tables used by
//!   the command-line driver.

pub mod dynamics;
pub mod ed;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod hamiltonian;
pub mod lattice;
pub mod otoc;
pub mod overlap;
pub mod par;
pub mod rbm;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::Lattice;
pub use num_complex::Complex64 as C64;
pub use rbm::{Pauli, PauliOp, RbmState, SpinConfig};
