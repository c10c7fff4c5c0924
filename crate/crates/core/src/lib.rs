//! Numerical simulation of continuously monitored quantum systems.
//!
//! A monitored observable `A` with strength `kappa` turns every readout curve
//! `a(t)` into a non-unitary partial evolution. This crate provides:
//!
//! * [`hilbert`]: dense operators, states, density matrices and model builders;
//! * [`monitoring`]: readout curves, weight functionals and effective Hamiltonians;
//! * [`selective`]: readout-conditioned evolution and exact readout sampling;
//! * [`nonselective`]: master equations, RK4 integration and ensemble averaging;
//! * [`lattice`]: restricted path integrals evaluated as lattice transfer matrices;
//! * [`diagnostics`]: the invariant self-check suite used by the `check` run mode.

pub mod diagnostics;
pub mod error;
pub mod hilbert;
pub mod io;
pub mod lattice;
pub mod monitoring;
pub mod nonselective;
pub mod selective;

mod exact_sum;

pub use error::{Error, Result};
pub use hilbert::{
    anticommutator, build_oscillator, build_qubit, commutator, matrix_exponential, CMatrix,
    CVector, DensityMatrix, Operator, Oscillator, PhysicalConstants, StateVector, C64,
};
pub use monitoring::{
    effective_hamiltonian, kappa_from_corridor, weight_gaussian, weight_nonminimal,
    CorridorSpec, MonitoringChannel, ReadoutCurve,
};
