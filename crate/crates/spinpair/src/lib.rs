//! Radical-pair spin dynamics and magnetometric sensitivity analysis.
//!
//! This crate simulates a pair of electron spins coupled to a small set of
//! spin-1/2 nuclei: Zeeman plus isotropic hyperfine Hamiltonian, exact
//! unitary propagation or spin-selective recombination kinetics, the
//! two-electron concurrence along a trajectory, extraction of the
//! entanglement lifetime `T_E`, and the precision bookkeeping that decides
//! whether `T_E(B)` could be read out as a magnetometer signal without
//! outperforming the fundamental shot-noise field sensitivity.
//!
//! Module map:
//! - [`spin`] — spin-1/2 operator algebra on tensor-product spaces, the
//!   density-matrix type and its invariants, partial trace, projectors, and a
//!   deterministic Hermitian eigensolver.
//! - [`dynamics`] — the radical-pair model (gyromagnetic ratio, field,
//!   hyperfine couplings, recombination rates), Hamiltonian construction, and
//!   unitary / Haberkorn propagation.
//! - [`entanglement`] — Wootters concurrence, concurrence-over-time series,
//!   and entanglement-lifetime extraction with bisection refinement.
//! - [`magnetometry`] — shot-noise precision formulas, lifetime-versus-field
//!   sweeps, finite-difference slopes, and the sensitivity-ratio audit.
//!
//! Unit conventions, used everywhere without exception: time in ns, magnetic
//! field in mT, energies/couplings/rates as angular frequencies in rad/ns
//! (hbar = 1).

pub mod dynamics;
pub mod entanglement;
pub mod magnetometry;
pub mod spin;

pub use spin::{CMat, CVec, C64};
