//! Fitting and checking quasithermodynamic (QT) forms of Markov master equations.
//!
//! A QT system evolves under two state functions: an exactly conserved
//! "energy" `H = Σ p_i` and a non-decreasing quadratic "entropy" `S`. This
//! crate builds that representation for Pauli master equations of any size,
//! for single-channel two-level Lindblad dynamics in Bloch form, and for a
//! composite of two independent two-state systems, and checks every
//! construction against an independent oracle.
//!
//! Module map:
//!
//! - [`multilinear`]: Levi-Civita machinery, brute-force contractions and
//!   their closed forms.
//! - [`pme`]: Pauli master equation generator, stationary state, spectrum.
//! - [`qtfit`]: fitting the quadratic entropy and Hamiltonian-like
//!   coefficients to a generator.
//! - [`relaxation`]: three-state monotone vs oscillatory relaxation.
//! - [`lindblad`]: Bloch-form Lindblad flow, its gradient form and the
//!   six-variable embedding.
//! - [`composite`]: two independent qubits and the subextensive entropy.
//! - [`dynamics`]: fixed-step RK4 with conservation and entropy monitors.
//! - [`cli`]: the `qtk` command-line surface.

pub mod cli;
pub mod composite;
pub mod dynamics;
pub mod error;
pub mod lindblad;
pub mod multilinear;
pub mod pme;
pub mod qtfit;
pub mod relaxation;
mod util;

pub use error::{QtError, Result};
pub use pme::{ProbabilityState, TransitionMatrix};
pub use qtfit::{FitOptions, QtRepresentation, QuadraticEntropy};
