//! Maximum-entropy (ME) phase-space packets for a single degree of freedom.
//!
//! A packet is fixed by its position and momentum averages and spreads
//! `(Q, P, ΔQ, ΔP)`. The classical packet is a Gaussian phase-space density;
//! the quantum packet is a thermal-like mixed state whose spectrum is
//! geometric in the fuzziness `ν = 2ΔQΔP/ħ`. This crate builds both, evolves
//! them under polynomial potentials (Monte Carlo leapfrog for the classical
//! ensemble, split-operator FFT for the quantum mixture), compares the
//! resulting moment trajectories, re-derives the classical packet from a
//! Lagrange dual, and computes the thermodynamics of a harmonic chain.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod error;
pub mod experiments;
pub mod hermite;
pub mod maxent;
pub mod packets;
pub mod potentials;
pub mod quantum;
pub mod rod;
pub mod trajectory;

pub use classical::{ClassicalEngine, ClassicalSettings, Ensemble, Splitting};
pub use error::{Error, Result};
pub use maxent::{MaxEntSolution, MomentConstraints, PhaseGrid};
pub use packets::{PacketParams, PhasePoint, QuantumSpectral};
pub use potentials::{PolynomialPotential, PotentialClass, PropagatorCoefficients};
pub use quantum::{GridSpec, MixedStateGrid, QuantumEngine, QuantumSettings};
pub use rod::{ModeBasis, RodSpec};
pub use trajectory::{PacketState, SolverMeta, Trajectory, TrajectoryKind};

/// Crate version, echoed into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
