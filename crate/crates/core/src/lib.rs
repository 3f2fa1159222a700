//! Exact diagonalization of the disordered XXZ spin-1/2 chain and the
//! localization probes built on top of it: fidelity susceptibility,
//! spectral functions of the local magnetization, the conserved fraction of
//! magnetization, level statistics, and the strong-disorder perturbative
//! oracle.
//!
//! The pipeline for one disorder realization is
//!
//! ```text
//! enumerate_sector -> sample_disorder -> build_hamiltonian -> diagonalize
//!     -> rotate_diagonal_observable -> probes
//! ```
//!
//! and [`runner`] orchestrates it over `(L, W, realization)` sweeps.

pub mod analysis;
pub mod basis;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod model;
pub mod probes;
pub mod rng;
pub mod runner;
pub mod selftest;
pub mod stats;
pub mod strongdisorder;

pub use basis::{enumerate_sector, SectorBasis, SpinConfiguration};
pub use eigen::{diagonalize, rotate_diagonal_observable, EigenDecomposition, ObservableMatrix};
pub use error::{Error, Result};
pub use probes::{FrequencyGrid, SpectralHistogram};
pub use runner::{run_ensemble, RunConfig};
pub use model::{
    build_hamiltonian, sample_disorder, sz_diagonal, CouplingParams, DenseSymmetricMatrix,
    DisorderRealization,
};

/// Version string stamped into every persisted record.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
