//! Spin-state estimation with a quadrupolar Stern-Gerlach setup.
//!
//! A beam of neutral spin-1/2 particles with an elongated Gaussian transverse
//! profile crosses a quadrupole magnet; the spatial intensity on a screen then
//! encodes the full initial Bloch vector. This crate simulates the setup with
//! a split-step spectral solver, builds the effective spin observables of the
//! detector, estimates the spin state from synthetic data and quantifies the
//! estimation error through Fisher information.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision variants used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimate;
pub mod evolve;
pub mod fisher;
pub mod grid;
mod linalg;
pub mod measure;
pub mod sample;
pub mod scalar;
pub mod spinor;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use estimate::{linear_inversion, mle_continuous, mle_discrete, EstimateReport, EstimatorConfig, Method};
pub use evolve::{dimensionless_from_physical, evolve_free, evolve_magnet, simulate, Propagator, SetupParams};
pub use fisher::{fisher_continuous, fisher_quadrant, log_error, quantum_bounds, ErrorSummary, InfoMatrix, Scheme};
pub use grid::{ComplexField, Field, GridSpec, Region, ScalarField, Spectral};
pub use measure::{
    intensity, measurement_map, measurement_matrix, probabilities, quadrant_regions, MeasurementMap,
    MeasurementMatrix, Quadrant,
};
pub use sample::{sample_counts, sample_positions, DetectionCounts, PositionSample};
pub use scalar::Real;
pub use spinor::{init_spinor, pauli_triple, BlochVector, PauliTriple, SpinorField};

pub type Grid64 = GridSpec<f64>;
pub type Bloch64 = BlochVector<f64>;
pub type Setup64 = SetupParams<f64>;
pub type Spinor64 = SpinorField<f64>;
pub type Map64 = MeasurementMap<f64>;
pub type Matrix64 = MeasurementMatrix<f64>;
pub type Info64 = InfoMatrix<f64>;

pub type Grid32 = GridSpec<f32>;
pub type Bloch32 = BlochVector<f32>;
pub type Setup32 = SetupParams<f32>;
pub type Map32 = MeasurementMap<f32>;
