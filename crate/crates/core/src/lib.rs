//! Compressive Schlieren deflectometry: Hadamard sensing, CDF 9/7 sparsity,
//! Chambolle–Pock basis pursuit denoising and spot centroiding.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod grid;
pub mod hadamard;
pub mod linalg;
pub mod optics;
pub mod plot;
pub mod seeds;
pub mod sensing;
pub mod solver;
pub mod wavelet97;

pub use error::{DecodeError, Error, Result};
pub use grid::{GridShape, SpectrumGrid};
pub use hadamard::HadamardOrder;
pub use sensing::{MeasurementBundle, SensingPlan};
