//! Print color pipeline in the Neugebauer Primary domain.
//!
//! The crate predicts the color of NP area coverage vectors, inverts target
//! colors into coverages, halftones coverage images by direct pattern
//! control, samples the printable gamut surface for spot-color alternatives,
//! and recalibrates a simulated press against drift.

pub mod calibration;
pub mod colorimetry;
pub mod error;
pub mod gamut;
pub mod halftone;
pub mod neugebauer;
pub mod press;

pub use colorimetry::{ColorDifference, Lab, Metric, Spectrum, ViewingCondition, Xyz};
pub use error::{Error, Result};
pub use neugebauer::{InkSet, NPac, NpId, NpTable, YnParams};
pub use press::{Chart, Patch, PressModel};
