//! Multi-functional RIS-aided NOMA downlink: channel model, signal model and
//! the penalty-based alternating optimization of precoders and surface
//! coefficients.

pub mod beamforming;
pub mod channel;
mod complex_serde;
mod error;
pub mod lifted;
pub mod optimizer;
pub mod surface;
pub mod system;

pub use error::ModelError;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type CRowVector = RowDVector<Complex64>;
