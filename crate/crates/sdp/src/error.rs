use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("block `{block}` has dimension {expected}, coefficient matrix is {rows}x{cols}")]
    DimensionMismatch {
        block: String,
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("coefficient matrix on block `{block}` is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { block: String, asymmetry: f64 },
    #[error("real block `{block}` received a coefficient with imaginary part {imag:e}")]
    ComplexCoefficientOnRealBlock { block: String, imag: f64 },
    #[error("non-finite coefficient in {context}")]
    NonFinite { context: String },
    #[error("unknown block index {0}")]
    UnknownBlock(usize),
    #[error("unknown scalar index {0}")]
    UnknownScalar(usize),
    #[error("scalar `{name}` has empty bound interval [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
}
