use thiserror::Error;

/// Errors raised by the model, bound and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("position at d = {d_m} m lies inside or on the array circle (R = {radius_m} m)")]
    PositionInsideArray { d_m: f64, radius_m: f64 },

    #[error("element range {range_m} m at index {index} is not positive")]
    NonPositiveRange { index: usize, range_m: f64 },

    #[error("beamformer norm {norm} is not unit")]
    NotUnitNorm { norm: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("range and angle are not jointly identifiable (det J = {det:e}, J_dd*J_tt = {scale:e})")]
    Unidentifiable { det: f64, scale: f64 },

    #[error("retraction step degenerates to a near-zero vector")]
    StepTooLarge,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
