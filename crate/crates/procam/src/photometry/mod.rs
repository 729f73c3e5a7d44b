//! Photometric calibration: Verhulst color-transfer functions fitted either
//! globally (one curve per channel) or locally (one curve per buffer region
//! per channel), synthesis of estimated images from the projector frame
//! buffer, and the quantized lookup-table fast path.

mod estimate;
mod fit;
mod lut;
mod model;

pub use estimate::{estimate_image, estimate_image_lut};
pub use fit::{fit_verhulst, verhulst_eval, FitFlag, LinearKnots, RegionFit, TransferCurve};
pub use lut::{build_lut, ColorLut};
pub use model::{calibrate, CalibrationModel, ModelKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhotometryError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: {0}")]
    DimsMismatch(String),
    #[error("calibration quality: {failed} of {total} regions fell back to the linear model")]
    CalibrationQuality { failed: usize, total: usize },
    #[error("unsupported model kind: {0}")]
    UnsupportedKind(String),
    #[error("bad model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of the logistic transfer function
/// `F(z) = a / (1 + e^(−alpha·(z − b))) + k`.
///
/// With `a > 0` and `alpha > 0` the curve is strictly increasing with range
/// `(k, a + k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerhulstParams {
    /// Amplitude, in intensity units.
    pub a: f64,
    /// Slope rate, per intensity unit.
    pub alpha: f64,
    /// Midpoint, in intensity units.
    pub b: f64,
    /// Offset, in intensity units.
    pub k: f64,
}

impl VerhulstParams {
    pub fn new(a: f64, alpha: f64, b: f64, k: f64) -> Self {
        Self { a, alpha, b, k }
    }

    /// Evaluates the curve at intensity `z`; unclamped real value.
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        verhulst_eval(self, z)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.alpha.is_finite() && self.b.is_finite() && self.k.is_finite()
    }
}

/// The four projector intensities projected as uniform sample images during
/// photometric calibration, applied identically to each channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SamplePlan {
    intensities: [u8; 4],
}

impl Default for SamplePlan {
    /// `{32, 96, 160, 224}`: spans the range while avoiding sensor
    /// saturation at both ends.
    fn default() -> Self {
        Self {
            intensities: [32, 96, 160, 224],
        }
    }
}

impl SamplePlan {
    pub fn new(intensities: [u8; 4]) -> Result<Self, PhotometryError> {
        if !intensities.windows(2).all(|w| w[0] < w[1]) {
            return Err(PhotometryError::Input(format!(
                "sample intensities {intensities:?} must be strictly increasing"
            )));
        }
        Ok(Self { intensities })
    }

    pub fn intensities(&self) -> [u8; 4] {
        self.intensities
    }

    pub fn zs(&self) -> [f64; 4] {
        self.intensities.map(f64::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_plan_rejects_non_increasing() {
        assert!(SamplePlan::new([32, 32, 160, 224]).is_err());
        assert!(SamplePlan::new([224, 160, 96, 32]).is_err());
        assert!(SamplePlan::new([10, 20, 30, 40]).is_ok());
    }

    #[test]
    fn default_plan_matches_documented_values() {
        assert_eq!(SamplePlan::default().intensities(), [32, 96, 160, 224]);
    }
}
