//! Geometric calibration: the estimated-image ↔ camera homography, corner
//! detection from a projected blank frame, and the precomputed pixel
//! correspondence table used on the per-frame hot path.

mod corners;
mod homography;
mod table;

pub use corners::{
    binarize, boundary, detect_region_of_interest, detect_region_of_interest_with,
    hough_accumulate, intersect_lines, otsu_threshold, select_peaks, to_gray,
    CornerDetectionParams, HoughAccumulator, PolarLine,
};
pub use homography::{estimate_homography, map_point, HomographyParams};
pub use table::{build_correspondence_table, CorrespondenceTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("point ({x}, {y}) lies on the horizon line of the homography")]
    HorizonPoint { x: f64, y: f64 },
    #[error("grid pixel ({x}, {y}) maps to ({mapped_x:.2}, {mapped_y:.2}), outside the {cam_width}x{cam_height} camera frame")]
    CalibrationCoverage {
        x: u32,
        y: u32,
        mapped_x: f64,
        mapped_y: f64,
        cam_width: u32,
        cam_height: u32,
    },
    #[error("corner detection failed: {0}")]
    DetectionFailure(String),
    #[error("detected corners are not a convex quadrilateral: {0}")]
    NonConvexQuad(String),
    #[error("bad calibration file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four corners of the valid projected area in camera coordinates,
/// ordered top-left, top-right, bottom-right, bottom-left. Camera pixels
/// outside this quadrilateral form the periphery and are always discarded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionOfInterest {
    pub corners: [(f64, f64); 4],
}

impl RegionOfInterest {
    /// Validates convexity and that no three corners are collinear.
    pub fn new(corners: [(f64, f64); 4]) -> Result<Self, GeometryError> {
        let cross = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
            (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
        };
        let mut sign = 0.0f64;
        for i in 0..4 {
            let z = cross(corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]);
            if z.abs() < 1e-9 {
                return Err(GeometryError::NonConvexQuad(format!(
                    "three consecutive corners starting at index {i} are collinear"
                )));
            }
            if sign == 0.0 {
                sign = z.signum();
            } else if z.signum() != sign {
                return Err(GeometryError::NonConvexQuad(format!(
                    "turn direction flips at corner index {i}"
                )));
            }
        }
        Ok(Self { corners })
    }

    pub fn top_left(&self) -> (f64, f64) {
        self.corners[0]
    }

    pub fn top_right(&self) -> (f64, f64) {
        self.corners[1]
    }

    pub fn bottom_right(&self) -> (f64, f64) {
        self.corners[2]
    }

    pub fn bottom_left(&self) -> (f64, f64) {
        self.corners[3]
    }

    pub fn centroid(&self) -> (f64, f64) {
        let sx: f64 = self.corners.iter().map(|c| c.0).sum();
        let sy: f64 = self.corners.iter().map(|c| c.1).sum();
        (sx / 4.0, sy / 4.0)
    }
}
