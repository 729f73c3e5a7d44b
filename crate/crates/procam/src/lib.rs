//! Detection of non-stationary photometric perturbations on projection screens.
//!
//! A projector fills a screen with the contents of its frame buffer; a camera
//! watches the same screen. After a one-time geometric calibration (planar
//! homography between the estimated-image and camera coordinate systems) and a
//! photometric calibration (per-region logistic color-transfer functions), the
//! library predicts what the camera should observe for any frame buffer and
//! flags regions where the observation deviates: shadows, light spots and
//! occluding objects. Stationary deviations (projector vignetting, stains,
//! fixed external lights) are absorbed by the local calibration model and
//! never reported.
//!
//! The crate ships a deterministic virtual projector-camera rig
//! ([`rig::Rig`]) that stands in for physical hardware and provides per-frame
//! ground truth, so the whole pipeline can be exercised and scored without a
//! projector on the desk.
//!
//! # Modules
//!
//! - [`imaging`] — raster value types, the buffer-to-region partition, PPM/PNG I/O
//! - [`geometry`] — homography estimation, corner detection, correspondence table
//! - [`photometry`] — Verhulst transfer-function fitting, image estimation, color LUTs
//! - [`detection`] — differencing, denoising, spot extraction and acceptance rules
//! - [`rig`] — the virtual projector-camera rig and scripted scenarios
//! - [`pipeline`] — configuration, calibration phases, frame loop, metrics, benchmarks
//!
//! # Quick start
//!
//! ```
//! use procam::pipeline::{PipelineConfig, run_geometric_calibration, run_photometric_calibration};
//!
//! let mut config = PipelineConfig::default();
//! config.grid = (64, 48);
//! config.buffer = (256, 192);
//! let geo = run_geometric_calibration(&config).unwrap();
//! let photo = run_photometric_calibration(&config, &geo).unwrap();
//! assert_eq!(photo.model.grid().grid_width, 64);
//! ```
//!
//! Each major capability also has a runnable example under `examples/`.

pub mod detection;
pub mod geometry;
pub mod imaging;
mod math;
pub mod photometry;
pub mod pipeline;
pub mod rig;

pub use detection::{DetectionReport, Spot, SpotFilterConfig, ThresholdTriple};
pub use geometry::{CorrespondenceTable, HomographyParams, RegionOfInterest};
pub use imaging::{BinaryImage, FrameBuffer, GridDims, Image};
pub use photometry::{CalibrationModel, ColorLut, SamplePlan, VerhulstParams};
pub use rig::{PerturbationScript, Rig, RigConfig};
