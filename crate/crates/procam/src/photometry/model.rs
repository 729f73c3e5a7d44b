//! The calibration model container: per-region (local) or per-channel
//! (global) transfer curves, the calibration routine that fills it from the
//! four sample captures, and its on-disk form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_verhulst, FitFlag, LinearKnots, RegionFit, TransferCurve};
use super::{PhotometryError, SamplePlan, VerhulstParams};
use crate::geometry::CorrespondenceTable;
use crate::imaging::{GridDims, Image, CHANNELS};

/// Whether one transfer curve is fitted per (region, channel) or per channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Local,
    Global,
}

/// A fitted photometric calibration.
///
/// Local models store `grid_width × grid_height × 3` curves in region-major,
/// channel-minor order; global models store exactly 3.
#[derive(Clone, Debug)]
pub struct CalibrationModel {
    kind: ModelKind,
    grid: GridDims,
    plan: SamplePlan,
    fits: Vec<RegionFit>,
}

impl CalibrationModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn plan(&self) -> SamplePlan {
        self.plan
    }

    pub fn fits(&self) -> &[RegionFit] {
        &self.fits
    }

    /// Curve for estimated-image pixel `(x, y)` and channel `c`.
    #[inline]
    pub fn fit_at(&self, x: u32, y: u32, c: usize) -> &RegionFit {
        match self.kind {
            ModelKind::Global => &self.fits[c],
            ModelKind::Local => {
                let idx = (y as usize * self.grid.grid_width as usize + x as usize) * CHANNELS + c;
                &self.fits[idx]
            }
        }
    }

    /// Number of (region, channel) fits flagged as linear fallbacks.
    pub fn fallback_count(&self) -> usize {
        self.fits.iter().filter(|f| f.flag.is_fallback()).count()
    }

    /// Builds from parts; lengths must match the kind.
    pub fn from_parts(
        kind: ModelKind,
        grid: GridDims,
        plan: SamplePlan,
        fits: Vec<RegionFit>,
    ) -> Result<Self, PhotometryError> {
        let expected = match kind {
            ModelKind::Global => CHANNELS,
            ModelKind::Local => {
                grid.grid_width as usize * grid.grid_height as usize * CHANNELS
            }
        };
        if fits.len() != expected {
            return Err(PhotometryError::Input(format!(
                "{kind:?} model needs {expected} fits, got {}",
                fits.len()
            )));
        }
        Ok(Self { kind, grid, plan, fits })
    }

    /// Broadcasts a global model onto the grid so that downstream consumers
    /// built around per-region curves (including the LUT) can run it.
    pub fn expand_to_local(&self) -> Self {
        match self.kind {
            ModelKind::Local => self.clone(),
            ModelKind::Global => {
                let regions = self.grid.grid_width as usize * self.grid.grid_height as usize;
                let mut fits = Vec::with_capacity(regions * CHANNELS);
                for _ in 0..regions {
                    fits.extend_from_slice(&self.fits);
                }
                Self {
                    kind: ModelKind::Local,
                    grid: self.grid,
                    plan: self.plan,
                    fits,
                }
            }
        }
    }
}

/// Fraction of regions (any channel) allowed to fall back before
/// calibration is reported as failed.
const MAX_FALLBACK_REGION_FRACTION: f64 = 0.10;

/// Fits the calibration model from the four captures of the sample plan.
///
/// Local: per region and channel, the observed intensity is read at the
/// region's correspondence-table pixel. Global: observed intensities are
/// averaged over the full region of interest (every table pixel), one fit
/// per channel.
pub fn calibrate(
    kind: ModelKind,
    plan: &SamplePlan,
    captures: &[Image; 4],
    table: &CorrespondenceTable,
    grid: GridDims,
) -> Result<CalibrationModel, PhotometryError> {
    let cam_dims = captures[0].dims();
    for (i, cap) in captures.iter().enumerate() {
        if cap.dims() != cam_dims {
            return Err(PhotometryError::Input(format!(
                "capture {i} is {:?}, expected {:?}",
                cap.dims(),
                cam_dims
            )));
        }
    }
    if table.grid_width() != grid.grid_width || table.grid_height() != grid.grid_height {
        return Err(PhotometryError::DimsMismatch(format!(
            "table grid {}x{} vs model grid {}x{}",
            table.grid_width(),
            table.grid_height(),
            grid.grid_width,
            grid.grid_height
        )));
    }
    if !table.fits_camera(cam_dims.0, cam_dims.1) {
        return Err(PhotometryError::DimsMismatch(format!(
            "correspondence table exceeds the {}x{} camera frame",
            cam_dims.0, cam_dims.1
        )));
    }

    let zs = plan.zs();
    match kind {
        ModelKind::Global => {
            let pixels = table.entries().len() as f64;
            let mut fits = Vec::with_capacity(CHANNELS);
            for c in 0..CHANNELS {
                let mut samples = [(0.0, 0.0); 4];
                for (i, capture) in captures.iter().enumerate() {
                    let sum: f64 = table
                        .entries()
                        .iter()
                        .map(|&(x, y)| capture.channel(x as u32, y as u32, c) as f64)
                        .sum();
                    samples[i] = (zs[i], sum / pixels);
                }
                fits.push(fit_verhulst(&samples)?);
            }
            let failed = fits.iter().filter(|f| f.flag.is_fallback()).count();
            if failed > 0 {
                return Err(PhotometryError::CalibrationQuality { failed, total: 1 });
            }
            CalibrationModel::from_parts(kind, grid, *plan, fits)
        }
        ModelKind::Local => {
            let gw = grid.grid_width as usize;
            let gh = grid.grid_height as usize;
            let rows: Result<Vec<Vec<RegionFit>>, PhotometryError> = (0..gh)
                .into_par_iter()
                .map(|gy| {
                    let mut row = Vec::with_capacity(gw * CHANNELS);
                    for gx in 0..gw {
                        let (px, py) = table.lookup(gx as u32, gy as u32);
                        for c in 0..CHANNELS {
                            let mut samples = [(0.0, 0.0); 4];
                            for (i, capture) in captures.iter().enumerate() {
                                samples[i] =
                                    (zs[i], capture.channel(px as u32, py as u32, c) as f64);
                            }
                            row.push(fit_verhulst(&samples)?);
                        }
                    }
                    Ok(row)
                })
                .collect();
            let fits: Vec<RegionFit> = rows?.into_iter().flatten().collect();

            let total_regions = gw * gh;
            let failed_regions = (0..total_regions)
                .filter(|r| {
                    fits[r * CHANNELS..(r + 1) * CHANNELS]
                        .iter()
                        .any(|f| f.flag.is_fallback())
                })
                .count();
            if failed_regions as f64 > MAX_FALLBACK_REGION_FRACTION * total_regions as f64 {
                return Err(PhotometryError::CalibrationQuality {
                    failed: failed_regions,
                    total: total_regions,
                });
            }
            CalibrationModel::from_parts(kind, grid, *plan, fits)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    version: u32,
    kind: ModelKind,
    buffer: (u32, u32),
    grid: (u32, u32),
    sample_plan: [u8; 4],
}

impl CalibrationModel {
    /// Serializes as a one-line JSON manifest followed by a raw
    /// little-endian array of 64-bit reals (4 per curve: the Verhulst
    /// parameters, or the four knot values of a fallback) and a parallel
    /// byte array of fit flags.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = ModelManifest {
            version: 1,
            kind: self.kind,
            buffer: (self.grid.buffer_width, self.grid.buffer_height),
            grid: (self.grid.grid_width, self.grid.grid_height),
            sample_plan: self.plan.intensities(),
        };
        let mut out = serde_json::to_vec(&manifest).expect("manifest serializes");
        out.push(b'\n');
        for fit in &self.fits {
            let reals: [f64; 4] = match fit.curve {
                TransferCurve::Verhulst(p) => [p.a, p.alpha, p.b, p.k],
                TransferCurve::Linear(l) => l.v,
            };
            for r in reals {
                out.extend_from_slice(&r.to_le_bytes());
            }
        }
        for fit in &self.fits {
            out.push(fit.flag as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PhotometryError> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| PhotometryError::Format("missing manifest line".into()))?;
        let manifest: ModelManifest = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| PhotometryError::Format(e.to_string()))?;
        if manifest.version != 1 {
            return Err(PhotometryError::Format(format!(
                "unsupported model version {}",
                manifest.version
            )));
        }
        let grid = GridDims::new(
            manifest.buffer.0,
            manifest.buffer.1,
            manifest.grid.0,
            manifest.grid.1,
        )
        .map_err(|e| PhotometryError::Format(e.to_string()))?;
        let plan = SamplePlan::new(manifest.sample_plan)?;

        let count = match manifest.kind {
            ModelKind::Global => CHANNELS,
            ModelKind::Local => grid.grid_width as usize * grid.grid_height as usize * CHANNELS,
        };
        let body = &bytes[newline + 1..];
        let expected = count * 4 * 8 + count;
        if body.len() != expected {
            return Err(PhotometryError::Format(format!(
                "model body is {} bytes, expected {expected}",
                body.len()
            )));
        }
        let (reals, flags) = body.split_at(count * 4 * 8);
        let zs = plan.zs();
        let mut fits = Vec::with_capacity(count);
        for i in 0..count {
            let mut vals = [0.0f64; 4];
            for (j, v) in vals.iter_mut().enumerate() {
                let off = (i * 4 + j) * 8;
                *v = f64::from_le_bytes(reals[off..off + 8].try_into().unwrap());
            }
            let flag = FitFlag::from_byte(flags[i])?;
            let curve = if flag.is_fallback() {
                TransferCurve::Linear(LinearKnots { z: zs, v: vals })
            } else {
                TransferCurve::Verhulst(VerhulstParams::new(vals[0], vals[1], vals[2], vals[3]))
            };
            fits.push(RegionFit { curve, flag });
        }
        CalibrationModel::from_parts(manifest.kind, grid, plan, fits)
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<(), PhotometryError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self, PhotometryError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
