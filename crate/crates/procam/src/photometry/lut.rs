//! Per-region, per-channel 64-entry tables of precomputed transfer-function
//! values at intensities that are multiples of 4: a four-fold memory saving
//! over a full 256-entry table, paid for by a small quantization error.

use super::fit::quantization_bound;
use super::{CalibrationModel, ModelKind, PhotometryError};
use crate::imaging::{quantize_intensity, GridDims, CHANNELS};

const LUT_MAGIC: &[u8; 6] = b"PCLUT1";
pub(crate) const LUT_ENTRIES: usize = 64;

/// The quantized evaluation tables: entry `w` of a (channel, region) table
/// holds the clamped transfer value at intensity `4·w`.
#[derive(Clone, PartialEq, Eq)]
pub struct ColorLut {
    grid: GridDims,
    /// Channel-major, then row-major region order, 64 bytes per table.
    tables: Vec<u8>,
}

impl std::fmt::Debug for ColorLut {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ColorLut").field("grid", &self.grid).finish()
    }
}

impl ColorLut {
    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn tables(&self) -> &[u8] {
        &self.tables
    }

    #[inline]
    fn table_offset(&self, c: usize, x: u32, y: u32) -> usize {
        ((c * self.grid.grid_height as usize + y as usize) * self.grid.grid_width as usize
            + x as usize)
            * LUT_ENTRIES
    }

    /// The 64-entry table for channel `c` and region `(x, y)`.
    #[inline]
    pub fn table(&self, c: usize, x: u32, y: u32) -> &[u8] {
        let off = self.table_offset(c, x, y);
        &self.tables[off..off + LUT_ENTRIES]
    }

    /// Looks up the transfer value for raw intensity `z` via `w = ⌊z/4⌋`.
    #[inline]
    pub fn lookup(&self, c: usize, x: u32, y: u32, z: u8) -> u8 {
        self.tables[self.table_offset(c, x, y) + (z >> 2) as usize]
    }

    /// Serializes as magic `PCLUT1`, 32-bit little-endian grid width and
    /// height, then the raw tables in channel-major, row-major region order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.tables.len());
        out.extend_from_slice(LUT_MAGIC);
        out.extend_from_slice(&self.grid.grid_width.to_le_bytes());
        out.extend_from_slice(&self.grid.grid_height.to_le_bytes());
        out.extend_from_slice(&self.tables);
        out
    }

    /// Deserializes; the file stores only grid dimensions, so the frame
    /// buffer dimensions the tables were built against are supplied by the
    /// caller (the calibration bundle records them in the model manifest).
    pub fn from_bytes(bytes: &[u8], buffer: (u32, u32)) -> Result<Self, PhotometryError> {
        if bytes.len() < 14 || &bytes[..6] != LUT_MAGIC {
            return Err(PhotometryError::Format("missing PCLUT1 magic".into()));
        }
        let gw = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let gh = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let grid = GridDims::new(buffer.0, buffer.1, gw, gh)
            .map_err(|e| PhotometryError::Format(e.to_string()))?;
        let expected = CHANNELS * gw as usize * gh as usize * LUT_ENTRIES;
        if bytes.len() - 14 != expected {
            return Err(PhotometryError::Format(format!(
                "expected {expected} table bytes, got {}",
                bytes.len() - 14
            )));
        }
        Ok(Self {
            grid,
            tables: bytes[14..].to_vec(),
        })
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<(), PhotometryError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P, buffer: (u32, u32)) -> Result<Self, PhotometryError> {
        Self::from_bytes(&std::fs::read(path)?, buffer)
    }

    /// Worst-case estimation gap the quantization can open anywhere in
    /// region `(x, y)`, against the source model's exact curves: the
    /// per-channel max of `|F(4⌊z/4⌋) − F(z)|` over all intensities.
    pub fn quantization_bound_at(model: &CalibrationModel, x: u32, y: u32) -> f64 {
        (0..CHANNELS)
            .map(|c| quantization_bound(&model.fit_at(x, y, c).curve))
            .fold(0.0, f64::max)
    }
}

/// Precomputes the quantized tables for a local model. Every entry equals
/// the clamped, rounded evaluation of the region's curve at `4·w`.
pub fn build_lut(model: &CalibrationModel) -> Result<ColorLut, PhotometryError> {
    if model.kind() != ModelKind::Local {
        return Err(PhotometryError::UnsupportedKind(
            "the LUT fast path precomputes per-region tables; expand a global model first".into(),
        ));
    }
    let grid = model.grid();
    let gw = grid.grid_width as usize;
    let gh = grid.grid_height as usize;
    let mut tables = vec![0u8; CHANNELS * gw * gh * LUT_ENTRIES];
    for c in 0..CHANNELS {
        for y in 0..gh {
            for x in 0..gw {
                let curve = &model.fit_at(x as u32, y as u32, c).curve;
                let off = ((c * gh + y) * gw + x) * LUT_ENTRIES;
                for w in 0..LUT_ENTRIES {
                    tables[off + w] = quantize_intensity(curve.eval((4 * w) as f64));
                }
            }
        }
    }
    Ok(ColorLut { grid, tables })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometry::fit::{LinearKnots, RegionFit, TransferCurve};
    use crate::photometry::{FitFlag, SamplePlan, VerhulstParams};

    fn flat_model(value: f64) -> CalibrationModel {
        let grid = GridDims::new(8, 8, 2, 2).unwrap();
        let fit = RegionFit {
            curve: TransferCurve::Linear(LinearKnots {
                z: [32.0, 96.0, 160.0, 224.0],
                v: [value; 4],
            }),
            flag: FitFlag::Fallback,
        };
        CalibrationModel::from_parts(ModelKind::Local, grid, SamplePlan::default(), vec![fit; 12])
            .unwrap()
    }

    fn verhulst_model(p: VerhulstParams) -> CalibrationModel {
        let grid = GridDims::new(8, 8, 2, 2).unwrap();
        let fit = RegionFit {
            curve: TransferCurve::Verhulst(p),
            flag: FitFlag::Converged,
        };
        CalibrationModel::from_parts(ModelKind::Local, grid, SamplePlan::default(), vec![fit; 12])
            .unwrap()
    }

    #[test]
    fn flat_model_fills_all_entries_with_value() {
        let lut = build_lut(&flat_model(60.0)).unwrap();
        for c in 0..3 {
            for y in 0..2 {
                for x in 0..2 {
                    assert!(lut.table(c, x, y).iter().all(|&v| v == 60));
                }
            }
        }
    }

    #[test]
    fn midpoint_entry_matches_curve() {
        let lut = build_lut(&verhulst_model(VerhulstParams::new(200.0, 0.03, 128.0, 10.0))).unwrap();
        // Entry w=32 holds F(128) = 110.
        assert_eq!(lut.table(0, 0, 0)[32], 110);
    }

    #[test]
    fn every_entry_matches_direct_evaluation() {
        let p = VerhulstParams::new(173.0, 0.041, 99.0, 21.5);
        let model = verhulst_model(p);
        let lut = build_lut(&model).unwrap();
        for c in 0..3 {
            for y in 0..2u32 {
                for x in 0..2u32 {
                    for w in 0..64usize {
                        let expect = quantize_intensity(p.eval((4 * w) as f64));
                        assert_eq!(lut.table(c, x, y)[w], expect, "c={c} w={w}");
                    }
                }
            }
        }
    }

    #[test]
    fn global_model_is_unsupported() {
        let grid = GridDims::new(8, 8, 2, 2).unwrap();
        let fit = RegionFit {
            curve: TransferCurve::Verhulst(VerhulstParams::new(200.0, 0.03, 128.0, 10.0)),
            flag: FitFlag::Converged,
        };
        let model =
            CalibrationModel::from_parts(ModelKind::Global, grid, SamplePlan::default(), vec![fit; 3])
                .unwrap();
        assert!(matches!(
            build_lut(&model),
            Err(PhotometryError::UnsupportedKind(_))
        ));
        assert!(build_lut(&model.expand_to_local()).is_ok());
    }

    #[test]
    fn lookup_uses_floor_quantization() {
        let p = VerhulstParams::new(200.0, 0.03, 128.0, 10.0);
        let lut = build_lut(&verhulst_model(p)).unwrap();
        // z=203 uses entry w=50, the value for z=200.
        assert_eq!(lut.lookup(0, 0, 0, 203), lut.table(0, 0, 0)[50]);
        assert_eq!(lut.lookup(0, 0, 0, 203), quantize_intensity(p.eval(200.0)));
    }

    #[test]
    fn file_round_trip_bit_exact() {
        let lut = build_lut(&verhulst_model(VerhulstParams::new(150.0, 0.05, 100.0, 5.0))).unwrap();
        let bytes = lut.to_bytes();
        assert_eq!(&bytes[..6], b"PCLUT1");
        assert_eq!(bytes.len(), 14 + 3 * 2 * 2 * 64);
        let back = ColorLut::from_bytes(&bytes, (8, 8)).unwrap();
        assert_eq!(lut, back);
    }
}
