//! The precomputed per-pixel map from estimated-image coordinates to camera
//! coordinates, built once during configuration so the per-frame loop never
//! evaluates the homography.

use rayon::prelude::*;

use super::{map_point, GeometryError, HomographyParams};

const TABLE_MAGIC: &[u8; 6] = b"PCHOM1";

/// For every estimated-image pixel `(x, y)`, the integer camera pixel it
/// corresponds to. Entries are rounded to the nearest camera pixel; the
/// prototype correspondence budget is ± 1 pixel, which rounding stays inside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrespondenceTable {
    grid_width: u32,
    grid_height: u32,
    entries: Vec<(u16, u16)>,
    max_x: u16,
    max_y: u16,
}

impl CorrespondenceTable {
    pub fn grid_width(&self) -> u32 {
        self.grid_width
    }

    pub fn grid_height(&self) -> u32 {
        self.grid_height
    }

    /// Camera pixel for estimated-image pixel `(x, y)`.
    #[inline]
    pub fn lookup(&self, x: u32, y: u32) -> (u16, u16) {
        self.entries[y as usize * self.grid_width as usize + x as usize]
    }

    pub fn entries(&self) -> &[(u16, u16)] {
        &self.entries
    }

    /// Largest camera coordinates stored anywhere in the table, used for
    /// cheap bounds validation against an actual camera frame.
    pub fn max_entry(&self) -> (u16, u16) {
        (self.max_x, self.max_y)
    }

    pub fn fits_camera(&self, cam_width: u32, cam_height: u32) -> bool {
        (self.max_x as u32) < cam_width && (self.max_y as u32) < cam_height
    }

    fn from_entries(
        grid_width: u32,
        grid_height: u32,
        entries: Vec<(u16, u16)>,
    ) -> Result<Self, GeometryError> {
        if entries.len() != grid_width as usize * grid_height as usize {
            return Err(GeometryError::Format(format!(
                "table has {} entries for a {}x{} grid",
                entries.len(),
                grid_width,
                grid_height
            )));
        }
        let max_x = entries.iter().map(|e| e.0).max().unwrap_or(0);
        let max_y = entries.iter().map(|e| e.1).max().unwrap_or(0);
        Ok(Self {
            grid_width,
            grid_height,
            entries,
            max_x,
            max_y,
        })
    }

    /// Serializes as magic `PCHOM1`, two 32-bit little-endian dims, then
    /// `grid_width × grid_height` pairs of 16-bit little-endian coordinates.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.entries.len() * 4);
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&self.grid_width.to_le_bytes());
        out.extend_from_slice(&self.grid_height.to_le_bytes());
        for &(x, y) in &self.entries {
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GeometryError> {
        if bytes.len() < 14 || &bytes[..6] != TABLE_MAGIC {
            return Err(GeometryError::Format("missing PCHOM1 magic".into()));
        }
        let grid_width = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let grid_height = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let count = grid_width as usize * grid_height as usize;
        if bytes.len() != 14 + count * 4 {
            return Err(GeometryError::Format(format!(
                "expected {} bytes of entries, got {}",
                count * 4,
                bytes.len() - 14
            )));
        }
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let off = 14 + i * 4;
            entries.push((
                u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()),
                u16::from_le_bytes(bytes[off + 2..off + 4].try_into().unwrap()),
            ));
        }
        Self::from_entries(grid_width, grid_height, entries)
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self, GeometryError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Evaluates the homography at every estimated-image pixel and stores the
/// rounded camera coordinates. Fails with the offending pixel when the
/// mapping leaves the camera frame.
pub fn build_correspondence_table(
    h: &HomographyParams,
    grid: (u32, u32),
    cam: (u32, u32),
) -> Result<CorrespondenceTable, GeometryError> {
    let (grid_width, grid_height) = grid;
    let (cam_width, cam_height) = cam;

    let rows: Result<Vec<Vec<(u16, u16)>>, GeometryError> = (0..grid_height)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(grid_width as usize);
            for x in 0..grid_width {
                let (mx, my) = map_point(h, (x as f64, y as f64))?;
                let rx = mx.round();
                let ry = my.round();
                if rx < 0.0 || ry < 0.0 || rx >= cam_width as f64 || ry >= cam_height as f64 {
                    return Err(GeometryError::CalibrationCoverage {
                        x,
                        y,
                        mapped_x: mx,
                        mapped_y: my,
                        cam_width,
                        cam_height,
                    });
                }
                row.push((rx as u16, ry as u16));
            }
            Ok(row)
        })
        .collect();

    let entries = rows?.into_iter().flatten().collect();
    CorrespondenceTable::from_entries(grid_width, grid_height, entries)
}
