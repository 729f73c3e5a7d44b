//! Raster value types, channel semantics, and the buffer-to-region partition
//! shared by every other module.
//!
//! Images are 8-bit, 3-channel (red, green, blue), row-major and channel
//! interleaved, which keeps the per-frame differencing loop cache friendly.
//! Intensities are carried as `u8` at module boundaries and widened to `f64`
//! inside photometric math.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

/// Number of color channels per pixel (red, green, blue).
pub const CHANNELS: usize = 3;

/// Value rendered into camera pixels outside the region of interest.
pub const PERIPHERY_INTENSITY: u8 = 8;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("data length {actual} does not match {width}x{height}x{channels}")]
    BadDataLength {
        width: u32,
        height: u32,
        channels: usize,
        actual: usize,
    },
    #[error("pixel ({x}, {y}) outside {width}x{height} bounds")]
    PixelOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("region ({x}, {y}) outside {width}x{height} grid")]
    RegionOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("invalid grid dimensions: buffer {buffer_width}x{buffer_height}, grid {grid_width}x{grid_height}")]
    BadGridDims {
        buffer_width: u32,
        buffer_height: u32,
        grid_width: u32,
        grid_height: u32,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Clamps a real intensity to `[0, 255]` and rounds half away from zero.
///
/// This is the one rounding rule applied at every 8-bit boundary so that
/// golden tests stay bit-exact.
#[inline]
pub fn quantize_intensity(value: f64) -> u8 {
    value.clamp(0.0, 255.0).round() as u8
}

/// An 8-bit RGB raster. Also plays the semantic roles of the projector's
/// frame buffer and of captured camera frames.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// The projector's in-memory image, emitted as light onto the screen.
pub type FrameBuffer = Image;

/// A frame observed by the camera.
pub type CameraImage = Image;

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Image {
    /// Creates a black image.
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * CHANNELS],
        }
    }

    /// Creates an image filled with one RGB value.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    /// Wraps raw interleaved RGB bytes, validating the length invariant.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(ImagingError::BadDataLength {
                width,
                height,
                channels: CHANNELS,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Raw interleaved RGB bytes, row major.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn pixel_index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * CHANNELS
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.pixel_index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn channel(&self, x: u32, y: u32, c: usize) -> u8 {
        self.data[self.pixel_index(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.pixel_index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn in_bounds(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    /// One row of interleaved RGB bytes.
    pub fn row(&self, y: u32) -> &[u8] {
        let start = y as usize * self.width as usize * CHANNELS;
        &self.data[start..start + self.width as usize * CHANNELS]
    }

    /// Encodes as binary PPM (P6, maxval 255), the bit-exact reference format.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<(), ImagingError> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn save_ppm<P: AsRef<Path>>(&self, path: P) -> Result<(), ImagingError> {
        let mut out = Vec::with_capacity(self.data.len() + 32);
        self.write_ppm(&mut out)?;
        fs::write(path, out)?;
        Ok(())
    }

    /// Decodes a binary PPM (P6) stream. Comments and the usual whitespace
    /// rules of the header are honored; maxval must be 255.
    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self, ImagingError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_ppm_bytes(&bytes)
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self, ImagingError> {
        let mut pos = 0usize;

        fn skip_ws(bytes: &[u8], pos: &mut usize) {
            while *pos < bytes.len() {
                match bytes[*pos] {
                    b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
                    b'#' => {
                        while *pos < bytes.len() && bytes[*pos] != b'\n' {
                            *pos += 1;
                        }
                    }
                    _ => break,
                }
            }
        }

        fn read_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], ImagingError> {
            skip_ws(bytes, pos);
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(ImagingError::Format("truncated PPM header".into()));
            }
            Ok(&bytes[start..*pos])
        }

        fn read_number(bytes: &[u8], pos: &mut usize) -> Result<u32, ImagingError> {
            let tok = read_token(bytes, pos)?;
            std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ImagingError::Format("bad number in PPM header".into()))
        }

        let magic = read_token(bytes, &mut pos)?;
        if magic != b"P6" {
            return Err(ImagingError::Format("not a P6 PPM".into()));
        }
        let width = read_number(bytes, &mut pos)?;
        let height = read_number(bytes, &mut pos)?;
        let maxval = read_number(bytes, &mut pos)?;
        if maxval != 255 {
            return Err(ImagingError::Format(format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from pixel data.
        pos += 1;
        let expected = width as usize * height as usize * CHANNELS;
        if bytes.len() < pos + expected {
            return Err(ImagingError::Format("truncated PPM pixel data".into()));
        }
        Self::from_raw(width, height, bytes[pos..pos + expected].to_vec())
    }

    pub fn load_ppm<P: AsRef<Path>>(path: P) -> Result<Self, ImagingError> {
        Self::from_ppm_bytes(&fs::read(path)?)
    }

    pub fn save_png<P: AsRef<Path>>(&self, path: P) -> Result<(), ImagingError> {
        image::save_buffer(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| ImagingError::Format(e.to_string()))
    }

    pub fn load_png<P: AsRef<Path>>(path: P) -> Result<Self, ImagingError> {
        let img = image::open(path)
            .map_err(|e| ImagingError::Format(e.to_string()))?
            .into_rgb8();
        let (width, height) = img.dimensions();
        Self::from_raw(width, height, img.into_raw())
    }
}

/// One bit per pixel; 1 marks a photometrically perturbed point.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Wraps raw per-pixel values, which must all be 0 or 1.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImagingError::BadDataLength {
                width,
                height,
                channels: 1,
                actual: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(ImagingError::Format(format!("binary image value {bad} not in {{0, 1}}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        debug_assert!(value <= 1);
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

/// Dimensions tying the projector frame buffer to the estimated-image grid.
///
/// The buffer is partitioned into `grid_width × grid_height` disjoint regions;
/// region `(x, y)` collapses to estimated-image pixel `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridDims {
    pub buffer_width: u32,
    pub buffer_height: u32,
    pub grid_width: u32,
    pub grid_height: u32,
}

impl GridDims {
    pub fn new(
        buffer_width: u32,
        buffer_height: u32,
        grid_width: u32,
        grid_height: u32,
    ) -> Result<Self, ImagingError> {
        if buffer_width == 0
            || buffer_height == 0
            || grid_width == 0
            || grid_height == 0
            || grid_width > buffer_width
            || grid_height > buffer_height
        {
            return Err(ImagingError::BadGridDims {
                buffer_width,
                buffer_height,
                grid_width,
                grid_height,
            });
        }
        Ok(Self {
            buffer_width,
            buffer_height,
            grid_width,
            grid_height,
        })
    }

    /// Buffer pixels in the x span of grid column `gx`.
    ///
    /// `region_of(p).0 == gx` exactly for `p.x` in this range.
    #[inline]
    pub fn region_x_range(&self, gx: u32) -> Range<u32> {
        let bw = self.buffer_width as u64;
        let gw = self.grid_width as u64;
        let start = ((gx as u64 * bw) + gw - 1) / gw;
        let end = (((gx as u64 + 1) * bw) + gw - 1) / gw;
        start as u32..end as u32
    }

    /// Buffer pixels in the y span of grid row `gy`.
    #[inline]
    pub fn region_y_range(&self, gy: u32) -> Range<u32> {
        let bh = self.buffer_height as u64;
        let gh = self.grid_height as u64;
        let start = ((gy as u64 * bh) + gh - 1) / gh;
        let end = (((gy as u64 + 1) * bh) + gh - 1) / gh;
        start as u32..end as u32
    }
}

/// Maps a buffer pixel to the index of the region that contains it:
/// `(⌊x·|E|ˣ/|B|ˣ⌋, ⌊y·|E|ʸ/|B|ʸ⌋)`.
pub fn region_of(p: (u32, u32), dims: &GridDims) -> Result<(u32, u32), ImagingError> {
    let (x, y) = p;
    if x >= dims.buffer_width || y >= dims.buffer_height {
        return Err(ImagingError::PixelOutOfBounds {
            x,
            y,
            width: dims.buffer_width,
            height: dims.buffer_height,
        });
    }
    let gx = (x as u64 * dims.grid_width as u64) / dims.buffer_width as u64;
    let gy = (y as u64 * dims.grid_height as u64) / dims.buffer_height as u64;
    Ok((gx as u32, gy as u32))
}

/// All buffer pixels whose region index is `r`, in row-major order.
/// The result is never empty.
pub fn region_pixels(r: (u32, u32), dims: &GridDims) -> Result<Vec<(u32, u32)>, ImagingError> {
    let (gx, gy) = r;
    if gx >= dims.grid_width || gy >= dims.grid_height {
        return Err(ImagingError::RegionOutOfBounds {
            x: gx,
            y: gy,
            width: dims.grid_width,
            height: dims.grid_height,
        });
    }
    let xs = dims.region_x_range(gx);
    let ys = dims.region_y_range(gy);
    let mut pixels = Vec::with_capacity((xs.len() * ys.len()) as usize);
    for y in ys {
        for x in xs.clone() {
            pixels.push((x, y));
        }
    }
    Ok(pixels)
}
