//! Detects the four corners of the region of interest from a captured blank
//! projection: global automatic threshold (Otsu), morphological boundary
//! extraction, a Hough transform over (ρ, θ), peak selection, and pairwise
//! line intersection.

use super::{GeometryError, RegionOfInterest};
use crate::imaging::{BinaryImage, Image};

/// Tuning knobs for corner detection. The defaults are sized for frames in
/// the 320x240 .. 640x480 range.
#[derive(Clone, Copy, Debug)]
pub struct CornerDetectionParams {
    /// A peak must collect at least this many votes to count as a line.
    /// `None` derives `min(width, height) / 8` from the frame.
    pub min_votes: Option<u32>,
    /// Non-maximum suppression half-width in ρ bins around a chosen peak.
    pub nms_rho: u32,
    /// Non-maximum suppression half-width in θ bins around a chosen peak.
    pub nms_theta: u32,
    /// Minimum gray-level spread required before thresholding is attempted;
    /// guards against running the Hough transform on a dark or contrast-free
    /// frame where Otsu would split sensor noise.
    pub min_contrast: u8,
}

impl Default for CornerDetectionParams {
    fn default() -> Self {
        Self {
            min_votes: None,
            nms_rho: 5,
            nms_theta: 5,
            min_contrast: 32,
        }
    }
}

/// A line in polar form: the set of points with `x·cos θ + y·sin θ = ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarLine {
    /// Signed distance from the image origin, in pixels.
    pub rho: f64,
    /// Angle of the normal in degrees, in `[0, 180)`.
    pub theta_deg: f64,
    /// Accumulator votes backing this line.
    pub votes: u32,
}

/// Converts to gray as the rounded mean of the three channels.
pub fn to_gray(image: &Image) -> Vec<u8> {
    image
        .data()
        .chunks_exact(3)
        .map(|px| ((px[0] as u16 + px[1] as u16 + px[2] as u16 + 1) / 3) as u8)
        .collect()
}

/// Otsu's method: the threshold maximizing between-class variance of the
/// gray histogram. Foreground is everything strictly above the threshold.
pub fn otsu_threshold(gray: &[u8]) -> u8 {
    let mut hist = [0u64; 256];
    for &v in gray {
        hist[v as usize] += 1;
    }
    let total: u64 = gray.len() as u64;
    if total == 0 {
        return 0;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let mut best_t = 0u8;
    let mut best_var = -1.0f64;
    let mut w0 = 0u64;
    let mut sum0 = 0.0f64;
    for t in 0..256usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 {
            continue;
        }
        if w1 == 0 {
            break;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    if best_var <= 0.0 {
        // Uniform frame: place the threshold at the single occupied level so
        // the strict comparison yields an empty foreground.
        return gray.iter().copied().max().unwrap_or(0);
    }
    best_t
}

/// Thresholds an image: pixels with gray value strictly above `t` become 1.
pub fn binarize(image: &Image, t: u8) -> BinaryImage {
    let gray = to_gray(image);
    let mut out = BinaryImage::new(image.width(), image.height());
    for y in 0..image.height() {
        for x in 0..image.width() {
            let v = gray[y as usize * image.width() as usize + x as usize];
            out.set(x, y, (v > t) as u8);
        }
    }
    out
}

/// Morphological boundary: 3×3 erosion XORed with the input. Pixels outside
/// the frame count as background, so foreground touching the border is kept.
pub fn boundary(bin: &BinaryImage) -> BinaryImage {
    let (w, h) = (bin.width(), bin.height());
    let mut out = BinaryImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if bin.get(x, y) == 0 {
                continue;
            }
            let mut eroded = 1u8;
            'window: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        eroded = 0;
                        break 'window;
                    }
                    if bin.get(nx as u32, ny as u32) == 0 {
                        eroded = 0;
                        break 'window;
                    }
                }
            }
            out.set(x, y, 1 ^ eroded);
        }
    }
    out
}

/// Hough vote accumulator: θ bins of 1° over `[0°, 180°)`, ρ bins of 1 px
/// over `[-rho_max, rho_max]`.
pub struct HoughAccumulator {
    pub rho_max: i64,
    /// Row-major `[theta][rho_bin]`, rho_bin = ρ + rho_max.
    pub bins: Vec<u32>,
}

impl HoughAccumulator {
    pub fn rho_bins(&self) -> usize {
        (2 * self.rho_max + 1) as usize
    }

    #[inline]
    pub fn get(&self, theta: usize, rho_bin: usize) -> u32 {
        self.bins[theta * self.rho_bins() + rho_bin]
    }
}

/// Accumulates Hough votes for every 1-pixel of a binary image.
pub fn hough_accumulate(bin: &BinaryImage) -> HoughAccumulator {
    let (w, h) = (bin.width() as f64, bin.height() as f64);
    let rho_max = (w * w + h * h).sqrt().ceil() as i64;
    let rho_bins = (2 * rho_max + 1) as usize;
    let mut bins = vec![0u32; 180 * rho_bins];

    let trig: Vec<(f64, f64)> = (0..180)
        .map(|deg| (deg as f64).to_radians().sin_cos())
        .collect();

    for y in 0..bin.height() {
        for x in 0..bin.width() {
            if bin.get(x, y) == 0 {
                continue;
            }
            for (theta, &(sin, cos)) in trig.iter().enumerate() {
                let rho = x as f64 * cos + y as f64 * sin;
                let rho_bin = (rho.round() as i64 + rho_max) as usize;
                bins[theta * rho_bins + rho_bin] += 1;
            }
        }
    }
    HoughAccumulator { rho_max, bins }
}

fn antipodal_overlap(
    rho_a: i64,
    theta_a: usize,
    rho_b: i64,
    theta_b: usize,
    nms_rho: i64,
    nms_theta: i64,
) -> bool {
    let dt = (theta_a as i64 - theta_b as i64).abs();
    // Same orientation band.
    if dt <= nms_theta && (rho_a - rho_b).abs() <= nms_rho {
        return true;
    }
    // θ and θ±180 describe the same physical line with negated ρ.
    if (180 - dt) <= nms_theta && (rho_a + rho_b).abs() <= nms_rho {
        return true;
    }
    false
}

/// Greedily picks the `count` strongest accumulator peaks, suppressing
/// neighborhoods of ±`nms_rho` px and ±`nms_theta` degrees around each chosen
/// peak (including the antipodal (−ρ, θ±180°) representation of the same
/// line). Peaks below `min_votes` are never selected.
pub fn select_peaks(
    acc: &HoughAccumulator,
    count: usize,
    nms_rho: u32,
    nms_theta: u32,
    min_votes: u32,
) -> Vec<PolarLine> {
    let rho_bins = acc.rho_bins();
    let mut chosen: Vec<(i64, usize, u32)> = Vec::new(); // (rho, theta, votes)

    while chosen.len() < count {
        let mut best: Option<(i64, usize, u32)> = None;
        for theta in 0..180usize {
            for rb in 0..rho_bins {
                let votes = acc.get(theta, rb);
                if votes < min_votes {
                    continue;
                }
                if best.map_or(false, |(_, _, bv)| votes <= bv) {
                    continue;
                }
                let rho = rb as i64 - acc.rho_max;
                let suppressed = chosen.iter().any(|&(cr, ct, _)| {
                    antipodal_overlap(rho, theta, cr, ct, nms_rho as i64, nms_theta as i64)
                });
                if !suppressed {
                    best = Some((rho, theta, votes));
                }
            }
        }
        match best {
            Some(peak) => chosen.push(peak),
            None => break,
        }
    }

    chosen
        .into_iter()
        .map(|(rho, theta, votes)| PolarLine {
            rho: rho as f64,
            theta_deg: theta as f64,
            votes,
        })
        .collect()
}

/// Intersection of two polar lines, or `None` when they are near parallel.
pub fn intersect_lines(a: &PolarLine, b: &PolarLine) -> Option<(f64, f64)> {
    let (sa, ca) = a.theta_deg.to_radians().sin_cos();
    let (sb, cb) = b.theta_deg.to_radians().sin_cos();
    let det = ca * sb - cb * sa;
    if det.abs() < 1e-9 {
        return None;
    }
    let x = (a.rho * sb - b.rho * sa) / det;
    let y = (b.rho * ca - a.rho * cb) / det;
    Some((x, y))
}

fn angular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 180.0;
    d.min(180.0 - d)
}

/// Orders four corner points TL, TR, BR, BL by angle about their centroid.
/// In image coordinates (y grows downward) ascending `atan2` order visits
/// exactly those quadrants.
fn order_corners(mut pts: [(f64, f64); 4]) -> [(f64, f64); 4] {
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    pts.sort_by(|a, b| {
        let aa = (a.1 - cy).atan2(a.0 - cx);
        let ab = (b.1 - cy).atan2(b.0 - cx);
        aa.partial_cmp(&ab).unwrap()
    });
    pts
}

/// Detects the region of interest in a captured blank projection with
/// default parameters.
pub fn detect_region_of_interest(blank_capture: &Image) -> Result<RegionOfInterest, GeometryError> {
    detect_region_of_interest_with(blank_capture, &CornerDetectionParams::default())
}

/// Full corner-detection pipeline: Otsu threshold, boundary extraction,
/// Hough transform, four-peak selection, and pairwise intersection of the
/// two nearly-parallel line families.
pub fn detect_region_of_interest_with(
    blank_capture: &Image,
    params: &CornerDetectionParams,
) -> Result<RegionOfInterest, GeometryError> {
    let gray = to_gray(blank_capture);
    let lo = gray.iter().copied().min().unwrap_or(0);
    let hi = gray.iter().copied().max().unwrap_or(0);
    if hi - lo < params.min_contrast {
        return Err(GeometryError::DetectionFailure(format!(
            "gray-level spread {} below contrast floor {}",
            hi - lo,
            params.min_contrast
        )));
    }

    let t = otsu_threshold(&gray);
    let bin = binarize(blank_capture, t);
    let edge = boundary(&bin);
    let acc = hough_accumulate(&edge);

    let min_votes = params
        .min_votes
        .unwrap_or_else(|| blank_capture.width().min(blank_capture.height()) / 8);
    let lines = select_peaks(&acc, 4, params.nms_rho, params.nms_theta, min_votes);
    if lines.len() < 4 {
        return Err(GeometryError::DetectionFailure(format!(
            "found {} dominant lines, need 4",
            lines.len()
        )));
    }

    // Split into two families of nearly-parallel edges; adjacent quad edges
    // are far apart in angle, opposite edges are close.
    let mut family_a = vec![lines[0]];
    let mut family_b = Vec::new();
    for line in &lines[1..] {
        if angular_distance_deg(line.theta_deg, lines[0].theta_deg) < 45.0 {
            family_a.push(*line);
        } else {
            family_b.push(*line);
        }
    }
    if family_a.len() != 2 || family_b.len() != 2 {
        return Err(GeometryError::DetectionFailure(format!(
            "dominant lines split {}:{} by angle, need 2:2",
            family_a.len(),
            family_b.len()
        )));
    }

    let mut pts = [(0.0, 0.0); 4];
    let mut i = 0;
    for a in &family_a {
        for b in &family_b {
            pts[i] = intersect_lines(a, b).ok_or_else(|| {
                GeometryError::DetectionFailure("edge families intersect at infinity".into())
            })?;
            i += 1;
        }
    }

    RegionOfInterest::new(order_corners(pts))
}
