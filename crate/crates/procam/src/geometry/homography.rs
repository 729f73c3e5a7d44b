//! Planar projective transform between the estimated-image and camera
//! coordinate systems.

use super::GeometryError;
use crate::math::solve_linear;

/// Coefficients of the projective transform, normalized so `p9 = 1`.
///
/// A point `(X, Y)` in estimated-image coordinates maps to camera
/// coordinates `((p1·X + p2·Y + p3) / d, (p4·X + p5·Y + p6) / d)` with
/// `d = p7·X + p8·Y + p9`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomographyParams {
    coeffs: [f64; 9],
}

impl HomographyParams {
    /// The identity transform.
    pub fn identity() -> Self {
        Self {
            coeffs: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    /// Wraps raw coefficients `p1..p9`, renormalizing so `p9 = 1` and
    /// rejecting a singular coefficient matrix.
    pub fn from_coeffs(coeffs: [f64; 9]) -> Result<Self, GeometryError> {
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::SingularSystem("non-finite coefficient".into()));
        }
        if coeffs[8].abs() < 1e-12 {
            return Err(GeometryError::SingularSystem("p9 is zero; cannot normalize".into()));
        }
        let mut c = coeffs;
        for v in &mut c {
            *v /= coeffs[8];
        }
        let h = Self { coeffs: c };
        if h.det().abs() < 1e-12 {
            return Err(GeometryError::SingularSystem("coefficient matrix is singular".into()));
        }
        Ok(h)
    }

    /// Coefficients `p1..p9` in row-major 3×3 order; `p9` is always 1.
    pub fn coeffs(&self) -> &[f64; 9] {
        &self.coeffs
    }

    fn det(&self) -> f64 {
        let c = &self.coeffs;
        c[0] * (c[4] * c[8] - c[5] * c[7]) - c[1] * (c[3] * c[8] - c[5] * c[6])
            + c[2] * (c[3] * c[7] - c[4] * c[6])
    }

    /// The inverse transform (camera → estimated-image for a forward map).
    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let c = &self.coeffs;
        let det = self.det();
        if det.abs() < 1e-12 {
            return Err(GeometryError::SingularSystem("matrix not invertible".into()));
        }
        let adj = [
            c[4] * c[8] - c[5] * c[7],
            c[2] * c[7] - c[1] * c[8],
            c[1] * c[5] - c[2] * c[4],
            c[5] * c[6] - c[3] * c[8],
            c[0] * c[8] - c[2] * c[6],
            c[2] * c[3] - c[0] * c[5],
            c[3] * c[7] - c[4] * c[6],
            c[1] * c[6] - c[0] * c[7],
            c[0] * c[4] - c[1] * c[3],
        ];
        Self::from_coeffs(adj)
    }

    /// Composition `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self, GeometryError> {
        let a = &self.coeffs;
        let b = &other.coeffs;
        let mut m = [0.0f64; 9];
        for row in 0..3 {
            for col in 0..3 {
                m[row * 3 + col] = (0..3).map(|k| a[row * 3 + k] * b[k * 3 + col]).sum();
            }
        }
        Self::from_coeffs(m)
    }

    /// Serializes as 9 little-endian 64-bit reals.
    pub fn to_bytes(&self) -> [u8; 72] {
        let mut out = [0u8; 72];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GeometryError> {
        if bytes.len() != 72 {
            return Err(GeometryError::Format(format!(
                "homography file must be 72 bytes, got {}",
                bytes.len()
            )));
        }
        let mut coeffs = [0.0f64; 9];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        Self::from_coeffs(coeffs)
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self, GeometryError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn collinear_triple(points: &[(f64, f64); 4]) -> Option<(usize, usize, usize)> {
    for i in 0..4 {
        for j in i + 1..4 {
            for k in j + 1..4 {
                let (a, b, c) = (points[i], points[j], points[k]);
                let area2 = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if area2.abs() < 1e-9 {
                    return Some((i, j, k));
                }
            }
        }
    }
    None
}

/// Estimates the homography from exactly four point correspondences
/// `(estimated-image point → camera point)`.
///
/// No three source points and no three destination points may be collinear.
/// The returned parameters reproduce each destination within 1e-6 px and are
/// normalized so `p9 = 1`.
pub fn estimate_homography(
    pairs: &[((f64, f64), (f64, f64)); 4],
) -> Result<HomographyParams, GeometryError> {
    let sources = [pairs[0].0, pairs[1].0, pairs[2].0, pairs[3].0];
    let dests = [pairs[0].1, pairs[1].1, pairs[2].1, pairs[3].1];
    if let Some((i, j, k)) = collinear_triple(&sources) {
        return Err(GeometryError::SingularSystem(format!(
            "source points {i}, {j}, {k} are collinear"
        )));
    }
    if let Some((i, j, k)) = collinear_triple(&dests) {
        return Err(GeometryError::SingularSystem(format!(
            "destination points {i}, {j}, {k} are collinear"
        )));
    }

    // With p9 fixed to 1, each pair contributes two linear equations in
    // p1..p8:  p1·X + p2·Y + p3 − x·p7·X − x·p8·Y = x  (and the y analogue).
    let mut a = vec![0.0f64; 64];
    let mut b = vec![0.0f64; 8];
    for (i, &((sx, sy), (dx, dy))) in pairs.iter().enumerate() {
        let r0 = 2 * i;
        let r1 = 2 * i + 1;
        a[r0 * 8] = sx;
        a[r0 * 8 + 1] = sy;
        a[r0 * 8 + 2] = 1.0;
        a[r0 * 8 + 6] = -dx * sx;
        a[r0 * 8 + 7] = -dx * sy;
        b[r0] = dx;
        a[r1 * 8 + 3] = sx;
        a[r1 * 8 + 4] = sy;
        a[r1 * 8 + 5] = 1.0;
        a[r1 * 8 + 6] = -dy * sx;
        a[r1 * 8 + 7] = -dy * sy;
        b[r1] = dy;
    }
    let x = solve_linear(&mut a, &mut b, 8)
        .ok_or_else(|| GeometryError::SingularSystem("8x8 correspondence system".into()))?;
    HomographyParams::from_coeffs([x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], 1.0])
}

/// Applies the transform to an estimated-image point, returning real-valued
/// camera coordinates.
pub fn map_point(h: &HomographyParams, q: (f64, f64)) -> Result<(f64, f64), GeometryError> {
    let c = h.coeffs();
    let (x, y) = q;
    let den = c[6] * x + c[7] * y + c[8];
    if den.abs() < 1e-12 {
        return Err(GeometryError::HorizonPoint { x, y });
    }
    Ok(((c[0] * x + c[1] * y + c[2]) / den, (c[3] * x + c[4] * y + c[5]) / den))
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT_SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

    fn pairs(src: [(f64, f64); 4], dst: [(f64, f64); 4]) -> [((f64, f64), (f64, f64)); 4] {
        [
            (src[0], dst[0]),
            (src[1], dst[1]),
            (src[2], dst[2]),
            (src[3], dst[3]),
        ]
    }

    #[test]
    fn identity_from_unit_square() {
        let h = estimate_homography(&pairs(UNIT_SQUARE, UNIT_SQUARE)).unwrap();
        let expect = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for (got, want) in h.coeffs().iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn translation_is_affine() {
        let dst = [(10.0, 5.0), (11.0, 5.0), (11.0, 6.0), (10.0, 6.0)];
        let h = estimate_homography(&pairs(UNIT_SQUARE, dst)).unwrap();
        let expect = [1.0, 0.0, 10.0, 0.0, 1.0, 5.0, 0.0, 0.0, 1.0];
        for (got, want) in h.coeffs().iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(map_point(&h, (0.0, 0.0)).unwrap(), (10.0, 5.0));
    }

    #[test]
    fn perspective_corners_reproduced_against_oracle() {
        // Oracle: solve the same 8x8 system with nalgebra's LU decomposition.
        let dst = [(0.0, 0.0), (1.0, 0.0), (2.0, 2.0), (0.0, 1.0)];
        let p = pairs(UNIT_SQUARE, dst);
        let h = estimate_homography(&p).unwrap();

        let mut a = nalgebra::DMatrix::<f64>::zeros(8, 8);
        let mut b = nalgebra::DVector::<f64>::zeros(8);
        for (i, &((sx, sy), (dx, dy))) in p.iter().enumerate() {
            a[(2 * i, 0)] = sx;
            a[(2 * i, 1)] = sy;
            a[(2 * i, 2)] = 1.0;
            a[(2 * i, 6)] = -dx * sx;
            a[(2 * i, 7)] = -dx * sy;
            b[2 * i] = dx;
            a[(2 * i + 1, 3)] = sx;
            a[(2 * i + 1, 4)] = sy;
            a[(2 * i + 1, 5)] = 1.0;
            a[(2 * i + 1, 6)] = -dy * sx;
            a[(2 * i + 1, 7)] = -dy * sy;
            b[2 * i + 1] = dy;
        }
        let oracle = a.lu().solve(&b).expect("oracle solve");
        for i in 0..8 {
            assert!(
                (h.coeffs()[i] - oracle[i]).abs() < 1e-9,
                "coefficient {i}: {} vs oracle {}",
                h.coeffs()[i],
                oracle[i]
            );
        }

        for &((sx, sy), (dx, dy)) in &p {
            let (mx, my) = map_point(&h, (sx, sy)).unwrap();
            assert!((mx - dx).abs() < 1e-6 && (my - dy).abs() < 1e-6);
        }
    }

    #[test]
    fn map_point_midpoint_matches_matrix_oracle() {
        let dst = [(0.0, 0.0), (1.0, 0.0), (2.0, 2.0), (0.0, 1.0)];
        let h = estimate_homography(&pairs(UNIT_SQUARE, dst)).unwrap();
        let got = map_point(&h, (0.5, 0.5)).unwrap();

        // Oracle: 3x3 matrix-vector product in homogeneous coordinates.
        let c = h.coeffs();
        let m = nalgebra::Matrix3::new(c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]);
        let v = m * nalgebra::Vector3::new(0.5, 0.5, 1.0);
        let expect = (v[0] / v[2], v[1] / v[2]);
        assert!((got.0 - expect.0).abs() < 1e-12);
        assert!((got.1 - expect.1).abs() < 1e-12);
    }

    #[test]
    fn identity_maps_point_to_itself() {
        let h = HomographyParams::identity();
        assert_eq!(map_point(&h, (12.0, 34.0)).unwrap(), (12.0, 34.0));
    }

    #[test]
    fn collinear_sources_rejected() {
        let src = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 1.0)];
        let dst = UNIT_SQUARE;
        assert!(matches!(
            estimate_homography(&pairs(src, dst)),
            Err(GeometryError::SingularSystem(_))
        ));
    }

    #[test]
    fn horizon_point_detected() {
        // p7 = 1, so the line x + 1 = 0 has a vanishing denominator.
        let h = HomographyParams::from_coeffs([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            map_point(&h, (-1.0, 5.0)),
            Err(GeometryError::HorizonPoint { .. })
        ));
    }

    #[test]
    fn round_trip_estimation_reproduces_destinations() {
        let src = [(0.0, 0.0), (320.0, 0.0), (320.0, 240.0), (0.0, 240.0)];
        let dst = [(21.0, 14.5), (301.2, 10.0), (305.0, 228.9), (18.3, 231.0)];
        let h = estimate_homography(&pairs(src, dst)).unwrap();
        for (s, d) in src.iter().zip(dst) {
            let m = map_point(&h, *s).unwrap();
            assert!((m.0 - d.0).abs() < 1e-6 && (m.1 - d.1).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let src = [(0.0, 0.0), (320.0, 0.0), (320.0, 240.0), (0.0, 240.0)];
        let dst = [(21.0, 14.5), (301.2, 10.0), (305.0, 228.9), (18.3, 231.0)];
        let h = estimate_homography(&pairs(src, dst)).unwrap();
        let inv = h.inverse().unwrap();
        for p in [(10.0, 20.0), (150.0, 100.0), (319.0, 239.0)] {
            let fwd = map_point(&h, p).unwrap();
            let back = map_point(&inv, fwd).unwrap();
            assert!((back.0 - p.0).abs() < 1e-9 && (back.1 - p.1).abs() < 1e-9);
        }
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let src = [(0.0, 0.0), (320.0, 0.0), (320.0, 240.0), (0.0, 240.0)];
        let dst = [(21.0, 14.5), (301.2, 10.0), (305.0, 228.9), (18.3, 231.0)];
        let h = estimate_homography(&pairs(src, dst)).unwrap();
        let back = HomographyParams::from_bytes(&h.to_bytes()).unwrap();
        assert_eq!(h.coeffs(), back.coeffs());
    }
}
