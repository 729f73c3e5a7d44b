//! Synthesis of the estimated image: what the camera should observe given
//! the frame buffer and the fitted calibration. Each estimated pixel is the
//! region average of the transferred buffer intensities.
//!
//! Both paths are data-parallel over estimated-image rows; every output
//! pixel depends only on its own buffer region, so rows are independent.

use rayon::prelude::*;

use super::lut::ColorLut;
use super::{CalibrationModel, PhotometryError};
use crate::imaging::{quantize_intensity, GridDims, Image, CHANNELS};

fn check_dims(buffer: &Image, grid: &GridDims) -> Result<(), PhotometryError> {
    if buffer.width() != grid.buffer_width || buffer.height() != grid.buffer_height {
        return Err(PhotometryError::DimsMismatch(format!(
            "buffer is {}x{}, calibration expects {}x{}",
            buffer.width(),
            buffer.height(),
            grid.buffer_width,
            grid.buffer_height
        )));
    }
    Ok(())
}

/// Estimates the camera view by evaluating the transfer curve of every
/// buffer pixel and averaging per region: for channel `c` and grid pixel
/// `(x, y)`, `E = (Σ F(B_p)) / |R|`, clamped and rounded.
pub fn estimate_image(
    buffer: &Image,
    model: &CalibrationModel,
) -> Result<Image, PhotometryError> {
    let grid = model.grid();
    check_dims(buffer, &grid)?;
    let gw = grid.grid_width;
    let gh = grid.grid_height;
    let bw = grid.buffer_width as usize;

    let rows: Vec<Vec<u8>> = (0..gh)
        .into_par_iter()
        .map(|gy| {
            let ys = grid.region_y_range(gy);
            let mut row = vec![0u8; gw as usize * CHANNELS];
            for gx in 0..gw {
                let xs = grid.region_x_range(gx);
                let count = (xs.len() * ys.len()) as f64;
                let mut sums = [0.0f64; CHANNELS];
                for by in ys.clone() {
                    let base = by as usize * bw;
                    for bx in xs.clone() {
                        let px = (base + bx as usize) * CHANNELS;
                        for (c, sum) in sums.iter_mut().enumerate() {
                            let z = buffer.data()[px + c] as f64;
                            *sum += model.fit_at(gx, gy, c).curve.eval(z);
                        }
                    }
                }
                for (c, sum) in sums.iter().enumerate() {
                    row[gx as usize * CHANNELS + c] = quantize_intensity(sum / count);
                }
            }
            row
        })
        .collect();

    Image::from_raw(gw, gh, rows.concat()).map_err(|e| PhotometryError::Input(e.to_string()))
}

/// The fast path: identical to [`estimate_image`] except every curve
/// evaluation becomes a table lookup at `w = ⌊z/4⌋`. Averaging and the
/// clamp-then-round rule are unchanged.
pub fn estimate_image_lut(buffer: &Image, lut: &ColorLut) -> Result<Image, PhotometryError> {
    let grid = lut.grid();
    check_dims(buffer, &grid)?;
    let gw = grid.grid_width;
    let gh = grid.grid_height;
    let bw = grid.buffer_width as usize;
    let gw_us = gw as usize;
    let gh_us = gh as usize;

    let rows: Vec<Vec<u8>> = (0..gh)
        .into_par_iter()
        .map(|gy| {
            let ys = grid.region_y_range(gy);
            let mut row = vec![0u8; gw_us * CHANNELS];
            for gx in 0..gw {
                let xs = grid.region_x_range(gx);
                let count = (xs.len() * ys.len()) as u32;
                let tables: [&[u8]; CHANNELS] = [
                    lut.table(0, gx, gy),
                    lut.table(1, gx, gy),
                    lut.table(2, gx, gy),
                ];
                debug_assert!(gh_us > 0);
                let mut sums = [0u32; CHANNELS];
                for by in ys.clone() {
                    let base = by as usize * bw;
                    for bx in xs.clone() {
                        let px = (base + bx as usize) * CHANNELS;
                        for (c, sum) in sums.iter_mut().enumerate() {
                            let z = buffer.data()[px + c];
                            *sum += tables[c][(z >> 2) as usize] as u32;
                        }
                    }
                }
                for (c, sum) in sums.iter().enumerate() {
                    // Integer round-half-up equals round-half-away-from-zero
                    // for non-negative sums.
                    row[gx as usize * CHANNELS + c] = ((2 * sum + count) / (2 * count)) as u8;
                }
            }
            row
        })
        .collect();

    Image::from_raw(gw, gh, rows.concat()).map_err(|e| PhotometryError::Input(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometry::fit::{LinearKnots, RegionFit, TransferCurve};
    use crate::photometry::{build_lut, FitFlag, ModelKind, SamplePlan, VerhulstParams};

    fn model_with(grid: GridDims, curve: TransferCurve) -> CalibrationModel {
        let n = grid.grid_width as usize * grid.grid_height as usize * CHANNELS;
        let fit = RegionFit {
            curve,
            flag: FitFlag::Converged,
        };
        CalibrationModel::from_parts(ModelKind::Local, grid, SamplePlan::default(), vec![fit; n])
            .unwrap()
    }

    fn verhulst_curve() -> TransferCurve {
        TransferCurve::Verhulst(VerhulstParams::new(200.0, 0.03, 128.0, 10.0))
    }

    #[test]
    fn uniform_region_equals_single_evaluation() {
        let grid = GridDims::new(8, 8, 2, 2).unwrap();
        let model = model_with(grid, verhulst_curve());
        let buffer = Image::filled(8, 8, [128, 64, 200]);
        let est = estimate_image(&buffer, &model).unwrap();
        let p = VerhulstParams::new(200.0, 0.03, 128.0, 10.0);
        let expect = [
            quantize_intensity(p.eval(128.0)),
            quantize_intensity(p.eval(64.0)),
            quantize_intensity(p.eval(200.0)),
        ];
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(est.get(x, y), expect);
            }
        }
        assert_eq!(expect[0], 110);
    }

    #[test]
    fn flat_model_yields_flat_image() {
        let grid = GridDims::new(8, 8, 4, 4).unwrap();
        let flat = TransferCurve::Linear(LinearKnots {
            z: [32.0, 96.0, 160.0, 224.0],
            v: [60.0; 4],
        });
        let model = model_with(grid, flat);
        let mut buffer = Image::new(8, 8);
        for (i, b) in buffer.data_mut().iter_mut().enumerate() {
            *b = (i * 37 % 256) as u8;
        }
        let est = estimate_image(&buffer, &model).unwrap();
        assert!(est.data().iter().all(|&v| v == 60));
    }

    /// Brute-force oracle: assigns every buffer pixel to its region with the
    /// floating-point floor formula and averages in f64, independently of
    /// the range-based implementation.
    fn brute_force(buffer: &Image, model: &CalibrationModel) -> Image {
        let grid = model.grid();
        let gw = grid.grid_width as usize;
        let gh = grid.grid_height as usize;
        let mut sums = vec![0.0f64; gw * gh * CHANNELS];
        let mut counts = vec![0u32; gw * gh];
        for by in 0..grid.buffer_height {
            for bx in 0..grid.buffer_width {
                let gx = (bx as f64 * gw as f64 / grid.buffer_width as f64).floor() as usize;
                let gy = (by as f64 * gh as f64 / grid.buffer_height as f64).floor() as usize;
                counts[gy * gw + gx] += 1;
                for c in 0..CHANNELS {
                    let z = buffer.channel(bx, by, c) as f64;
                    sums[(gy * gw + gx) * CHANNELS + c] +=
                        model.fit_at(gx as u32, gy as u32, c).curve.eval(z);
                }
            }
        }
        let mut out = Image::new(gw as u32, gh as u32);
        for gy in 0..gh {
            for gx in 0..gw {
                let n = counts[gy * gw + gx] as f64;
                let px = std::array::from_fn(|c| {
                    quantize_intensity(sums[(gy * gw + gx) * CHANNELS + c] / n)
                });
                out.set(gx as u32, gy as u32, px);
            }
        }
        out
    }

    #[test]
    fn random_buffer_matches_brute_force_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let grid = GridDims::new(64, 48, 16, 12).unwrap();
        let model = model_with(grid, verhulst_curve());
        for _ in 0..5 {
            let data: Vec<u8> = (0..64 * 48 * 3).map(|_| rng.gen()).collect();
            let buffer = Image::from_raw(64, 48, data).unwrap();
            let est = estimate_image(&buffer, &model).unwrap();
            let oracle = brute_force(&buffer, &model);
            assert_eq!(est, oracle);
        }
    }

    #[test]
    fn lut_path_is_bit_identical_on_multiples_of_four() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let grid = GridDims::new(32, 24, 8, 6).unwrap();
        let model = model_with(grid, verhulst_curve());
        let lut = build_lut(&model).unwrap();
        let data: Vec<u8> = (0..32 * 24 * 3).map(|_| rng.gen::<u8>() & 0xFC).collect();
        let buffer = Image::from_raw(32, 24, data).unwrap();
        assert_eq!(
            estimate_image(&buffer, &model).unwrap(),
            estimate_image_lut(&buffer, &lut).unwrap()
        );
    }

    #[test]
    fn lut_deviation_stays_within_per_region_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let grid = GridDims::new(32, 24, 8, 6).unwrap();
        let model = model_with(grid, verhulst_curve());
        let lut = build_lut(&model).unwrap();
        let data: Vec<u8> = (0..32 * 24 * 3).map(|_| rng.gen()).collect();
        let buffer = Image::from_raw(32, 24, data).unwrap();
        let direct = estimate_image(&buffer, &model).unwrap();
        let fast = estimate_image_lut(&buffer, &lut).unwrap();
        for gy in 0..6u32 {
            for gx in 0..8u32 {
                let bound = ColorLut::quantization_bound_at(&model, gx, gy) + 1.0;
                for c in 0..CHANNELS {
                    let d = (direct.channel(gx, gy, c) as f64 - fast.channel(gx, gy, c) as f64)
                        .abs();
                    assert!(d <= bound, "deviation {d} exceeds bound {bound}");
                }
            }
        }
    }

    #[test]
    fn z_203_uses_entry_for_200() {
        let grid = GridDims::new(4, 4, 1, 1).unwrap();
        let model = model_with(grid, verhulst_curve());
        let lut = build_lut(&model).unwrap();
        let buffer = Image::filled(4, 4, [203, 203, 203]);
        let est = estimate_image_lut(&buffer, &lut).unwrap();
        let p = VerhulstParams::new(200.0, 0.03, 128.0, 10.0);
        let expect = quantize_intensity(p.eval(200.0));
        assert_eq!(est.get(0, 0), [expect, expect, expect]);
    }

    #[test]
    fn averaging_stays_within_region_min_max() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let grid = GridDims::new(16, 16, 4, 4).unwrap();
        let model = model_with(grid, verhulst_curve());
        let data: Vec<u8> = (0..16 * 16 * 3).map(|_| rng.gen()).collect();
        let buffer = Image::from_raw(16, 16, data).unwrap();
        let est = estimate_image(&buffer, &model).unwrap();
        for gy in 0..4u32 {
            for gx in 0..4u32 {
                for c in 0..CHANNELS {
                    let curve = &model.fit_at(gx, gy, c).curve;
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for by in grid.region_y_range(gy) {
                        for bx in grid.region_x_range(gx) {
                            let v = curve.eval(buffer.channel(bx, by, c) as f64);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let e = est.channel(gx, gy, c) as f64;
                    assert!(e >= lo.floor() && e <= hi.ceil(), "{e} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn dims_mismatch_rejected() {
        let grid = GridDims::new(8, 8, 2, 2).unwrap();
        let model = model_with(grid, verhulst_curve());
        let buffer = Image::new(9, 8);
        assert!(matches!(
            estimate_image(&buffer, &model),
            Err(PhotometryError::DimsMismatch(_))
        ));
        let lut = build_lut(&model).unwrap();
        assert!(matches!(
            estimate_image_lut(&buffer, &lut),
            Err(PhotometryError::DimsMismatch(_))
        ));
    }
}
