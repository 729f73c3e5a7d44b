//! Levenberg–Marquardt fit of the four-parameter logistic transfer function
//! to the four calibration samples of one (region, channel).

use super::{PhotometryError, VerhulstParams};
use crate::math::solve_linear;

/// Evaluates `a / (1 + e^(−alpha·(z − b))) + k` without clamping.
#[inline]
pub fn verhulst_eval(v: &VerhulstParams, z: f64) -> f64 {
    v.a * sigmoid(v.alpha * (z - v.b)) + v.k
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    // exp overflows past ~709; the sigmoid saturates long before that.
    if t > 500.0 {
        1.0
    } else if t < -500.0 {
        0.0
    } else {
        1.0 / (1.0 + (-t).exp())
    }
}

/// Outcome flag of a transfer-function fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitFlag {
    /// Logistic converged with a non-negative slope rate.
    Converged = 0,
    /// Logistic converged but the curve decreases (alpha < 0).
    Decreasing = 1,
    /// Logistic did not reach the residual target; the piecewise-linear
    /// fallback through the four samples is used instead.
    Fallback = 2,
}

impl FitFlag {
    pub fn from_byte(b: u8) -> Result<Self, PhotometryError> {
        match b {
            0 => Ok(Self::Converged),
            1 => Ok(Self::Decreasing),
            2 => Ok(Self::Fallback),
            other => Err(PhotometryError::Format(format!("unknown fit flag {other}"))),
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, Self::Fallback)
    }
}

/// Piecewise-linear curve through the four calibration samples, used when
/// the logistic fit does not converge. Outside the sampled range the end
/// segments extend linearly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearKnots {
    pub z: [f64; 4],
    pub v: [f64; 4],
}

impl LinearKnots {
    pub fn eval(&self, z: f64) -> f64 {
        let seg = if z <= self.z[1] {
            0
        } else if z <= self.z[2] {
            1
        } else {
            2
        };
        let (z0, z1) = (self.z[seg], self.z[seg + 1]);
        let (v0, v1) = (self.v[seg], self.v[seg + 1]);
        v0 + (z - z0) * (v1 - v0) / (z1 - z0)
    }
}

/// A fitted color-transfer curve for one (region, channel).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransferCurve {
    Verhulst(VerhulstParams),
    Linear(LinearKnots),
}

impl TransferCurve {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Self::Verhulst(p) => verhulst_eval(p, z),
            Self::Linear(l) => l.eval(z),
        }
    }
}

/// A transfer curve together with its fit-quality flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionFit {
    pub curve: TransferCurve,
    pub flag: FitFlag,
}

/// Largest gap the 4-per-intensity LUT quantization can open for this curve:
/// `max over z in [0, 255] of |F(4·⌊z/4⌋) − F(z)|`.
pub(crate) fn quantization_bound(curve: &TransferCurve) -> f64 {
    let mut bound = 0.0f64;
    for z in 0..=255u32 {
        let q = (z / 4) * 4;
        let d = (curve.eval(q as f64) - curve.eval(z as f64)).abs();
        bound = bound.max(d);
    }
    bound
}

const RESIDUAL_TARGET: f64 = 0.25;
const STEP_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;

fn residuals(p: &[f64; 4], samples: &[(f64, f64); 4]) -> [f64; 4] {
    let vp = VerhulstParams::new(p[0], p[1], p[2], p[3]);
    let mut r = [0.0; 4];
    for (i, &(z, v)) in samples.iter().enumerate() {
        r[i] = verhulst_eval(&vp, z) - v;
    }
    r
}

fn cost(r: &[f64; 4]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// One LM solve of the 4-residual, 4-parameter system.
fn levenberg_marquardt(samples: &[(f64, f64); 4], init: [f64; 4]) -> [f64; 4] {
    let mut p = init;
    let mut lambda = 1e-3f64;
    let mut r = residuals(&p, samples);
    let mut c = cost(&r);

    for _ in 0..MAX_ITERATIONS {
        // Analytic Jacobian of F(z) = a·s + k, s = sigmoid(alpha·(z − b)).
        let mut j = [[0.0f64; 4]; 4];
        for (i, &(z, _)) in samples.iter().enumerate() {
            let s = sigmoid(p[1] * (z - p[2]));
            let ds = s * (1.0 - s);
            j[i][0] = s;
            j[i][1] = p[0] * ds * (z - p[2]);
            j[i][2] = -p[0] * ds * p[1];
            j[i][3] = 1.0;
        }

        let mut jtj = [0.0f64; 16];
        let mut jtr = [0.0f64; 4];
        for row in 0..4 {
            for col in 0..4 {
                jtj[row * 4 + col] = (0..4).map(|i| j[i][row] * j[i][col]).sum();
            }
            jtr[row] = (0..4).map(|i| j[i][row] * r[i]).sum();
        }

        let mut accepted = false;
        for _ in 0..16 {
            let mut a = jtj;
            for d in 0..4 {
                a[d * 4 + d] += lambda * jtj[d * 4 + d].max(1e-12);
            }
            let mut b = jtr.map(|v| -v);
            let Some(delta) = solve_linear(&mut a, &mut b, 4) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = [
                p[0] + delta[0],
                p[1] + delta[1],
                p[2] + delta[2],
                p[3] + delta[3],
            ];
            if !candidate.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let r_new = residuals(&candidate, samples);
            let c_new = cost(&r_new);
            if c_new < c {
                let step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                p = candidate;
                r = r_new;
                c = c_new;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step < STEP_TOLERANCE {
                    return p;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                return p;
            }
        }
        if !accepted {
            return p;
        }
    }
    p
}

/// The `(a, alpha, b, k)` and `(−a, −alpha, b, k + a)` parameterizations
/// describe the same curve; keep the amplitude non-negative so the flag
/// reads off the sign of `alpha` alone.
fn canonicalize(p: [f64; 4]) -> [f64; 4] {
    if p[0] < 0.0 {
        [-p[0], -p[1], p[2], p[3] + p[0]]
    } else {
        p
    }
}

/// Fits the logistic transfer function to four `(projected z, observed
/// intensity)` pairs with strictly increasing `z`.
///
/// On convergence every sample residual is at most 0.25 intensity levels.
/// Otherwise the result is the flagged piecewise-linear fallback through the
/// samples. Initialization: `k₀ = min(observed)`, `a₀ = max − min`,
/// `b₀ =` midpoint of the z range, `α₀` from the central finite-difference
/// slope via the logistic midpoint derivative `a·α/4`.
pub fn fit_verhulst(samples: &[(f64, f64); 4]) -> Result<RegionFit, PhotometryError> {
    for &(z, v) in samples {
        if !z.is_finite() || !v.is_finite() {
            return Err(PhotometryError::Input(format!(
                "non-finite calibration sample ({z}, {v})"
            )));
        }
    }
    let zs = [samples[0].0, samples[1].0, samples[2].0, samples[3].0];
    if !zs.windows(2).all(|w| w[0] < w[1]) {
        return Err(PhotometryError::Input(format!(
            "sample intensities {zs:?} must be strictly increasing"
        )));
    }
    let vs = [samples[0].1, samples[1].1, samples[2].1, samples[3].1];
    let fallback = RegionFit {
        curve: TransferCurve::Linear(LinearKnots { z: zs, v: vs }),
        flag: FitFlag::Fallback,
    };

    let v_min = vs.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = v_max - v_min;
    if spread < 1e-9 {
        // No slope information at all; the flat fallback is exact.
        return Ok(fallback);
    }

    let mut slope = (vs[2] - vs[1]) / (zs[2] - zs[1]);
    if slope == 0.0 {
        slope = (vs[3] - vs[0]) / (zs[3] - zs[0]);
    }
    if slope == 0.0 {
        slope = 1e-3;
    }
    let init = [
        spread,
        4.0 * slope / spread,
        0.5 * (zs[0] + zs[3]),
        v_min,
    ];

    let p = canonicalize(levenberg_marquardt(samples, init));
    let r = residuals(&p, samples);
    if r.iter().all(|v| v.abs() <= RESIDUAL_TARGET) {
        let params = VerhulstParams::new(p[0], p[1], p[2], p[3]);
        let flag = if p[1] < 0.0 {
            FitFlag::Decreasing
        } else {
            FitFlag::Converged
        };
        return Ok(RegionFit {
            curve: TransferCurve::Verhulst(params),
            flag,
        });
    }
    Ok(fallback)
}
