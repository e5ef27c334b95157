//! Per-pixel grayness scores from contrast vectors.
//!
//! Two measures are provided: the angular measure (angle between the
//! component magnitudes of the contrast vector and the neutral axis, a
//! chromaticity-only quantity) and the legacy variance-based measure, which
//! is entangled with luminance and kept for comparison. The `gamma_factor`
//! exposes the luminance-dependent term that links the two.

use crate::contrast::ContrastMap;
use crate::{Error, LinearImage, Result, Rgb};

/// Per-pixel scalar grayness. Lower = grayer. For the angular measure the
/// values lie in `[0, arccos(1/sqrt(3))]` radians.
#[derive(Debug, Clone)]
pub struct GraynessMap {
    pub width: u32,
    pub height: u32,
    pub g: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GraynessMap {
    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Upper end of the angular grayness range: `arccos(1/sqrt(3))`.
pub const THETA_MAX: f64 = 0.9553166181245093;

/// Angular scores below this are indistinguishable from rounding noise of
/// the preceding log/LoG stages and are treated as exactly zero.
const THETA_NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Theta,
    Sigma,
}

#[derive(Debug, Clone, Copy)]
pub struct GraynessConfig {
    pub measure: Measure,
    /// Pixels with contrast L2 norm below this are invalid.
    pub contrast_floor: f64,
    /// Odd window for the local-averaging step.
    pub smooth_window: u32,
}

impl Default for GraynessConfig {
    fn default() -> Self {
        Self {
            measure: Measure::Theta,
            contrast_floor: 1e-4,
            smooth_window: 7,
        }
    }
}

#[inline]
fn abs3(d: &Rgb) -> Rgb {
    [d[0].abs(), d[1].abs(), d[2].abs()]
}

#[inline]
fn l1(d: &Rgb) -> f64 {
    d[0].abs() + d[1].abs() + d[2].abs()
}

#[inline]
fn l2(d: &Rgb) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

const INV_SQRT3: f64 = 0.5773502691896258;

/// Angular grayness: the angle between the component magnitudes and the
/// neutral axis, equal to `arccos((1/sqrt(3)) * |delta|_1 / |delta|_2)`.
/// Radians. Zero iff component magnitudes are equal; invariant to positive
/// scaling.
///
/// Evaluated as `atan2(|m x u|, m . u)` with `u = (1,1,1)` rather than the
/// acos form, which loses half the significant digits for near-gray inputs.
pub fn grayness_theta(delta: &Rgb) -> Result<f64> {
    let m = abs3(delta);
    let sum = m[0] + m[1] + m[2];
    if !(sum > 0.0) {
        return Err(Error::ZeroVector);
    }
    let d01 = m[0] - m[1];
    let d12 = m[1] - m[2];
    let d20 = m[2] - m[0];
    let cross = (d01 * d01 + d12 * d12 + d20 * d20).sqrt();
    Ok(cross.atan2(sum))
}

/// Legacy grayness: relative standard deviation of the contrast components.
///
/// Computed on component magnitudes, whose mean must be strictly positive.
pub fn grayness_sigma(delta: &Rgb) -> Result<f64> {
    let a = abs3(delta);
    let mean = (a[0] + a[1] + a[2]) / 3.0;
    if !(mean > 0.0) {
        return Err(Error::ZeroVector);
    }
    let var: f64 = a.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((var / (3.0 * mean)).sqrt())
}

/// First-order approximation of the angular grayness:
/// `sqrt(1 - (1/sqrt(3)) * |delta|_1 / |delta|_2)`.
pub fn grayness_theta_approx(delta: &Rgb) -> Result<f64> {
    let n2 = l2(delta);
    if !(n2 > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - INV_SQRT3 * l1(delta) / n2).max(0.0).sqrt())
}

/// The luminance-dependent factor linking the legacy and angular measures:
/// `gamma = sqrt(alpha * (alpha + sqrt(3) * beta) / (3 * beta))` with
/// `alpha = |delta|_2` and `beta = |delta|_1 / 3`. For strictly positive
/// components, `grayness_sigma = gamma * grayness_theta_approx`.
pub fn gamma_factor(delta: &Rgb) -> Result<f64> {
    if delta.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParam(format!(
            "gamma_factor requires strictly positive components, got {delta:?}"
        )));
    }
    let alpha = l2(delta);
    let beta = l1(delta) / 3.0;
    if !(beta > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok((alpha * (alpha + 3f64.sqrt() * beta) / (3.0 * beta)).sqrt())
}

/// Score every valid contrast pixel, floor out low-contrast pixels, apply
/// the local-averaging step, and (for the legacy measure only) divide by
/// pixel luminance to weaken dark pixels.
pub fn grayness_map(
    cmap: &ContrastMap,
    img: &LinearImage,
    cfg: &GraynessConfig,
) -> Result<GraynessMap> {
    if cfg.smooth_window % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "smooth_window must be odd, got {}",
            cfg.smooth_window
        )));
    }
    let n = cmap.delta.len();
    let mut g = vec![0.0f64; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if !cmap.valid[i] {
            continue;
        }
        let d = &cmap.delta[i];
        if l2(d) < cfg.contrast_floor {
            continue;
        }
        let score = match cfg.measure {
            Measure::Theta => grayness_theta(d).map(|s| {
                // Angles below the rounding noise of the log/LoG pipeline
                // are snapped to zero so exactly gray regions rank the same
                // under any global channel scaling.
                if s < THETA_NOISE_FLOOR {
                    0.0
                } else {
                    s
                }
            }),
            Measure::Sigma => grayness_sigma(d),
        };
        match score {
            Ok(s) => {
                g[i] = s;
                valid[i] = true;
            }
            Err(_) => continue,
        }
    }
    let mut out = smooth_over_valid(&g, &valid, cmap.width, cmap.height, cfg.smooth_window);
    if cfg.measure == Measure::Sigma {
        // Dark-pixel weakening: luminance as denominator.
        for (i, ok) in valid.iter().enumerate() {
            if *ok {
                let px = img.data()[i];
                let lum = (px[0] + px[1] + px[2]) / 3.0;
                if lum > 0.0 {
                    out[i] /= lum;
                } else {
                    out[i] = f64::INFINITY;
                }
            }
        }
        for (i, v) in out.iter().enumerate() {
            if !v.is_finite() {
                valid[i] = false;
            }
        }
    }
    Ok(GraynessMap {
        width: cmap.width,
        height: cmap.height,
        g: out,
        valid,
    })
}

/// Mean filter over valid pixels only: each valid pixel becomes the mean of
/// the valid pixels in its window. Invalid pixels stay invalid.
fn smooth_over_valid(g: &[f64], valid: &[bool], width: u32, height: u32, window: u32) -> Vec<f64> {
    if window <= 1 {
        return g.to_vec();
    }
    let half = (window / 2) as i64;
    let (w, h) = (width as i64, height as i64);
    let mut out = vec![0.0f64; g.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !valid[i] {
                continue;
            }
            let mut sum = 0.0;
            let mut count = 0usize;
            for dy in -half..=half {
                let yy = y + dy;
                if yy < 0 || yy >= h {
                    continue;
                }
                for dx in -half..=half {
                    let xx = x + dx;
                    if xx < 0 || xx >= w {
                        continue;
                    }
                    let j = (yy * w + xx) as usize;
                    if valid[j] {
                        sum += g[j];
                        count += 1;
                    }
                }
            }
            out[i] = sum / count as f64;
        }
    }
    out
}
