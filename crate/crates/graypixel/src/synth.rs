//! Deterministic synthetic scenes with exact illuminant ground truth.
//!
//! A scene is a patch grid: gray patches carry the same multiplicative
//! texture in all three channels (so they stay exactly gray per pixel while
//! still producing log contrast), color patches carry independent
//! per-channel texture (so their contrast vector is chromatic). The biased
//! image is the exact channel-wise product of the canonical image and the
//! illuminant, then globally rescaled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{normalize, Error, LinearImage, Result, Rgb};

#[derive(Debug, Clone, Copy)]
pub struct SceneSpec {
    pub seed: u64,
    /// Patch grid: (rows, cols).
    pub grid: (u32, u32),
    /// Square patch side length in pixels.
    pub patch_px: u32,
    /// Fraction of patches that are gray, in [0, 1].
    pub gray_fraction: f64,
    /// Base patch luminance range, within (0, 1).
    pub luminance_range: (f64, f64),
    /// Amplitude of the smooth multiplicative shading field.
    pub shading_amplitude: f64,
    /// Scene illuminant; normalized to unit length on generation.
    pub illuminant: Rgb,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: (4, 6),
            patch_px: 24,
            gray_fraction: 0.5,
            luminance_range: (0.15, 0.75),
            shading_amplitude: 0.1,
            illuminant: [1.0, 1.0, 1.0],
        }
    }
}

/// A generated (canonical, biased, illuminant) triple. The biased image is
/// exactly `canonical * illuminant` channel-wise up to one global scale.
#[derive(Debug, Clone)]
pub struct Scene {
    pub canonical: LinearImage,
    pub biased: LinearImage,
    pub illuminant: Rgb,
}

const TEXTURE: f64 = 0.05;

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    let (rows, cols) = spec.grid;
    if rows == 0 || cols == 0 || spec.patch_px == 0 {
        return Err(Error::InvalidParam("grid and patch size must be nonzero".into()));
    }
    if !(0.0..=1.0).contains(&spec.gray_fraction) {
        return Err(Error::InvalidParam("gray_fraction must be in [0, 1]".into()));
    }
    let (lo, hi) = spec.luminance_range;
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::InvalidParam("luminance_range must satisfy 0 < lo < hi < 1".into()));
    }
    if !(crate::norm2(&spec.illuminant) > 0.0) {
        return Err(Error::ZeroVector);
    }
    let l = normalize(&spec.illuminant);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let total = (rows * cols) as usize;
    let gray_count = (spec.gray_fraction * total as f64).round() as usize;
    let mut kinds: Vec<bool> = (0..total).map(|i| i < gray_count).collect();
    kinds.shuffle(&mut rng);

    // Per-patch base colors. Color patches get a strongly chromatic base:
    // a dominant channel plus a small pedestal so logs stay well-defined.
    let mut bases: Vec<Rgb> = Vec::with_capacity(total);
    for &is_gray in &kinds {
        let lum = rng.gen_range(lo..hi);
        if is_gray {
            bases.push([lum, lum, lum]);
        } else {
            let dominant = rng.gen_range(0..3usize);
            let mut px = [0.08 * lum; 3];
            px[dominant] = lum;
            bases.push(px);
        }
    }

    let width = cols * spec.patch_px;
    let height = rows * spec.patch_px;
    let (wf, hf) = (width as f64, height as f64);
    let mut canonical = Vec::with_capacity((width * height) as usize);
    // Texture factors are drawn in row-major pixel order for determinism.
    for y in 0..height {
        for x in 0..width {
            let patch =
                ((y / spec.patch_px) * cols + (x / spec.patch_px)) as usize;
            let base = bases[patch];
            let is_gray = kinds[patch];
            let shade = 1.0
                + spec.shading_amplitude
                    * (std::f64::consts::TAU * x as f64 / wf).sin()
                    * (std::f64::consts::TAU * y as f64 / hf).sin();
            let px = if is_gray {
                let t = 1.0 + rng.gen_range(-TEXTURE..TEXTURE);
                let v = base[0] * t * shade;
                [v, v, v]
            } else {
                let mut px = [0.0; 3];
                for (c, out) in px.iter_mut().enumerate() {
                    let t = 1.0 + rng.gen_range(-TEXTURE..TEXTURE);
                    *out = base[c] * t * shade;
                }
                px
            };
            canonical.push([
                px[0].clamp(0.0, 1.0),
                px[1].clamp(0.0, 1.0),
                px[2].clamp(0.0, 1.0),
            ]);
        }
    }

    let mut biased: Vec<Rgb> = canonical
        .iter()
        .map(|p| [p[0] * l[0], p[1] * l[1], p[2] * l[2]])
        .collect();
    // Global rescale to a 0.9 peak keeps re-decoded copies clear of
    // saturation flagging.
    let peak = biased
        .iter()
        .flat_map(|p| p.iter().cloned())
        .fold(0.0f64, f64::max);
    if peak > 0.0 {
        let s = 0.9 / peak;
        for p in &mut biased {
            for c in p {
                *c = (*c * s).clamp(0.0, 1.0);
            }
        }
    }

    let n = (width * height) as usize;
    Ok(Scene {
        canonical: LinearImage::from_parts(width, height, canonical, vec![true; n])?,
        biased: LinearImage::from_parts(width, height, biased, vec![true; n])?,
        illuminant: l,
    })
}

/// Rejection-sample a unit illuminant within `max_deg` degrees of neutral.
pub fn sample_illuminant_near_neutral(rng: &mut ChaCha8Rng, max_deg: f64) -> Rgb {
    let neutral = [1.0, 1.0, 1.0];
    loop {
        let l = [
            rng.gen_range(0.3..1.0),
            rng.gen_range(0.3..1.0),
            rng.gen_range(0.3..1.0),
        ];
        if crate::angle_between(&l, &neutral).to_degrees() <= max_deg {
            return normalize(&l);
        }
    }
}
