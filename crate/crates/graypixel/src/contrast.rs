//! Channel-wise local contrast of the log-transformed image.
//!
//! A zero-DC Laplacian-of-Gaussian kernel applied to `log(I)` cancels any
//! global per-channel illuminant scaling: the scaling becomes an additive
//! constant in the log domain and the kernel annihilates constants.

use crate::{Error, LinearImage, Result, Rgb};

/// A log-domain image: per-channel `ln` values, same mask semantics as
/// [`LinearImage`] but values are unbounded below.
#[derive(Debug, Clone)]
pub struct LogImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<Rgb>,
    pub valid: Vec<bool>,
}

/// Per-pixel 3-vector of log-domain local contrast.
#[derive(Debug, Clone)]
pub struct ContrastMap {
    pub width: u32,
    pub height: u32,
    pub delta: Vec<Rgb>,
    pub valid: Vec<bool>,
}

impl ContrastMap {
    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Discretized Laplacian-of-Gaussian kernel, mean-subtracted to exact zero
/// DC and symmetric under 90-degree rotation.
#[derive(Debug, Clone)]
pub struct LoGKernel {
    pub size: u32,
    pub sigma: f64,
    pub coefficients: Vec<f64>,
}

impl LoGKernel {
    #[inline]
    pub fn at(&self, i: u32, j: u32) -> f64 {
        self.coefficients[i as usize * self.size as usize + j as usize]
    }

    pub fn center(&self) -> f64 {
        self.at(self.size / 2, self.size / 2)
    }
}

/// Map each valid channel value `v` to `ln(max(v, epsilon))`.
pub fn log_transform(img: &LinearImage, epsilon: f64) -> Result<LogImage> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParam(format!("epsilon must be > 0, got {epsilon}")));
    }
    let data = img
        .data()
        .iter()
        .map(|px| [px[0].max(epsilon).ln(), px[1].max(epsilon).ln(), px[2].max(epsilon).ln()])
        .collect();
    Ok(LogImage {
        width: img.width(),
        height: img.height(),
        data,
        valid: img.valid().to_vec(),
    })
}

/// Sample the analytic LoG on a `size`x`size` grid and subtract the mean so
/// the coefficients sum to zero exactly (constant inputs map to 0).
pub fn make_log_kernel(size: u32, sigma: f64) -> Result<LoGKernel> {
    if size < 3 || size % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "kernel size must be odd and >= 3, got {size}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParam(format!("sigma must be > 0, got {sigma}")));
    }
    let half = (size / 2) as i64;
    let s2 = sigma * sigma;
    let mut coefficients = Vec::with_capacity((size * size) as usize);
    for i in -half..=half {
        for j in -half..=half {
            let r2 = (i * i + j * j) as f64;
            let e = (-r2 / (2.0 * s2)).exp();
            coefficients.push(-1.0 / (std::f64::consts::PI * s2 * s2) * (1.0 - r2 / (2.0 * s2)) * e);
        }
    }
    let mean = coefficients.iter().sum::<f64>() / coefficients.len() as f64;
    for c in &mut coefficients {
        *c -= mean;
    }
    Ok(LoGKernel {
        size,
        sigma,
        coefficients,
    })
}

/// Per-channel 2D convolution of the log image with the kernel.
///
/// Pixels whose filter footprint exits the image or touches an invalid
/// input pixel are marked invalid (no padding is fabricated at borders).
pub fn local_contrast(logimg: &LogImage, kernel: &LoGKernel) -> Result<ContrastMap> {
    let (w, h, k) = (logimg.width, logimg.height, kernel.size);
    if w < k || h < k {
        return Err(Error::InvalidParam(format!(
            "image {w}x{h} smaller than kernel {k}x{k}"
        )));
    }
    let half = (k / 2) as usize;
    let (wu, hu, ku) = (w as usize, h as usize, k as usize);
    let mut delta = vec![[0.0; 3]; wu * hu];
    let mut valid = vec![false; wu * hu];
    for y in half..hu - half {
        for x in half..wu - half {
            let mut ok = true;
            'foot: for ki in 0..ku {
                let row = (y + ki - half) * wu + x - half;
                for kj in 0..ku {
                    if !logimg.valid[row + kj] {
                        ok = false;
                        break 'foot;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut acc = [0.0f64; 3];
            for ki in 0..ku {
                let row = (y + ki - half) * wu + x - half;
                let krow = ki * ku;
                for kj in 0..ku {
                    let c = kernel.coefficients[krow + kj];
                    let px = &logimg.data[row + kj];
                    acc[0] += c * px[0];
                    acc[1] += c * px[1];
                    acc[2] += c * px[2];
                }
            }
            let i = y * wu + x;
            delta[i] = acc;
            valid[i] = true;
        }
    }
    Ok(ContrastMap {
        width: w,
        height: h,
        delta,
        valid,
    })
}
