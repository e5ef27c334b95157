//! Linear image decoding, black-level/saturation handling, evaluation masks
//! and dataset manifests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{normalize, norm2, Error, Result, Rgb};

/// A linear RGB image with a per-pixel validity mask.
///
/// Channel values are on a linear radiometric scale normalized to `[0,1]`.
/// Pixels with `valid == false` are excluded from every downstream map,
/// selection and estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: u32,
    height: u32,
    data: Vec<Rgb>,
    valid: Vec<bool>,
}

impl LinearImage {
    pub fn from_parts(width: u32, height: u32, data: Vec<Rgb>, valid: Vec<bool>) -> Result<Self> {
        let n = width as usize * height as usize;
        if n == 0 {
            return Err(Error::InvalidParam("image has zero pixels".into()));
        }
        if data.len() != n || valid.len() != n {
            return Err(Error::InvalidParam(format!(
                "buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        for (px, &ok) in data.iter().zip(&valid) {
            if ok && px.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::InvalidParam(format!(
                    "valid pixel outside [0,1]: {px:?}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.valid[self.idx(x, y)]
    }

    pub fn data(&self) -> &[Rgb] {
        &self.data
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Rebuild with the same mask but new channel data.
    pub(crate) fn with_data(&self, data: Vec<Rgb>) -> Result<Self> {
        Self::from_parts(self.width, self.height, data, self.valid.clone())
    }
}

/// A pixel rectangle used to mask out regions (e.g. a color checker).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Mark all pixels inside the given rectangles invalid.
///
/// Never converts an invalid pixel back to valid.
pub fn apply_mask(img: &LinearImage, rects: &[Rect]) -> Result<LinearImage> {
    let mut valid = img.valid.clone();
    for r in rects {
        if r.x + r.w > img.width || r.y + r.h > img.height {
            return Err(Error::OutOfBounds {
                x: r.x,
                y: r.y,
                w: r.w,
                h: r.h,
                width: img.width,
                height: img.height,
            });
        }
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                valid[y as usize * img.width as usize + x as usize] = false;
            }
        }
    }
    Ok(LinearImage {
        width: img.width,
        height: img.height,
        data: img.data.clone(),
        valid,
    })
}

/// Black-level / saturation handling for raw-unit integer containers.
///
/// Levels are expressed in the source integer scale. `None` defaults to
/// `black_level = 0` and `saturation_level = 2^bitdepth - 1`. A pixel is
/// invalid when any black-subtracted channel reaches
/// `saturation_margin * (saturation_level - black_level)`.
#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions {
    pub black_level: Option<[f64; 3]>,
    pub saturation_level: Option<f64>,
    pub saturation_margin: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            black_level: None,
            saturation_level: None,
            saturation_margin: 0.98,
        }
    }
}

/// Decode an 8/16-bit PNG or TIFF, or a 32-bit float PFM, into a
/// black-level-corrected [`LinearImage`].
pub fn load_linear_image(path: &Path, opts: &DecodeOptions) -> Result<LinearImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pfm" => load_pfm(path, opts),
        "png" | "tif" | "tiff" => load_integer_image(path, opts),
        other => Err(Error::UnsupportedFormat(format!(
            "extension '{other}' (expected png, tif, tiff or pfm)"
        ))),
    }
}

fn load_integer_image(path: &Path, opts: &DecodeOptions) -> Result<LinearImage> {
    let (w, h);
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    w = img.width();
    h = img.height();
    use image::DynamicImage::*;
    let (raw, max_code): (Vec<[f64; 3]>, f64) = match img {
        ImageRgb8(buf) => (
            buf.pixels()
                .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
                .collect(),
            255.0,
        ),
        ImageRgba8(buf) => (
            buf.pixels()
                .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
                .collect(),
            255.0,
        ),
        ImageRgb16(buf) => (
            buf.pixels()
                .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
                .collect(),
            65535.0,
        ),
        ImageRgba16(buf) => (
            buf.pixels()
                .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
                .collect(),
            65535.0,
        ),
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!(
                    "unsupported pixel layout {:?}: need 3-channel 8/16-bit",
                    other.color()
                ),
            })
        }
    };
    normalize_raw(path, w, h, raw, max_code, opts)
}

fn normalize_raw(
    path: &Path,
    width: u32,
    height: u32,
    raw: Vec<[f64; 3]>,
    max_code: f64,
    opts: &DecodeOptions,
) -> Result<LinearImage> {
    let black = opts.black_level.unwrap_or([0.0; 3]);
    let sat = opts.saturation_level.unwrap_or(max_code);
    let max_black = black.iter().cloned().fold(f64::MIN, f64::max);
    if sat <= max_black {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("saturation_level {sat} <= black_level {max_black}"),
        });
    }
    let mut data = Vec::with_capacity(raw.len());
    let mut valid = Vec::with_capacity(raw.len());
    for px in raw {
        let mut out = [0.0; 3];
        let mut ok = true;
        for c in 0..3 {
            let span = sat - black[c];
            let v = (px[c] - black[c]).max(0.0);
            if v >= opts.saturation_margin * span {
                ok = false;
            }
            out[c] = (v / span).clamp(0.0, 1.0);
        }
        data.push(out);
        valid.push(ok);
    }
    LinearImage::from_parts(width, height, data, valid)
}

/// Decode a portable float map (PFM, color `PF` variant).
///
/// PFM stores float data bottom-to-top; a negative scale field means
/// little-endian. Values are treated as already linear; `opts` levels are
/// interpreted in the float scale (defaults 0 and 1).
fn load_pfm(path: &Path, opts: &DecodeOptions) -> Result<LinearImage> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rdr = BufReader::new(File::open(path).map_err(io_err)?);
    let mut header = String::new();
    // Three whitespace-separated header tokens: magic, "w h", scale.
    let token = |rdr: &mut BufReader<File>| -> Result<String> {
        let mut s = String::new();
        loop {
            let mut b = [0u8; 1];
            rdr.read_exact(&mut b).map_err(io_err)?;
            let ch = b[0] as char;
            if ch.is_whitespace() {
                if !s.is_empty() {
                    return Ok(s);
                }
            } else {
                s.push(ch);
            }
        }
    };
    let magic = token(&mut rdr)?;
    if magic != "PF" {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("PFM magic '{magic}' (only color 'PF' supported)"),
        });
    }
    let parse = |s: String, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Decode {
            path: path.to_path_buf(),
            reason: format!("bad PFM {what}: '{s}'"),
        })
    };
    let width = parse(token(&mut rdr)?, "width")? as u32;
    let height = parse(token(&mut rdr)?, "height")? as u32;
    let scale = parse(token(&mut rdr)?, "scale")?;
    header.clear();
    let little_endian = scale < 0.0;
    let n = width as usize * height as usize;
    let mut bytes = vec![0u8; n * 3 * 4];
    rdr.read_exact(&mut bytes).map_err(io_err)?;
    let mut rows: Vec<Vec<Rgb>> = Vec::with_capacity(height as usize);
    let mut off = 0;
    for _ in 0..height {
        let mut row = Vec::with_capacity(width as usize);
        for _ in 0..width {
            let mut px = [0.0f64; 3];
            for c in &mut px {
                let b: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
                let f = if little_endian {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                *c = f as f64;
                off += 4;
            }
            row.push(px);
        }
        rows.push(row);
    }
    // PFM rows run bottom-to-top.
    rows.reverse();
    let raw: Vec<Rgb> = rows.into_iter().flatten().collect();
    let black = opts.black_level.unwrap_or([0.0; 3]);
    let sat = opts.saturation_level.unwrap_or(1.0);
    let mut opts = *opts;
    opts.black_level = Some(black);
    opts.saturation_level = Some(sat);
    normalize_raw(path, width, height, raw, 1.0, &opts)
}

/// Write a [`LinearImage`] as a little-endian color PFM (validity ignored;
/// invalid pixels are written as stored).
pub fn save_pfm(img: &LinearImage, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write!(w, "PF\n{} {}\n-1.0\n", img.width, img.height).map_err(io_err)?;
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in img.pixel(x, y) {
                w.write_all(&(c as f32).to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Write a [`LinearImage`] as a 16-bit PNG.
pub fn save_png16(img: &LinearImage, path: &Path) -> Result<()> {
    let mut buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(img.width, img.height);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let v = img.pixel(x, y);
        *px = image::Rgb([
            (v[0].clamp(0.0, 1.0) * 65535.0).round() as u16,
            (v[1].clamp(0.0, 1.0) * 65535.0).round() as u16,
            (v[2].clamp(0.0, 1.0) * 65535.0).round() as u16,
        ]);
    }
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// One dataset image paired with its ground-truth illuminant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    /// Unit-normalized on load; only the direction matters.
    pub ground_truth: Rgb,
    #[serde(default)]
    pub mask_rects: Vec<Rect>,
    #[serde(default)]
    pub black_level: Option<f64>,
    #[serde(default)]
    pub saturation_level: Option<f64>,
}

impl ManifestEntry {
    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            black_level: self.black_level.map(|b| [b; 3]),
            saturation_level: self.saturation_level,
            ..DecodeOptions::default()
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

/// Load a dataset manifest from CSV or JSON (chosen by extension).
///
/// CSV columns: `image_path, gt_r, gt_g, gt_b, mask, black_level,
/// saturation_level`; `mask` is `"x,y,w,h;..."`. The JSON form mirrors the
/// field names of [`ManifestEntry`].
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let mut manifest = match ext.as_str() {
        "json" => {
            let f = File::open(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                line: e.line(),
                reason: e.to_string(),
            })?
        }
        "csv" => load_manifest_csv(path)?,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "manifest extension '{other}' (expected csv or json)"
            )))
        }
    };
    for (i, e) in manifest.entries.iter_mut().enumerate() {
        let n = norm2(&e.ground_truth);
        if !(n > 0.0) || e.ground_truth.iter().any(|v| !v.is_finite()) {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("ground_truth {:?} has no positive norm", e.ground_truth),
            });
        }
        e.ground_truth = normalize(&e.ground_truth);
    }
    Ok(manifest)
}

fn load_manifest_csv(path: &Path) -> Result<DatasetManifest> {
    let err = |line: usize, reason: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["image_path", "gt_r", "gt_g", "gt_b"];
    for name in required {
        if col(name).is_none() {
            return Err(err(1, format!("missing required column '{name}'")));
        }
    }
    let mut entries = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| err(line, e.to_string()))?;
        let field = |name: &str| col(name).and_then(|j| record.get(j)).unwrap_or("");
        let num = |name: &str| -> Result<f64> {
            field(name)
                .parse()
                .map_err(|_| err(line, format!("bad {name}: '{}'", field(name))))
        };
        let opt_num = |name: &str| -> Result<Option<f64>> {
            match col(name).and_then(|j| record.get(j)) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse()
                    .map(Some)
                    .map_err(|_| err(line, format!("bad {name}: '{s}'"))),
            }
        };
        let mask_rects = match col("mask").and_then(|j| record.get(j)) {
            None | Some("") => Vec::new(),
            Some(s) => parse_mask_rects(s).map_err(|reason| err(line, reason))?,
        };
        entries.push(ManifestEntry {
            image_path: PathBuf::from(field("image_path")),
            ground_truth: [num("gt_r")?, num("gt_g")?, num("gt_b")?],
            mask_rects,
            black_level: opt_num("black_level")?,
            saturation_level: opt_num("saturation_level")?,
        });
    }
    Ok(DatasetManifest { entries })
}

fn parse_mask_rects(s: &str) -> std::result::Result<Vec<Rect>, String> {
    let mut rects = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let nums: Vec<u32> = part
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format!("bad mask rect '{part}' (expected x,y,w,h)"))?;
        if nums.len() != 4 {
            return Err(format!("bad mask rect '{part}' (expected 4 fields)"));
        }
        rects.push(Rect {
            x: nums[0],
            y: nums[1],
            w: nums[2],
            h: nums[3],
        });
    }
    Ok(rects)
}

/// Read a line-oriented text file (test helper for manifest fixtures).
#[allow(dead_code)]
pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}
