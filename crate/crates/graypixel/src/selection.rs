//! Top-N% candidate gray pixel extraction.

use crate::grayness::GraynessMap;
use crate::{norm2, Error, LinearImage, Result, Rgb};

/// One candidate gray pixel: coordinates, original RGB, grayness score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrayPixel {
    pub x: u32,
    pub y: u32,
    pub rgb: Rgb,
    pub grayness: f64,
}

/// The selected candidate set, sorted ascending by grayness with raster
/// order (y, then x) breaking ties.
#[derive(Debug, Clone, Default)]
pub struct PixelSet {
    pub points: Vec<GrayPixel>,
}

impl PixelSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rgbs(&self) -> Vec<Rgb> {
        self.points.iter().map(|p| p.rgb).collect()
    }

    pub fn coords(&self) -> Vec<(u32, u32)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }
}

/// Size of the selection: `max(1, ceil(valid_count * n_percent / 100))`.
pub fn selection_size(valid_count: usize, n_percent: f64) -> usize {
    ((valid_count as f64 * n_percent / 100.0).ceil() as usize).max(1)
}

/// Extract the top-N% grayest valid pixels with their original RGB values.
///
/// N is a percentage of valid pixels, not total pixels, so masked regions
/// do not dilute the quota. An image with zero surviving candidates is the
/// no-gray-pixels failure mode and is surfaced as an error.
pub fn select_top_n(gmap: &GraynessMap, img: &LinearImage, n_percent: f64) -> Result<PixelSet> {
    if !(n_percent > 0.0 && n_percent <= 100.0) {
        return Err(Error::InvalidParam(format!(
            "n_percent must be in (0, 100], got {n_percent}"
        )));
    }
    if gmap.width != img.width() || gmap.height != img.height() {
        return Err(Error::InvalidParam("grayness map / image size mismatch".into()));
    }
    let mut candidates: Vec<GrayPixel> = Vec::new();
    for y in 0..gmap.height {
        for x in 0..gmap.width {
            let i = gmap.idx(x, y);
            if !gmap.valid[i] {
                continue;
            }
            let rgb = img.data()[i];
            if !(norm2(&rgb) > 0.0) {
                // A black pixel carries no illuminant direction.
                continue;
            }
            candidates.push(GrayPixel {
                x,
                y,
                rgb,
                grayness: gmap.g[i],
            });
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoGrayPixels);
    }
    let take = selection_size(candidates.len(), n_percent).min(candidates.len());
    let cmp = |a: &GrayPixel, b: &GrayPixel| {
        a.grayness
            .total_cmp(&b.grayness)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    };
    // Partial ordering keeps the common 0.1% selection cheap on megapixel
    // images; only the kept prefix gets fully sorted.
    if take < candidates.len() {
        candidates.select_nth_unstable_by(take - 1, cmp);
        candidates.truncate(take);
    }
    candidates.sort_unstable_by(cmp);
    Ok(PixelSet { points: candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grayness::GraynessMap;
    use proptest::prelude::*;

    fn map_and_image(w: u32, h: u32, g: Vec<f64>, valid: Vec<bool>) -> (GraynessMap, LinearImage) {
        let n = (w * h) as usize;
        let gmap = GraynessMap {
            width: w,
            height: h,
            g,
            valid,
        };
        let img =
            LinearImage::from_parts(w, h, vec![[0.5, 0.4, 0.3]; n], vec![true; n]).unwrap();
        (gmap, img)
    }

    #[test]
    fn full_percentage_selects_all_sorted() {
        let g = vec![0.5, 0.1, 0.3, 0.2];
        let (gmap, img) = map_and_image(2, 2, g, vec![true; 4]);
        let s = select_top_n(&gmap, &img, 100.0).unwrap();
        assert_eq!(s.len(), 4);
        let gs: Vec<f64> = s.points.iter().map(|p| p.grayness).collect();
        assert_eq!(gs, vec![0.1, 0.2, 0.3, 0.5]);
    }

    #[test]
    fn quota_is_ceil_of_valid_fraction() {
        assert_eq!(selection_size(2000, 0.1), 2);
        assert_eq!(selection_size(1, 0.1), 1);
        assert_eq!(selection_size(999, 100.0), 999);
    }

    #[test]
    fn ties_break_in_raster_order() {
        let g = vec![0.2, 0.2, 0.2, 0.2];
        let (gmap, img) = map_and_image(2, 2, g, vec![true; 4]);
        let s = select_top_n(&gmap, &img, 50.0).unwrap();
        assert_eq!(s.coords(), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn exact_gray_block_selected() {
        // 50 zero-grayness pixels among 200, quota sized to take them all.
        let mut g = vec![0.5; 200];
        for v in g.iter_mut().take(50) {
            *v = 0.0;
        }
        let (gmap, img) = map_and_image(20, 10, g, vec![true; 200]);
        let s = select_top_n(&gmap, &img, 25.0).unwrap();
        assert_eq!(s.len(), 50);
        assert!(s.points.iter().all(|p| p.grayness == 0.0));
    }

    #[test]
    fn invalid_pixels_never_selected() {
        let g = vec![0.0, 0.1, 0.2, 0.3];
        let mut valid = vec![true; 4];
        valid[0] = false; // the grayest one is masked
        let (gmap, img) = map_and_image(2, 2, g, valid);
        let s = select_top_n(&gmap, &img, 100.0).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.points[0].grayness, 0.1);
    }

    #[test]
    fn no_valid_pixels_is_surfaced() {
        let (gmap, img) = map_and_image(2, 2, vec![0.0; 4], vec![false; 4]);
        assert!(matches!(
            select_top_n(&gmap, &img, 1.0),
            Err(Error::NoGrayPixels)
        ));
    }

    #[test]
    fn bad_percent_rejected() {
        let (gmap, img) = map_and_image(2, 2, vec![0.0; 4], vec![true; 4]);
        assert!(select_top_n(&gmap, &img, 0.0).is_err());
        assert!(select_top_n(&gmap, &img, 101.0).is_err());
    }

    #[test]
    fn selection_boundary_dominates_outside() {
        let g: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let (gmap, img) = map_and_image(10, 10, g, vec![true; 100]);
        let s = select_top_n(&gmap, &img, 10.0).unwrap();
        let max_in = s.points.last().unwrap().grayness;
        let selected: std::collections::HashSet<(u32, u32)> = s.coords().into_iter().collect();
        for y in 0..10 {
            for x in 0..10 {
                if !selected.contains(&(x, y)) {
                    assert!(gmap.g[gmap.idx(x, y)] >= max_in);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn quota_formula_holds(valid_count in 1usize..10_000_000, n in 0.01f64..100.0) {
            let k = selection_size(valid_count, n);
            let exact = valid_count as f64 * n / 100.0;
            prop_assert!(k >= 1);
            prop_assert!(k as f64 >= exact - 1e-9);
            prop_assert!((k as f64) < exact + 1.0 + 1e-9 || k == 1);
        }
    }
}
