//! Flat-kernel mean-shift mode seeking in RGB space under a hybrid
//! Euclidean-times-angular distance, plus a seeded k-means alternative.
//!
//! The hybrid distance is zero for collinear colors regardless of
//! luminance, which groups the dark-to-bright elongated cluster of true
//! gray pixels into a single mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::selection::PixelSet;
use crate::{angle_between, norm2, Error, Result, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    /// Euclidean distance times the angle (radians) between the colors.
    Hybrid,
    /// Angle only; the bandwidth is then in radians.
    AngleOnly,
}

/// `|a - b|_2 * angle(a, b)`, angle in radians.
pub fn hybrid_distance(a: &Rgb, b: &Rgb) -> Result<f64> {
    if !(norm2(a) > 0.0) || !(norm2(b) > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(point_distance(DistanceKind::Hybrid, a, b))
}

#[inline]
fn point_distance(kind: DistanceKind, a: &Rgb, b: &Rgb) -> f64 {
    let ang = angle_between(a, b);
    match kind {
        DistanceKind::Hybrid => {
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            norm2(&d) * ang
        }
        DistanceKind::AngleOnly => ang,
    }
}

/// One density mode: its centroid, the member count and the flat-kernel
/// density at the centroid evaluated against the original points.
#[derive(Debug, Clone)]
pub struct Mode {
    pub centroid: Rgb,
    pub members: usize,
    /// Count of original points within bandwidth of the centroid.
    pub within_h: usize,
    /// `within_h / n`, the kernel density estimate at the centroid.
    pub density: f64,
}

#[derive(Debug, Clone)]
pub struct ModeResult {
    /// Sorted descending by density; ties by member count, then by
    /// ascending centroid so the order is independent of input permutation.
    pub modes: Vec<Mode>,
    /// Per input point, index into `modes`.
    pub assignments: Vec<usize>,
}

impl ModeResult {
    pub fn densest(&self) -> &Mode {
        &self.modes[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeanShiftParams {
    pub bandwidth: f64,
    pub distance: DistanceKind,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            bandwidth: 1e-3,
            distance: DistanceKind::Hybrid,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// Flat-kernel mean shift over the RGB values of a pixel set.
pub fn mean_shift(points: &PixelSet, params: &MeanShiftParams) -> Result<ModeResult> {
    mean_shift_rgb(&points.rgbs(), params)
}

/// Mean shift over raw RGB points.
///
/// Each point is iterated by replacing it with the arithmetic mean of all
/// original points within bandwidth of its current position until the shift
/// length drops below `tol`. Converged positions within bandwidth of each
/// other merge into one mode; densities are evaluated at the merged
/// centroids against the original points.
pub fn mean_shift_rgb(points: &[Rgb], params: &MeanShiftParams) -> Result<ModeResult> {
    if points.is_empty() {
        return Err(Error::EmptyInput("mean_shift needs at least one point".into()));
    }
    if !(params.bandwidth > 0.0) {
        return Err(Error::InvalidParam(format!(
            "bandwidth must be > 0, got {}",
            params.bandwidth
        )));
    }
    for p in points {
        if !(norm2(p) > 0.0) {
            return Err(Error::ZeroVector);
        }
    }
    let h = params.bandwidth;
    let n = points.len();
    let mut converged: Vec<Rgb> = Vec::with_capacity(n);
    for p in points {
        let mut pos = *p;
        for _ in 0..params.max_iter {
            let mut sum = [0.0f64; 3];
            let mut count = 0usize;
            for q in points {
                if point_distance(params.distance, &pos, q) <= h {
                    sum[0] += q[0];
                    sum[1] += q[1];
                    sum[2] += q[2];
                    count += 1;
                }
            }
            if count == 0 {
                break;
            }
            let mean = [
                sum[0] / count as f64,
                sum[1] / count as f64,
                sum[2] / count as f64,
            ];
            let shift = [mean[0] - pos[0], mean[1] - pos[1], mean[2] - pos[2]];
            pos = mean;
            if norm2(&shift) < params.tol {
                break;
            }
        }
        converged.push(pos);
    }

    // Merge converged positions within bandwidth of each other. Union-find
    // keeps the cluster structure independent of input order.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in i + 1..n {
            if point_distance(params.distance, &converged[i], &converged[j]) <= h {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }

    let mut roots: Vec<usize> = Vec::new();
    let mut cluster_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        let c = match roots.iter().position(|&x| x == r) {
            Some(c) => c,
            None => {
                roots.push(r);
                roots.len() - 1
            }
        };
        cluster_of[i] = c;
    }

    let k = roots.len();
    let mut sums = vec![[0.0f64; 3]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in cluster_of.iter().enumerate() {
        for ch in 0..3 {
            sums[c][ch] += converged[i][ch];
        }
        counts[c] += 1;
    }
    let mut modes: Vec<(Mode, usize)> = Vec::with_capacity(k);
    for c in 0..k {
        let centroid = [
            sums[c][0] / counts[c] as f64,
            sums[c][1] / counts[c] as f64,
            sums[c][2] / counts[c] as f64,
        ];
        let within_h = points
            .iter()
            .filter(|q| point_distance(params.distance, &centroid, q) <= h)
            .count();
        modes.push((
            Mode {
                centroid,
                members: counts[c],
                within_h,
                density: within_h as f64 / n as f64,
            },
            c,
        ));
    }
    modes.sort_by(|(a, _), (b, _)| {
        b.density
            .total_cmp(&a.density)
            .then(b.members.cmp(&a.members))
            .then_with(|| {
                a.centroid
                    .iter()
                    .zip(&b.centroid)
                    .map(|(x, y)| x.total_cmp(y))
                    .fold(std::cmp::Ordering::Equal, |acc, o| acc.then(o))
            })
    });
    let mut remap = vec![0usize; k];
    for (new_idx, (_, old)) in modes.iter().enumerate() {
        remap[*old] = new_idx;
    }
    let assignments = cluster_of.iter().map(|&c| remap[c]).collect();
    Ok(ModeResult {
        modes: modes.into_iter().map(|(m, _)| m).collect(),
        assignments,
    })
}

/// Centroid of the highest-density mode, unit-normalized.
///
/// Ties on density break toward the larger member count, then the smaller
/// mode index; the mode ordering already encodes that.
pub fn pick_illuminant(result: &ModeResult) -> Rgb {
    crate::normalize(&result.densest().centroid)
}

/// Seeded Lloyd k-means in RGB space (k-means++ initialization), best of
/// `restarts` runs by within-cluster sum of squares. Mode density is the
/// member count over n.
pub fn kmeans(points: &PixelSet, k: usize, seed: u64, restarts: usize) -> Result<ModeResult> {
    kmeans_rgb(&points.rgbs(), k, seed, restarts)
}

pub fn kmeans_rgb(points: &[Rgb], k: usize, seed: u64, restarts: usize) -> Result<ModeResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParam(format!(
            "k must be in [1, {n}], got {k}"
        )));
    }
    let restarts = restarts.max(1);
    let mut best: Option<(f64, Vec<Rgb>, Vec<usize>)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let centroids = kmeanspp_init(points, k, &mut rng);
        let (wss, centroids, assign) = lloyd(points, centroids);
        if best.as_ref().map_or(true, |(b, _, _)| wss < *b) {
            best = Some((wss, centroids, assign));
        }
    }
    let (_, centroids, assign) = best.unwrap();
    let mut counts = vec![0usize; k];
    for &a in &assign {
        counts[a] += 1;
    }
    let mut modes: Vec<(Mode, usize)> = centroids
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(c, (centroid, &members))| {
            (
                Mode {
                    centroid: *centroid,
                    members,
                    within_h: members,
                    density: members as f64 / n as f64,
                },
                c,
            )
        })
        .collect();
    modes.sort_by(|(a, _), (b, _)| {
        b.density
            .total_cmp(&a.density)
            .then(b.members.cmp(&a.members))
            .then_with(|| {
                a.centroid
                    .iter()
                    .zip(&b.centroid)
                    .map(|(x, y)| x.total_cmp(y))
                    .fold(std::cmp::Ordering::Equal, |acc, o| acc.then(o))
            })
    });
    let mut remap = vec![0usize; k];
    for (new_idx, (_, old)) in modes.iter().enumerate() {
        remap[*old] = new_idx;
    }
    let assignments = assign.iter().map(|&c| remap[c]).collect();
    Ok(ModeResult {
        modes: modes.into_iter().map(|(m, _)| m).collect(),
        assignments,
    })
}

fn sq_dist(a: &Rgb, b: &Rgb) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

fn kmeanspp_init(points: &[Rgb], k: usize, rng: &mut ChaCha8Rng) -> Vec<Rgb> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            points[pick]
        } else {
            points[rng.gen_range(0..n)]
        };
        centroids.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &next));
        }
    }
    centroids
}

fn lloyd(points: &[Rgb], mut centroids: Vec<Rgb>) -> (f64, Vec<Rgb>, Vec<usize>) {
    let k = centroids.len();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut bd = f64::INFINITY;
            for (c, ctr) in centroids.iter().enumerate() {
                let d = sq_dist(p, ctr);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assign[i];
            for ch in 0..3 {
                sums[c][ch] += p[ch];
            }
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [
                    sums[c][0] / counts[c] as f64,
                    sums[c][1] / counts[c] as f64,
                    sums[c][2] / counts[c] as f64,
                ];
            }
        }
        if !changed {
            break;
        }
    }
    let wss: f64 = points
        .iter()
        .zip(&assign)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    (wss, centroids, assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize;

    fn pset(rgbs: &[Rgb]) -> PixelSet {
        PixelSet {
            points: rgbs
                .iter()
                .enumerate()
                .map(|(i, &rgb)| crate::selection::GrayPixel {
                    x: i as u32,
                    y: 0,
                    rgb,
                    grayness: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn hybrid_zero_for_identical() {
        assert_eq!(hybrid_distance(&[0.3, 0.2, 0.1], &[0.3, 0.2, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn hybrid_zero_for_parallel() {
        let a = [0.2, 0.3, 0.1];
        let b = [0.4, 0.6, 0.2];
        assert!(hybrid_distance(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn hybrid_worked_value() {
        let d = hybrid_distance(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((d - 2.221441469).abs() < 1e-8);
    }

    #[test]
    fn hybrid_rejects_zero_norm() {
        assert!(hybrid_distance(&[0.0; 3], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn single_point_single_mode() {
        let r = mean_shift(&pset(&[[0.5, 0.5, 0.5]]), &MeanShiftParams::default()).unwrap();
        assert_eq!(r.modes.len(), 1);
        assert_eq!(r.modes[0].members, 1);
        assert_eq!(r.modes[0].density, 1.0);
        assert_eq!(r.assignments, vec![0]);
    }

    #[test]
    fn identical_points_single_mode() {
        let r = mean_shift(
            &pset(&[[0.4, 0.4, 0.4]; 10]),
            &MeanShiftParams::default(),
        )
        .unwrap();
        assert_eq!(r.modes.len(), 1);
        assert_eq!(r.modes[0].density, 1.0);
        assert_eq!(r.modes[0].members, 10);
    }

    #[test]
    fn two_clusters_densest_wins() {
        // 100 near (0.5,0.5,0.5), 10 near (0.8,0.2,0.2), tiny jitter.
        let mut pts = Vec::new();
        for i in 0..100 {
            let j = (i as f64 - 50.0) * 2e-6;
            pts.push([0.5 + j, 0.5 - j, 0.5 + 0.5 * j]);
        }
        for i in 0..10 {
            let j = (i as f64 - 5.0) * 2e-5;
            pts.push([0.8 + j, 0.2 - j, 0.2 + j]);
        }
        let r = mean_shift(&pset(&pts), &MeanShiftParams::default()).unwrap();
        assert_eq!(r.modes.len(), 2);
        let m = &r.modes[0];
        assert!(m.members >= 100);
        for c in 0..3 {
            assert!((m.centroid[c] - 0.5).abs() < 1e-3);
        }
        let l = pick_illuminant(&r);
        let neutral = normalize(&[1.0, 1.0, 1.0]);
        let err_deg = crate::angle_between(&l, &neutral).to_degrees();
        assert!(err_deg < 0.1, "angular error {err_deg}");
    }

    #[test]
    fn all_points_within_bandwidth_merge_to_one_mode() {
        // Pairwise distances below h: gracefully one cluster.
        let pts = [
            [0.50, 0.50, 0.50],
            [0.5001, 0.5000, 0.5001],
            [0.5000, 0.5001, 0.4999],
        ];
        let r = mean_shift(&pset(&pts), &MeanShiftParams::default()).unwrap();
        assert_eq!(r.modes.len(), 1);
    }

    #[test]
    fn order_independent_modes() {
        let mut pts = vec![
            [0.5, 0.5, 0.5],
            [0.5001, 0.5001, 0.5001],
            [0.8, 0.2, 0.2],
            [0.8001, 0.2001, 0.2001],
            [0.2, 0.2, 0.8],
        ];
        let a = mean_shift(&pset(&pts), &MeanShiftParams::default()).unwrap();
        pts.reverse();
        pts.swap(0, 2);
        let b = mean_shift(&pset(&pts), &MeanShiftParams::default()).unwrap();
        assert_eq!(a.modes.len(), b.modes.len());
        for (ma, mb) in a.modes.iter().zip(&b.modes) {
            assert_eq!(ma.members, mb.members);
            assert_eq!(ma.within_h, mb.within_h);
            for c in 0..3 {
                assert!((ma.centroid[c] - mb.centroid[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_stays_in_bounding_box() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Rgb> = (0..80)
            .map(|_| {
                [
                    rng.gen_range(0.2..0.9),
                    rng.gen_range(0.2..0.9),
                    rng.gen_range(0.2..0.9),
                ]
            })
            .collect();
        let r = mean_shift(
            &pset(&pts),
            &MeanShiftParams {
                bandwidth: 0.3,
                ..Default::default()
            },
        )
        .unwrap();
        for m in &r.modes {
            for c in 0..3 {
                assert!(m.centroid[c] >= 0.2 - 1e-12 && m.centroid[c] <= 0.9 + 1e-12);
            }
        }
        let total: usize = r.modes.iter().map(|m| m.members).sum();
        assert_eq!(total, pts.len());
    }

    #[test]
    fn nonpositive_bandwidth_rejected() {
        let p = pset(&[[0.5; 3]]);
        let params = MeanShiftParams {
            bandwidth: 0.0,
            ..Default::default()
        };
        assert!(mean_shift(&p, &params).is_err());
    }

    #[test]
    fn angle_only_groups_by_chromaticity() {
        // Same chromaticity at very different luminance: hybrid and angular
        // both merge them, but the angular bandwidth is scale-free.
        let pts = [[0.1, 0.1, 0.1], [0.9, 0.9, 0.9], [0.9, 0.1, 0.1]];
        let r = mean_shift(
            &pset(&pts),
            &MeanShiftParams {
                distance: DistanceKind::AngleOnly,
                bandwidth: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.modes.len(), 2);
        assert_eq!(r.modes[0].members, 2);
    }

    #[test]
    fn pick_normalizes_centroid() {
        let r = mean_shift(&pset(&[[0.2, 0.2, 0.2]]), &MeanShiftParams::default()).unwrap();
        let l = pick_illuminant(&r);
        let inv = 1.0 / 3f64.sqrt();
        for c in l {
            assert!((c - inv).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_k1_is_arithmetic_mean() {
        let pts = [[0.1, 0.2, 0.3], [0.3, 0.4, 0.5], [0.5, 0.6, 0.7]];
        let r = kmeans(&pset(&pts), 1, 42, 3).unwrap();
        assert_eq!(r.modes.len(), 1);
        for c in 0..3 {
            let mean = (pts[0][c] + pts[1][c] + pts[2][c]) / 3.0;
            assert!((r.modes[0].centroid[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = [[0.1, 0.1, 0.1], [0.5, 0.5, 0.5], [0.9, 0.9, 0.9]];
        let r = kmeans(&pset(&pts), 3, 7, 5).unwrap();
        assert_eq!(r.modes.len(), 3);
        assert!(r.modes.iter().all(|m| m.members == 1));
    }

    #[test]
    fn kmeans_two_tight_clusters() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let j = i as f64 * 1e-7;
            pts.push([0.2 + j, 0.2, 0.2]);
            pts.push([0.8 + j, 0.8, 0.8]);
        }
        let r = kmeans(&pset(&pts), 2, 1, 5).unwrap();
        let mean_off = 19.0 / 2.0 * 1e-7;
        let mut lows: Vec<&Mode> = r.modes.iter().collect();
        lows.sort_by(|a, b| a.centroid[0].total_cmp(&b.centroid[0]));
        assert!((lows[0].centroid[0] - (0.2 + mean_off)).abs() < 1e-6);
        assert!((lows[1].centroid[0] - (0.8 + mean_off)).abs() < 1e-6);
    }

    #[test]
    fn kmeans_deterministic_for_fixed_seed() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Rgb> = (0..60)
            .map(|_| [rng.gen(), rng.gen(), rng.gen()])
            .collect();
        let a = kmeans(&pset(&pts), 5, 99, 4).unwrap();
        let b = kmeans(&pset(&pts), 5, 99, 4).unwrap();
        assert_eq!(a.assignments, b.assignments);
        for (ma, mb) in a.modes.iter().zip(&b.modes) {
            assert_eq!(ma.centroid, mb.centroid);
        }
    }

    #[test]
    fn kmeans_k_too_large_rejected() {
        let pts = [[0.5; 3]; 2];
        assert!(kmeans(&pset(&pts), 3, 0, 1).is_err());
    }
}
