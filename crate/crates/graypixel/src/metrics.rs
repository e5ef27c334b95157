//! Angular error and the five-column benchmark summary.

use serde::{Deserialize, Serialize};

use crate::{angle_between, norm2, Error, Result, Rgb};

/// Angular error between two nonzero RGB directions, in degrees.
/// Scale-invariant in both arguments.
pub fn angular_error(est: &Rgb, gt: &Rgb) -> Result<f64> {
    if !(norm2(est) > 0.0) || !(norm2(gt) > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(angle_between(est, gt).to_degrees())
}

/// Mean / Median / Trimean / Best 25% / Worst 25% in degrees.
///
/// Quartiles are linearly interpolated on the sorted sample; the trimean is
/// `(Q1 + 2*median + Q3) / 4`. Best/worst take the `floor(n/4)` smallest /
/// largest errors with a minimum of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
    pub count: usize,
}

/// Linear-interpolated percentile of a sorted sample (rank `q * (n-1)`).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize(errors: &[f64]) -> Result<EvalStats> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("summarize needs at least one error".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let median = percentile(&sorted, 0.5);
    let q1 = percentile(&sorted, 0.25);
    let q3 = percentile(&sorted, 0.75);
    let quarter = (n / 4).max(1);
    let best25 = sorted[..quarter].iter().sum::<f64>() / quarter as f64;
    let worst25 = sorted[n - quarter..].iter().sum::<f64>() / quarter as f64;
    Ok(EvalStats {
        mean,
        median,
        trimean: (q1 + 2.0 * median + q3) / 4.0,
        best25,
        worst25,
        count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_vectors_have_zero_error() {
        assert_eq!(angular_error(&[0.3, 0.2, 0.9], &[0.3, 0.2, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn axis_vs_neutral() {
        let e = angular_error(&[1.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((e - 54.7356103).abs() < 1e-6);
    }

    #[test]
    fn worked_value() {
        let e = angular_error(&[0.8, 1.0, 0.6], &[1.0, 1.0, 1.0]).unwrap();
        let expect = (2.4 / (2.0f64.sqrt() * 3.0f64.sqrt())).acos().to_degrees();
        assert!((e - expect).abs() < 1e-12);
        assert!((e - 11.5369).abs() < 1e-3);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(angular_error(&[0.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn summarize_all_zero() {
        let s = summarize(&[0.0; 4]).unwrap();
        assert_eq!(
            s,
            EvalStats {
                mean: 0.0,
                median: 0.0,
                trimean: 0.0,
                best25: 0.0,
                worst25: 0.0,
                count: 4
            }
        );
    }

    #[test]
    fn summarize_hand_example_four() {
        let s = summarize(&[1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median, 2.0);
        assert_eq!(s.trimean, 2.0); // (1 + 4 + 3) / 4
        assert_eq!(s.best25, 1.0);
        assert_eq!(s.worst25, 3.0);
    }

    #[test]
    fn summarize_hand_example_five() {
        let s = summarize(&[3.0, 1.0, 5.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.trimean, 3.0); // Q1=2, Q3=4
        assert_eq!(s.best25, 1.0);
        assert_eq!(s.worst25, 5.0);
    }

    #[test]
    fn summarize_empty_rejected() {
        assert!(summarize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn error_symmetric_and_scale_invariant(
            a in prop::array::uniform3(1e-3f64..1.0),
            b in prop::array::uniform3(1e-3f64..1.0),
            s in 1e-2f64..1e2, t in 1e-2f64..1e2,
        ) {
            let e1 = angular_error(&a, &b).unwrap();
            let e2 = angular_error(&b, &a).unwrap();
            let sa = [s * a[0], s * a[1], s * a[2]];
            let tb = [t * b[0], t * b[1], t * b[2]];
            let e3 = angular_error(&sa, &tb).unwrap();
            prop_assert!((e1 - e2).abs() < 1e-9);
            prop_assert!((e1 - e3).abs() < 1e-9);
        }

        #[test]
        fn triangle_inequality(
            a in prop::array::uniform3(1e-3f64..1.0),
            b in prop::array::uniform3(1e-3f64..1.0),
            c in prop::array::uniform3(1e-3f64..1.0),
        ) {
            let ab = angular_error(&a, &b).unwrap();
            let ac = angular_error(&a, &c).unwrap();
            let cb = angular_error(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn summarize_permutation_invariant(mut xs in prop::collection::vec(0.0f64..90.0, 1..40)) {
            let a = summarize(&xs).unwrap();
            xs.reverse();
            let third = xs.len() / 3;
            xs.rotate_left(third);
            let b = summarize(&xs).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert_eq!(a.median, b.median);
            prop_assert_eq!(a.trimean, b.trimean);
            prop_assert_eq!(a.best25, b.best25);
            prop_assert_eq!(a.worst25, b.worst25);
        }

        #[test]
        fn summarize_ordering_invariants(xs in prop::collection::vec(0.0f64..90.0, 1..40)) {
            let s = summarize(&xs).unwrap();
            prop_assert!(s.best25 <= s.median + 1e-12);
            prop_assert!(s.median <= s.worst25 + 1e-12);
            prop_assert!(s.mean >= s.best25 - 1e-12);
            prop_assert!(s.mean <= s.worst25 + 1e-12);
        }

        #[test]
        fn summarize_constant_list(x in 0.0f64..90.0, n in 1usize..30) {
            let s = summarize(&vec![x; n]).unwrap();
            prop_assert!((s.mean - x).abs() < 1e-12);
            prop_assert_eq!(s.median, x);
            prop_assert!((s.trimean - x).abs() < 1e-12);
            prop_assert!((s.best25 - x).abs() < 1e-12);
            prop_assert!((s.worst25 - x).abs() < 1e-12);
        }
    }
}
