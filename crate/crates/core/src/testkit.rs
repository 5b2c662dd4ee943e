//! Independent oracles for the verification suites.
//!
//! Everything here recomputes its answer from first principles — exhaustive
//! permutation search, central finite differences, O(n²) scans — and never
//! calls into the module it is used to check. Costs are factorial or
//! quadratic on purpose; inputs stay small.

use crate::error::{Error, Result};
use crate::vec3::{self, Point3};

/// Oracle families and the comparison tolerance each one earns.
///
/// Tolerances follow from the oracle's own error term, not from what an
/// implementation happens to achieve: exact-arithmetic oracles compare at
/// accumulated-rounding level, central differences at their `O(h²)`
/// truncation level on unit-scale inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Oracle {
    /// Closed-form signed distances of analytic shapes.
    AnalyticSdf,
    /// Exhaustive minimum over all assignments.
    FactorialEmd,
    /// Central finite differences with step [`FD_STEP`].
    FiniteDiff,
    /// Exhaustive O(n²) nearest-neighbor scan.
    KnnScan,
    /// Empirical moment estimation over large samples.
    StatMoment,
}

impl Oracle {
    pub fn tolerance(self) -> f64 {
        match self {
            Oracle::AnalyticSdf => 1e-12,
            Oracle::FactorialEmd => 1e-12,
            Oracle::FiniteDiff => 1e-4,
            Oracle::KnnScan => 0.0,
            Oracle::StatMoment => 0.03,
        }
    }
}

/// Central-difference step balancing truncation against round-off in f64 on
/// unit-scale inputs.
pub const FD_STEP: f64 = 1e-5;

/// Largest set size [`brute_force_emd`] accepts before the factorial blows up.
pub const BRUTE_FORCE_EMD_LIMIT: usize = 7;

/// Exhaustive minimum-cost perfect matching under squared Euclidean ground
/// cost, reported as total cost (not averaged). Only for n ≤ 7.
pub fn brute_force_emd(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    if a.len() > BRUTE_FORCE_EMD_LIMIT {
        return Err(Error::CapExceeded { n: a.len(), cap: BRUTE_FORCE_EMD_LIMIT });
    }
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = (0..n).map(|i| vec3::dist_sq(a[i], b[p[i]])).sum();
        if cost < best {
            best = cost;
        }
    });
    Ok(best)
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Central finite differences of a scalar function, one coordinate at a time.
pub fn finite_diff_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Exhaustive k-nearest-neighbor scan, sorted by (distance, index) like the
/// spatial index under test.
pub fn knn_scan(points: &[Point3], query: Point3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (vec3::dist_sq(query, p), i))
        .collect();
    all.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    all.truncate(k);
    all.into_iter().map(|(d, i)| (i, d.sqrt())).collect()
}

/// Symmetric Chamfer distance by double loop; `squared` picks the L2 form.
pub fn chamfer_scan(a: &[Point3], b: &[Point3], squared: bool) -> f64 {
    let one_way = |from: &[Point3], to: &[Point3]| -> f64 {
        from.iter()
            .map(|&p| {
                let d2 = to.iter().map(|&q| vec3::dist_sq(p, q)).fold(f64::INFINITY, f64::min);
                if squared {
                    d2
                } else {
                    d2.sqrt()
                }
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a))
}

/// Empirical mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Empirical standard deviation (population form).
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Median; used for noise-robust loss-trace comparisons.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Max relative error between two vectors, with an absolute floor so values
/// near zero do not blow the ratio up.
pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs().max(1e-6))
        .fold(0.0, f64::max)
}
