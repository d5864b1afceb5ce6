//! Cluster statistics: inradius and outradius, boundary moments and
//! least-squares fits against `ln N` or `ln ln N`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::Outcome;
use crate::lattice::{Field, Site};

/// Radii of a finite set measured from a centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    /// Smallest distance of a site outside the set.
    pub r_in: f64,
    /// Largest distance of a site inside the set.
    pub r_out: f64,
}

impl Radii {
    pub fn diff(&self) -> f64 {
        self.r_out - self.r_in
    }
}

/// Radii measured from the origin, using exact integer norms.
///
/// # Panics
/// If `set` is empty.
pub fn radius_diff(set: &[Site]) -> Radii {
    assert!(!set.is_empty(), "radius of an empty set");
    let member = membership(set, 1);
    let r_out2 = set.iter().map(|s| s.norm2()).max().unwrap();
    let r_in2 = member
        .sites()
        .filter(|s| member.get(*s) == 0)
        .map(|s| s.norm2())
        .min()
        .expect("the box border lies outside the set");
    Radii { r_in: libm::sqrt(r_in2 as f64), r_out: libm::sqrt(r_out2 as f64) }
}

/// Radii measured from `center`, which should lie within distance one of
/// the origin.
pub fn recentered_diff(set: &[Site], center: (f64, f64)) -> Radii {
    assert!(!set.is_empty(), "radius of an empty set");
    let pad = 1 + libm::ceil(center.0.abs().max(center.1.abs())) as i32;
    let member = membership(set, pad);
    let dist2 = |s: Site| {
        let dx = f64::from(s.x) - center.0;
        let dy = f64::from(s.y) - center.1;
        dx * dx + dy * dy
    };
    let r_out2 = set.iter().map(|s| dist2(*s)).fold(0.0, f64::max);
    let r_in2 = member.sites().filter(|s| member.get(*s) == 0).map(dist2).fold(f64::INFINITY, f64::min);
    Radii { r_in: libm::sqrt(r_in2), r_out: libm::sqrt(r_out2) }
}

fn membership(set: &[Site], pad: i32) -> Field<u8> {
    let r = set.iter().map(|s| s.max_abs()).max().unwrap_or(0);
    let mut f: Field<u8> = Field::new(r + pad);
    for s in set {
        f.set(*s, 1);
    }
    f
}

/// The window `I(N)` used for averaging diff over neighbouring sizes.
pub fn window(n: u64) -> (u64, u64) {
    if n <= 1_000_000 {
        (n / 2, n + n / 2)
    } else {
        (n - 500_000, n + 500_000)
    }
}

/// Mean of the series values whose abscissa lies in `I(n)`, or `None` if
/// none do.
pub fn windowed_average(series: &[(u64, f64)], n: u64) -> Option<f64> {
    let (lo, hi) = window(n);
    let mut acc = Neumaier::default();
    let mut count = 0usize;
    for (m, v) in series {
        if (lo..=hi).contains(m) {
            acc.add(*v);
            count += 1;
        }
    }
    (count > 0).then(|| acc.sum() / count as f64)
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `M_m = Σ_{z ∈ A} (z/r)^m` for `m = 1..=m_max`, with `r = sqrt(n/π)`.
/// Entry `m - 1` holds `(re, im)`.
pub fn complex_moments(set: &[Site], n: f64, m_max: usize) -> Vec<(f64, f64)> {
    let r = libm::sqrt(n / core::f64::consts::PI);
    let mut re = vec![Neumaier::default(); m_max];
    let mut im = vec![Neumaier::default(); m_max];
    for s in set {
        let (wx, wy) = (f64::from(s.x) / r, f64::from(s.y) / r);
        let (mut px, mut py) = (1.0f64, 0.0f64);
        for m in 0..m_max {
            let nx = px * wx - py * wy;
            py = px * wy + py * wx;
            px = nx;
            re[m].add(px);
            im[m].add(py);
        }
    }
    re.iter().zip(&im).map(|(a, b)| (a.sum(), b.sum())).collect()
}

/// Mean and population standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mut acc = Neumaier::default();
    xs.iter().for_each(|x| acc.add(*x));
    let mean = acc.sum() / n;
    let mut sq = Neumaier::default();
    xs.iter().for_each(|x| sq.add((x - mean) * (x - mean)));
    (mean, libm::sqrt(sq.sum() / n))
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (_, sd) = mean_sd(xs);
    sd * sd * n / (n - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitScale {
    /// Regress against `ln N`.
    Ln,
    /// Regress against `ln ln N`.
    LnLn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` against `x`.
///
/// # Panics
/// With fewer than two points or constant abscissae.
pub fn fit_line(points: &[(f64, f64)]) -> FitResult {
    assert!(points.len() >= 2, "need at least two points");
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    assert!(sxx > 0.0, "degenerate abscissae");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    FitResult { slope, intercept, r2 }
}

/// Fits mean diff against `ln N` or `ln ln N`.
///
/// # Panics
/// With fewer than three points or sizes that are not strictly increasing.
pub fn fit_log(series: &[(u64, f64)], scale: FitScale) -> FitResult {
    assert!(series.len() >= 3, "need at least three points");
    assert!(series.windows(2).all(|w| w[0].0 < w[1].0), "sizes must be strictly increasing");
    let pts: Vec<(f64, f64)> = series
        .iter()
        .map(|(n, y)| {
            let l = libm::log(*n as f64);
            let x = match scale {
                FitScale::Ln => l,
                FitScale::LnLn => libm::log(l),
            };
            (x, *y)
        })
        .collect();
    fit_line(&pts)
}

/// Measurements of one final cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub n: u64,
    pub r_in: f64,
    pub r_out: f64,
    pub diff: f64,
    /// diff measured from the putative centre.
    pub diff_prime: f64,
    /// `M_1 .. M_{m_max}` as `(re, im)`.
    pub moments: Vec<(f64, f64)>,
}

impl ClusterStats {
    pub fn of(outcome: &Outcome, n: u64, center: (f64, f64), m_max: usize) -> Self {
        let set: Vec<Site> = outcome.occupied().collect();
        let radii = radius_diff(&set);
        let prime = recentered_diff(&set, center);
        ClusterStats {
            n,
            r_in: radii.r_in,
            r_out: radii.r_out,
            diff: radii.diff(),
            diff_prime: prime.diff(),
            moments: complex_moments(&set, n as f64, m_max),
        }
    }
}
