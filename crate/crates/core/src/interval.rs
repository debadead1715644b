use serde::{Deserialize, Serialize};

/// Absolute tolerance used by every set relation between intervals.
pub const INCLUSION_TOL: f64 = 1e-10;

/// A closed interval `[lo, hi]`. Serializes as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from([a, b]: [f64; 2]) -> Self {
        Interval::hull(a, b)
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is reversed");
        Interval { lo, hi }
    }

    /// Smallest interval containing both points.
    pub fn hull(a: f64, b: f64) -> Self {
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Containment of `x` with the interval padded by `tol` on both sides.
    pub fn contains_tol(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    /// `x` is in the interior, at distance more than `tol` from both ends.
    pub fn contains_interior(&self, x: f64, tol: f64) -> bool {
        self.lo + tol < x && x < self.hi - tol
    }

    /// `other ⊆ self` up to `tol`.
    pub fn covers(&self, other: &Interval, tol: f64) -> bool {
        self.lo - tol <= other.lo && other.hi <= self.hi + tol
    }

    /// Length of the intersection (zero if disjoint).
    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }

    /// Interiors intersect by more than `tol`.
    pub fn overlaps_interior(&self, other: &Interval, tol: f64) -> bool {
        self.overlap(other) > tol
    }

    pub fn linspace(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let n = n.max(2);
        (0..n).map(move |k| self.lo + self.width() * k as f64 / (n - 1) as f64)
    }
}

/// True when the intervals have pairwise disjoint interiors (overlaps up to `tol` allowed).
pub fn pairwise_disjoint(intervals: &[Interval], tol: f64) -> bool {
    let mut sorted: Vec<Interval> = intervals.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    sorted.windows(2).all(|w| w[1].lo >= w[0].hi - tol)
}
