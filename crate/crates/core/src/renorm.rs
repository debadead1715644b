//! Renormalization of S-unimodal maps.
//!
//! A restrictive interval of period `p` is a proper closed interval `J`
//! around the critical point whose first `p` images have disjoint interiors
//! and with `f^p J ⊂ J`, `f^p ∂J ⊂ ∂J`. Nesting these gives the cascade
//! `X = J_0 ⊋ J_1 ⊋ …` with periods `p_{m+1} = q_m p_m`. Between two
//! consecutive cycles lives a uniformly expanding set coded by a Markov
//! partition of `L_m`, the interval spanned by `f^{p_m}c` and `f^{2p_m}c`.
//!
//! Every chain here is built for the `p_m`-step map `g = f^{p_m}` on `J_m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{pairwise_disjoint, Interval, INCLUSION_TOL};
use crate::map::{UnimodalMap, UnimodalMapSpec};
use crate::numerics::{bisect, invert_monotone};

/// Default bound on the combinatorial period searched for at each level.
pub const DEFAULT_Q_MAX: usize = 16;

/// Tolerance for "is a fixed point" checks on boundary points.
const FIXED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractingCycle {
    pub period: usize,
    /// `|Df^period|` along the cycle.
    pub multiplier: f64,
}

/// Follows the critical orbit, which is attracted to any attracting or
/// neutral cycle, and reports the first period `≤ max_period` at which it
/// closes up to `tol`.
pub fn find_attracting_cycle<M: UnimodalMap + ?Sized>(
    map: &M,
    max_period: usize,
    tol: f64,
) -> Option<AttractingCycle> {
    let mut x = map.apply(map.critical_point());
    for _round in 0..20 {
        x = map.apply_n(x, 50_000);
        for period in 1..=max_period.max(1) {
            let y = map.apply_n(x, period);
            if (y - x).abs() < tol {
                // Confirm the orbit stays closed after further iteration.
                let x2 = map.apply_n(x, period * 1000);
                if (map.apply_n(x2, period) - x2).abs() >= tol {
                    continue;
                }
                let (_, d) = map.apply_n_with_deriv(x2, period);
                if d.abs() > 1.0 + 1e-6 {
                    continue;
                }
                return Some(AttractingCycle { period, multiplier: d.abs() });
            }
        }
    }
    None
}

/// One level of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormLevel {
    #[serde(rename = "m")]
    pub index: usize,
    #[serde(rename = "J")]
    pub j: Interval,
    pub p: usize,
    /// `p_{m+1} / p_m`, present when the next level was found.
    pub q: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub map: UnimodalMapSpec,
    pub levels: Vec<RenormLevel>,
    pub depth_found: usize,
    /// The search stopped at `m_max` rather than at a level without a
    /// restrictive interval.
    pub truncated: bool,
}

impl Cascade {
    pub fn level(&self, m: usize) -> Result<&RenormLevel> {
        self.levels.get(m).ok_or(Error::Cascade {
            level: m,
            reason: format!("cascade has depth {}", self.depth_found),
        })
    }
}

/// A restrictive interval of the renormalized map found by [`detect_restrictive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restrictive {
    pub interval: Interval,
    pub q: usize,
    /// Boundary point fixed by `g^q`.
    pub z: f64,
}

/// Images `I_0 = start, I_1 = g I_0, …, I_{count−1}` under `g = f^p`.
///
/// Only `I_0` may contain the critical point; `None` if a later image does,
/// since `g` is then not monotone on it and the orbit is not a cycle of
/// intervals.
fn interval_orbit<M: UnimodalMap + ?Sized>(
    map: &M,
    p: usize,
    start: Interval,
    count: usize,
    tol: f64,
) -> Option<Vec<Interval>> {
    let c = map.critical_point();
    let mut out = Vec::with_capacity(count);
    out.push(start);
    let mut cur = start;
    for k in 1..count {
        let (a, b) = (map.apply_n(cur.lo, p), map.apply_n(cur.hi, p));
        let mut next = Interval::hull(a, b);
        if k == 1 && cur.contains_interior(c, 0.0) {
            let gc = map.apply_n(c, p);
            next = Interval::new(next.lo.min(gc), next.hi.max(gc));
        } else if k > 1 && cur.contains_interior(c, tol) {
            return None;
        }
        out.push(next);
        cur = next;
    }
    Some(out)
}

/// Roots of `h` on `window`, located by sign changes over `samples` points
/// and polished by bisection.
fn sampled_roots<H: Fn(f64) -> f64>(h: H, window: Interval, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let xs: Vec<f64> = window.linspace(samples).collect();
    let mut prev = (xs[0], h(xs[0]));
    if prev.1 == 0.0 {
        roots.push(prev.0);
    }
    for &x in &xs[1..] {
        let hx = h(x);
        if hx == 0.0 {
            roots.push(x);
        } else if prev.1 != 0.0 && hx.signum() != prev.1.signum() {
            if let Ok(r) = bisect(&h, prev.0, x, 0.0) {
                roots.push(r);
            }
        }
        prev = (x, hx);
    }
    roots
}

/// The point on the other monotone branch of `g = f^p|_J` with the same image as `z`.
fn branch_partner<M: UnimodalMap + ?Sized>(map: &M, p: usize, j: Interval, z: f64) -> Option<f64> {
    let c = map.critical_point();
    let target = map.apply_n(z, p);
    let (lo, hi) = if z > c { (j.lo, c) } else { (c, j.hi) };
    let g = |x: f64| map.apply_n(x, p);
    let w = invert_monotone(g, lo, hi, target);
    let scale = map.apply_n(c, p) - target;
    ((g(w) - target).abs() <= 1e-9 * (1.0 + scale.abs())).then_some(w)
}

fn is_restrictive<M: UnimodalMap + ?Sized>(
    map: &M,
    p: usize,
    cand: Interval,
    q: usize,
    tol: f64,
) -> bool {
    let c = map.critical_point();
    if !cand.contains_interior(c, tol) {
        return false;
    }
    let Some(imgs) = interval_orbit(map, p, cand, q + 1, tol) else {
        return false;
    };
    if imgs[1..q].iter().any(|i| i.contains_interior(c, tol)) {
        return false;
    }
    if !pairwise_disjoint(&imgs[..q], tol) {
        return false;
    }
    if !cand.covers(&imgs[q], tol) {
        return false;
    }
    let gq = |x: f64| map.apply_n(x, p * q);
    let on_boundary = |y: f64| (y - cand.lo).abs() <= FIXED_TOL || (y - cand.hi).abs() <= FIXED_TOL;
    if !(on_boundary(gq(cand.lo)) && on_boundary(gq(cand.hi))) {
        return false;
    }
    cand.linspace(129).all(|x| cand.contains_tol(gq(x), tol))
}

/// Restrictive interval of `g = f^p|_J` with the smallest period
/// `q ∈ [2, q_max]` around the critical point, or `None`.
///
/// Candidates are `[z, ẑ]` where `z` is a fixed point of `g^q` and `ẑ` its
/// partner on the other branch of `g`. Among valid candidates of one period
/// the widest is returned; maximality is checked only against this finite
/// family.
pub fn detect_restrictive<M: UnimodalMap + ?Sized>(
    map: &M,
    j: Interval,
    p: usize,
    q_max: usize,
) -> Result<Option<Restrictive>> {
    let c = map.critical_point();
    let tol = INCLUSION_TOL;
    if !j.contains_interior(c, 0.0) {
        return Err(Error::Numeric(format!("critical point outside J = [{}, {}]", j.lo, j.hi)));
    }
    let eps = 1e-7 * j.width();
    let (_, dl) = map.apply_n_with_deriv(c - eps, p);
    let (_, dr) = map.apply_n_with_deriv(c + eps, p);
    if dl.signum() == dr.signum() || dl == 0.0 || dr == 0.0 {
        return Err(Error::Numeric(format!(
            "f^{p} is not unimodal on [{}, {}] (Dg = {dl:e}, {dr:e} around c)",
            j.lo, j.hi
        )));
    }
    let mut orbit = Vec::with_capacity(q_max + 1);
    let mut x = c;
    for _ in 0..=q_max {
        orbit.push(x);
        x = map.apply_n(x, p);
    }
    for q in 2..=q_max {
        let r = orbit[1..q].iter().map(|y| (y - c).abs()).fold(f64::INFINITY, f64::min);
        if r <= tol || (orbit[q] - c).abs() >= r {
            continue;
        }
        let window = Interval::new((c - r).max(j.lo), (c + r).min(j.hi));
        let h = |x: f64| map.apply_n(x, p * q) - x;
        let samples = 1024 * q;
        let mut best: Option<Restrictive> = None;
        for z in sampled_roots(h, window, samples) {
            if (z - c).abs() <= tol {
                continue;
            }
            // A boundary cycle that attracts the critical orbit bounds
            // no genuine renormalization.
            let (_, dz) = map.apply_n_with_deriv(z, p * q);
            if dz.abs() <= 1.0 {
                continue;
            }
            let Some(zh) = branch_partner(map, p, j, z) else { continue };
            let cand = Interval::hull(z, zh);
            if !(cand.lo > j.lo + tol && cand.hi < j.hi - tol) {
                continue;
            }
            if is_restrictive(map, p, cand, q, tol)
                && best.is_none_or(|b| cand.width() > b.interval.width())
            {
                best = Some(Restrictive { interval: cand, q, z });
            }
        }
        if best.is_some() {
            return Ok(best);
        }
    }
    Ok(None)
}

/// Nested restrictive intervals down to depth `m_max`.
pub fn cascade<M: UnimodalMap + ?Sized>(map: &M, m_max: usize, q_max: usize) -> Result<Cascade> {
    if m_max == 0 {
        return Err(Error::Config("m_max must be at least 1".into()));
    }
    let mut levels = vec![RenormLevel { index: 0, j: map.domain(), p: 1, q: None }];
    for m in 0..m_max {
        let (j, p) = (levels[m].j, levels[m].p);
        let found = detect_restrictive(map, j, p, q_max).map_err(|e| Error::Cascade {
            level: m,
            reason: e.to_string(),
        })?;
        match found {
            Some(r) => {
                levels[m].q = Some(r.q);
                levels.push(RenormLevel { index: m + 1, j: r.interval, p: p * r.q, q: None });
            }
            None => {
                return Ok(Cascade { map: map.spec().clone(), levels, depth_found: m, truncated: false })
            }
        }
    }
    Ok(Cascade { map: map.spec().clone(), levels, depth_found: m_max, truncated: true })
}

/// The components `f^k J_m`, `0 ≤ k < p_m`, of the cycle `K_m`.
pub fn cycle_cover<M: UnimodalMap + ?Sized>(
    map: &M,
    cascade: &Cascade,
    m: usize,
) -> Result<Vec<Interval>> {
    if m > cascade.depth_found {
        return Err(Error::Cascade { level: m, reason: "beyond the cascade depth".into() });
    }
    let level = cascade.level(m)?;
    let err = |reason: &str| Error::Cascade { level: m, reason: reason.into() };
    let cover = interval_orbit(map, 1, level.j, level.p, INCLUSION_TOL)
        .filter(|cov| cov[1..].iter().all(|i| !i.contains_interior(map.critical_point(), INCLUSION_TOL)))
        .ok_or_else(|| err("an image of J_m other than J_m contains the critical point"))?;
    if !pairwise_disjoint(&cover, INCLUSION_TOL) {
        return Err(err("cycle intervals overlap"));
    }
    Ok(cover)
}

/// Markov partition of the expanding set between `K_m` and `K_{m+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePartition {
    pub m: usize,
    /// Steps of `f` per symbol of the chain.
    pub p: usize,
    #[serde(rename = "L")]
    pub l: Interval,
    /// Components of `cl(K_m \ K_{m+1})` inside `L_m`.
    pub elements_tilde: Vec<Interval>,
    /// Left to right; the label of an element is its index.
    pub elements: Vec<Interval>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<u8>>,
    /// The two-interval chain standing in for a single repelling orbit (`q_m = 2`).
    pub surrogate: bool,
    pub map: UnimodalMapSpec,
}

impl CyclePartition {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        (1..=self.len()).map(|k| format!("W{k}")).collect()
    }
}

fn fill_transitions<M: UnimodalMap + ?Sized>(
    map: &M,
    p: usize,
    m: usize,
    elements: &[Interval],
    surrogate: bool,
) -> Result<Vec<Vec<u8>>> {
    let n = elements.len();
    let mut a = vec![vec![0u8; n]; n];
    for (i, e) in elements.iter().enumerate() {
        let img = Interval::hull(map.apply_n(e.lo, p), map.apply_n(e.hi, p));
        for (k, other) in elements.iter().enumerate() {
            if img.covers(other, INCLUSION_TOL) {
                a[i][k] = 1;
            } else if img.overlaps_interior(other, INCLUSION_TOL) {
                // A surrogate image overshoots its partner only by the linearization
                // error around the fixed point: cover in one direction is what matters.
                if surrogate && other.covers(&img, INCLUSION_TOL) {
                    a[i][k] = 1;
                    continue;
                }
                return Err(Error::Partition {
                    level: m,
                    reason: format!("Markov property fails for pair ({i}, {k})"),
                });
            }
        }
    }
    Ok(a)
}

/// Builds `P_m` on `L_m` for level `m < depth_found`.
pub fn build_partition<M: UnimodalMap + ?Sized>(
    map: &M,
    cascade: &Cascade,
    m: usize,
) -> Result<CyclePartition> {
    if m + 1 > cascade.depth_found {
        return Err(Error::Partition { level: m, reason: "needs the next cascade level".into() });
    }
    let level = cascade.level(m)?;
    let next = cascade.level(m + 1)?;
    let (p, q) = (level.p, level.q.expect("levels below depth_found carry q"));
    let c = map.critical_point();
    let tol = INCLUSION_TOL;
    let perr = |reason: String| Error::Partition { level: m, reason };

    let gc = map.apply_n(c, p);
    let g2c = map.apply_n(gc, p);
    let l = Interval::hull(gc, g2c);
    if l.width() <= tol {
        return Err(perr("L_m is degenerate (superstable level)".into()));
    }

    let mut cyc = interval_orbit(map, p, next.j, q, tol)
        .ok_or_else(|| perr("cycle of J_{m+1} is not a cycle of intervals".into()))?;
    cyc.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let gaps: Vec<Interval> = cyc
        .windows(2)
        .filter(|w| w[1].lo - w[0].hi > tol)
        .map(|w| Interval::new(w[0].hi, w[1].lo))
        .filter(|gap| l.covers(gap, tol))
        .collect();
    let (elements, surrogate) = if q == 2 {
        (surrogate_pair(map, level, next)?, true)
    } else if gaps.is_empty() {
        return Err(perr("no component of cl(K_m \\ K_{m+1}) inside L_m".into()));
    } else {
        (gaps.clone(), false)
    };
    let a = fill_transitions(map, p, m, &elements, surrogate)?;
    Ok(CyclePartition {
        m,
        p,
        l,
        elements_tilde: gaps,
        elements,
        a,
        surrogate,
        map: map.spec().clone(),
    })
}

/// `{J, gJ}` with `J` adjacent to the repelling fixed point `z = ∂J_{m+1}` of
/// `g = f^{p_m}`, on the side facing the critical point. `J` and `gJ` meet
/// only at `z`, and `g²` maps `J` diffeomorphically over itself.
fn surrogate_pair<M: UnimodalMap + ?Sized>(
    map: &M,
    level: &RenormLevel,
    next: &RenormLevel,
) -> Result<Vec<Interval>> {
    let p = level.p;
    let c = map.critical_point();
    let g = |x: f64| map.apply_n(x, p);
    let z = [next.j.lo, next.j.hi]
        .into_iter()
        .min_by(|a, b| (g(*a) - a).abs().total_cmp(&(g(*b) - b).abs()))
        .expect("two endpoints");
    if (g(z) - z).abs() > FIXED_TOL {
        return Err(Error::Partition {
            level: level.index,
            reason: format!("no endpoint of J_{} is fixed by f^{p}", next.index),
        });
    }
    let inward = if z > c { -1.0 } else { 1.0 };
    let mut delta = 0.25 * (z - c).abs();
    for _ in 0..80 {
        let e = z + inward * delta;
        let j = Interval::hull(z, e);
        let gj = Interval::hull(z, g(e));
        let g2j = Interval::hull(z, g(g(e)));
        let ok = !gj.contains_interior(c, 0.0)
            && level.j.covers(&gj, 0.0)
            && g2j.covers(&j, 0.0)
            && j.overlap(&gj) <= INCLUSION_TOL;
        if ok {
            let mut pair = vec![j, gj];
            pair.sort_by(|a, b| a.lo.total_cmp(&b.lo));
            return Ok(pair);
        }
        delta *= 0.5;
    }
    Err(Error::Partition { level: level.index, reason: "surrogate interval did not settle".into() })
}

/// Primitivity of a 0/1 matrix: some power `A^k`, `k ≤ (n−1)² + 1`, is positive.
pub fn is_primitive(a: &[Vec<u8>]) -> bool {
    let n = a.len();
    if n == 0 {
        return false;
    }
    let mul = |x: &[Vec<bool>], y: &[Vec<bool>]| -> Vec<Vec<bool>> {
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| x[i][k] && y[k][j])).collect())
            .collect()
    };
    let base: Vec<Vec<bool>> = a.iter().map(|r| r.iter().map(|&v| v != 0).collect()).collect();
    let mut power = base.clone();
    for _ in 0..((n - 1) * (n - 1) + 1) {
        if power.iter().all(|r| r.iter().all(|&v| v)) {
            return true;
        }
        power = mul(&power, &base);
    }
    false
}

/// The `p_m`-step chain on `L_m` is topologically mixing.
pub fn mixing_check(partition: &CyclePartition) -> bool {
    is_primitive(&partition.a)
}

/// Admissible words of the given length, in lexicographic order.
pub fn admissible_words(a: &[Vec<u8>], len: usize) -> Vec<Vec<usize>> {
    let n = a.len();
    let mut words: Vec<Vec<usize>> = (0..n).map(|s| vec![s]).collect();
    for _ in 1..len {
        words = words
            .into_iter()
            .flat_map(|w| {
                let last = *w.last().expect("nonempty word");
                (0..n).filter(move |&s| a[last][s] != 0).map(move |s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    words
}

/// Preimage of `target` inside `element` under the branch `g|element`.
pub(crate) fn pull_back<M: UnimodalMap + ?Sized>(
    map: &M,
    p: usize,
    element: Interval,
    target: Interval,
) -> Interval {
    let g = |x: f64| map.apply_n(x, p);
    Interval::hull(
        invert_monotone(g, element.lo, element.hi, target.lo),
        invert_monotone(g, element.lo, element.hi, target.hi),
    )
}

/// The cylinder `{x ∈ P_{w_0} : g^k x ∈ P_{w_k}}` of an admissible word.
pub fn cylinder<M: UnimodalMap + ?Sized>(
    map: &M,
    partition: &CyclePartition,
    word: &[usize],
) -> Interval {
    let (last, rest) = word.split_last().expect("nonempty word");
    rest.iter().rev().fold(partition.elements[*last], |target, &s| {
        pull_back(map, partition.p, partition.elements[s], target)
    })
}

/// Largest sampled ratio `sup |Dg^n| / inf |Dg^n|` over diffeomorphic
/// pull-backs of partition elements by `g^n`, `g = f^{p_m}` (so `n` counts
/// chain steps; at level 0 these are steps of `f`).
///
/// At most 4096 pull-backs are examined, spread evenly over the word list.
pub fn distortion_estimate<M: UnimodalMap + ?Sized>(
    map: &M,
    partition: &CyclePartition,
    n: usize,
    samples: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("distortion needs n ≥ 1".into()));
    }
    let words = admissible_words(&partition.a, n + 1);
    let stride = words.len().div_ceil(4096).max(1);
    let steps = partition.p * n;
    let mut worst: Option<f64> = None;
    for w in words.iter().step_by(stride) {
        let pb = cylinder(map, partition, w);
        if pb.width() <= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for x in pb.linspace(samples.max(2)) {
            let d = map.apply_n_with_deriv(x, steps).1.abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo > 0.0 && hi.is_finite() {
            worst = Some(worst.map_or(hi / lo, |r: f64| r.max(hi / lo)));
        }
    }
    worst.ok_or_else(|| Error::InsufficientData("no diffeomorphic pull-back found".into()))
}
