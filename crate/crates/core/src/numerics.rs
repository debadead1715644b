//! Small numerical kernels shared by the other modules: compensated
//! summation, bisection, Perron root by shifted power iteration, and the
//! upper concave hull used for Legendre-type envelopes.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum. Infinite terms are absorbing.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        if !v.is_finite() || !self.sum.is_finite() {
            self.sum += v;
            self.comp = 0.0;
            return;
        }
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.comp
        } else {
            self.sum
        }
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn ksum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Root of `g` on `[lo, hi]` by bisection on the sign of `g`.
///
/// Runs until the bracket stops shrinking in floating point or its width
/// falls below `xtol`.
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, lo: f64, hi: f64, xtol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut ga = g(a);
    let gb = g(b);
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if ga.is_nan() || gb.is_nan() || ga.signum() == gb.signum() {
        return Err(Error::Bracket { lo: a, hi: b });
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || b - a <= xtol {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return Ok(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Solve `g(x) = y` for `x` in `[lo, hi]` where `g` is monotone there.
/// Values of `y` outside `g([lo, hi])` are clamped to the nearer endpoint.
pub fn invert_monotone<G: FnMut(f64) -> f64>(mut g: G, lo: f64, hi: f64, y: f64) -> f64 {
    let (glo, ghi) = (g(lo), g(hi));
    let increasing = ghi >= glo;
    let (ymin, ymax) = if increasing { (glo, ghi) } else { (ghi, glo) };
    if y <= ymin {
        return if increasing { lo } else { hi };
    }
    if y >= ymax {
        return if increasing { hi } else { lo };
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let below = g(m) < y;
        if below == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Nonnegative square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    /// `rows[i]` lists `(j, m_ij)` with `m_ij > 0`.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn from_dense(m: &[f64], n: usize) -> Self {
        assert_eq!(m.len(), n * n);
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| m[i * n + j] > 0.0).map(|j| (j, m[i * n + j])).collect())
            .collect();
        SparseMatrix { n, rows }
    }

    fn restrict(&self, comp: &[usize]) -> SparseMatrix {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in comp.iter().enumerate() {
            pos[i] = k;
        }
        let rows = comp
            .iter()
            .map(|&i| {
                self.rows[i].iter().filter(|(j, _)| pos[*j] != usize::MAX).map(|&(j, v)| (pos[j], v)).collect()
            })
            .collect();
        SparseMatrix { n: comp.len(), rows }
    }
}

/// Perron root of a square nonnegative matrix (row-major, `n × n`).
///
/// Power iteration on `M + σI`, which is aperiodic whenever `M` is
/// irreducible. Convergence is declared when the Collatz–Wielandt bounds
/// `min (Bv)_i / v_i ≤ ρ(B) ≤ max (Bv)_i / v_i` agree to `rel_tol`.
pub fn perron_root(m: &[f64], n: usize, rel_tol: f64, max_iter: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Numeric("empty matrix".into()));
    }
    perron_root_sparse(&SparseMatrix::from_dense(m, n), rel_tol, max_iter)
}

pub fn perron_root_sparse(m: &SparseMatrix, rel_tol: f64, max_iter: usize) -> Result<f64> {
    if m.n == 0 {
        return Err(Error::Numeric("empty matrix".into()));
    }
    let max_row = m.rows.iter().map(|r| r.iter().map(|e| e.1).sum::<f64>()).fold(0.0, f64::max);
    if max_row == 0.0 {
        return Ok(0.0);
    }
    shifted_power(m, max_row, rel_tol, max_iter)
}

/// The shift starts at `initial` and is moved to the running estimate of the
/// root every few steps: a shift near `ρ` damps the peripheral spectrum of a
/// periodic matrix fastest.
fn shifted_power(m: &SparseMatrix, initial: f64, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.n;
    let mut shift = initial;
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut last = f64::NAN;
    for it in 0..max_iter {
        for (i, row) in m.rows.iter().enumerate() {
            w[i] = row.iter().map(|&(j, a)| a * v[j]).sum::<f64>() + shift * v[i];
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let vmax = v.iter().cloned().fold(0.0, f64::max);
        for i in 0..n {
            if v[i] > 1e-200 * vmax {
                let r = w[i] / v[i];
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        let norm: f64 = w.iter().sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numeric("power iteration lost the Perron vector".into()));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if hi - lo <= rel_tol * hi {
            return Ok((0.5 * (hi + lo) - shift).max(0.0));
        }
        if (norm - last).abs() <= 0.01 * rel_tol * norm {
            return Ok((norm - shift).max(0.0));
        }
        last = norm;
        if it % 16 == 15 {
            let est = norm - shift;
            if est > 0.0 && (est - shift).abs() > 0.1 * shift {
                shift = est;
                last = f64::NAN;
            }
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge in {max_iter} steps"
    )))
}

/// Strongly connected components of the graph `i → j` iff `m[i·n + j] > 0`.
pub fn strong_components(m: &[f64], n: usize) -> Vec<Vec<usize>> {
    strong_components_sparse(&SparseMatrix::from_dense(m, n))
}

pub fn strong_components_sparse(m: &SparseMatrix) -> Vec<Vec<usize>> {
    // Iterative Tarjan.
    let n = m.n;
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < m.rows[v].len() {
                let w = m.rows[v][top.1].0;
                top.1 += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Spectral radius of a nonnegative matrix that need not be irreducible:
/// the largest Perron root over its strongly connected components.
pub fn spectral_radius(m: &[f64], n: usize, rel_tol: f64, max_iter: usize) -> Result<f64> {
    spectral_radius_sparse(&SparseMatrix::from_dense(m, n), rel_tol, max_iter)
}

pub fn spectral_radius_sparse(m: &SparseMatrix, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let mut best = 0.0f64;
    for comp in strong_components_sparse(m) {
        let sub = m.restrict(&comp);
        if sub.rows.iter().all(|r| r.is_empty()) {
            continue;
        }
        best = best.max(perron_root_sparse(&sub, rel_tol, max_iter)?);
    }
    Ok(best)
}

/// Upper concave hull of a point set, returned sorted by abscissa.
pub fn upper_concave_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|b, a| (a.0 - b.0).abs() <= 1e-15 * (1.0 + a.0.abs()));
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Evaluate a piecewise-linear function given by sorted knots. `None` outside its range.
pub fn eval_piecewise(knots: &[(f64, f64)], x: f64, tol: f64) -> Option<f64> {
    let (first, last) = (knots.first()?, knots.last()?);
    if x < first.0 - tol || x > last.0 + tol {
        return None;
    }
    if knots.len() == 1 || x <= first.0 {
        return Some(first.1);
    }
    if x >= last.0 {
        return Some(last.1);
    }
    let k = knots.partition_point(|p| p.0 <= x).clamp(1, knots.len() - 1);
    let (a, b) = (knots[k - 1], knots[k]);
    let s = (x - a.0) / (b.0 - a.0);
    Some(a.1 + s * (b.1 - a.1))
}
