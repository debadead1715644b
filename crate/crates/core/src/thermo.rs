//! Thermodynamic formalism on the cycle chains: cylinder potentials,
//! topological pressure, equilibrium statistics, the functional `F = h − χ`
//! and the level-1 rate function assembled across cycles.
//!
//! All pressures, entropies and exponents are per single step of `f`, even
//! though a chain at level `m` is driven by `g = f^{p_m}`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::{Observable, UnimodalMap};
use crate::numerics::{eval_piecewise, ksum, spectral_radius_sparse, upper_concave_hull, KahanSum, SparseMatrix};
use crate::renorm::{admissible_words, pull_back, build_partition, cycle_cover, cylinder, mixing_check, Cascade, CyclePartition};

/// Identifier of the potential `log|Df|`, always carried by a chain.
pub const LOGDF: &str = "logdf";

const SAMPLES_PER_CYLINDER: usize = 9;
const MIN_CYLINDER_WIDTH: f64 = 1e-14;
const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITER: usize = 100_000;
const DIFF_STEP: f64 = 1e-4;

/// Coefficient per potential id; missing ids have coefficient 0.
pub type Coefficients = BTreeMap<String, f64>;

pub fn coefficients(pairs: &[(&str, f64)]) -> Coefficients {
    let mut c = Coefficients::new();
    for (id, v) in pairs {
        *c.entry((*id).to_string()).or_insert(0.0) += v;
    }
    c
}

/// The `depth`-cylinders of a chain with block values of each potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedChain {
    pub m: usize,
    /// Steps of `f` per symbol.
    pub p: usize,
    pub depth: usize,
    pub a: Vec<Vec<u8>>,
    pub words: Vec<Vec<usize>>,
    /// Cylinder intervals, parallel to `words`; empty for symbolic chains.
    pub intervals: Vec<Interval>,
    pub potential_ids: Vec<String>,
    /// `[cylinder][potential]`: sum over one symbol (`p` steps of `f`)
    /// divided by `p`, averaged over sample points of the cylinder.
    pub potential_avgs: Vec<Vec<f64>>,
    /// `[cylinder][potential]`: sampled sup − inf over the cylinder of the
    /// one-symbol sum.
    pub oscillations: Vec<Vec<f64>>,
    /// Cylinder `w` is followed by the cylinders `w'` with `w'_{k} = w_{k+1}`.
    pub successors: Vec<Vec<usize>>,
}

fn shift_successors(a: &[Vec<u8>], words: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut by_prefix: HashMap<&[usize], Vec<usize>> = HashMap::new();
    for (i, w) in words.iter().enumerate() {
        by_prefix.entry(&w[..w.len() - 1]).or_default().push(i);
    }
    let last = |w: &[usize]| w[w.len() - 1];
    words
        .iter()
        .map(|w| {
            by_prefix
                .get(&w[1..])
                .map(|c| c.iter().copied().filter(|&j| a[last(w)][last(&words[j])] != 0).collect())
                .unwrap_or_default()
        })
        .collect()
}

impl WeightedChain {
    /// Refines a partition into cylinders of the given depth.
    ///
    /// `log|Df|` is always included as a potential, ahead of `potentials`.
    pub fn refine<M: UnimodalMap + ?Sized>(
        map: &M,
        partition: &CyclePartition,
        depth: usize,
        potentials: &[Observable],
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("refinement depth must be at least 1".into()));
        }
        if partition.is_empty() {
            return Err(Error::Partition { level: partition.m, reason: "empty partition".into() });
        }
        if !(partition.surrogate || mixing_check(partition)) {
            return Err(Error::Partition {
                level: partition.m,
                reason: "chain is neither mixing nor the two-interval surrogate".into(),
            });
        }
        let mut pots = vec![Observable::LogAbsDeriv];
        for o in potentials {
            if !pots.iter().any(|q| q.id() == o.id()) {
                pots.push(o.clone());
            }
        }
        let p = partition.p;
        let words = admissible_words(&partition.a, depth);
        #[allow(clippy::type_complexity)]
        let rows: Vec<Result<(Interval, Vec<f64>, Vec<f64>)>> = words
            .par_iter()
            .map(|w| {
                let iv = cylinder(map, partition, w);
                if iv.width() < MIN_CYLINDER_WIDTH {
                    return Err(Error::DepthLimit { depth, max_usable: depth - 1 });
                }
                let k = pots.len();
                let mut total = vec![KahanSum::new(); k];
                let (mut lo, mut hi) = (vec![f64::INFINITY; k], vec![f64::NEG_INFINITY; k]);
                let symbol_sums = |x: f64| {
                    let mut acc = vec![KahanSum::new(); k];
                    let mut y = x;
                    for _ in 0..p {
                        for (a, o) in acc.iter_mut().zip(&pots) {
                            a.add(o.value(map, y));
                        }
                        y = map.apply(y);
                    }
                    acc.iter().map(|a| a.value()).collect::<Vec<f64>>()
                };
                for x in iv.linspace(SAMPLES_PER_CYLINDER) {
                    for (i, v) in symbol_sums(x).into_iter().enumerate() {
                        total[i].add(v);
                        lo[i] = lo[i].min(v);
                        hi[i] = hi[i].max(v);
                    }
                }
                // A word that closes up is represented by its periodic point, so
                // periodic orbit measures of the chain carry their exact weights.
                let avgs: Vec<f64> = if partition.a[w[w.len() - 1]][w[0]] != 0 {
                    let x = periodic_point(map, partition, w)?;
                    symbol_sums(x).into_iter().map(|v| v / p as f64).collect()
                } else {
                    total.iter().map(|s| s.value() / (SAMPLES_PER_CYLINDER * p) as f64).collect()
                };
                if avgs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite potential on cylinder {w:?}")));
                }
                let osc = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
                Ok((iv, avgs, osc))
            })
            .collect();
        let mut chain = WeightedChain {
            m: partition.m,
            p,
            depth,
            a: partition.a.clone(),
            successors: shift_successors(&partition.a, &words),
            intervals: Vec::with_capacity(words.len()),
            potential_ids: pots.iter().map(|o| o.id()).collect(),
            potential_avgs: Vec::with_capacity(words.len()),
            oscillations: Vec::with_capacity(words.len()),
            words,
        };
        for r in rows {
            let (iv, avgs, osc) = r?;
            chain.intervals.push(iv);
            chain.potential_avgs.push(avgs);
            chain.oscillations.push(osc);
        }
        Ok(chain)
    }

    /// A chain on the shift of finite type `A` with locally constant
    /// potentials: `values[s]` is the potential on symbol `s`. Without an
    /// explicit `logdf` entry the exponent potential is identically zero.
    pub fn symbolic(a: Vec<Vec<u8>>, depth: usize, potentials: &[(&str, Vec<f64>)]) -> Result<Self> {
        let n = a.len();
        if n == 0 || a.iter().any(|r| r.len() != n) {
            return Err(Error::Config("transition matrix must be square and nonempty".into()));
        }
        if depth == 0 {
            return Err(Error::Config("refinement depth must be at least 1".into()));
        }
        let mut pots: Vec<(String, Vec<f64>)> = vec![(LOGDF.into(), vec![0.0; n])];
        for (id, vals) in potentials {
            if vals.len() != n {
                return Err(Error::Config(format!("potential {id} needs {n} values")));
            }
            match pots.iter_mut().find(|(pid, _)| pid == id) {
                Some(slot) => slot.1 = vals.clone(),
                None => pots.push(((*id).into(), vals.clone())),
            }
        }
        let pots_len = pots.len();
        let words = admissible_words(&a, depth);
        let avgs = words.iter().map(|w| pots.iter().map(|(_, v)| v[w[0]]).collect()).collect();
        Ok(WeightedChain {
            m: 0,
            p: 1,
            depth,
            successors: shift_successors(&a, &words),
            a,
            intervals: Vec::new(),
            potential_ids: pots.into_iter().map(|(id, _)| id).collect(),
            potential_avgs: avgs,
            oscillations: vec![vec![0.0; pots_len]; words.len()],
            words,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn potential_index(&self, id: &str) -> Result<usize> {
        self.potential_ids
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::Query(format!("chain carries no potential {id:?}")))
    }

    /// Largest one-symbol oscillation of a potential over all cylinders.
    pub fn max_oscillation(&self, id: &str) -> Result<f64> {
        let i = self.potential_index(id)?;
        Ok(self.oscillations.iter().map(|o| o[i]).fold(0.0, f64::max))
    }


    fn coefficient_vector(&self, coeff: &Coefficients) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.potential_ids.len()];
        for (id, c) in coeff {
            v[self.potential_index(id)?] += c;
        }
        Ok(v)
    }
}

fn pressure_vec(chain: &WeightedChain, cv: &[f64]) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::Numeric("empty chain".into()));
    }
    let p = chain.p as f64;
    let lw: Vec<f64> = chain
        .potential_avgs
        .iter()
        .map(|avg| p * avg.iter().zip(cv).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("non-finite cylinder weight".into()));
    }
    let m = SparseMatrix {
        n: chain.len(),
        rows: chain
            .successors
            .iter()
            .zip(&lw)
            .map(|(succ, l)| {
                let v = (l - top).exp();
                succ.iter().map(|&j| (j, v)).collect()
            })
            .collect(),
    };
    let rho = spectral_radius_sparse(&m, POWER_TOL, POWER_MAX_ITER)?;
    if rho <= 0.0 {
        return Err(Error::Numeric("chain admits no infinite path".into()));
    }
    Ok((rho.ln() + top) / p)
}

/// Topological pressure per step of `f` of `Σ coeff·potential`.
pub fn pressure(chain: &WeightedChain, coeff: &Coefficients) -> Result<f64> {
    pressure_vec(chain, &chain.coefficient_vector(coeff)?)
}

/// Bound on the pressure error from replacing potentials by cylinder
/// averages: the worst one-symbol oscillation, per step.
pub fn pressure_error_bound(chain: &WeightedChain, coeff: &Coefficients) -> Result<f64> {
    let cv = chain.coefficient_vector(coeff)?;
    let worst = chain
        .oscillations
        .iter()
        .map(|o| o.iter().zip(&cv).map(|(a, c)| a * c.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(worst / chain.p as f64)
}

/// Statistics of the equilibrium state of a coefficient point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub pressure: f64,
    pub h: f64,
    pub chi: f64,
    pub means: BTreeMap<String, f64>,
}

pub fn equilibrium_stats(chain: &WeightedChain, coeff: &Coefficients) -> Result<Equilibrium> {
    let cv = chain.coefficient_vector(coeff)?;
    let p0 = pressure_vec(chain, &cv)?;
    let mut means = BTreeMap::new();
    let mut dot = 0.0;
    for (i, id) in chain.potential_ids.iter().enumerate() {
        let central = |h: f64| -> Result<f64> {
            let mut up = cv.clone();
            let mut dn = cv.clone();
            up[i] += h;
            dn[i] -= h;
            Ok((pressure_vec(chain, &up)? - pressure_vec(chain, &dn)?) / (2.0 * h))
        };
        let d1 = central(DIFF_STEP)?;
        let d2 = central(0.5 * DIFF_STEP)?;
        let mean = (4.0 * d2 - d1) / 3.0;
        dot += cv[i] * mean;
        means.insert(id.clone(), mean);
    }
    let chi = means[LOGDF];
    Ok(Equilibrium { pressure: p0, h: p0 - dot, chi, means })
}

/// Pressure along one coefficient direction with the others held at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub potential: String,
    pub t_grid: Vec<f64>,
    pub p_values: Vec<f64>,
    pub dp_values: Vec<f64>,
    pub error_bounds: Vec<f64>,
}

#[derive(Serialize)]
struct PressureRow {
    t: f64,
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "dP")]
    dp: f64,
}

impl PressureCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for ((t, p), dp) in self.t_grid.iter().zip(&self.p_values).zip(&self.dp_values) {
            wr.serialize(PressureRow { t: *t, p: *p, dp: *dp })?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn pressure_curve(
    chain: &WeightedChain,
    base: &Coefficients,
    direction: &str,
    t_grid: &[f64],
) -> Result<PressureCurve> {
    chain.potential_index(direction)?;
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("t grid must be strictly increasing".into()));
    }
    let rows: Vec<Result<(f64, f64, f64)>> = t_grid
        .par_iter()
        .map(|&t| {
            let mut c = base.clone();
            c.insert(direction.to_string(), t);
            let eq = equilibrium_stats(chain, &c)?;
            Ok((eq.pressure, eq.means[direction], pressure_error_bound(chain, &c)?))
        })
        .collect();
    let mut curve = PressureCurve {
        potential: direction.to_string(),
        t_grid: t_grid.to_vec(),
        p_values: Vec::new(),
        dp_values: Vec::new(),
        error_bounds: Vec::new(),
    };
    for r in rows {
        let (p, dp, e) = r?;
        curve.p_values.push(p);
        curve.dp_values.push(dp);
        curve.error_bounds.push(e);
    }
    Ok(curve)
}

/// Cyclic words of length `1..=max_len`: admissible words that close up.
pub fn periodic_words(a: &[Vec<u8>], max_len: usize) -> Vec<Vec<usize>> {
    (1..=max_len)
        .flat_map(|len| admissible_words(a, len))
        .filter(|w| a[w[w.len() - 1]][w[0]] != 0)
        .collect()
}

/// The periodic point of `g = f^{p_m}` coded by the cyclic word, located as
/// the midpoint of the cylinder of a long repetition of the word.
///
/// The repetition is built by pulling back through the word's inverse
/// branches, stopping before the cylinder collapses.
pub fn periodic_point<M: UnimodalMap + ?Sized>(
    map: &M,
    partition: &CyclePartition,
    word: &[usize],
) -> Result<f64> {
    if word.is_empty() || partition.a[word[word.len() - 1]][word[0]] == 0 {
        return Err(Error::Query(format!("{word:?} is not a cyclic word")));
    }
    let through_word = |target: Interval| {
        word.iter().rev().fold(target, |t, &s| pull_back(map, partition.p, partition.elements[s], t))
    };
    let mut iv = cylinder(map, partition, word);
    let mut len = word.len();
    while len < 64 {
        let next = through_word(iv);
        if next.width() < MIN_CYLINDER_WIDTH {
            break;
        }
        iv = next;
        len += word.len();
    }
    Ok(iv.mid())
}

/// Which part of the phase space a measure component lives on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    /// The expanding boundary fixed point of `X`.
    Boundary,
    /// An equilibrium state on the chain of a cascade level.
    Level(usize),
    /// The measure on the attracting Cantor set.
    PostCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub kind: ComponentKind,
    pub weight: f64,
    /// Equilibrium parameter, absent for point masses and the post-critical measure.
    pub t: Option<f64>,
}

/// An invariant measure written as a convex combination of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub components: Vec<Component>,
    pub h: f64,
    pub chi: f64,
    pub phi_means: BTreeMap<String, f64>,
    pub infinitely_renormalizable: bool,
    /// `(1/n) log|Df^n|` along the critical orbit, for the post-critical component.
    pub orbit_lyapunov: Option<f64>,
}

impl MeasureSummary {
    pub fn check(&self) -> Result<()> {
        let total = ksum(self.components.iter().map(|c| c.weight));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric(format!("component weights sum to {total}")));
        }
        if self.components.iter().any(|c| !(0.0..=1.0).contains(&c.weight)) {
            return Err(Error::Numeric("component weight outside [0, 1]".into()));
        }
        if self.h < -1e-8 {
            return Err(Error::Numeric(format!("negative entropy {}", self.h)));
        }
        if self.infinitely_renormalizable {
            if self.chi < -1e-8 {
                return Err(Error::Numeric(format!("negative exponent {}", self.chi)));
            }
            if f_of(self) > 1e-8 {
                return Err(Error::Numeric(format!("h − χ = {} is positive", f_of(self))));
            }
        }
        Ok(())
    }

    /// Convex combination `Σ ρ_i μ_i`. Means missing from some part are dropped.
    pub fn mix(parts: &[(f64, &MeasureSummary)]) -> Result<MeasureSummary> {
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.is_empty() || (total - 1.0).abs() > 1e-12 || parts.iter().any(|(w, _)| *w < 0.0) {
            return Err(Error::Config("mixture weights must be a probability vector".into()));
        }
        let mut components = Vec::new();
        let (mut h, mut chi) = (KahanSum::new(), KahanSum::new());
        for (w, s) in parts {
            components.extend(s.components.iter().map(|c| Component { weight: c.weight * w, ..c.clone() }));
            h.add(w * s.h);
            chi.add(w * s.chi);
        }
        let mut phi_means = BTreeMap::new();
        for id in parts[0].1.phi_means.keys() {
            if parts.iter().all(|(_, s)| s.phi_means.contains_key(id)) {
                phi_means.insert(id.clone(), parts.iter().map(|(w, s)| w * s.phi_means[id]).sum());
            }
        }
        Ok(MeasureSummary {
            components,
            h: h.value(),
            chi: chi.value(),
            phi_means,
            infinitely_renormalizable: parts.iter().all(|(_, s)| s.infinitely_renormalizable),
            orbit_lyapunov: None,
        })
    }
}

/// `F(μ) = h(μ) − χ(μ)`.
pub fn f_of(summary: &MeasureSummary) -> f64 {
    summary.h - summary.chi
}

/// Summary of the equilibrium state of a level chain.
pub fn level_summary(chain: &WeightedChain, coeff: &Coefficients, t: Option<f64>) -> Result<MeasureSummary> {
    let eq = equilibrium_stats(chain, coeff)?;
    Ok(MeasureSummary {
        components: vec![Component { kind: ComponentKind::Level(chain.m), weight: 1.0, t }],
        h: eq.h,
        chi: eq.chi,
        phi_means: eq.means,
        infinitely_renormalizable: false,
        orbit_lyapunov: None,
    })
}

/// The endpoint of `X` fixed by `f` with `|Df| > 1`, if any.
pub fn boundary_fixed_point<M: UnimodalMap + ?Sized>(map: &M) -> Option<f64> {
    let d = map.domain();
    [d.lo, d.hi]
        .into_iter()
        .find(|&e| (map.apply(e) - e).abs() <= 1e-12 && map.deriv(e).abs() > 1.0)
}

/// Point mass at the boundary fixed point.
pub fn boundary_summary<M: UnimodalMap + ?Sized>(map: &M, observables: &[Observable]) -> Result<MeasureSummary> {
    let e = boundary_fixed_point(map)
        .ok_or_else(|| Error::Numeric("no expanding boundary fixed point".into()))?;
    Ok(MeasureSummary {
        components: vec![Component { kind: ComponentKind::Boundary, weight: 1.0, t: None }],
        h: 0.0,
        chi: map.deriv(e).abs().ln(),
        phi_means: observables.iter().map(|o| (o.id(), o.value(map, e))).collect(),
        infinitely_renormalizable: false,
        orbit_lyapunov: None,
    })
}

fn require_infinite_mode(cascade: &Cascade) -> Result<()> {
    if !cascade.truncated {
        return Err(Error::Mode(format!(
            "the cascade terminates at depth {}; the map is only finitely renormalizable",
            cascade.depth_found
        )));
    }
    Ok(())
}

/// Averages along the critical orbit, standing in for the post-critical measure.
pub fn post_critical_stats<M: UnimodalMap + ?Sized>(
    map: &M,
    cascade: &Cascade,
    burn_in: usize,
    n: usize,
    observables: &[Observable],
) -> Result<MeasureSummary> {
    require_infinite_mode(cascade)?;
    if cascade.depth_found < 4 {
        return Err(Error::Mode(format!("cascade depth {} is below 4", cascade.depth_found)));
    }
    if n == 0 {
        return Err(Error::Config("orbit length must be at least 1".into()));
    }
    let mut cover = cycle_cover(map, cascade, cascade.depth_found)?;
    cover.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let inside = |x: f64| {
        let k = cover.partition_point(|iv| iv.lo <= x);
        k > 0 && cover[k - 1].contains_tol(x, 1e-9) || k < cover.len() && cover[k].contains_tol(x, 1e-9)
    };
    let x = map.apply_n(map.critical_point(), burn_in);
    let mut y = x;
    let mut sums = vec![KahanSum::new(); observables.len()];
    let mut lyap = KahanSum::new();
    for step in 0..n {
        if !inside(y) {
            return Err(Error::Cascade {
                level: cascade.depth_found,
                reason: format!("critical orbit leaves the deepest cycle at step {}", burn_in + step),
            });
        }
        for (s, o) in sums.iter_mut().zip(observables) {
            s.add(o.value(map, y));
        }
        lyap.add(map.deriv(y).abs().ln());
        y = map.apply(y);
    }
    Ok(MeasureSummary {
        components: vec![Component { kind: ComponentKind::PostCritical, weight: 1.0, t: None }],
        h: 0.0,
        chi: 0.0,
        phi_means: observables.iter().zip(&sums).map(|(o, s)| (o.id(), s.value() / n as f64)).collect(),
        infinitely_renormalizable: true,
        orbit_lyapunov: Some(lyap.value() / n as f64),
    })
}

/// Equilibrium parameters used to trace each level's `(∫φ, h − χ)` curve.
pub const T_GRID: [f64; 19] = [
    -64.0, -32.0, -16.0, -8.0, -4.0, -2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0,
];

/// Burn-in and length of the critical orbit used for the post-critical mean.
pub const POST_CRITICAL_ORBIT: (usize, usize) = (1_000, 100_000);

/// Level-1 rate function of an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub observable: String,
    pub alpha_grid: Vec<f64>,
    /// `+∞` outside the feasible range.
    #[serde(with = "crate::serde_ext::vec_ext")]
    pub i_values: Vec<f64>,
    pub feasible_range: (f64, f64),
    /// `∫φ dμ_∞`.
    pub mu_infinity_mean: f64,
    /// Knots of the combined concave function `α ↦ sup{h − χ : ∫φ = α}`.
    pub hull: Vec<(f64, f64)>,
    pub levels: usize,
}

#[derive(Serialize)]
struct RateRow {
    alpha: f64,
    #[serde(rename = "I")]
    i: f64,
}

impl RateCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (a, i) in self.alpha_grid.iter().zip(&self.i_values) {
            wr.serialize(RateRow { alpha: *a, i: *i })?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `inf_{β ≥ α} I(β)` from the combined hull.
    pub fn tail_inf(&self, alpha: f64) -> f64 {
        let (lo, hi) = self.feasible_range;
        if alpha > hi {
            return f64::INFINITY;
        }
        let a = alpha.max(lo);
        if a <= self.mu_infinity_mean {
            return 0.0;
        }
        eval_piecewise(&self.hull, a, 1e-12).map_or(f64::INFINITY, |g| (-g).max(0.0))
    }
}

/// `(∫φ, h − χ)` for equilibria of `tφ − log|Df|` along [`T_GRID`].
fn level_points(chain: &WeightedChain, phi: &str) -> Result<Vec<(f64, f64)>> {
    T_GRID
        .par_iter()
        .map(|&t| {
            let c = coefficients(&[(phi, t), (LOGDF, -1.0)]);
            let eq = equilibrium_stats(chain, &c)?;
            Ok((eq.means[phi], eq.h - eq.chi))
        })
        .collect()
}

/// Level-1 rate function `I_φ` on `alpha_grid` for an infinitely
/// renormalizable map, combining the chains of levels `0..depth_m`, the
/// boundary fixed point and the post-critical measure.
///
/// The supremum over convex combinations of components is the upper concave
/// hull of the union of their `(∫φ, h − χ)` points, which is computed exactly.
pub fn rate_level1<M: UnimodalMap + ?Sized>(
    map: &M,
    cascade: &Cascade,
    phi: &Observable,
    alpha_grid: &[f64],
    depth_m: usize,
    refine_depth: usize,
) -> Result<RateCurve> {
    require_infinite_mode(cascade)?;
    if depth_m == 0 || depth_m > cascade.depth_found {
        return Err(Error::Cascade {
            level: depth_m,
            reason: format!("need 1 ≤ depth_m ≤ {}", cascade.depth_found),
        });
    }
    let id = phi.id();
    let mut points = Vec::new();
    for m in 0..depth_m {
        let part = build_partition(map, cascade, m)?;
        let chain = WeightedChain::refine(map, &part, refine_depth, std::slice::from_ref(phi))?;
        points.extend(level_points(&chain, &id)?);
    }
    if let Ok(b) = boundary_summary(map, std::slice::from_ref(phi)) {
        points.push((b.phi_means[&id], f_of(&b)));
    }
    let (burn, n) = POST_CRITICAL_ORBIT;
    let post = post_critical_stats(map, cascade, burn, n, std::slice::from_ref(phi))?;
    // χ(μ_∞) = 0 exactly; the orbit average only approaches it.
    let beta_inf = if matches!(phi, Observable::LogAbsDeriv) { 0.0 } else { post.phi_means[&id] };
    points.push((beta_inf, 0.0));

    let hull = upper_concave_hull(&points);
    let feasible_range = (hull[0].0, hull[hull.len() - 1].0);
    let i_values = alpha_grid
        .iter()
        .map(|&a| eval_piecewise(&hull, a, 1e-12).map_or(f64::INFINITY, |g| (-g).max(0.0)))
        .collect();
    Ok(RateCurve {
        observable: id,
        alpha_grid: alpha_grid.to_vec(),
        i_values,
        feasible_range,
        mu_infinity_mean: beta_inf,
        hull,
        levels: depth_m,
    })
}

/// Numerical witness that `χ` is continuous along sequences of measures
/// moving mass toward the post-critical measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiProbe {
    /// Per-step exponent of the `h − χ` maximizing equilibrium of each level.
    pub per_level_chi: Vec<(usize, f64)>,
    /// `(weight on the level-0 equilibrium, χ of the mixture with μ_∞)`.
    pub mixture: Vec<(f64, f64)>,
    pub limit: f64,
    pub converged: bool,
}

pub const PROBE_REFINE_DEPTH: usize = 6;

pub fn chi_continuity_probe<M: UnimodalMap + ?Sized>(
    map: &M,
    cascade: &Cascade,
    depth_m: usize,
) -> Result<ChiProbe> {
    require_infinite_mode(cascade)?;
    let depth_m = depth_m.min(cascade.depth_found);
    let post = MeasureSummary {
        components: vec![Component { kind: ComponentKind::PostCritical, weight: 1.0, t: None }],
        h: 0.0,
        chi: 0.0,
        phi_means: BTreeMap::new(),
        infinitely_renormalizable: true,
        orbit_lyapunov: None,
    };
    let c = coefficients(&[(LOGDF, -1.0)]);
    let mut per_level = Vec::new();
    let mut level0 = None;
    for m in 0..depth_m {
        let part = build_partition(map, cascade, m)?;
        let chain = WeightedChain::refine(map, &part, PROBE_REFINE_DEPTH, &[])?;
        let s = level_summary(&chain, &c, None)?;
        per_level.push((m, s.chi));
        if m == 0 {
            level0 = Some(s);
        }
    }
    let mut mixture = Vec::new();
    if let Some(l0) = &level0 {
        for k in (0..=10).map(|e| 1usize << e) {
            let w = 1.0 / k as f64;
            let mix = MeasureSummary::mix(&[(1.0 - w, &post), (w, l0)])?;
            mixture.push((w, mix.chi));
        }
    } else {
        mixture.push((0.0, post.chi));
    }
    let converged = mixture.last().is_some_and(|(_, chi)| chi.abs() <= 1e-2)
        && mixture.windows(2).all(|w| w[1].1.abs() <= w[0].1.abs() + 1e-12);
    Ok(ChiProbe { per_level_chi: per_level, mixture, limit: 0.0, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{feigenbaum_parameter, Family, QuadraticMap};
    use crate::renorm::cascade;
    use proptest::prelude::*;

    const FULL: [[u8; 2]; 2] = [[1, 1], [1, 1]];
    const GOLDEN: [[u8; 2]; 2] = [[1, 1], [1, 0]];

    fn mat(a: [[u8; 2]; 2]) -> Vec<Vec<u8>> {
        a.iter().map(|r| r.to_vec()).collect()
    }

    fn none() -> Coefficients {
        Coefficients::new()
    }

    #[test]
    fn shift_pressures() {
        let full = WeightedChain::symbolic(mat(FULL), 3, &[]).unwrap();
        assert_eq!(full.len(), 8);
        assert!((pressure(&full, &none()).unwrap() - 2f64.ln()).abs() < 1e-10);
        let golden = WeightedChain::symbolic(mat(GOLDEN), 3, &[]).unwrap();
        assert_eq!(golden.len(), 5);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((pressure(&golden, &none()).unwrap() - phi.ln()).abs() < 1e-8);
    }

    #[test]
    fn constant_shift_law() {
        let chain = WeightedChain::symbolic(mat(GOLDEN), 4, &[("u", vec![0.3, -1.1]), ("one", vec![1.0, 1.0])]).unwrap();
        let base = coefficients(&[("u", 1.7)]);
        let shifted = coefficients(&[("u", 1.7), ("one", 0.37)]);
        let d = pressure(&chain, &shifted).unwrap() - pressure(&chain, &base).unwrap();
        assert!((d - 0.37).abs() < 1e-10);
    }

    #[test]
    fn maximal_entropy_means() {
        let chain = WeightedChain::symbolic(mat(FULL), 2, &[("u", vec![1.0, 0.0])]).unwrap();
        let eq = equilibrium_stats(&chain, &none()).unwrap();
        assert!((eq.h - 2f64.ln()).abs() < 1e-8);
        assert!((eq.means["u"] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn legendre_identity_and_entropy() {
        let chain = WeightedChain::symbolic(mat(GOLDEN), 3, &[("u", vec![0.2, 1.0])]).unwrap();
        for t in [-3.0, -0.5, 0.0, 1.0, 4.0] {
            let c = coefficients(&[("u", t)]);
            let eq = equilibrium_stats(&chain, &c).unwrap();
            assert!((eq.h + t * eq.means["u"] - eq.pressure).abs() < 1e-6);
            assert!(eq.h >= -1e-8 && eq.h <= (1.0 + 5f64.sqrt()).ln());
        }
    }

    #[test]
    fn markov_measure_oracle() {
        // Golden mean with zero potential: the measure of maximal entropy gives
        // symbol 1 the frequency 1/(1 + φ²).
        let chain = WeightedChain::symbolic(mat(GOLDEN), 5, &[("u", vec![0.0, 1.0])]).unwrap();
        let eq = equilibrium_stats(&chain, &none()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((eq.means["u"] - 1.0 / (1.0 + phi * phi)).abs() < 1e-7);
    }

    #[test]
    fn variational_brute_force_on_shift() {
        let vals = vec![0.4, -0.9];
        let chain = WeightedChain::symbolic(mat(GOLDEN), 1, &[("u", vals.clone())]).unwrap();
        for t in [-2.0, 0.0, 3.0] {
            let p = pressure(&chain, &coefficients(&[("u", t)])).unwrap();
            for w in periodic_words(&chain.a, 8) {
                let avg: f64 = w.iter().map(|&s| vals[s]).sum::<f64>() / w.len() as f64;
                assert!(t * avg <= p + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn pressure_convex_in_coefficient(v0 in -2.0f64..2.0, v1 in -2.0f64..2.0, t0 in -3.0f64..3.0) {
            let chain = WeightedChain::symbolic(mat(GOLDEN), 2, &[("u", vec![v0, v1])]).unwrap();
            let p = |t: f64| pressure(&chain, &coefficients(&[("u", t)])).unwrap();
            let h = 0.25;
            prop_assert!(p(t0) <= 0.5 * (p(t0 - h) + p(t0 + h)) + 1e-8);
        }

        #[test]
        fn relabel_invariance(bits in proptest::collection::vec(0u8..2, 9), w in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let a: Vec<Vec<u8>> = (0..3).map(|i| bits[3 * i..3 * i + 3].to_vec()).collect();
            prop_assume!(crate::renorm::is_primitive(&a));
            let perm = [2usize, 0, 1];
            let b: Vec<Vec<u8>> = (0..3).map(|i| (0..3).map(|k| a[perm[i]][perm[k]]).collect()).collect();
            let wb: Vec<f64> = (0..3).map(|i| w[perm[i]]).collect();
            let pa = pressure(&WeightedChain::symbolic(a, 3, &[("u", w.clone())]).unwrap(), &coefficients(&[("u", 1.3)])).unwrap();
            let pb = pressure(&WeightedChain::symbolic(b, 3, &[("u", wb)]).unwrap(), &coefficients(&[("u", 1.3)])).unwrap();
            prop_assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_potential_is_a_query_error() {
        let chain = WeightedChain::symbolic(mat(FULL), 1, &[]).unwrap();
        assert!(matches!(pressure(&chain, &coefficients(&[("nope", 1.0)])), Err(Error::Query(_))));
    }

    #[test]
    fn point_mass_f_value() {
        let map = QuadraticMap::new(4.0).unwrap();
        // Point mass at the fixed point 3/4: h = 0, χ = log|Df(3/4)| = log 2.
        let s = MeasureSummary {
            components: vec![Component { kind: ComponentKind::Level(0), weight: 1.0, t: None }],
            h: 0.0,
            chi: map.deriv(0.75).abs().ln(),
            phi_means: BTreeMap::new(),
            infinitely_renormalizable: false,
            orbit_lyapunov: None,
        };
        assert!((f_of(&s) + 2f64.ln()).abs() < 1e-15);
        let b = boundary_summary(&map, &[]).unwrap();
        assert!((b.chi - 4f64.ln()).abs() < 1e-15);
    }

    fn window_chain(depth: usize) -> (QuadraticMap, WeightedChain, CyclePartition) {
        let map = QuadraticMap::new(3.832).unwrap();
        let cas = cascade(&map, 2, 16).unwrap();
        let part = build_partition(&map, &cas, 0).unwrap();
        let chain = WeightedChain::refine(&map, &part, depth, &[Observable::Coordinate]).unwrap();
        (map, chain, part)
    }

    #[test]
    fn refine_depth_one_is_the_partition() {
        let (_, chain, part) = window_chain(1);
        assert_eq!(chain.intervals, part.elements);
    }

    #[test]
    fn refined_cylinders_nest_and_oscillation_shrinks() {
        let (_, c2, _) = window_chain(2);
        let (_, c3, _) = window_chain(3);
        for (w, iv) in c3.words.iter().zip(&c3.intervals) {
            let k = c2.words.iter().position(|v| v[..] == w[..2]).unwrap();
            assert!(c2.intervals[k].covers(iv, 1e-12));
        }
        let (_, c6, _) = window_chain(6);
        assert!(c6.max_oscillation(LOGDF).unwrap() <= c2.max_oscillation(LOGDF).unwrap());
    }

    #[test]
    fn chain_pressure_is_ruelle_consistent() {
        let (_, chain, _) = window_chain(12);
        let eq = equilibrium_stats(&chain, &coefficients(&[(LOGDF, -1.0)])).unwrap();
        // F = P(−log|Df|) ≤ 0 on a repelling set, and h − χ = P.
        assert!(eq.pressure <= 1e-6, "{}", eq.pressure);
        assert!((eq.h - eq.chi - eq.pressure).abs() < 1e-6);
        // χ along t·(−log|Df|) decreases with t toward the least expanding orbit.
        let chis: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t| equilibrium_stats(&chain, &coefficients(&[(LOGDF, -t)])).unwrap().chi)
            .collect();
        assert!(chis.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{chis:?}");
    }

    #[test]
    fn periodic_orbits_respect_the_variational_bound() {
        let (map, chain, part) = window_chain(8);
        let c = coefficients(&[(LOGDF, -1.0)]);
        let p = pressure(&chain, &c).unwrap();
        for w in periodic_words(&part.a, 6) {
            let x = periodic_point(&map, &part, &w).unwrap();
            let steps = part.p * w.len();
            let avg = -Observable::LogAbsDeriv.birkhoff_sum(&map, x, steps) / steps as f64;
            assert!(avg <= p + 1e-3, "{w:?}: {avg} > {p}");
        }
    }

    #[test]
    fn finite_mode_is_refused() {
        let map = QuadraticMap::new(3.5).unwrap();
        let cas = cascade(&map, 10, 16).unwrap();
        let r = rate_level1(&map, &cas, &Observable::LogAbsDeriv, &[0.1], 1, 4);
        assert!(matches!(r, Err(Error::Mode(_))));
    }

    #[test]
    fn post_critical_constant_and_stability() {
        let a = feigenbaum_parameter(Family::Quadratic).unwrap().value;
        let map = QuadraticMap::new(a).unwrap();
        let cas = cascade(&map, 8, 16).unwrap();
        let obs = [Observable::Constant(1.0), Observable::Coordinate];
        let s1 = post_critical_stats(&map, &cas, 1_000, 100_000, &obs).unwrap();
        let s2 = post_critical_stats(&map, &cas, 10_000, 100_000, &obs).unwrap();
        assert_eq!(s1.phi_means["const(1)"], 1.0);
        assert!((s1.phi_means["x"] - s2.phi_means["x"]).abs() < 1e-3);
        assert!(s1.orbit_lyapunov.unwrap().abs() <= 0.02);
        s1.check().unwrap();
        assert_eq!(f_of(&s1), 0.0);
    }

    #[test]
    fn chi_probe_at_feigenbaum() {
        let a = feigenbaum_parameter(Family::Quadratic).unwrap().value;
        let map = QuadraticMap::new(a).unwrap();
        let cas = cascade(&map, 8, 16).unwrap();
        let probe = chi_continuity_probe(&map, &cas, 6).unwrap();
        assert!(probe.converged);
        let chis: Vec<f64> = probe.per_level_chi.iter().map(|p| p.1).collect();
        assert!(chis.windows(2).all(|w| w[1] < w[0]), "{chis:?}");
        let (w, chi) = probe.mixture[3];
        assert!((chi - w * chis[0]).abs() < 1e-12);
    }

    #[test]
    fn feigenbaum_rate_is_identity() {
        let a = feigenbaum_parameter(Family::Quadratic).unwrap().value;
        let map = QuadraticMap::new(a).unwrap();
        let cas = cascade(&map, 8, 16).unwrap();
        let grid: Vec<f64> = (0..=12).map(|k| 0.05 * k as f64).collect();
        let rc = rate_level1(&map, &cas, &Observable::LogAbsDeriv, &grid, 6, 8).unwrap();
        for (a, i) in rc.alpha_grid.iter().zip(&rc.i_values) {
            assert!(*i >= 0.0);
            if *a >= 0.1 {
                assert!((i - a).abs() <= 0.1, "I({a}) = {i}");
            }
        }
        assert_eq!(rc.i_values[0], 0.0);
        let mut out = Vec::new();
        rc.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("alpha,I\n"));
    }
}
