//! S-unimodal maps: evaluation, derivatives, Schwarzian, orbits with
//! log-derivative accumulation, Birkhoff averages, and the distinguished
//! parameters of the quadratic family (superstable and Feigenbaum).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::numerics::{bisect, KahanSum};

/// How a map is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `x ↦ a x (1 − x)` on `[0, 1]`.
    Quadratic,
    /// A map supplied through callbacks (see [`UserMap`]).
    UserTable,
}

/// Serializable description of a concrete S-unimodal map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnimodalMapSpec {
    pub family: Family,
    pub param: f64,
    pub domain: Interval,
    pub critical_point: f64,
    pub critical_order: f64,
}

/// A unimodal interval map with enough smoothness to form the Schwarzian.
///
/// `apply` and the derivative methods do not check the domain; the free
/// functions [`eval`], [`derivative`] and [`schwarzian`] do.
pub trait UnimodalMap: Send + Sync {
    fn spec(&self) -> &UnimodalMapSpec;
    fn apply(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    fn deriv2(&self, x: f64) -> f64;
    fn deriv3(&self, x: f64) -> f64;

    fn domain(&self) -> Interval {
        self.spec().domain
    }

    fn critical_point(&self) -> f64 {
        self.spec().critical_point
    }

    /// `f^n(x)`.
    fn apply_n(&self, x: f64, n: usize) -> f64 {
        let mut y = x;
        for _ in 0..n {
            y = self.apply(y);
        }
        y
    }

    /// `(f^n(x), Df^n(x))`.
    fn apply_n_with_deriv(&self, x: f64, n: usize) -> (f64, f64) {
        let (mut y, mut d) = (x, 1.0);
        for _ in 0..n {
            d *= self.deriv(y);
            y = self.apply(y);
        }
        (y, d)
    }

    /// `(f^n(x), log|Df^n(x)|)` accumulated in log space.
    fn apply_n_with_logderiv(&self, x: f64, n: usize) -> (f64, f64) {
        let (mut y, mut s) = (x, KahanSum::new());
        for _ in 0..n {
            s.add(self.deriv(y).abs().ln());
            y = self.apply(y);
        }
        (y, s.value())
    }
}

/// The quadratic family `x ↦ a x (1 − x)` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMap {
    a: f64,
    spec: UnimodalMapSpec,
}

impl QuadraticMap {
    /// Accepts `1 < a ≤ 4`, the range where `[0, 1]` is invariant and the
    /// map has an expanding boundary fixed point.
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 1.0 && a <= 4.0) {
            return Err(Error::Config(format!("quadratic parameter {a} outside (1, 4]")));
        }
        Ok(QuadraticMap {
            a,
            spec: UnimodalMapSpec {
                family: Family::Quadratic,
                param: a,
                domain: Interval::new(0.0, 1.0),
                critical_point: 0.5,
                critical_order: 2.0,
            },
        })
    }

    pub fn param(&self) -> f64 {
        self.a
    }
}

impl UnimodalMap for QuadraticMap {
    fn spec(&self) -> &UnimodalMapSpec {
        &self.spec
    }

    #[inline]
    fn apply(&self, x: f64) -> f64 {
        self.a * x * (1.0 - x)
    }

    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        self.a * (1.0 - 2.0 * x)
    }

    fn deriv2(&self, _x: f64) -> f64 {
        -2.0 * self.a
    }

    fn deriv3(&self, _x: f64) -> f64 {
        0.0
    }
}

type Callback = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied map given by its value and first three derivatives.
#[derive(Clone)]
pub struct UserMap {
    spec: UnimodalMapSpec,
    f: Callback,
    df: Callback,
    d2f: Callback,
    d3f: Callback,
}

impl fmt::Debug for UserMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserMap").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl UserMap {
    /// Builds the map and checks the sampled S-unimodal invariants.
    pub fn new(
        domain: Interval,
        critical_point: f64,
        critical_order: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d3f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(critical_order > 1.0) {
            return Err(Error::Config(format!("critical order {critical_order} must exceed 1")));
        }
        let map = UserMap {
            spec: UnimodalMapSpec {
                family: Family::UserTable,
                param: f64::NAN,
                domain,
                critical_point,
                critical_order,
            },
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
            d3f: Arc::new(d3f),
        };
        check_invariants(&map, 2001)?;
        Ok(map)
    }
}

impl UnimodalMap for UserMap {
    fn spec(&self) -> &UnimodalMapSpec {
        &self.spec
    }
    fn apply(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }
    fn deriv2(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }
    fn deriv3(&self, x: f64) -> f64 {
        (self.d3f)(x)
    }
}

impl UnimodalMapSpec {
    /// Instantiate a quadratic spec. User-table specs carry no callbacks and
    /// cannot be instantiated from their serialized form alone.
    pub fn instantiate(&self) -> Result<QuadraticMap> {
        match self.family {
            Family::Quadratic => QuadraticMap::new(self.param),
            Family::UserTable => Err(Error::Config(
                "user-table maps must be built with UserMap::new".into(),
            )),
        }
    }
}

/// Sampled check of the S-unimodal invariants: boundary maps to boundary,
/// `Df` has exactly one sign change (at `c`), and the Schwarzian is negative.
pub fn check_invariants<M: UnimodalMap + ?Sized>(map: &M, samples: usize) -> Result<()> {
    let x = map.domain();
    let c = map.critical_point();
    if !x.contains_interior(c, 0.0) {
        return Err(Error::Config(format!("critical point {c} not interior to the domain")));
    }
    let tol = 1e-9 * x.width();
    for e in [x.lo, x.hi] {
        let y = map.apply(e);
        if (y - x.lo).abs() > tol && (y - x.hi).abs() > tol {
            return Err(Error::Config(format!("f({e}) = {y} is not a boundary point")));
        }
    }
    if map.deriv(c).abs() > 1e-12 {
        return Err(Error::Config(format!("Df(c) = {} is not zero", map.deriv(c))));
    }
    let mut sign_changes = 0;
    let mut prev: Option<f64> = None;
    for s in x.linspace(samples) {
        if (s - c).abs() < 1e-9 * x.width() {
            continue;
        }
        let d = map.deriv(s);
        if d == 0.0 {
            return Err(Error::Config(format!("Df vanishes at non-critical point {s}")));
        }
        if let Some(p) = prev {
            if p.signum() != d.signum() {
                sign_changes += 1;
            }
        }
        prev = Some(d);
        if let Ok(sf) = schwarzian(map, s) {
            if sf >= 0.0 {
                return Err(Error::Config(format!("Schwarzian {sf} ≥ 0 at {s}")));
            }
        }
    }
    if sign_changes != 1 {
        return Err(Error::Config(format!("Df changes sign {sign_changes} times")));
    }
    Ok(())
}

fn check_domain<M: UnimodalMap + ?Sized>(map: &M, x: f64) -> Result<()> {
    let d = map.domain();
    if d.contains(x) {
        Ok(())
    } else {
        Err(Error::Domain { x, lo: d.lo, hi: d.hi })
    }
}

pub fn eval<M: UnimodalMap + ?Sized>(map: &M, x: f64) -> Result<f64> {
    check_domain(map, x)?;
    let d = map.domain();
    Ok(map.apply(x).clamp(d.lo, d.hi))
}

pub fn derivative<M: UnimodalMap + ?Sized>(map: &M, x: f64) -> Result<f64> {
    check_domain(map, x)?;
    Ok(map.deriv(x))
}

/// `D³f/Df − (3/2)(D²f/Df)²`.
pub fn schwarzian<M: UnimodalMap + ?Sized>(map: &M, x: f64) -> Result<f64> {
    check_domain(map, x)?;
    let d1 = map.deriv(x);
    if d1.abs() < 1e-12 {
        return Err(Error::Singularity { x, deriv: d1 });
    }
    let r = map.deriv2(x) / d1;
    Ok(map.deriv3(x) / d1 - 1.5 * r * r)
}

/// A finite orbit `x0, f(x0), …, f^{n−1}(x0)` with log-derivative prefix sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub x0: f64,
    pub n: usize,
    pub points: Vec<f64>,
    /// `f^n(x0)`, the point following the last stored one.
    pub end: f64,
    /// `logderiv_prefix[k] = Σ_{j<k} log|Df(points[j])|`, length `n + 1`.
    /// A critical hit makes that entry and all later ones `−∞`.
    pub logderiv_prefix: Vec<f64>,
}

impl OrbitSegment {
    /// `log|Df^n(x0)|`.
    pub fn log_derivative(&self) -> f64 {
        *self.logderiv_prefix.last().expect("prefix has n + 1 entries")
    }
}

pub fn iterate<M: UnimodalMap + ?Sized>(map: &M, x0: f64, n: usize) -> Result<OrbitSegment> {
    check_domain(map, x0)?;
    if n == 0 {
        return Err(Error::Config("orbit length must be at least 1".into()));
    }
    let mut points = Vec::with_capacity(n);
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = KahanSum::new();
    prefix.push(0.0);
    let mut x = x0;
    for _ in 0..n {
        points.push(x);
        acc.add(map.deriv(x).abs().ln());
        prefix.push(acc.value());
        x = map.apply(x);
    }
    Ok(OrbitSegment { x0, n, points, end: x, logderiv_prefix: prefix })
}

/// A real-valued observable on the phase space.
#[derive(Clone)]
pub enum Observable {
    Constant(f64),
    /// `x ↦ x`.
    Coordinate,
    /// Continuous indicator: 1 on `[lo, hi]`, ramping linearly to 0 over `width`.
    SmoothIndicator { lo: f64, hi: f64, width: f64 },
    /// `log|Df|`, equal to `−∞` at the critical point.
    LogAbsDeriv,
    Custom { id: String, f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl Observable {
    pub fn custom(id: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Custom { id: id.into(), f: Arc::new(f) }
    }

    /// Stable identifier used in files and for matching series to curves.
    pub fn id(&self) -> String {
        match self {
            Observable::Constant(v) => format!("const({v})"),
            Observable::Coordinate => "x".into(),
            Observable::SmoothIndicator { lo, hi, width } => format!("ind({lo},{hi},{width})"),
            Observable::LogAbsDeriv => "logdf".into(),
            Observable::Custom { id, .. } => id.clone(),
        }
    }

    /// Parse the identifiers accepted on the command line.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logdf" => Ok(Observable::LogAbsDeriv),
            "x" => Ok(Observable::Coordinate),
            _ => {
                if let Some(v) = s.strip_prefix("const(").and_then(|r| r.strip_suffix(')')) {
                    let v = v.parse().map_err(|_| Error::Config(format!("bad constant in {s}")))?;
                    Ok(Observable::Constant(v))
                } else {
                    Err(Error::Config(format!("unknown observable {s:?}")))
                }
            }
        }
    }

    #[inline]
    pub fn value<M: UnimodalMap + ?Sized>(&self, map: &M, x: f64) -> f64 {
        match self {
            Observable::Constant(v) => *v,
            Observable::Coordinate => x,
            Observable::SmoothIndicator { lo, hi, width } => {
                let d = if x < *lo { lo - x } else if x > *hi { x - hi } else { 0.0 };
                (1.0 - d / width).max(0.0)
            }
            Observable::LogAbsDeriv => map.deriv(x).abs().ln(),
            Observable::Custom { f, .. } => f(x),
        }
    }

    /// Birkhoff sum `S_n φ(x)` with compensated summation.
    pub fn birkhoff_sum<M: UnimodalMap + ?Sized>(&self, map: &M, x: f64, n: usize) -> f64 {
        let mut acc = KahanSum::new();
        let mut y = x;
        for _ in 0..n {
            acc.add(self.value(map, y));
            y = map.apply(y);
        }
        acc.value()
    }
}

/// `(1/n) S_n φ(x)`.
pub fn birkhoff_average<M: UnimodalMap + ?Sized>(
    map: &M,
    phi: &Observable,
    x: f64,
    n: usize,
) -> Result<f64> {
    check_domain(map, x)?;
    if n == 0 {
        return Err(Error::Config("Birkhoff average needs n ≥ 1".into()));
    }
    Ok(phi.birkhoff_sum(map, x, n) / n as f64)
}

/// `f_a^period(c) − c` for the quadratic family.
fn critical_return(a: f64, period: usize) -> f64 {
    let mut x = 0.5;
    for _ in 0..period {
        x = a * x * (1.0 - x);
    }
    x - 0.5
}

/// Parameter `a` in `bracket` where the critical point has the given period,
/// found by bisection on the sign of `f_a^period(c) − c`.
pub fn superstable_parameter(family: Family, period: usize, bracket: Interval) -> Result<f64> {
    if family != Family::Quadratic {
        return Err(Error::Config("superstable search is defined for the quadratic family".into()));
    }
    if period == 0 {
        return Err(Error::Config("period must be at least 1".into()));
    }
    bisect(|a| critical_return(a, period), bracket.lo, bracket.hi, 1e-15)
}

const DELTA_GUESS: f64 = 4.669;

/// Superstable parameters `a(2^k)` for `k = 0..=k_max` on the quadratic family.
///
/// Windows after the first two are predicted from the previous gap; the
/// predicted window excludes `a(2^{k−1})` and `a(2^{k+1})`.
pub fn superstable_cascade(k_max: usize) -> Result<Vec<f64>> {
    let mut a = vec![superstable_parameter(Family::Quadratic, 1, Interval::new(1.5, 2.5))?];
    if k_max >= 1 {
        a.push(superstable_parameter(Family::Quadratic, 2, Interval::new(3.0, 3.4))?);
    }
    for k in 2..=k_max {
        let gap = a[k - 1] - a[k - 2];
        let window = Interval::new(
            a[k - 1] + 0.3 * gap / DELTA_GUESS,
            a[k - 1] + 1.15 * gap / DELTA_GUESS,
        );
        a.push(superstable_parameter(Family::Quadratic, 1 << k, window)?);
    }
    Ok(a)
}

/// Built-in bracket for the superstable parameter of period `2^k`, `k ≤ 12`.
pub fn default_bracket(k: usize) -> Result<Interval> {
    match k {
        0 => Ok(Interval::new(1.5, 2.5)),
        1 => Ok(Interval::new(3.0, 3.4)),
        2..=12 => {
            let a = superstable_cascade(k - 1)?;
            let gap = a[k - 1] - a[k - 2];
            Ok(Interval::new(
                a[k - 1] + 0.3 * gap / DELTA_GUESS,
                a[k - 1] + 1.15 * gap / DELTA_GUESS,
            ))
        }
        _ => Err(Error::Config(format!("no built-in bracket for period 2^{k}"))),
    }
}

/// Accumulation point of the period-doubling cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeigenbaumEstimate {
    pub value: f64,
    pub error: f64,
    /// `a(2^k)` for `k = 0..=12`.
    pub superstable: Vec<f64>,
}

/// Aitken extrapolation of the superstable sequence `a(2^k)`, `k ≤ 12`.
/// The error estimate is the change between the last two extrapolants.
pub fn feigenbaum_parameter(family: Family) -> Result<FeigenbaumEstimate> {
    if family != Family::Quadratic {
        return Err(Error::Config("Feigenbaum parameter is computed for the quadratic family".into()));
    }
    let a = superstable_cascade(12)?;
    let extrapolate = |k: usize| {
        let (d0, d1) = (a[k - 1] - a[k - 2], a[k] - a[k - 1]);
        a[k] + d1 * d1 / (d0 - d1)
    };
    let value = extrapolate(12);
    let error = (value - extrapolate(11)).abs();
    if !value.is_finite() || error > 1e-9 {
        return Err(Error::Precision(format!(
            "extrapolation unstable: estimate {value}, change {error:e}"
        )));
    }
    Ok(FeigenbaumEstimate { value, error, superstable: a })
}
