//! Stratified Lebesgue estimates of deviation sets and a decay fit for the
//! Lyapunov tail at the Feigenbaum parameter.
//!
//! The grid defaults to 2·10⁶ points per pass; pass a larger one as the first argument.

use unimodal_ldp::empirical::{deviation_measure, lyapunov_tail, DeviationQuery, GridSchedule};
use unimodal_ldp::map::{feigenbaum_parameter, Family};
use unimodal_ldp::{Interval, Observable, QuadraticMap};

fn main() -> unimodal_ldp::Result<()> {
    let grid: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2_000_000);
    let chebyshev = QuadraticMap::new(4.0)?;
    let q = DeviationQuery::within(Observable::Coordinate, Interval::new(0.5, 1.0), 1);
    let e = deviation_measure(&chebyshev, &q, 100_000, 0)?;
    println!("a = 4, n = 1, x in [0.5, 1]: {:.6} ± {:.1e}", e.measure, e.stderr);

    let map = QuadraticMap::new(feigenbaum_parameter(Family::Quadratic)?.value)?;
    let s = lyapunov_tail(&map, 0.2, &[16, 23, 32, 45, 64], &GridSchedule::Auto { base: grid, cap: 16 * grid }, 1)?;
    s.write_csv(std::io::stdout())?;
    if let Some(fit) = s.fit {
        println!("slope {:.4} ± {:.4} (r² = {:.4})", fit.slope, fit.stderr, fit.r2);
    }
    Ok(())
}
