//! Level-1 rate function of the Lyapunov exponent at the Feigenbaum
//! parameter, assembled from the cascade chains; CSV on stdout.

use unimodal_ldp::map::{feigenbaum_parameter, Family};
use unimodal_ldp::renorm::cascade;
use unimodal_ldp::thermo::rate_level1;
use unimodal_ldp::{Observable, QuadraticMap};

fn main() -> unimodal_ldp::Result<()> {
    let map = QuadraticMap::new(feigenbaum_parameter(Family::Quadratic)?.value)?;
    let cas = cascade(&map, 8, 16)?;
    let alphas: Vec<f64> = (0..=12).map(|k| 0.05 * k as f64).collect();
    for obs in [Observable::LogAbsDeriv, Observable::Coordinate] {
        let rc = rate_level1(&map, &cas, &obs, &alphas, 6, 8)?;
        eprintln!("{}: feasible [{:.4}, {:.4}], zero at {:.4}", rc.observable, rc.feasible_range.0, rc.feasible_range.1, rc.mu_infinity_mean);
        if matches!(obs, Observable::LogAbsDeriv) {
            rc.write_csv(std::io::stdout())?;
        }
    }
    Ok(())
}
