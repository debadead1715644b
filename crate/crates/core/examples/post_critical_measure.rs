//! The critical orbit at the Feigenbaum parameter: vanishing Lyapunov
//! exponent, and continuity of `χ` toward the post-critical measure.

use unimodal_ldp::map::{feigenbaum_parameter, Family};
use unimodal_ldp::renorm::cascade;
use unimodal_ldp::thermo::{chi_continuity_probe, post_critical_stats};
use unimodal_ldp::{Observable, QuadraticMap};

fn main() -> unimodal_ldp::Result<()> {
    let map = QuadraticMap::new(feigenbaum_parameter(Family::Quadratic)?.value)?;
    let cas = cascade(&map, 8, 16)?;
    for n in [1_000, 10_000, 100_000, 1_000_000] {
        let s = post_critical_stats(&map, &cas, 1_000, n, &[Observable::Coordinate])?;
        println!("n = {n:>8}: (1/n) log|Df^n(c)| = {:+.5}, mean x = {:.6}", s.orbit_lyapunov.unwrap_or(f64::NAN), s.phi_means["x"]);
    }
    let probe = chi_continuity_probe(&map, &cas, 6)?;
    for (m, chi) in &probe.per_level_chi {
        println!("level {m}: chi = {chi:.6}");
    }
    println!("limit {:.3e}, converged {}", probe.limit, probe.converged);
    Ok(())
}
