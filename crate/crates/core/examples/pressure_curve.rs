//! Topological pressure: exact shifts, then the curve `t ↦ P(t·x − log|Df|)`
//! on the refined level-0 chain of the period-3 window, as CSV on stdout.

use unimodal_ldp::renorm::{build_partition, cascade};
use unimodal_ldp::thermo::{coefficients, equilibrium_stats, pressure, pressure_curve, WeightedChain, LOGDF};
use unimodal_ldp::{Observable, QuadraticMap};

fn main() -> unimodal_ldp::Result<()> {
    let zero = coefficients(&[]);
    let full = WeightedChain::symbolic(vec![vec![1, 1], vec![1, 1]], 1, &[])?;
    let golden = WeightedChain::symbolic(vec![vec![1, 1], vec![1, 0]], 1, &[])?;
    eprintln!("full shift      P(0) = {:.12} (log 2 = {:.12})", pressure(&full, &zero)?, 2f64.ln());
    eprintln!("golden mean     P(0) = {:.12}", pressure(&golden, &zero)?);

    let map = QuadraticMap::new(3.832)?;
    let part = build_partition(&map, &cascade(&map, 2, 16)?, 0)?;
    let chain = WeightedChain::refine(&map, &part, 10, &[Observable::Coordinate])?;
    let base = coefficients(&[(LOGDF, -1.0)]);
    let eq = equilibrium_stats(&chain, &base)?;
    eprintln!(
        "a = 3.832, {} cylinders: P(-log|Df|) = {:.5}, h = {:.5}, chi = {:.5}",
        chain.len(),
        eq.pressure,
        eq.h,
        eq.chi
    );
    let t: Vec<f64> = (0..=16).map(|k| -4.0 + 0.5 * k as f64).collect();
    pressure_curve(&chain, &base, "x", &t)?.write_csv(std::io::stdout())
}
