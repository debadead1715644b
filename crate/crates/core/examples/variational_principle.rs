//! Periodic orbits never beat the pressure: for every cyclic word the orbit
//! free energy `(1/n) S_n ψ` stays below `P(ψ)`, and the best orbits approach it.

use unimodal_ldp::renorm::{build_partition, cascade};
use unimodal_ldp::thermo::{coefficients, periodic_point, periodic_words, pressure, WeightedChain, LOGDF};
use unimodal_ldp::{Observable, QuadraticMap};

fn main() -> unimodal_ldp::Result<()> {
    let map = QuadraticMap::new(3.832)?;
    let part = build_partition(&map, &cascade(&map, 2, 16)?, 0)?;
    let chain = WeightedChain::refine(&map, &part, 12, &[Observable::Coordinate])?;
    let coeff = coefficients(&[("x", 16.0), (LOGDF, -1.0)]);
    let p = pressure(&chain, &coeff)?;
    let psi = |x: f64| 16.0 * x - Observable::LogAbsDeriv.value(&map, x);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let words = periodic_words(&part.a, 8);
    for w in &words {
        let x0 = periodic_point(&map, &part, w)?;
        let orbit = unimodal_ldp::map::iterate(&map, x0, w.len())?;
        let e = orbit.points.iter().map(|&x| psi(x)).sum::<f64>() / w.len() as f64;
        if e > best.0 {
            best = (e, w.clone());
        }
    }
    println!("P = {p:.6}; best of {} cyclic words: {:?} with {:.6} (gap {:.2e})", words.len(), best.1, best.0, p - best.0);
    Ok(())
}
