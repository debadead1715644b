//! Markov partitions of the expanding sets between consecutive cycles:
//! elements, transition matrix, mixing and bounded distortion.

use unimodal_ldp::map::{feigenbaum_parameter, Family};
use unimodal_ldp::renorm::{build_partition, cascade, distortion_estimate, mixing_check};
use unimodal_ldp::QuadraticMap;

fn main() -> unimodal_ldp::Result<()> {
    let a_inf = feigenbaum_parameter(Family::Quadratic)?.value;
    for (a, levels) in [(3.832, 1), (a_inf, 3)] {
        let map = QuadraticMap::new(a)?;
        let cas = cascade(&map, 8, 16)?;
        for m in 0..levels {
            let part = build_partition(&map, &cas, m)?;
            println!("a = {a:.10} m = {m} p = {} surrogate = {}", part.p, part.surrogate);
            println!("  L = [{:.6}, {:.6}]", part.l.lo, part.l.hi);
            for (label, e) in part.labels().iter().zip(&part.elements) {
                println!("  {label} = [{:.6}, {:.6}]", e.lo, e.hi);
            }
            println!("  A = {:?}  mixing = {}", part.a, mixing_check(&part));
            if !part.surrogate {
                for n in [2, 4, 8] {
                    println!("  distortion(n={n}) = {:.4}", distortion_estimate(&map, &part, n, 17)?);
                }
            }
        }
    }
    Ok(())
}
