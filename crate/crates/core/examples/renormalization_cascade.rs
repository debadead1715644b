//! Restrictive intervals of the quadratic family along the period-doubling
//! cascade, checked against the attracting cycle of the critical orbit.

use unimodal_ldp::map::{feigenbaum_parameter, Family};
use unimodal_ldp::renorm::{cascade, cycle_cover, find_attracting_cycle};
use unimodal_ldp::runner::classify;
use unimodal_ldp::QuadraticMap;

fn main() -> unimodal_ldp::Result<()> {
    let a_inf = feigenbaum_parameter(Family::Quadratic)?.value;
    for a in [3.2, 3.5, 3.55, 3.832, a_inf, 4.0] {
        let map = QuadraticMap::new(a)?;
        let cas = cascade(&map, 8, 16)?;
        let cycle = find_attracting_cycle(&map, 256, 1e-9);
        println!(
            "a = {a:.10}  depth {}{}  cycle {:?}  case {}",
            cas.depth_found,
            if cas.truncated { " (truncated)" } else { "" },
            cycle.map(|c| c.period),
            classify(&map)
        );
        for l in &cas.levels {
            println!("    m={} p={:<4} q={:?} J=[{:.8}, {:.8}]", l.index, l.p, l.q, l.j.lo, l.j.hi);
        }
        if cas.depth_found >= 2 {
            let cover = cycle_cover(&map, &cas, 2)?;
            println!("    K_2 has {} components", cover.len());
        }
    }
    Ok(())
}
