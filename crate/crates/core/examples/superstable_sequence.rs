//! Superstable parameters `a(2^k)`, their gap ratios and the extrapolated
//! Feigenbaum parameter of the quadratic family.

use unimodal_ldp::map::{feigenbaum_parameter, superstable_cascade, Family};

fn main() -> unimodal_ldp::Result<()> {
    let a = superstable_cascade(12)?;
    println!("{:>3} {:>20} {:>10}", "k", "a(2^k)", "ratio");
    for (k, v) in a.iter().enumerate() {
        let ratio = if k >= 2 { (a[k - 1] - a[k - 2]) / (v - a[k - 1]) } else { f64::NAN };
        println!("{k:>3} {v:>20.15} {ratio:>10.5}");
    }
    let f = feigenbaum_parameter(Family::Quadratic)?;
    println!("a_inf = {:.13} (extrapolation error {:.1e})", f.value, f.error);
    Ok(())
}
