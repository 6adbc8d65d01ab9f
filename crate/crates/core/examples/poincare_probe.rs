//! Rayleigh-quotient lower bounds on the Poincaré constant along the path to
//! the contaminated unimodal target, plus the log-Sobolev upper bounds.

use temper_lab::inequalities::{lsi_pi_upper, lsi_um_upper, poincare_probe_sweep, verify_unimodal_facts};

fn main() -> temper_lab::Result<()> {
    println!("{:>4} {:>6} {:>14} {:>14}", "m", "λ", "probe", "closed form");
    for r in poincare_probe_sweep(&[10.0, 12.0, 14.0, 16.0], &[0.75])? {
        println!("{:>4} {:>6} {:>14.4e} {:>14.4e}", r.m, r.lambda, r.rayleigh_lower, r.thm3_bound);
    }

    for m in [10.0, 30.0] {
        println!("\nm = {m}: C_LS(u_m) ≤ {:.1} (16m² = {})", lsi_um_upper(m)?, 16.0 * m * m);
        println!("        C_LS(π) ≤ {:.3e} at a = 1/√2", lsi_pi_upper(m, std::f64::consts::FRAC_1_SQRT_2)?);
    }

    let facts = verify_unimodal_facts(10.0, std::f64::consts::FRAC_1_SQRT_2, 0.75)?;
    println!("\nfacts at m = 10, λ = 0.75 (log value vs log bound):");
    for c in &facts.checks {
        println!("  {:<16} {:>10.3} {:>10.3} {:?}", c.name, c.log_value, c.log_bound, c.holds());
    }
    Ok(())
}
