//! Compares the schedule-quality functional `G_t` of the optimal, linear and
//! constant-one schedules, and prints the optimal schedule itself.

use temper_lab::bounds::{g_functional, g_linear_closed_form};
use temper_lab::schedules::{constant_schedule, optimal_schedule};

fn main() -> temper_lab::Result<()> {
    let (an, ap) = (1.0, 0.01);
    let optimal = optimal_schedule(an, ap)?;
    println!("optimal schedule reaches λ = 1 at s = {:?}", optimal.clamp_time());
    for s in [0.0, 1.0, 10.0, 50.0, 98.0] {
        println!("  λ({s:>4}) = {:.6}", optimal.value(s));
    }

    println!("\n{:>8} {:>12} {:>12} {:>12}", "t", "optimal", "linear", "vanilla");
    for t in [0.1, 1.0, 10.0, 100.0, 1000.0] {
        let go = g_functional(&optimal, an, ap, t)?;
        let gl = g_linear_closed_form(an, ap, t)?;
        let gv = g_functional(&constant_schedule(1.0, t)?, an, ap, t)?;
        println!("{t:>8} {go:>12.4e} {gl:>12.4e} {gv:>12.4e}");
    }
    Ok(())
}
