//! A temperature ladder toward `½N(0,1) + ½N(m,1)` leaves the right mode
//! empty; the measured TV sits above the closed-form lower bound.
//!
//! Smaller than the full demonstration (`temper-lab lower-bimodal`) so it
//! finishes in seconds.

use temper_lab::distributions::{make_bimodal_target, Gaussian, GeometricPath};
use temper_lab::inequalities::thm5_tv_lower;
use temper_lab::metrics::tv_hist;
use temper_lab::sampler::{run_ladder_on, ParticleEnsemble, StepPolicy};
use temper_lab::schedules::TemperatureLadder;

fn main() -> temper_lab::Result<()> {
    let m = 24.0;
    let path = GeometricPath::new(Gaussian::standard(1)?, make_bimodal_target(m)?)?;
    let ladder = TemperatureLadder::uniform(20, 0.5, Some(1e-3))?;
    let bounds = thm5_tv_lower(m, &[0.5; 20])?;

    let mut ens = ParticleEnsemble::from_gaussian(&Gaussian::standard(1)?, 5_000, 1)?;
    let snaps = run_ladder_on(&mut ens, &path, &ladder, Some(&[5, 10, 20]), &StepPolicy::Explicit)?;
    println!("{:>6} {:>8} {:>10} {:>10}", "level", "λ", "TV", "bound");
    for s in &snaps {
        let k = s.level.unwrap_or(0);
        let tv = tv_hist(&s.states, 1, path.target())?;
        println!("{k:>6} {:>8.2} {:>10.4} {:>10.4}", ladder.levels()[k - 1], tv.value, bounds[k - 1]);
    }
    Ok(())
}
