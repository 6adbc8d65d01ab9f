//! Tempered Langevin particles between two 2-D Gaussians, checked against
//! the exact law from the moment ODE.

use temper_lab::distributions::{Gaussian, GeometricPath};
use temper_lab::metrics::{gaussian_fit, kl_gaussians};
use temper_lab::sampler::{gaussian_moment_flow, run_schedule_on, GaussianLaw, ParticleEnsemble, StepPolicy};
use temper_lab::schedules::linear_schedule;

fn main() -> temper_lab::Result<()> {
    let nu = Gaussian::isotropic(&[0.0, 0.0], 1.0)?;
    let pi = Gaussian::isotropic(&[0.0, 0.0], 10.0)?;
    let path = GeometricPath::new(nu.clone(), pi.clone())?;
    let schedule = linear_schedule(20.0)?;
    let times = [1.0, 5.0, 10.0, 20.0];

    let mut ens = ParticleEnsemble::from_gaussian(&nu, 20_000, 42)?;
    let snaps = run_schedule_on(&mut ens, &path, &schedule, 0.01, &times, &StepPolicy::Explicit)?;

    let pi_law = GaussianLaw::from(&pi);
    println!("{:>6} {:>12} {:>12}", "t", "KL exact", "KL fitted");
    for snap in &snaps {
        let exact = gaussian_moment_flow(&nu, &pi, &schedule, &GaussianLaw::from(&nu), snap.time)?;
        let fitted = gaussian_fit(&snap.states, 2)?;
        println!("{:>6} {:>12.5} {:>12.5}", snap.time, kl_gaussians(&exact, &pi_law)?, kl_gaussians(&fitted, &pi_law)?);
    }
    Ok(())
}
