//! Continuous- and discrete-time KL bounds next to the exact KL for a
//! Gaussian pair, where both are computable.

use temper_lab::bounds::{constant_a, continuous_bound_sweep, discrete_bound_sweep, RegularityBundle};
use temper_lab::distributions::{Gaussian, GeometricPath};
use temper_lab::metrics::kl_gaussians;
use temper_lab::sampler::{gaussian_moment_flow, gaussian_moment_recursion, GaussianLaw};
use temper_lab::schedules::{discretize, linear_schedule};

fn main() -> temper_lab::Result<()> {
    let nu = Gaussian::univariate(0.0, 1.0)?;
    let pi = Gaussian::univariate(0.0, 10.0)?;
    let path = GeometricPath::new(nu.clone(), pi.clone())?;
    let bundle = RegularityBundle::from_path(&path, 1.0);
    let p0 = GaussianLaw::from(&nu);
    let pi_law = GaussianLaw::from(&pi);
    println!("A = {}", constant_a(&bundle)?);

    let schedule = linear_schedule(8.0)?;
    println!("\ncontinuous: {:>6} {:>10} {:>10}", "t", "bound", "exact");
    for r in continuous_bound_sweep(&schedule, &bundle, 0.0, &[1.0, 2.0, 4.0, 8.0])? {
        let law = gaussian_moment_flow(&nu, &pi, &schedule, &p0, r.t)?;
        println!("            {:>6} {:>10.4} {:>10.6}", r.t, r.total, kl_gaussians(&law, &pi_law)?);
    }

    let seq = discretize(&schedule, 200)?.step_sequence()?;
    let laws = gaussian_moment_recursion(&nu, &pi, &seq, &p0)?;
    println!("\ndiscrete:   {:>6} {:>10} {:>10} {:>7}", "k", "bound", "exact", "guard");
    for r in discrete_bound_sweep(&seq, &bundle, 0.0, seq.len())?.iter().step_by(50) {
        let kl = kl_gaussians(&laws[r.k], &pi_law)?;
        println!("            {:>6} {:>10.4} {:>10.6} {:>7}", r.k, r.total, kl, r.all_guarded());
    }
    Ok(())
}
