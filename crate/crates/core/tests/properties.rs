use proptest::prelude::*;

use temper_lab::distributions::{
    make_bimodal_target, make_contaminated_target, Density, Gaussian, GeometricPath, Mixture, Potential,
    SmoothedUniform,
};
use temper_lab::metrics::kl_gaussians;
use temper_lab::sampler::GaussianLaw;
use temper_lab::schedules::{custom_schedule, linear_schedule, optimal_schedule, schedule_to_phi, Schedule};

fn fd_check(p: &dyn Potential, x: &[f64]) -> Result<(), TestCaseError> {
    let mut g = vec![0.0; x.len()];
    p.gradient(x, &mut g);
    let eps = 1e-5;
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += eps;
        xm[i] -= eps;
        let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * eps);
        let err = (fd - g[i]).abs() / g[i].abs().max(1.0);
        prop_assert!(err <= 1e-5, "coordinate {i} at {x:?}: fd {fd} vs gradient {}", g[i]);
    }
    Ok(())
}

fn table_schedule(knots: Vec<(f64, f64)>, horizon: f64) -> Schedule {
    let mut s: Vec<f64> = knots.iter().map(|k| k.0 * horizon).collect();
    let mut l: Vec<f64> = knots.iter().map(|k| k.1).collect();
    s.push(0.0);
    s.push(horizon);
    l.push(0.0);
    l.push(1.0);
    s.sort_by(f64::total_cmp);
    s.dedup();
    l.sort_by(f64::total_cmp);
    l.truncate(s.len());
    custom_schedule(s, l).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gaussian_score_matches_finite_differences(
        m in -5.0..5.0f64, v in 0.1..20.0f64, x in -10.0..10.0f64,
        c in -0.9..0.9f64, y in -10.0..10.0f64,
    ) {
        fd_check(&Gaussian::univariate(m, v).unwrap(), &[x])?;
        let cov = nalgebra::DMatrix::from_row_slice(2, 2, &[v, c * v.sqrt(), c * v.sqrt(), 1.0]);
        let g = Gaussian::new(nalgebra::DVector::from_vec(vec![m, -m]), cov).unwrap();
        fd_check(&g, &[x, y])?;
    }

    #[test]
    fn mixture_scores_match_finite_differences(m in 4.0..30.0f64, x in -10.0..40.0f64) {
        fd_check(&make_bimodal_target(m).unwrap(), &[x])?;
        fd_check(&make_contaminated_target(m, std::f64::consts::FRAC_1_SQRT_2).unwrap(), &[x])?;
        fd_check(&SmoothedUniform::new(m).unwrap(), &[x])?;
    }

    #[test]
    fn tempered_score_matches_finite_differences(m in 2.0..12.0f64, lambda in 0.0..=1.0f64, x in -6.0..16.0f64) {
        let path = GeometricPath::new(Gaussian::standard(1).unwrap(), make_bimodal_target(m).unwrap()).unwrap();
        fd_check(&path.at(lambda), &[x])?;
    }

    #[test]
    fn gaussian_partition_sandwich(m1 in -3.0..3.0f64, v1 in 0.2..5.0f64, m2 in -3.0..3.0f64, v2 in 0.2..5.0f64, lambda in 0.0..=1.0f64) {
        let nu = Gaussian::univariate(m1, v1).unwrap();
        let pi = Gaussian::univariate(m2, v2).unwrap();
        let kl_np = kl_gaussians(&GaussianLaw::from(&nu), &GaussianLaw::from(&pi)).unwrap();
        let kl_pn = kl_gaussians(&GaussianLaw::from(&pi), &GaussianLaw::from(&nu)).unwrap();
        let path = GeometricPath::new(nu, pi).unwrap();
        let lc = path.log_partition(lambda).unwrap();
        prop_assert!(lc >= -1e-12);
        prop_assert!(lc <= (lambda * kl_np).min((1.0 - lambda) * kl_pn) + 1e-6);
    }

    #[test]
    fn mixture_partition_quadrature_is_nonnegative(m in 1.0..10.0f64, w in 0.05..0.95f64, lambda in 0.01..0.99f64) {
        let pi = Mixture::new(vec![
            (w, Gaussian::univariate(0.0, 1.0).unwrap().into()),
            (1.0 - w, Gaussian::univariate(m, 0.5).unwrap().into()),
        ]).unwrap();
        let path = GeometricPath::new(Gaussian::standard(1).unwrap(), pi).unwrap();
        prop_assert!(path.log_partition(lambda).unwrap() >= -1e-9);
    }

    #[test]
    fn kl_gaussians_is_nonnegative(m in -3.0..3.0f64, v in 0.1..10.0f64, mq in -3.0..3.0f64, vq in 0.1..10.0f64) {
        let p = GaussianLaw::from(&Gaussian::univariate(m, v).unwrap());
        let q = GaussianLaw::from(&Gaussian::univariate(mq, vq).unwrap());
        prop_assert!(kl_gaussians(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_gaussians(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn schedules_are_monotone(
        an in 0.05..5.0f64, ratio in 0.001..2.0f64, horizon in 0.1..200.0f64,
        knots in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 0..6),
    ) {
        let scheds = [
            optimal_schedule(an, an * ratio).unwrap().with_horizon(horizon).unwrap(),
            linear_schedule(horizon).unwrap(),
            table_schedule(knots, horizon),
        ];
        for s in &scheds {
            let mut prev = s.value(0.0);
            prop_assert!((0.0..=1.0).contains(&prev));
            for i in 1..=1000 {
                let v = s.value(horizon * i as f64 / 1000.0);
                prop_assert!(v >= prev - 1e-15 && v <= 1.0);
                prev = v;
            }
        }
    }

    #[test]
    fn clamp_equivalence(an in 0.05..5.0f64, ratio in 0.5..3.0f64, s in 0.0..100.0f64) {
        // α_π ≥ α_ν/2 clamps at s = 0.
        let sched = optimal_schedule(an, an * ratio).unwrap();
        prop_assert!((sched.value(s) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn phi_satisfies_constraints_and_round_trips(
        an in 0.2..3.0f64, ratio in 0.01..0.9f64, horizon in 0.5..50.0f64,
        knots in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 0..5),
    ) {
        let ap = an * ratio;
        let sched = table_schedule(knots, horizon);
        let phi = schedule_to_phi(&sched, an, ap).unwrap();
        let bps = sched.breakpoints();
        for i in 0..=200 {
            let s = horizon * (i as f64 + 0.37) / 201.0;
            if bps.iter().any(|b| (b - s).abs() < 1e-6 * horizon) {
                continue;
            }
            let (v, d) = (phi.value(s), phi.derivative(s));
            prop_assert!(v > 0.0);
            prop_assert!(ap * v <= d + 1e-8 && d <= an * v + 1e-8);
            prop_assert!((phi.recovered_lambda(s) - sched.value(s)).abs() <= 1e-6);
        }
        prop_assert!((phi.value(horizon) - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn smoothed_uniform_normalizer() {
    for m in [4.0, 10.0, 30.0] {
        let u: Density = SmoothedUniform::new(m).unwrap().into();
        let quad = temper_lab::distributions::log_integral_1d(&u).unwrap().exp();
        let exact = 3.0 * m + (2.0 * std::f64::consts::PI).sqrt();
        assert!((quad - exact).abs() <= 1e-8 * exact, "m = {m}: {quad} vs {exact}");
    }
}

#[test]
fn gaussian_partition_quadrature_cross_check() {
    for m in [1.0, 3.0, 5.0] {
        let path = GeometricPath::new(Gaussian::standard(1).unwrap(), Gaussian::univariate(m, 1.0).unwrap()).unwrap();
        for lambda in [0.1, 0.4, 0.7] {
            let quad = path.log_partition_quadrature(lambda).unwrap();
            let exact = 0.5 * lambda * (1.0 - lambda) * m * m;
            assert!((quad - exact).abs() <= 1e-7 * exact.max(1.0), "m={m}, λ={lambda}: {quad} vs {exact}");
        }
    }
}
