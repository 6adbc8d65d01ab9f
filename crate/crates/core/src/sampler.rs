//! Tempered Langevin simulation and exact Gaussian-law oracles.
//!
//! One step of the dynamics is
//! `X ← X − h((1−λ)∇V_ν(X) + λ∇V_π(X)) + √(2h)·ε`, with λ taken at the right
//! endpoint of the step.
//!
//! Randomness: particle `i` owns a ChaCha8 stream keyed by `(seed, i)`
//! (`seed_from_u64(seed)` then `set_stream(i)`); its draws are consumed in
//! order — first the initial state, then `d` standard normals per step
//! (ziggurat transform of `rand_distr::StandardNormal`). A particle's
//! trajectory therefore depends only on the seed and its index, never on how
//! particles are split across threads.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{step_guard, RegularityBundle};
use crate::distributions::{fmt17, Gaussian, GeometricPath, Potential};
use crate::error::{ensure, Error, Result};
use crate::schedules::{Schedule, StepSequence, TemperatureLadder};

/// `N` particles in `d` dimensions with per-particle random streams.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    states: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    seed: u64,
    step_count: u64,
    clock: f64,
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl ParticleEnsemble {
    /// Draws `n` particles from `init`, each from its own stream.
    pub fn from_gaussian(init: &Gaussian, n: usize, seed: u64) -> Result<Self> {
        ensure(n >= 1, || "ensemble needs at least one particle".into())?;
        let d = init.dim();
        let l = init.cholesky_factor();
        let mean = init.mean();
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| particle_rng(seed, i)).collect();
        let mut states = vec![0.0; n * d];
        states.par_chunks_mut(d).zip(rngs.par_iter_mut()).for_each(|(x, rng)| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for i in 0..d {
                x[i] = mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
            }
        });
        Ok(Self { dim: d, states, rngs, seed, step_count: 0, clock: 0.0 })
    }

    /// Particles at given positions (row-major, `n × dim`).
    pub fn from_states(states: Vec<f64>, dim: usize, seed: u64) -> Result<Self> {
        ensure(dim >= 1 && !states.is_empty() && states.len() % dim == 0, || {
            format!("{} values do not form rows of length {dim}", states.len())
        })?;
        ensure(states.iter().all(|v| v.is_finite()), || "initial states must be finite".into())?;
        let n = states.len() / dim;
        let rngs = (0..n).map(|i| particle_rng(seed, i)).collect();
        Ok(Self { dim, states, rngs, seed, step_count: 0, clock: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn snapshot(&self, level: Option<usize>) -> Snapshot {
        Snapshot {
            time: self.clock,
            level,
            step_count: self.step_count,
            seed: self.seed,
            dim: self.dim,
            states: self.states.clone(),
        }
    }
}

/// Updates one particle in place given its standard-normal noise.
#[inline]
pub fn tempered_update(path: &GeometricPath, lambda: f64, h: f64, x: &mut [f64], noise: &[f64], grad: &mut [f64], scratch: &mut [f64]) {
    let sq = (2.0 * h).sqrt();
    path.tempered_gradient(lambda, x, grad, scratch);
    for i in 0..x.len() {
        x[i] = x[i] - h * grad[i] + sq * noise[i];
    }
}

/// One tempered Langevin step toward `μ_λ` for every particle.
pub fn step_tempered(ens: &mut ParticleEnsemble, path: &GeometricPath, lambda: f64, h: f64) -> Result<()> {
    ensure((0.0..=1.0).contains(&lambda), || format!("λ = {lambda} outside [0, 1]"))?;
    ensure(h >= 0.0 && h.is_finite(), || format!("step size {h} must be finite and ≥ 0"))?;
    ensure(path.dim() == ens.dim, || "ensemble and path dimensions differ".into())?;
    let d = ens.dim;
    let sq = (2.0 * h).sqrt();
    let bad = if d == 1 {
        ens.states
            .par_iter_mut()
            .zip(ens.rngs.par_iter_mut())
            .enumerate()
            .filter_map(|(i, (x, rng))| {
                let z: f64 = rng.sample(StandardNormal);
                *x = *x - h * path.tempered_gradient_1d(lambda, *x) + sq * z;
                (!x.is_finite()).then_some(i)
            })
            .min()
    } else {
        ens.states
            .par_chunks_mut(d)
            .zip(ens.rngs.par_iter_mut())
            .enumerate()
            .map_init(
                || vec![0.0; 3 * d],
                |buf, (i, (x, rng))| {
                    let (noise, rest) = buf.split_at_mut(d);
                    let (grad, scratch) = rest.split_at_mut(d);
                    noise.iter_mut().for_each(|z| *z = rng.sample(StandardNormal));
                    tempered_update(path, lambda, h, x, noise, grad, scratch);
                    (!x.iter().all(|v| v.is_finite())).then_some(i)
                },
            )
            .flatten()
            .min()
    };
    ens.step_count += 1;
    ens.clock += h;
    match bad {
        Some(particle) => Err(Error::Explosion { particle, step: ens.step_count, time: ens.clock }),
        None => Ok(()),
    }
}

/// How step sizes are validated.
#[derive(Debug, Clone, Default)]
pub enum StepPolicy {
    /// Use the requested step sizes as given.
    #[default]
    Explicit,
    /// Reject steps exceeding `min(α_k/(4L_k²), (a_π∧a_ν)/(2(L_π+L_ν)²), 1)`.
    Guarded(RegularityBundle),
}

impl StepPolicy {
    fn check(&self, index: usize, lambda: f64, h: f64, time: f64) -> Result<()> {
        if let StepPolicy::Guarded(bundle) = self {
            let alpha = guard_alpha(bundle, lambda, time)?;
            let limit = step_guard(bundle, lambda, alpha);
            if h > limit {
                return Err(Error::GuardViolation { level: index, h, limit });
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        match self {
            StepPolicy::Guarded(b) if b.alpha.is_none() => Err(Error::Unsupported(
                "guarded steps need α along the path (strong convexity or a supplied α function)".into(),
            )),
            _ => Ok(()),
        }
    }
}

fn guard_alpha(bundle: &RegularityBundle, lambda: f64, time: f64) -> Result<f64> {
    use crate::bounds::AlphaFn;
    match bundle.alpha.as_ref() {
        Some(AlphaFn::Affine { alpha_nu, alpha_pi }) => Ok((1.0 - lambda) * alpha_nu + lambda * alpha_pi),
        Some(AlphaFn::OfLambda(f)) => Ok(f(lambda)),
        Some(AlphaFn::OfTime(f)) => Ok(f(time)),
        None => Err(Error::Unsupported("guarded steps need α".into())),
    }
}

/// A copy of the ensemble at a requested time or ladder level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub level: Option<usize>,
    pub step_count: u64,
    pub seed: u64,
    pub dim: usize,
    pub states: Vec<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    schedule_hash: &'a str,
    clock: f64,
    step_count: u64,
    level: Option<usize>,
    n_particles: usize,
    dim: usize,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Coordinate `j` of every particle.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.states.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// CSV `particle_id,dim_0,...,dim_{d-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|j| format!("dim_{j}")).collect();
        writeln!(w, "particle_id,{}", header.join(","))?;
        for (i, row) in self.states.chunks(self.dim).enumerate() {
            let vals: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
            writeln!(w, "{i},{}", vals.join(","))?;
        }
        Ok(())
    }

    /// JSON sidecar with seed, schedule hash, clock and step count.
    pub fn write_sidecar<W: Write>(&self, w: W, schedule_hash: &str) -> Result<()> {
        let side = Sidecar {
            seed: self.seed,
            schedule_hash,
            clock: self.clock_rounded(),
            step_count: self.step_count,
            level: self.level,
            n_particles: self.len(),
            dim: self.dim,
        };
        serde_json::to_writer_pretty(w, &side).map_err(|e| Error::Io(e.into()))
    }

    fn clock_rounded(&self) -> f64 {
        self.time
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.len() as f64;
        let mut m = DVector::zeros(self.dim);
        for row in self.states.chunks(self.dim) {
            for j in 0..self.dim {
                m[j] += row[j];
            }
        }
        m / n
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let n = self.len() as f64;
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for row in self.states.chunks(self.dim) {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    c[(i, j)] += (row[i] - m[i]) * (row[j] - m[j]);
                }
            }
        }
        c / (n - 1.0)
    }
}

/// Full description of a simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub path: GeometricPath,
    pub driver: Driver,
    pub n_particles: usize,
    pub seed: u64,
    /// Law of `X_0`.
    pub init: Gaussian,
    pub policy: StepPolicy,
}

#[derive(Debug, Clone)]
pub enum Driver {
    /// A continuous schedule discretized with step `h`; snapshots at the given
    /// times, which must be multiples of `h`.
    Schedule { schedule: Schedule, h: f64, snapshot_times: Vec<f64> },
    /// A temperature ladder; snapshots after the listed levels (1-based; 0 is
    /// the initial ensemble), or after every level when `None`.
    Ladder { ladder: TemperatureLadder, snapshot_levels: Option<Vec<usize>> },
}

pub fn run(cfg: &SimConfig) -> Result<Vec<Snapshot>> {
    match cfg.driver {
        Driver::Schedule { .. } => run_schedule(cfg),
        Driver::Ladder { .. } => run_ladder(cfg),
    }
}

fn initial_ensemble(cfg: &SimConfig) -> Result<ParticleEnsemble> {
    ensure(cfg.init.dim() == cfg.path.dim(), || "initial law and path dimensions differ".into())?;
    cfg.policy.validate()?;
    ParticleEnsemble::from_gaussian(&cfg.init, cfg.n_particles, cfg.seed)
}

pub fn run_schedule(cfg: &SimConfig) -> Result<Vec<Snapshot>> {
    let Driver::Schedule { schedule, h, snapshot_times } = &cfg.driver else {
        return Err(Error::Domain("run_schedule needs a schedule driver".into()));
    };
    let mut ens = initial_ensemble(cfg)?;
    run_schedule_on(&mut ens, &cfg.path, schedule, *h, snapshot_times, &cfg.policy)
}

/// Advances `ens` along `schedule` (time measured from the ensemble's current clock).
pub fn run_schedule_on(
    ens: &mut ParticleEnsemble,
    path: &GeometricPath,
    schedule: &Schedule,
    h: f64,
    snapshot_times: &[f64],
    policy: &StepPolicy,
) -> Result<Vec<Snapshot>> {
    ensure(h > 0.0 && h.is_finite(), || format!("step size {h} must be positive"))?;
    policy.validate()?;
    let mut targets = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        schedule.check_time(t)?;
        let k = (t / h).round();
        ensure((k * h - t).abs() <= 1e-9 * t.max(1.0), || {
            format!("snapshot time {t} is not a multiple of the step {h}")
        })?;
        targets.push(k as u64);
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by_key(|&i| targets[i]);
    let mut out: Vec<Option<Snapshot>> = vec![None; targets.len()];
    let start = ens.clock;
    let mut done = 0u64;
    for &i in &order {
        while done < targets[i] {
            let s = (done + 1) as f64 * h;
            let lambda = schedule.value(s);
            policy.check(done as usize + 1, lambda, h, s)?;
            step_tempered(ens, path, lambda, h)?;
            done += 1;
        }
        let mut snap = ens.snapshot(None);
        snap.time = start + targets[i] as f64 * h;
        out[i] = Some(snap);
    }
    Ok(out.into_iter().map(|s| s.expect("every snapshot filled")).collect())
}

/// Default inner step at level λ: `1e-3·min(1, 1/L_λ)`.
pub fn default_inner_step(path: &GeometricPath, lambda: f64) -> f64 {
    let l = path.at(lambda).regularity().lipschitz;
    1e-3 * if l.is_finite() && l > 1.0 { 1.0 / l } else { 1.0 }
}

pub fn run_ladder(cfg: &SimConfig) -> Result<Vec<Snapshot>> {
    let Driver::Ladder { ladder, snapshot_levels } = &cfg.driver else {
        return Err(Error::Domain("run_ladder needs a ladder driver".into()));
    };
    let mut ens = initial_ensemble(cfg)?;
    run_ladder_on(&mut ens, &cfg.path, ladder, snapshot_levels.as_deref(), &cfg.policy)
}

/// Runs each level's inner budget toward `μ_{λ_k}`, starting from the
/// previous level's final ensemble.
pub fn run_ladder_on(
    ens: &mut ParticleEnsemble,
    path: &GeometricPath,
    ladder: &TemperatureLadder,
    snapshot_levels: Option<&[usize]>,
    policy: &StepPolicy,
) -> Result<Vec<Snapshot>> {
    policy.validate()?;
    if let Some(levels) = snapshot_levels {
        ensure(levels.iter().all(|&k| k <= ladder.len()), || {
            format!("snapshot levels must be ≤ {}", ladder.len())
        })?;
    }
    let wanted = |k: usize| snapshot_levels.is_none_or(|l| l.contains(&k));
    let mut out = Vec::new();
    if snapshot_levels.is_some_and(|l| l.contains(&0)) {
        out.push(ens.snapshot(Some(0)));
    }
    for (k, (&lambda, budget)) in ladder.levels().iter().zip(ladder.budgets()).enumerate() {
        let (n, h) = budget.resolve(default_inner_step(path, lambda))?;
        policy.check(k + 1, lambda, h, ens.clock + h)?;
        for _ in 0..n {
            step_tempered(ens, path, lambda, h)?;
        }
        if wanted(k + 1) {
            out.push(ens.snapshot(Some(k + 1)));
        }
    }
    Ok(out)
}

/// Mean and covariance of a Gaussian law at a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time: f64,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, time: f64) -> Self {
        Self { mean, cov, time }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn to_gaussian(&self) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), (&self.cov + self.cov.transpose()) * 0.5)
    }

    /// `E‖X‖² = ‖m‖² + tr Σ`.
    pub fn second_moment(&self) -> f64 {
        self.mean.norm_squared() + self.cov.trace()
    }
}

impl From<&Gaussian> for GaussianLaw {
    fn from(g: &Gaussian) -> Self {
        Self { mean: g.mean().clone(), cov: g.covariance().clone(), time: 0.0 }
    }
}

// Drift `−A m + b` of the mean, with A = (1−λ)P_ν + λP_π and b = (1−λ)P_νμ_ν + λP_πμ_π.
struct AffineDrift {
    p_nu: DMatrix<f64>,
    p_pi: DMatrix<f64>,
    h_nu: DVector<f64>,
    h_pi: DVector<f64>,
}

impl AffineDrift {
    fn new(nu: &Gaussian, pi: &Gaussian) -> Result<Self> {
        ensure(nu.dim() == pi.dim(), || "endpoint dimensions differ".into())?;
        Ok(Self {
            p_nu: nu.precision().clone(),
            p_pi: pi.precision().clone(),
            h_nu: nu.precision() * nu.mean(),
            h_pi: pi.precision() * pi.mean(),
        })
    }

    fn at(&self, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
        (
            &self.p_nu * (1.0 - lambda) + &self.p_pi * lambda,
            &self.h_nu * (1.0 - lambda) + &self.h_pi * lambda,
        )
    }

    fn rhs(&self, lambda: f64, m: &DVector<f64>, c: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (a, b) = self.at(lambda);
        let d = m.len();
        let dm = -(&a * m) + b;
        let ac = &a * c;
        let dc = -(&ac) - ac.transpose() + DMatrix::identity(d, d) * 2.0;
        (dm, dc)
    }
}

fn rk4(
    drift: &AffineDrift,
    schedule: &Schedule,
    mut m: DVector<f64>,
    mut c: DMatrix<f64>,
    s0: f64,
    s1: f64,
    n: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let dt = (s1 - s0) / n as f64;
    for i in 0..n {
        let s = s0 + i as f64 * dt;
        let lam = |u: f64| schedule.value(u.min(s1));
        let (k1m, k1c) = drift.rhs(lam(s), &m, &c);
        let (k2m, k2c) = drift.rhs(lam(s + 0.5 * dt), &(&m + &k1m * (0.5 * dt)), &(&c + &k1c * (0.5 * dt)));
        let (k3m, k3c) = drift.rhs(lam(s + 0.5 * dt), &(&m + &k2m * (0.5 * dt)), &(&c + &k2c * (0.5 * dt)));
        let (k4m, k4c) = drift.rhs(lam(s + dt), &(&m + &k3m * dt), &(&c + &k3c * dt));
        m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (dt / 6.0);
        c += (k1c + k2c * 2.0 + k3c * 2.0 + k4c) * (dt / 6.0);
        c = (&c + c.transpose()) * 0.5;
    }
    (m, c)
}

/// Exact law at time `t` of the continuous dynamics between Gaussian endpoints,
/// `dm/dt = −A_t m + b_t`, `dΣ/dt = −A_tΣ − ΣA_t + 2I`, integrated by RK4 with
/// step halving until successive results differ by less than 1e-10.
pub fn gaussian_moment_flow(
    nu: &Gaussian,
    pi: &Gaussian,
    schedule: &Schedule,
    p0: &GaussianLaw,
    t: f64,
) -> Result<GaussianLaw> {
    schedule.check_time(t)?;
    ensure(p0.dim() == nu.dim(), || "initial law has the wrong dimension".into())?;
    let drift = AffineDrift::new(nu, pi)?;
    if t == 0.0 {
        return Ok(GaussianLaw { time: 0.0, ..p0.clone() });
    }
    let stiff = nu.regularity().lipschitz.max(pi.regularity().lipschitz);
    let mut cuts = vec![0.0];
    cuts.extend(schedule.breakpoints().into_iter().filter(|b| *b < t));
    cuts.push(t);
    let mut m = p0.mean.clone();
    let mut c = p0.cov.clone();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        let mut n = ((len * stiff * 4.0).ceil() as usize).max(16);
        let mut prev = rk4(&drift, schedule, m.clone(), c.clone(), w[0], w[1], n);
        let mut converged = false;
        for _ in 0..22 {
            n *= 2;
            let next = rk4(&drift, schedule, m.clone(), c.clone(), w[0], w[1], n);
            let diff = (&next.0 - &prev.0).amax().max((&next.1 - &prev.1).amax());
            let scale = next.0.amax().max(next.1.amax()).max(1.0);
            prev = next;
            if diff < 1e-10 * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!("moment ODE did not converge on [{}, {}]", w[0], w[1])));
        }
        m = prev.0;
        c = prev.1;
    }
    Ok(GaussianLaw { mean: m, cov: c, time: t })
}

/// Exact laws of the discrete dynamics after each step:
/// `m⁺ = (I−hA)m + hb`, `Σ⁺ = (I−hA)Σ(I−hA)ᵀ + 2hI`. Entry 0 is `p0`.
pub fn gaussian_moment_recursion(
    nu: &Gaussian,
    pi: &Gaussian,
    seq: &StepSequence,
    p0: &GaussianLaw,
) -> Result<Vec<GaussianLaw>> {
    ensure(p0.dim() == nu.dim(), || "initial law has the wrong dimension".into())?;
    let drift = AffineDrift::new(nu, pi)?;
    let d = p0.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut out = Vec::with_capacity(seq.len() + 1);
    let mut law = GaussianLaw { time: 0.0, ..p0.clone() };
    out.push(law.clone());
    for step in &seq.steps {
        let (a, b) = drift.at(step.lambda);
        let t = &eye - &a * step.h;
        let mean = &t * &law.mean + b * step.h;
        let cov = &t * &law.cov * t.transpose() + &eye * (2.0 * step.h);
        law = GaussianLaw { mean, cov: (&cov + cov.transpose()) * 0.5, time: law.time + step.h };
        out.push(law.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{constant_schedule, InnerBudget};

    fn std_path(var_pi: f64) -> GeometricPath {
        GeometricPath::new(Gaussian::univariate(0.0, 1.0).unwrap(), Gaussian::univariate(0.0, var_pi).unwrap()).unwrap()
    }

    #[test]
    fn zero_step_is_identity() {
        let path = std_path(2.0);
        let mut ens = ParticleEnsemble::from_states(vec![0.3, -1.0, 2.0], 1, 1).unwrap();
        step_tempered(&mut ens, &path, 0.4, 0.0).unwrap();
        assert_eq!(ens.states(), &[0.3, -1.0, 2.0]);
        assert_eq!(ens.step_count(), 1);
    }

    #[test]
    fn forced_noise_update() {
        let path = std_path(1.0);
        let (x0, h, z) = (0.8, 0.1, -0.37);
        let mut x = [x0];
        let mut g = [0.0];
        let mut s = [0.0];
        tempered_update(&path, 0.6, h, &mut x, &[z], &mut g, &mut s);
        assert!((x[0] - (x0 * (1.0 - h) + (2.0 * h).sqrt() * z)).abs() < 1e-15);
    }

    #[test]
    fn vanilla_reduction_is_bitwise() {
        let target = Gaussian::univariate(1.5, 3.0).unwrap();
        let path = GeometricPath::new(Gaussian::univariate(0.0, 1.0).unwrap(), target.clone()).unwrap();
        let mut ens = ParticleEnsemble::from_states(vec![0.1, 0.2, -0.4], 1, 99).unwrap();
        let mut plain = ens.states().to_vec();
        let mut rngs: Vec<ChaCha8Rng> = (0..3).map(|i| particle_rng(99, i)).collect();
        let h = 0.05;
        for _ in 0..50 {
            step_tempered(&mut ens, &path, 1.0, h).unwrap();
            for (x, rng) in plain.iter_mut().zip(rngs.iter_mut()) {
                let z: f64 = rng.sample(StandardNormal);
                *x = *x - h * target.gradient_1d(*x) + (2.0 * h).sqrt() * z;
            }
        }
        assert_eq!(ens.states(), plain.as_slice());
    }

    #[test]
    fn explosion_is_reported_with_particle_index() {
        let path = std_path(1.0);
        let mut ens = ParticleEnsemble::from_states(vec![0.0, 1e308, 0.0], 1, 1).unwrap();
        match step_tempered(&mut ens, &path, 1.0, 3.0) {
            Err(Error::Explosion { particle, step, .. }) => {
                assert_eq!(particle, 1);
                assert_eq!(step, 1);
            }
            other => panic!("expected explosion, got {other:?}"),
        }
    }

    #[test]
    fn zero_time_snapshot_is_initial_ensemble() {
        let path = std_path(4.0);
        let cfg = SimConfig {
            path,
            driver: Driver::Schedule {
                schedule: constant_schedule(1.0, 1.0).unwrap(),
                h: 0.1,
                snapshot_times: vec![0.0, 0.5],
            },
            n_particles: 16,
            seed: 5,
            init: Gaussian::univariate(0.0, 1.0).unwrap(),
            policy: StepPolicy::Explicit,
        };
        let snaps = run_schedule(&cfg).unwrap();
        let init = ParticleEnsemble::from_gaussian(&cfg.init, 16, 5).unwrap();
        assert_eq!(snaps[0].states, init.states());
        assert_eq!(snaps[1].step_count, 5);
        let Driver::Schedule { schedule, .. } = &cfg.driver else { unreachable!() };
        let bad = SimConfig {
            driver: Driver::Schedule { schedule: schedule.clone(), h: 0.3, snapshot_times: vec![0.5] },
            ..cfg.clone()
        };
        assert!(run_schedule(&bad).is_err());
    }

    #[test]
    fn guard_rejects_large_steps() {
        let path = GeometricPath::new(Gaussian::univariate(0.0, 1.0).unwrap(), Gaussian::univariate(0.0, 0.25).unwrap()).unwrap();
        let bundle = RegularityBundle::from_path(&path, 1.0);
        let ladder = TemperatureLadder::new(0.0, vec![0.5, 1.0], vec![InnerBudget::Steps { h: 0.2, n: 3 }; 2]).unwrap();
        let cfg = SimConfig {
            path,
            driver: Driver::Ladder { ladder, snapshot_levels: None },
            n_particles: 4,
            seed: 0,
            init: Gaussian::univariate(0.0, 1.0).unwrap(),
            policy: StepPolicy::Guarded(bundle),
        };
        assert!(matches!(run_ladder(&cfg), Err(Error::GuardViolation { level: 1, .. })));
        let ok = SimConfig { policy: StepPolicy::Explicit, ..cfg };
        assert_eq!(run_ladder(&ok).unwrap().len(), 2);
    }

    #[test]
    fn moment_flow_scalar_solution() {
        let ap = 0.25;
        let nu = Gaussian::univariate(0.0, 1.0).unwrap();
        let pi = Gaussian::univariate(0.0, 1.0 / ap).unwrap();
        let sched = constant_schedule(1.0, 10.0).unwrap();
        let p0 = GaussianLaw::from(&nu);
        for t in [0.5, 3.0, 10.0] {
            let law = gaussian_moment_flow(&nu, &pi, &sched, &p0, t).unwrap();
            let exact = 1.0 / ap + (1.0 - 1.0 / ap) * (-2.0 * ap * t).exp();
            assert!((law.cov[(0, 0)] - exact).abs() < 1e-9);
        }
        let still = gaussian_moment_flow(&nu, &nu, &sched, &p0, 4.0).unwrap();
        assert!((still.cov[(0, 0)] - 1.0).abs() < 1e-12 && still.mean[0].abs() < 1e-12);
    }

    #[test]
    fn moment_recursion_hand_step() {
        let nu = Gaussian::univariate(0.0, 1.0).unwrap();
        let pi = Gaussian::univariate(0.0, 10.0).unwrap();
        let seq = StepSequence { lambda0: 1.0, steps: vec![crate::schedules::Step { lambda: 1.0, h: 0.1 }], level_ends: vec![1] };
        let laws = gaussian_moment_recursion(&nu, &pi, &seq, &GaussianLaw::from(&nu)).unwrap();
        assert_eq!(laws.len(), 2);
        assert!((laws[1].cov[(0, 0)] - 1.1801).abs() < 1e-12);
        let empty = StepSequence { lambda0: 0.0, steps: vec![], level_ends: vec![] };
        let laws = gaussian_moment_recursion(&nu, &pi, &empty, &GaussianLaw::from(&nu)).unwrap();
        assert_eq!(laws, vec![GaussianLaw::from(&nu)]);
    }

    #[test]
    fn snapshot_csv_and_sidecar() {
        let ens = ParticleEnsemble::from_states(vec![1.0, 2.0, 3.0, 4.0], 2, 7).unwrap();
        let snap = ens.snapshot(None);
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("particle_id,dim_0,dim_1\n0,"));
        let mut side = Vec::new();
        snap.write_sidecar(&mut side, "abc").unwrap();
        let v: serde_json::Value = serde_json::from_slice(&side).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["schedule_hash"], "abc");
    }
}
