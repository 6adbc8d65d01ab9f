//! Tempering schedules `s ↦ λ(s)`, their Φ-reparametrisation, and temperature ladders.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::distributions::fmt17;
use crate::error::{ensure, Error, Result};
use crate::quadrature::gl16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    Linear,
    Optimal,
    /// Constant λ ≡ 1, returned by [`optimal_schedule`] when `α_π ≥ α_ν`.
    Vanilla,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Constant(f64),
    Linear,
    Optimal { alpha_nu: f64, factor: f64, clamp: f64 },
    Table { s: Vec<f64>, lambda: Vec<f64> },
}

/// A non-decreasing map `[0, horizon] → [0, 1]` with a piecewise-continuous derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    horizon: f64,
    kind: ScheduleKind,
    shape: Shape,
}

/// λ ≡ `value`. The horizon may be infinite.
pub fn constant_schedule(value: f64, horizon: f64) -> Result<Schedule> {
    ensure((0.0..=1.0).contains(&value), || format!("constant λ = {value} outside [0, 1]"))?;
    check_horizon(horizon)?;
    Ok(Schedule { horizon, kind: ScheduleKind::Constant, shape: Shape::Constant(value) })
}

/// λ(s) = s / t_end.
pub fn linear_schedule(t_end: f64) -> Result<Schedule> {
    ensure(t_end > 0.0 && t_end.is_finite(), || format!("linear schedule needs a finite horizon > 0, got {t_end}"))?;
    Ok(Schedule { horizon: t_end, kind: ScheduleKind::Linear, shape: Shape::Linear })
}

/// λ(s) = min(α_ν/(α_ν−α_π) · (1+α_ν s)/(2+α_ν s), 1); λ ≡ 1 (tagged vanilla) when α_π ≥ α_ν.
///
/// The schedule does not depend on the horizon, which is left infinite; use
/// [`Schedule::with_horizon`] before discretizing.
pub fn optimal_schedule(alpha_nu: f64, alpha_pi: f64) -> Result<Schedule> {
    ensure(alpha_nu > 0.0 && alpha_pi > 0.0, || {
        format!("need α_ν, α_π > 0, got ({alpha_nu}, {alpha_pi})")
    })?;
    if alpha_pi >= alpha_nu {
        return Ok(Schedule {
            horizon: f64::INFINITY,
            kind: ScheduleKind::Vanilla,
            shape: Shape::Constant(1.0),
        });
    }
    let factor = alpha_nu / (alpha_nu - alpha_pi);
    let clamp = (1.0 / alpha_pi - 2.0 / alpha_nu).max(0.0);
    Ok(Schedule {
        horizon: f64::INFINITY,
        kind: ScheduleKind::Optimal,
        shape: Shape::Optimal { alpha_nu, factor, clamp },
    })
}

/// A monotone piecewise-linear schedule through `(s_i, λ_i)`, with `s_0 = 0`.
pub fn custom_schedule(s: Vec<f64>, lambda: Vec<f64>) -> Result<Schedule> {
    ensure(s.len() == lambda.len() && s.len() >= 2, || "schedule table needs ≥ 2 rows of equal length".into())?;
    ensure(s[0] == 0.0, || format!("schedule table must start at s = 0, got {}", s[0]))?;
    ensure(s.windows(2).all(|w| w[1] > w[0]), || "schedule times must be strictly increasing".into())?;
    ensure(s.iter().all(|v| v.is_finite()), || "schedule times must be finite".into())?;
    ensure(lambda.iter().all(|l| (0.0..=1.0).contains(l)), || "schedule values must lie in [0, 1]".into())?;
    ensure(lambda.windows(2).all(|w| w[1] >= w[0]), || "schedule values must be non-decreasing".into())?;
    let horizon = s[s.len() - 1];
    Ok(Schedule { horizon, kind: ScheduleKind::Custom, shape: Shape::Table { s, lambda } })
}

fn check_horizon(h: f64) -> Result<()> {
    ensure(h > 0.0, || format!("horizon must be positive, got {h}"))
}

impl Schedule {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// The same schedule restricted to `[0, horizon]`. Linear and tabulated
    /// schedules are defined by their horizon, so only shrinking a table is allowed.
    pub fn with_horizon(&self, horizon: f64) -> Result<Schedule> {
        check_horizon(horizon)?;
        match &self.shape {
            Shape::Linear => linear_schedule(horizon),
            Shape::Table { .. } => {
                ensure(horizon <= self.horizon, || "cannot extend a tabulated schedule".into())?;
                let mut out = self.clone();
                out.horizon = horizon;
                Ok(out)
            }
            _ => {
                let mut out = self.clone();
                out.horizon = horizon;
                Ok(out)
            }
        }
    }

    /// λ(s); `s` is clamped to `[0, horizon]`.
    pub fn value(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.horizon);
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Linear => (s / self.horizon).min(1.0),
            Shape::Optimal { alpha_nu, factor, clamp } => {
                if s >= *clamp {
                    1.0
                } else {
                    (factor * (1.0 + alpha_nu * s) / (2.0 + alpha_nu * s)).min(1.0)
                }
            }
            Shape::Table { s: knots, lambda } => {
                let i = segment(knots, s);
                let (s0, s1) = (knots[i], knots[i + 1]);
                let w = (s - s0) / (s1 - s0);
                lambda[i] + w * (lambda[i + 1] - lambda[i])
            }
        }
    }

    /// Weak derivative λ̇(s): the right limit, except at the horizon where the left
    /// limit is used. Zero at and after the clamp time of the optimal schedule.
    pub fn derivative(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.horizon);
        match &self.shape {
            Shape::Constant(_) => 0.0,
            Shape::Linear => 1.0 / self.horizon,
            Shape::Optimal { alpha_nu, factor, clamp } => {
                if s >= *clamp {
                    0.0
                } else {
                    let q = 2.0 + alpha_nu * s;
                    factor * alpha_nu / (q * q)
                }
            }
            Shape::Table { s: knots, lambda } => {
                let i = segment(knots, s);
                (lambda[i + 1] - lambda[i]) / (knots[i + 1] - knots[i])
            }
        }
    }

    /// Left and right limits of λ̇ at `s`.
    pub fn derivative_limits(&self, s: f64) -> (f64, f64) {
        let eps = 1e-12 * self.horizon.min(1e12).max(1.0);
        match &self.shape {
            Shape::Optimal { clamp, .. } if s == *clamp && s > 0.0 => {
                (self.derivative(s - eps), 0.0)
            }
            Shape::Table { s: knots, .. } => {
                let right = self.derivative(s);
                let left = if s > 0.0 && knots.contains(&s) { self.derivative(s - eps) } else { right };
                (left, right)
            }
            _ => (self.derivative(s), self.derivative(s)),
        }
    }

    /// Interior points of `(0, horizon)` where λ̇ may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Optimal { clamp, .. } if *clamp > 0.0 && *clamp < self.horizon => vec![*clamp],
            Shape::Table { s, .. } => s.iter().copied().filter(|v| *v > 0.0 && *v < self.horizon).collect(),
            _ => Vec::new(),
        }
    }

    /// The time after which the optimal schedule is clamped at 1.
    pub fn clamp_time(&self) -> Option<f64> {
        match &self.shape {
            Shape::Optimal { clamp, .. } => Some(*clamp),
            _ => None,
        }
    }

    pub fn check_time(&self, s: f64) -> Result<()> {
        ensure((0.0..=self.horizon).contains(&s), || {
            format!("time {s} outside the schedule horizon [0, {}]", self.horizon)
        })
    }

    fn finite_horizon(&self) -> Result<f64> {
        if self.horizon.is_finite() {
            Ok(self.horizon)
        } else {
            Err(Error::Domain("schedule has no finite horizon; call with_horizon first".into()))
        }
    }

    /// A stable textual description, used for content hashes.
    pub fn fingerprint(&self) -> String {
        format!("{:?}|horizon={:e}|{:?}", self.kind, self.horizon, self.shape)
    }

    /// CSV `s,lambda`: the knots of a tabulated schedule, otherwise `n_points`
    /// uniformly spaced samples (plus the breakpoints).
    pub fn write_csv<W: Write>(&self, mut w: W, n_points: usize) -> Result<()> {
        let horizon = self.finite_horizon()?;
        writeln!(w, "s,lambda")?;
        let points: Vec<f64> = match &self.shape {
            Shape::Table { s, .. } => s.iter().copied().filter(|v| *v <= horizon).chain(std::iter::once(horizon)).collect(),
            _ => {
                let n = n_points.max(2);
                let mut p: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
                p.extend(self.breakpoints());
                p
            }
        };
        let mut points = points;
        points.sort_by(|a, b| a.total_cmp(b));
        points.dedup();
        for s in points {
            writeln!(w, "{},{}", fmt17(s), fmt17(self.value(s)))?;
        }
        Ok(())
    }

    /// Reads a CSV `s,lambda` table into a custom schedule, validating monotonicity.
    pub fn read_csv<R: Read>(r: R) -> Result<Schedule> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader
            .headers()
            .map_err(|e| Error::Domain(format!("schedule CSV: {e}")))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Domain(format!("schedule CSV lacks a `{name}` column")))
        };
        let (is, il) = (col("s")?, col("lambda")?);
        let mut s = Vec::new();
        let mut lambda = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Domain(format!("schedule CSV row {}: {e}", row + 1)))?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Domain(format!("schedule CSV row {}: bad number", row + 1)))
            };
            s.push(parse(is)?);
            lambda.push(parse(il)?);
        }
        custom_schedule(s, lambda)
    }
}

// Index i of the table segment [s_i, s_{i+1}] containing s.
fn segment(knots: &[f64], s: f64) -> usize {
    let n = knots.len();
    match knots.binary_search_by(|k| k.total_cmp(&s)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// `(1−λ_s)α_ν + λ_s α_π`, the strongly-log-concave lower bound on the inverse
/// log-Sobolev constant of `μ_{λ_s}`.
pub fn alpha_along(schedule: &Schedule, alpha_nu: f64, alpha_pi: f64, s: f64) -> Result<f64> {
    schedule.check_time(s)?;
    let l = schedule.value(s);
    Ok((1.0 - l) * alpha_nu + l * alpha_pi)
}

/// Cached antiderivative `Ā(s) = ∫_0^s α` of a piecewise-smooth function,
/// built once by adaptive bisection and then evaluated in O(log n).
#[derive(Clone)]
pub struct Antiderivative {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    starts: Vec<f64>,
    cumulative: Vec<f64>,
    end: f64,
    total: f64,
}

impl std::fmt::Debug for Antiderivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Antiderivative")
            .field("panels", &self.starts.len())
            .field("end", &self.end)
            .field("total", &self.total)
            .finish()
    }
}

impl Antiderivative {
    /// `breakpoints` are interior points where `f` may be non-smooth.
    pub fn new(
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        end: f64,
        breakpoints: &[f64],
    ) -> Result<Self> {
        ensure(end >= 0.0 && end.is_finite(), || format!("antiderivative end {end} must be finite and ≥ 0"))?;
        let mut cuts = vec![0.0];
        cuts.extend(breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < end));
        cuts.push(end);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut leaves = Vec::new();
        for w in cuts.windows(2) {
            bisect(&*f, w[0], w[1], 0, &mut leaves)?;
        }
        let mut starts = Vec::with_capacity(leaves.len());
        let mut cumulative = Vec::with_capacity(leaves.len());
        let mut acc = 0.0;
        for (a, v) in leaves {
            starts.push(a);
            cumulative.push(acc);
            acc += v;
        }
        if starts.is_empty() {
            starts.push(0.0);
            cumulative.push(0.0);
        }
        Ok(Self { f, starts, cumulative, end, total: acc })
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s >= self.end {
            return self.total;
        }
        if s <= 0.0 {
            return 0.0;
        }
        let i = match self.starts.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => return self.cumulative[i],
            Err(i) => i - 1,
        };
        self.cumulative[i] + gl16().integrate(&*self.f, self.starts[i], s)
    }

    /// `∫_s^end α`.
    pub fn remaining(&self, s: f64) -> f64 {
        (self.total - self.eval(s)).max(0.0)
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, a: f64, b: f64, depth: usize, out: &mut Vec<(f64, f64)>) -> Result<()> {
    let rule = gl16();
    let m = 0.5 * (a + b);
    let whole = rule.integrate(f, a, b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    let fine = left + right;
    if !fine.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    if (whole - fine).abs() <= 1e-15 * fine.abs().max(b - a) {
        out.push((a, left));
        out.push((m, right));
        return Ok(());
    }
    if depth > 60 {
        return Err(Error::Numerical(format!("adaptive quadrature failed near [{a}, {b}]")));
    }
    bisect(f, a, m, depth + 1, out)?;
    bisect(f, m, b, depth + 1, out)
}

/// `Φ_s = exp(−∫_s^t α)` on `[0, t]`, so that `Φ_t = 1` and `Φ̇ = αΦ`.
#[derive(Debug, Clone)]
pub struct PhiCurve {
    horizon: f64,
    alpha_nu: f64,
    alpha_pi: f64,
    alpha: Antiderivative,
    breakpoints: Vec<f64>,
}

impl PhiCurve {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn value(&self, s: f64) -> f64 {
        (-self.alpha.remaining(s)).exp()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        (self.alpha.f)(s.clamp(0.0, self.horizon)) * self.value(s)
    }

    /// `(α_ν − Φ̇/Φ)/(α_ν − α_π)`.
    pub fn recovered_lambda(&self, s: f64) -> f64 {
        (self.alpha_nu - self.derivative(s) / self.value(s)) / (self.alpha_nu - self.alpha_pi)
    }

    pub fn alphas(&self) -> (f64, f64) {
        (self.alpha_nu, self.alpha_pi)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

/// Antiderivative of `s ↦ (1−λ_s)α_ν + λ_s α_π` over the schedule's horizon.
pub fn alpha_antiderivative(schedule: &Schedule, alpha_nu: f64, alpha_pi: f64) -> Result<Antiderivative> {
    let horizon = schedule.finite_horizon()?;
    let sched = schedule.clone();
    let f = Arc::new(move |s: f64| {
        let l = sched.value(s);
        (1.0 - l) * alpha_nu + l * alpha_pi
    });
    Antiderivative::new(f, horizon, &schedule.breakpoints())
}

pub fn schedule_to_phi(schedule: &Schedule, alpha_nu: f64, alpha_pi: f64) -> Result<PhiCurve> {
    ensure(alpha_pi < alpha_nu, || format!("need α_π < α_ν, got ({alpha_nu}, {alpha_pi})"))?;
    ensure(alpha_pi > 0.0, || "α_π must be positive".into())?;
    let alpha = alpha_antiderivative(schedule, alpha_nu, alpha_pi)?;
    Ok(PhiCurve {
        horizon: schedule.finite_horizon()?,
        alpha_nu,
        alpha_pi,
        alpha,
        breakpoints: schedule.breakpoints(),
    })
}

/// Inner sampling budget of one ladder level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerBudget {
    /// `n` steps of size `h`.
    Steps { h: f64, n: u64 },
    /// Total inner time `t`, with step `h` or the sampler's default when `None`.
    Time { t: f64, h: Option<f64> },
}

impl InnerBudget {
    /// Splits the budget into `(n, h)` given a fallback step size; the step is
    /// shrunk so that `n·h` hits a time budget exactly.
    pub fn resolve(&self, default_h: f64) -> Result<(u64, f64)> {
        match *self {
            InnerBudget::Steps { h, n } => Ok((n, h)),
            InnerBudget::Time { t, h } => {
                let h = h.unwrap_or(default_h);
                ensure(h > 0.0, || format!("step size {h} must be positive"))?;
                let n = (t / h - 1e-9).ceil().max(1.0) as u64;
                Ok((n, t / n as f64))
            }
        }
    }

    pub fn total_time(&self) -> Option<f64> {
        match *self {
            InnerBudget::Steps { h, n } => Some(h * n as f64),
            InnerBudget::Time { t, .. } => Some(t),
        }
    }
}

/// Levels `λ_1 ≤ … ≤ λ_K` reached from `λ_0`, each with an inner budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureLadder {
    lambda0: f64,
    levels: Vec<f64>,
    budgets: Vec<InnerBudget>,
}

impl TemperatureLadder {
    pub fn new(lambda0: f64, levels: Vec<f64>, budgets: Vec<InnerBudget>) -> Result<Self> {
        ensure(levels.len() == budgets.len(), || {
            format!("{} levels but {} budgets", levels.len(), budgets.len())
        })?;
        ensure((0.0..=1.0).contains(&lambda0), || format!("λ_0 = {lambda0} outside [0, 1]"))?;
        ensure(levels.iter().all(|l| (0.0..=1.0).contains(l)), || "levels must lie in [0, 1]".into())?;
        let mut prev = lambda0;
        for &l in &levels {
            ensure(l >= prev, || "levels must be non-decreasing".into())?;
            prev = l;
        }
        for b in &budgets {
            let ok = match *b {
                InnerBudget::Steps { h, n } => h > 0.0 && h.is_finite() && n >= 1,
                InnerBudget::Time { t, h } => t > 0.0 && t.is_finite() && h.is_none_or(|h| h > 0.0),
            };
            ensure(ok, || format!("inner budget {b:?} must be positive"))?;
        }
        Ok(Self { lambda0, levels, budgets })
    }

    /// `K` equally spaced levels `λ_k = k/K` from `λ_0 = 0`, each with inner time `t`.
    pub fn uniform(k: usize, inner_time: f64, h: Option<f64>) -> Result<Self> {
        ensure(k >= 1, || "ladder needs at least one level".into())?;
        let levels = (1..=k).map(|i| i as f64 / k as f64).collect();
        Self::new(0.0, levels, vec![InnerBudget::Time { t: inner_time, h }; k])
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn budgets(&self) -> &[InnerBudget] {
        &self.budgets
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// The first `k` levels.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        ensure(k <= self.len(), || format!("ladder has only {} levels", self.len()))?;
        Self::new(self.lambda0, self.levels[..k].to_vec(), self.budgets[..k].to_vec())
    }

    /// Expands the ladder into individual steps `(λ_i, h_i)`; every budget
    /// must carry an explicit step size.
    pub fn step_sequence(&self) -> Result<StepSequence> {
        let mut steps = Vec::new();
        let mut level_ends = Vec::with_capacity(self.len());
        for (&l, b) in self.levels.iter().zip(&self.budgets) {
            let (n, h) = b.resolve(f64::NAN)?;
            ensure(h.is_finite(), || "step sequence needs explicit step sizes".into())?;
            steps.extend(std::iter::repeat_n(Step { lambda: l, h }, n as usize));
            level_ends.push(steps.len());
        }
        Ok(StepSequence { lambda0: self.lambda0, steps, level_ends })
    }

    pub fn fingerprint(&self) -> String {
        format!("ladder|{:e}|{:?}|{:?}", self.lambda0, self.levels, self.budgets)
    }
}

/// One discrete Langevin step driven by `lambda` with step size `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub lambda: f64,
    pub h: f64,
}

/// A flat list of steps, with `level_ends[k]` the number of steps completed
/// at the end of ladder level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSequence {
    pub lambda0: f64,
    pub steps: Vec<Step>,
    pub level_ends: Vec<usize>,
}

impl StepSequence {
    /// `λ_{i}` for `i = 0..=len` (index 0 is `λ_0`).
    pub fn lambda(&self, i: usize) -> f64 {
        if i == 0 {
            self.lambda0
        } else {
            self.steps[i - 1].lambda
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Samples `λ_k = λ(k·t_end/n)` at right endpoints with uniform `h = t_end/n`.
pub fn discretize(schedule: &Schedule, n_steps: usize) -> Result<TemperatureLadder> {
    ensure(n_steps >= 1, || "discretization needs at least one step".into())?;
    let t = schedule.finite_horizon()?;
    let h = t / n_steps as f64;
    let levels = (1..=n_steps).map(|k| schedule.value(if k == n_steps { t } else { k as f64 * h })).collect();
    TemperatureLadder::new(schedule.value(0.0), levels, vec![InnerBudget::Steps { h, n: 1 }; n_steps])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_schedule_examples() {
        let s = optimal_schedule(1.0, 0.01).unwrap();
        assert!((s.value(0.0) - 0.505_050_505_050_505).abs() < 1e-12);
        assert_eq!(s.kind(), ScheduleKind::Optimal);
        assert!((s.clamp_time().unwrap() - 98.0).abs() < 1e-12);
        assert_eq!(s.value(98.0), 1.0);
        assert_eq!(s.derivative(120.0), 0.0);
        let (left, right) = s.derivative_limits(98.0);
        assert!(left > 0.0 && right == 0.0);

        let flat = optimal_schedule(1.0, 0.6).unwrap().with_horizon(10.0).unwrap();
        let one = constant_schedule(1.0, 10.0).unwrap();
        for i in 0..=1000 {
            let t = i as f64 * 0.01;
            assert_eq!(flat.value(t), one.value(t));
        }
        assert_eq!(optimal_schedule(1.0, 1.5).unwrap().kind(), ScheduleKind::Vanilla);

        let limit = optimal_schedule(1.0, 1e-9).unwrap();
        for s in [0.0, 1.0, 7.5] {
            assert!((limit.value(s) - (1.0 - 1.0 / (2.0 + s))).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_schedule_examples() {
        let s = linear_schedule(10.0).unwrap();
        assert_eq!(s.value(0.0), 0.0);
        assert_eq!(s.value(10.0), 1.0);
        assert_eq!(s.value(2.5), 0.25);
        assert_eq!(s.derivative(3.0), 0.1);
        assert!(linear_schedule(0.0).is_err());
    }

    #[test]
    fn alpha_along_examples() {
        let s = custom_schedule(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(alpha_along(&s, 1.0, 0.01, 0.0).unwrap(), 1.0);
        assert_eq!(alpha_along(&s, 1.0, 0.01, 2.0).unwrap(), 0.01);
        assert!((alpha_along(&s, 1.0, 0.01, 1.0).unwrap() - 0.505).abs() < 1e-15);
        assert!(alpha_along(&s, 1.0, 0.01, 2.5).is_err());
    }

    #[test]
    fn phi_examples() {
        let t = 5.0;
        let (an, ap) = (1.0, 0.2);
        let ones = schedule_to_phi(&constant_schedule(1.0, t).unwrap(), an, ap).unwrap();
        let zeros = schedule_to_phi(&constant_schedule(0.0, t).unwrap(), an, ap).unwrap();
        assert_eq!(ones.value(t), 1.0);
        for s in [0.0, 1.3, 4.9] {
            assert!((ones.value(s) - (ap * (s - t)).exp()).abs() < 1e-14);
            assert!((zeros.value(s) - (an * (s - t)).exp()).abs() < 1e-14);
        }
        // case 3: α_π ≤ α_ν/(tα_ν+2) makes Φ linear
        let (an, ap, t) = (1.0, 0.05, 10.0);
        let phi = schedule_to_phi(&optimal_schedule(an, ap).unwrap().with_horizon(t).unwrap(), an, ap).unwrap();
        let slope = an / (2.0 + t * an);
        for s in [0.0, 2.0, 5.5, 10.0] {
            assert!((phi.value(s) - (slope * s + 2.0 / (2.0 + t * an))).abs() < 1e-12);
            assert!((phi.derivative(s) - slope).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_examples() {
        let lad = discretize(&linear_schedule(1.0).unwrap(), 4).unwrap();
        assert_eq!(lad.levels(), &[0.25, 0.5, 0.75, 1.0]);
        assert!(lad.budgets().iter().all(|b| *b == InnerBudget::Steps { h: 0.25, n: 1 }));
        let ones = discretize(&constant_schedule(1.0, 3.0).unwrap(), 7).unwrap();
        assert!(ones.levels().iter().all(|&l| l == 1.0));
        let opt = optimal_schedule(1.0, 0.01).unwrap().with_horizon(2.0).unwrap();
        let lad = discretize(&opt, 2).unwrap();
        assert!((lad.levels()[0] - (1.0 / 0.99) * (2.0 / 3.0)).abs() < 1e-14);
        assert!((lad.levels()[1] - ((1.0 / 0.99) * 0.75f64).min(1.0)).abs() < 1e-14);
        assert!(discretize(&optimal_schedule(1.0, 0.01).unwrap(), 2).is_err());
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let s = custom_schedule(vec![0.0, 0.5, 2.0], vec![0.1, 0.4, 1.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, 0).unwrap();
        let back = Schedule::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        let bad = "s,lambda\n0,0.5\n1,0.4\n";
        assert!(Schedule::read_csv(bad.as_bytes()).is_err());
        assert!(Schedule::read_csv("s,foo\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn ladder_budgets() {
        let lad = TemperatureLadder::uniform(4, 0.5, Some(0.1)).unwrap();
        let seq = lad.step_sequence().unwrap();
        assert_eq!(seq.len(), 20);
        assert_eq!(seq.level_ends, vec![5, 10, 15, 20]);
        assert_eq!(seq.lambda(0), 0.0);
        assert_eq!(seq.lambda(6), 0.5);
        let (n, h) = InnerBudget::Time { t: 1.0, h: Some(0.3) }.resolve(1.0).unwrap();
        assert_eq!(n, 4);
        assert!((h - 0.25).abs() < 1e-15);
        assert!(TemperatureLadder::new(0.5, vec![0.4], vec![InnerBudget::Steps { h: 0.1, n: 1 }]).is_err());
        assert!(TemperatureLadder::uniform(2, 1.0, None).unwrap().step_sequence().is_err());
    }
}
