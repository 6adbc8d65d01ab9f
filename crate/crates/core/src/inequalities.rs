//! Poincaré / log-Sobolev probes and total-variation lower bounds along the
//! geometric path.
//!
//! Masses here can be as small as `e^{-45}`, so everything is computed as
//! log-masses and exponentiated only at the end.

use std::io::Write;

use crate::distributions::{
    fmt17, log_integral_1d, log_mass_1d, make_contaminated_target, Density, Gaussian, GeometricPath, Potential,
    SmoothedUniform,
};
use crate::error::{domain, ensure, Error, Result};
use crate::metrics::chi2_quadrature;
use crate::quadrature;
use crate::special::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Tent,
    Custom,
}

/// A bounded piecewise-linear test function, constant outside its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    kind: TestKind,
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TestFunction {
    /// 1 left of `left`, 0 right of `right`, linear in between.
    pub fn tent(left: f64, right: f64) -> Result<Self> {
        ensure(left < right && left.is_finite() && right.is_finite(), || {
            format!("tent needs left < right, got [{left}, {right}]")
        })?;
        Ok(Self { kind: TestKind::Tent, knots: vec![left, right], values: vec![1.0, 0.0] })
    }

    /// The tent on `[m(1−a)/2, m(1−a)]` separating the two regions of the
    /// contaminated path.
    pub fn separating_tent(m: f64, a: f64) -> Result<Self> {
        Self::tent(m * (1.0 - a) / 2.0, m * (1.0 - a))
    }

    /// Linear interpolation of `(knots, values)`.
    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        ensure(!knots.is_empty() && knots.len() == values.len(), || "knots and values must match".into())?;
        ensure(knots.windows(2).all(|w| w[0] < w[1]), || "knots must be strictly increasing".into())?;
        ensure(knots.iter().chain(&values).all(|v| v.is_finite()), || "knots and values must be finite".into())?;
        Ok(Self { kind: TestKind::Custom, knots, values })
    }

    /// `x ↦ clamp(x, −r, r)`.
    pub fn clamped_identity(r: f64) -> Result<Self> {
        ensure(r > 0.0, || "clamp radius must be positive".into())?;
        Self::piecewise_linear(vec![-r, r], vec![-r, r])
    }

    pub fn kind(&self) -> TestKind {
        self.kind
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[k.len() - 1] {
            return self.values[k.len() - 1];
        }
        let i = k.partition_point(|&t| t <= x) - 1;
        let s = (x - k[i]) / (k[i + 1] - k[i]);
        self.values[i] + s * (self.values[i + 1] - self.values[i])
    }

    /// Slope on each interior piece `[k_i, k_{i+1}]`.
    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
            .collect()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x < k[0] || x > k[k.len() - 1] || k.len() < 2 {
            return 0.0;
        }
        let i = (k.partition_point(|&t| t <= x) - 1).min(k.len() - 2);
        self.slopes()[i]
    }
}

/// `log(Var_q(ψ) / ‖ψ′‖²_{L²(q)})` for a 1D law `q ∝ e^{−V}`.
pub fn log_rayleigh_quotient(q: &dyn Potential, psi: &TestFunction) -> Result<f64> {
    ensure(q.dim() == 1, || "Rayleigh probes are one-dimensional".into())?;
    let log_z = log_integral_1d(q)?;
    let k = psi.knots();
    let n = k.len();
    let log_mass = |lo: f64, hi: f64| -> Result<f64> { Ok(log_mass_1d(q, lo, hi)? - log_z) };
    let mut cuts: Vec<f64> = k.to_vec();
    for kink in q.kinks() {
        if kink > k[0] && kink < k[n - 1] {
            cuts.push(kink);
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();

    // Dirichlet energy: slope² × mass of each piece.
    let mut energy = Vec::new();
    for (w, s) in k.windows(2).zip(psi.slopes()) {
        if s != 0.0 {
            energy.push(2.0 * s.abs().ln() + log_mass(w[0], w[1])?);
        }
    }
    let log_energy = log_sum_exp(&energy);
    if log_energy == f64::NEG_INFINITY {
        return Err(Error::DegenerateTest("test function has zero Dirichlet energy".into()));
    }

    // Two passes: the mean, then E(ψ − mean)² assembled from log pieces.
    let logq = |x: f64| -q.value_1d(x) - log_z;
    let (left, right) = (log_mass(f64::NEG_INFINITY, k[0])?, log_mass(k[n - 1], f64::INFINITY)?);
    let piece = |w: &[f64], g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let panels = ((w[1] - w[0]) / 0.05).ceil().clamp(4.0, 4096.0) as usize;
        quadrature::log_integrate(|x| g(x) + logq(x), w[0], w[1], panels, 1e-12)
    };
    let mut mean = psi.values[0] * left.exp() + psi.values[n - 1] * right.exp();
    for w in cuts.windows(2) {
        let pos = piece(w, &|x| psi.value(x).max(0.0).ln())?;
        let neg = piece(w, &|x| (-psi.value(x)).max(0.0).ln())?;
        mean += pos.exp() - neg.exp();
    }
    let sq = |v: f64| 2.0 * (v - mean).abs().ln();
    let mut var = vec![sq(psi.values[0]) + left, sq(psi.values[n - 1]) + right];
    for w in cuts.windows(2) {
        var.push(piece(w, &|x| sq(psi.value(x)))?);
    }
    let log_var = log_sum_exp(&var);
    if log_var == f64::NEG_INFINITY {
        return Err(Error::DegenerateTest("test function is constant under q".into()));
    }
    Ok(log_var - log_energy)
}

/// `Var_q(ψ)/‖ψ′‖²_{L²(q)}`: any bounded ψ certifies `C_P(q)` is at least this.
pub fn rayleigh_poincare_lower(q: &dyn Potential, psi: &TestFunction) -> Result<f64> {
    log_rayleigh_quotient(q, psi).map(f64::exp)
}

/// The path from `N(0,1)` to the contaminated target
/// `(1−e^{−a²m²/2})N(m,1) + e^{−a²m²/2}u_m`.
pub fn unimodal_path(m: f64, a: f64) -> Result<GeometricPath> {
    GeometricPath::new(Gaussian::standard(1)?, make_contaminated_target(m, a)?)
}

/// `e^{m²(1−λ)/100}/(4·10⁴ m) − m²`; negative values are vacuous but returned as is.
pub fn thm3_poincare_bound(m: f64, lambda: f64) -> Result<f64> {
    ensure(m >= 10.0, || format!("the Poincaré bound needs m ≥ 10, got {m}"))?;
    ensure((0.5..=1.0).contains(&lambda), || format!("the Poincaré bound needs λ ∈ [1/2, 1], got {lambda}"))?;
    Ok((m * m * (1.0 - lambda) / 100.0).exp() / (4e4 * m) - m * m)
}

/// `(log p − log(1−p))/(2p − 1)`, equal to 2 at `p = ½`.
pub fn lambda_p(p: f64) -> f64 {
    let y = 2.0 * p - 1.0;
    if y.abs() < 1e-4 {
        let y2 = y * y;
        2.0 * (1.0 + y2 / 3.0 + y2 * y2 / 5.0)
    } else {
        2.0 * y.atanh() / y
    }
}

/// Log-Sobolev upper bound for `pQ₀ + (1−p)Q₁`:
/// `max{(1+(1−p)λ_p)C₀, (1+pλ_p(1+χ²(Q₀,Q₁)))C₁}`.
pub fn lsi_mixture_upper(p: f64, c0: f64, c1: f64, chi2_01: f64) -> Result<f64> {
    ensure(p > 0.0 && p < 1.0, || format!("mixture weight must lie in (0,1), got {p}"))?;
    ensure(c0 >= 0.0 && c1 >= 0.0 && chi2_01 >= 0.0, || "constants must be non-negative".into())?;
    let l = lambda_p(p);
    Ok(((1.0 + (1.0 - p) * l) * c0).max((1.0 + p * l * (1.0 + chi2_01)) * c1))
}

/// Holley–Stroock bound on `C_LS(u_m)` with comparison width `r = 1/m`:
/// `(1/α_r)·exp(α_r(3m/2 + r)² + r²/2)`, `α_r = r/(2r + 3m)`. Checked against `16m²`.
pub fn lsi_um_upper(m: f64) -> Result<f64> {
    ensure(m >= 1.0 && m.is_finite(), || format!("need m ≥ 1, got {m}"))?;
    let r = 1.0 / m;
    let alpha = r / (2.0 * r + 3.0 * m);
    let v = (alpha * (1.5 * m + r).powi(2) + 0.5 * r * r).exp() / alpha;
    if v > 16.0 * m * m {
        return Err(Error::Invariant(format!("C_LS(u_m) bound {v} exceeds 16m² = {}", 16.0 * m * m)));
    }
    Ok(v)
}

/// Log-Sobolev upper bound for the contaminated target:
/// `81a²m⁵/(1 − 2e^{−a²m²/2})`, or `324m³` at the equal-weight point `a = √(2 log 2)/m`.
pub fn lsi_pi_upper(m: f64, a: f64) -> Result<f64> {
    ensure(m >= 10.0, || format!("need m ≥ 10, got {m}"))?;
    ensure(a > 0.0 && a < 1.0, || format!("need a ∈ (0,1), got {a}"))?;
    let e = 0.5 * a * a * m * m;
    if (e - std::f64::consts::LN_2).abs() <= 1e-12 * std::f64::consts::LN_2 {
        return Ok(324.0 * m.powi(3));
    }
    if e <= std::f64::consts::LN_2 {
        return Err(domain(format!("a²m²/2 = {e} must exceed log 2")));
    }
    Ok(81.0 * a * a * m.powi(5) / (-2.0 * (-e).exp()).ln_1p().exp())
}

/// `χ²(N(m,1), u_m)` by quadrature, checked against `χ² + 1 ≤ 5m`.
pub fn chi2_gauss_um(m: f64) -> Result<f64> {
    ensure(m >= 4.0, || format!("need m ≥ 4, got {m}"))?;
    let p: Density = Gaussian::univariate(m, 1.0)?.into();
    let q: Density = SmoothedUniform::new(m)?.into();
    let v = chi2_quadrature(&p, &q)?;
    if v + 1.0 > 5.0 * m {
        return Err(Error::Invariant(format!("χ²(N(m,1), u_m) + 1 = {} exceeds 5m", v + 1.0)));
    }
    Ok(v)
}

/// Inputs of the general TV lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TVLowerInput {
    /// `I = [a, b]`.
    pub interval: (f64, f64),
    /// Bound on both scores over `I`.
    pub score_bound: f64,
    /// Bound on `μ_λ(I)` for every level used.
    pub delta: f64,
    /// `λ_1, …, λ_K`.
    pub levels: Vec<f64>,
    /// `T_1, …, T_K`.
    pub inner_times: Vec<f64>,
}

/// Reference masses entering the general bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailMasses {
    /// `π([b, ∞))`.
    pub pi_right: f64,
    /// `π(I)`.
    pub pi_interval: f64,
    /// `ν([b, ∞))`.
    pub nu_right: f64,
}

impl TVLowerInput {
    fn validate(&self) -> Result<()> {
        let (a, b) = self.interval;
        ensure(a < b, || format!("interval [{a}, {b}] is empty"))?;
        ensure(self.score_bound >= 0.0 && self.delta >= 0.0, || "B and δ must be non-negative".into())?;
        ensure(self.levels.len() == self.inner_times.len(), || {
            format!("{} levels but {} inner times", self.levels.len(), self.inner_times.len())
        })?;
        ensure(self.levels.windows(2).all(|w| w[0] <= w[1]), || "levels must be non-decreasing".into())?;
        ensure(self.inner_times.iter().all(|t| *t >= 0.0), || "inner times must be non-negative".into())
    }
}

/// Per-level lower bound on `TV(p^k, π)`:
/// `π[b,∞) − π(I) − ν[b,∞) − δ − (B/(b−a))·√δ·Σ_{i≤k} T_i(χ²_i + 1)^{1/2}`.
/// Raw values are returned; negative means vacuous.
pub fn general_tv_lower(input: &TVLowerInput, masses: TailMasses, chi2_per_level: &[f64]) -> Result<Vec<f64>> {
    input.validate()?;
    ensure(chi2_per_level.len() == input.levels.len(), || {
        format!("{} χ² values for {} levels", chi2_per_level.len(), input.levels.len())
    })?;
    let (a, b) = input.interval;
    let base = masses.pi_right - masses.pi_interval - masses.nu_right - input.delta;
    let coef = input.score_bound / (b - a) * input.delta.sqrt();
    let mut acc = 0.0;
    Ok(input
        .inner_times
        .iter()
        .zip(chi2_per_level)
        .map(|(t, c)| {
            acc += t * (c + 1.0).sqrt();
            base - coef * acc
        })
        .collect())
}

fn cumulative(times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect()
}

/// `1/20 − 16e^{−m²/64}·Σ_{i≤k} T_i` for the bimodal target (`m ≥ 11`).
pub fn thm5_tv_lower(m: f64, inner_times: &[f64]) -> Result<Vec<f64>> {
    ensure(m >= 11.0, || format!("the bimodal bound needs m ≥ 11, got {m}"))?;
    let c = 16.0 * (-m * m / 64.0).exp();
    Ok(cumulative(inner_times).into_iter().map(|s| 0.05 - c * s).collect())
}

/// `δ_k = 6m³e^{−(1−λ_k)m²/10}`.
pub fn thm6_delta(m: f64, lambda: f64) -> f64 {
    6.0 * m.powi(3) * (-(1.0 - lambda) * m * m / 10.0).exp()
}

/// `1/5 − δ_k − 10m√δ_k·Σ_{i≤k} T_i` for the equal-weight contaminated target (`m ≥ 4`).
pub fn thm6_tv_lower(m: f64, levels: &[f64], inner_times: &[f64]) -> Result<Vec<f64>> {
    ensure(m >= 4.0, || format!("the unimodal bound needs m ≥ 4, got {m}"))?;
    ensure(levels.len() == inner_times.len(), || "levels and inner times must match".into())?;
    Ok(levels
        .iter()
        .zip(cumulative(inner_times))
        .map(|(&l, s)| {
            let d = thm6_delta(m, l);
            0.2 - d - 10.0 * m * d.sqrt() * s
        })
        .collect())
}

/// `C^{λ_k} − 1`, valid when `ν ≤ Cπ` pointwise.
pub fn chi2_ladder_bound(c: f64, lambda: f64) -> Result<f64> {
    ensure(c >= 1.0, || format!("domination constant must be ≥ 1, got {c}"))?;
    ensure((0.0..=1.0).contains(&lambda), || format!("λ = {lambda} outside [0, 1]"))?;
    Ok((lambda * c.ln()).exp_m1())
}

/// One checked inequality, in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct FactCheck {
    pub name: &'static str,
    pub applicable: bool,
    /// Log of the computed quantity.
    pub log_value: f64,
    /// Log of the bound it is compared with.
    pub log_bound: f64,
    /// `true` when the bound is an upper bound.
    pub upper: bool,
}

impl FactCheck {
    /// `None` when the fact does not apply.
    pub fn holds(&self) -> Option<bool> {
        self.applicable.then(|| {
            let slack = 1e-9 * self.log_bound.abs().max(1.0);
            if self.upper {
                self.log_value <= self.log_bound + slack
            } else {
                self.log_value >= self.log_bound - slack
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnimodalFacts {
    pub m: f64,
    pub a: f64,
    pub lambda: f64,
    pub log_c: f64,
    pub checks: Vec<FactCheck>,
}

impl UnimodalFacts {
    /// Every applicable fact holds.
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds() != Some(false))
    }
}

/// Mass facts for the path from `N(0,1)` to the contaminated target, with
/// `I = [m(1−a)/2, m(1−a)]`:
/// 1. `μ_λ(I) ≤ 5am²c_λ e^{−λa²m²/2 − (1−λ)(1−a)²m²/8}`;
/// 2. `μ_λ(−∞, m(1−a)/2] ≥ c_λ e^{−λa²m²/2}/(10m)` when `1 ≥ a + 2/m`;
/// 3. `μ_λ[m(1−a)/2, ∞) ≥ (c_λ/2) e^{−λ(1−λ)m²/2}` when `1 ≤ a + 2λ − 2/m`;
/// 4. `1/(4(e^{−λa²m²/2} + e^{−λ(1−λ)m²/2})) ≤ c_λ ≤ 10m e^{λa²m²/2}`.
///
/// All four presuppose `m ≥ 10`.
pub fn verify_unimodal_facts(m: f64, a: f64, lambda: f64) -> Result<UnimodalFacts> {
    ensure((0.0..=1.0).contains(&lambda), || format!("λ = {lambda} outside [0, 1]"))?;
    let path = unimodal_path(m, a)?;
    let log_c = path.log_partition(lambda)?;
    let q = path.at(lambda);
    let log_z = log_integral_1d(&q)?;
    let mass = |lo: f64, hi: f64| -> Result<f64> { Ok(log_mass_1d(&q, lo, hi)? - log_z) };
    let (lo, hi) = (m * (1.0 - a) / 2.0, m * (1.0 - a));
    let (e_a, e_l) = (lambda * a * a * m * m / 2.0, lambda * (1.0 - lambda) * m * m / 2.0);
    let big = m >= 10.0;
    let checks = vec![
        FactCheck {
            name: "interval mass",
            applicable: big,
            log_value: mass(lo, hi)?,
            log_bound: (5.0 * a * m * m).ln() + log_c - e_a - (1.0 - lambda) * (1.0 - a).powi(2) * m * m / 8.0,
            upper: true,
        },
        FactCheck {
            name: "left mass",
            applicable: big && 1.0 >= a + 2.0 / m,
            log_value: mass(f64::NEG_INFINITY, lo)?,
            log_bound: log_c - e_a - (10.0 * m).ln(),
            upper: false,
        },
        FactCheck {
            name: "right mass",
            applicable: big && 1.0 <= a + 2.0 * lambda - 2.0 / m,
            log_value: mass(lo, f64::INFINITY)?,
            log_bound: log_c - std::f64::consts::LN_2 - e_l,
            upper: false,
        },
        FactCheck {
            name: "c_lambda lower",
            applicable: big,
            log_value: log_c,
            log_bound: -(4.0f64.ln() + log_sum_exp(&[-e_a, -e_l])),
            upper: false,
        },
        FactCheck {
            name: "c_lambda upper",
            applicable: big,
            log_value: log_c,
            log_bound: (10.0 * m).ln() + e_a,
            upper: true,
        },
    ];
    Ok(UnimodalFacts { m, a, lambda, log_c, checks })
}

/// One row of a Poincaré probe sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub m: f64,
    pub lambda: f64,
    pub rayleigh_lower: f64,
    pub thm3_bound: f64,
}

/// Rayleigh probe with the separating tent against the closed-form bound,
/// over a grid of `(m, λ)` with `a = 1/√2`.
pub fn poincare_probe_sweep(ms: &[f64], lambdas: &[f64]) -> Result<Vec<ProbeRow>> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let mut rows = Vec::new();
    for &m in ms {
        let path = unimodal_path(m, a)?;
        let psi = TestFunction::separating_tent(m, a)?;
        for &lambda in lambdas {
            rows.push(ProbeRow {
                m,
                lambda,
                rayleigh_lower: rayleigh_poincare_lower(&path.at(lambda), &psi)?,
                thm3_bound: thm3_poincare_bound(m, lambda)?,
            });
        }
    }
    Ok(rows)
}

/// CSV `m,lambda,rayleigh_lower,thm3_bound`.
pub fn write_probe_csv<W: Write>(mut w: W, rows: &[ProbeRow]) -> Result<()> {
    writeln!(w, "m,lambda,rayleigh_lower,thm3_bound")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", fmt17(r.m), fmt17(r.lambda), fmt17(r.rayleigh_lower), fmt17(r.thm3_bound))?;
    }
    Ok(())
}

/// CSV `k,lambda_k,sum_T,lower_bound` (levels are 1-based).
pub fn write_tv_lower_csv<W: Write>(mut w: W, levels: &[f64], inner_times: &[f64], bounds: &[f64]) -> Result<()> {
    ensure(levels.len() == inner_times.len() && levels.len() == bounds.len(), || {
        "levels, times and bounds must have equal length".into()
    })?;
    writeln!(w, "k,lambda_k,sum_T,lower_bound")?;
    for (k, ((l, s), b)) in levels.iter().zip(cumulative(inner_times)).zip(bounds).enumerate() {
        writeln!(w, "{},{},{},{}", k + 1, fmt17(*l), fmt17(s), fmt17(*b))?;
    }
    Ok(())
}
