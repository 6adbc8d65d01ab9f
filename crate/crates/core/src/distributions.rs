//! Densities on ℝᵈ given by a potential `V` (density ∝ e^{-V}): Gaussians,
//! mixtures, the smoothed uniform law, the bimodal and contaminated example
//! targets, and geometric interpolants between a proposal and a target.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, ensure, Error, Result};
use crate::quadrature::{self, LineSpec, TailControl};
use crate::special::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance used for 1D partition-function quadrature.
pub const QUAD_TOL: f64 = 1e-11;

/// Constants of Assumption-style regularity: `⟨∇V(x), x⟩ ≥ a‖x‖² − b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipativity {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    /// Lipschitz constant of ∇V (may be `f64::INFINITY` when no bound is known).
    pub lipschitz: f64,
    pub dissipativity: Dissipativity,
    /// Lower bound on the Hessian of V, when V is strongly convex.
    pub strong_convexity: Option<f64>,
}

/// A log-density known up to an additive constant.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// `V(x)`; the density is proportional to `exp(-V(x))`.
    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇V(x)` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn regularity(&self) -> Regularity;

    /// `log ∫ exp(-V)` when known in closed form.
    fn log_normalizer(&self) -> Option<f64> {
        None
    }

    /// Points where `V` is not twice differentiable (1D only).
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    fn value_1d(&self, x: f64) -> f64 {
        self.value(&[x])
    }

    fn gradient_1d(&self, x: f64) -> f64 {
        let mut g = [0.0];
        self.gradient(&[x], &mut g);
        g[0]
    }

    /// `-∇V(x)`.
    fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g.iter_mut().for_each(|v| *v = -*v);
        g
    }

    /// Normalized log-density, when the normalizer is known.
    fn log_density(&self, x: &[f64]) -> Option<f64> {
        self.log_normalizer().map(|z| -self.value(x) - z)
    }
}

/// A multivariate normal law.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol: DMatrix<f64>,
    prec_flat: Vec<f64>,
    log_det_cov: f64,
    eig_min: f64,
    eig_max: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        ensure(d >= 1, || "Gaussian dimension must be at least 1".into())?;
        ensure(cov.nrows() == d && cov.ncols() == d, || {
            format!("covariance is {}x{}, expected {d}x{d}", cov.nrows(), cov.ncols())
        })?;
        ensure(mean.iter().chain(cov.iter()).all(|v| v.is_finite()), || {
            "Gaussian parameters must be finite".into()
        })?;
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                ensure((cov[(i, j)] - cov[(j, i)]).abs() <= 1e-12 * scale, || {
                    "covariance must be symmetric".into()
                })?;
            }
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| domain("covariance is not positive definite"))?;
        let eig = cov.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        ensure(lo > 0.0, || "covariance is not positive definite".into())?;
        let l = chol.l();
        let log_det_cov = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = chol.inverse();
        let prec_flat = precision.transpose().iter().copied().collect();
        Ok(Self {
            mean,
            cov,
            precision,
            chol: l,
            prec_flat,
            log_det_cov,
            eig_min: 1.0 / hi,
            eig_max: 1.0 / lo,
        })
    }

    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, variance))
    }

    /// `N(mean, variance·I)`.
    pub fn isotropic(mean: &[f64], variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * variance)
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::isotropic(&vec![0.0; dim], 1.0)
    }

    /// Builds a Gaussian from its precision matrix and linear term `h = Pμ`.
    pub fn from_natural(precision: &DMatrix<f64>, h: &DVector<f64>) -> Result<Self> {
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Invariant("combined precision is not positive definite".into()))?;
        let cov = chol.inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        let mean = &cov * h;
        Self::new(mean, cov)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det_covariance(&self) -> f64 {
        self.log_det_cov
    }
}

impl Potential for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let di = x[i] - self.mean[i];
            let row = &self.prec_flat[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * (x[j] - self.mean[j]);
            }
            acc += di * s;
        }
        0.5 * acc
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let row = &self.prec_flat[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * (x[j] - self.mean[j]);
            }
            out[i] = s;
        }
    }

    fn value_1d(&self, x: f64) -> f64 {
        let dx = x - self.mean[0];
        0.5 * self.prec_flat[0] * dx * dx
    }

    fn gradient_1d(&self, x: f64) -> f64 {
        self.prec_flat[0] * (x - self.mean[0])
    }

    fn regularity(&self) -> Regularity {
        let alpha = self.eig_min;
        let pm = (&self.precision * &self.mean).norm();
        let dissipativity = if pm == 0.0 {
            Dissipativity { a: alpha, b: 0.0 }
        } else {
            // ⟨P(x−μ), x⟩ ≥ α‖x‖² − ‖Pμ‖‖x‖ ≥ (α/2)‖x‖² − ‖Pμ‖²/(2α)
            Dissipativity { a: alpha / 2.0, b: pm * pm / (2.0 * alpha) }
        };
        Regularity { lipschitz: self.eig_max, dissipativity, strong_convexity: Some(alpha) }
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(0.5 * (self.dim() as f64 * LN_2PI + self.log_det_cov))
    }
}

/// `u_m ∝ exp(−½ d(x, [−m, 2m])²)` on ℝ.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedUniform {
    m: f64,
}

impl SmoothedUniform {
    pub fn new(m: f64) -> Result<Self> {
        ensure(m > 0.0 && m.is_finite(), || format!("smoothed uniform needs m > 0, got {m}"))?;
        Ok(Self { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// The plateau `[−m, 2m]`.
    pub fn interval(&self) -> (f64, f64) {
        (-self.m, 2.0 * self.m)
    }
}

impl Potential for SmoothedUniform {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_1d(x[0])
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.gradient_1d(x[0]);
    }

    fn value_1d(&self, x: f64) -> f64 {
        let d = x - x.clamp(-self.m, 2.0 * self.m);
        0.5 * d * d
    }

    fn gradient_1d(&self, x: f64) -> f64 {
        x - x.clamp(-self.m, 2.0 * self.m)
    }

    fn regularity(&self) -> Regularity {
        Regularity {
            lipschitz: 1.0,
            dissipativity: Dissipativity { a: 0.5, b: 2.0 * self.m * self.m },
            strong_convexity: None,
        }
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some((3.0 * self.m + (2.0 * std::f64::consts::PI).sqrt()).ln())
    }

    fn kinks(&self) -> Vec<f64> {
        vec![-self.m, 2.0 * self.m]
    }
}

/// A finite mixture of normalized component laws.
#[derive(Debug, Clone)]
pub struct Mixture {
    components: Vec<Density>,
    log_weights: Vec<f64>,
    // log w_i − log Z_i
    offsets: Vec<f64>,
    dim: usize,
}

impl Mixture {
    pub fn new(components: Vec<(f64, Density)>) -> Result<Self> {
        ensure(components.iter().all(|(w, _)| *w > 0.0 && *w <= 1.0), || {
            "mixture weights must lie in (0, 1]".into()
        })?;
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        ensure((total - 1.0).abs() < 1e-12, || format!("mixture weights sum to {total}, not 1"))?;
        Self::from_log_weights(components.into_iter().map(|(w, c)| (w.ln(), c)).collect())
    }

    /// Weights given as logarithms, so that extremely small weights (e^{−450}) stay exact.
    pub fn from_log_weights(components: Vec<(f64, Density)>) -> Result<Self> {
        ensure(!components.is_empty(), || "mixture needs at least one component".into())?;
        let dim = components[0].1.dim();
        let mut offsets = Vec::with_capacity(components.len());
        let mut log_weights = Vec::with_capacity(components.len());
        let mut parts = Vec::with_capacity(components.len());
        for (lw, c) in components {
            ensure(c.dim() == dim, || "mixture components differ in dimension".into())?;
            ensure(lw <= 0.0 && lw > f64::NEG_INFINITY, || "mixture weights must lie in (0, 1]".into())?;
            let z = c.log_normalizer().ok_or_else(|| {
                domain("mixture components need a closed-form normalizer")
            })?;
            offsets.push(lw - z);
            log_weights.push(lw);
            parts.push(c);
        }
        let total = log_sum_exp(&log_weights);
        ensure(total.abs() < 1e-12, || format!("mixture weights sum to {}, not 1", total.exp()))?;
        Ok(Self { components: parts, log_weights, offsets, dim })
    }

    pub fn components(&self) -> &[Density] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    // Upper bound on sup_x ‖∇V_i(x) − ∇V_j(x)‖, when a closed form is available.
    fn score_gap(a: &Density, b: &Density) -> f64 {
        match (a, b) {
            (Density::Gaussian(g), Density::Gaussian(h)) => {
                if (g.precision() - h.precision()).amax() > 1e-12 * g.precision().amax() {
                    return f64::INFINITY;
                }
                (g.precision() * (g.mean() - h.mean())).norm()
            }
            (Density::Gaussian(g), Density::SmoothedUniform(u))
            | (Density::SmoothedUniform(u), Density::Gaussian(g)) => {
                if g.dim() != 1 || (g.precision()[(0, 0)] - 1.0).abs() > 1e-12 {
                    return f64::INFINITY;
                }
                // ∇V_g − ∇V_u = clamp(x, l, r) − c
                let c = g.mean()[0];
                let (l, r) = u.interval();
                (l - c).abs().max((r - c).abs())
            }
            (Density::SmoothedUniform(u), Density::SmoothedUniform(v)) => {
                let (l1, r1) = u.interval();
                let (l2, r2) = v.interval();
                (l1 - l2).abs().max((r1 - r2).abs())
            }
            _ => f64::INFINITY,
        }
    }

    fn responsibilities_1d(&self, x: f64, buf: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            buf[i] = self.offsets[i] - c.value_1d(x);
            max = max.max(buf[i]);
        }
        let mut s = 0.0;
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        max + s.ln()
    }
}

const MAX_INLINE: usize = 8;

impl Potential for Mixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.dim == 1 {
            return self.value_1d(x[0]);
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.offsets)
            .map(|(c, o)| o - c.value(x))
            .collect();
        -log_sum_exp(&terms)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if self.dim == 1 {
            out[0] = self.gradient_1d(x[0]);
            return;
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.offsets)
            .map(|(c, o)| o - c.value(x))
            .collect();
        let lse = log_sum_exp(&terms);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut g = vec![0.0; self.dim];
        for (c, t) in self.components.iter().zip(&terms) {
            let r = (t - lse).exp();
            if r == 0.0 {
                continue;
            }
            c.gradient(x, &mut g);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += r * gi;
            }
        }
    }

    fn value_1d(&self, x: f64) -> f64 {
        let n = self.components.len();
        if n <= MAX_INLINE {
            let mut buf = [0.0; MAX_INLINE];
            -self.responsibilities_1d(x, &mut buf[..n])
        } else {
            let mut buf = vec![0.0; n];
            -self.responsibilities_1d(x, &mut buf)
        }
    }

    fn gradient_1d(&self, x: f64) -> f64 {
        let n = self.components.len();
        let mut inline = [0.0; MAX_INLINE];
        let mut heap;
        let buf: &mut [f64] = if n <= MAX_INLINE {
            &mut inline[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        self.responsibilities_1d(x, buf);
        let s: f64 = buf.iter().sum();
        self.components
            .iter()
            .zip(buf.iter())
            .filter(|(_, r)| **r > 0.0)
            .map(|(c, r)| r * c.gradient_1d(x))
            .sum::<f64>()
            / s
    }

    fn regularity(&self) -> Regularity {
        let regs: Vec<Regularity> = self.components.iter().map(|c| c.regularity()).collect();
        let max_l = regs.iter().map(|r| r.lipschitz).fold(0.0, f64::max);
        let min_curv = regs.iter().map(|r| r.strong_convexity.unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
        let mut gap = 0.0_f64;
        for i in 0..self.components.len() {
            for j in 0..i {
                gap = gap.max(Self::score_gap(&self.components[i], &self.components[j]));
            }
        }
        // Hess V = Σ rᵢ Hess Vᵢ − Cov_r(∇Vᵢ), and the covariance of a law on a set of
        // diameter D is at most D²/4.
        let lipschitz = max_l.max(gap * gap / 4.0 - min_curv);
        let a = regs.iter().map(|r| r.dissipativity.a).fold(f64::INFINITY, f64::min);
        let b = regs.iter().map(|r| r.dissipativity.b).fold(0.0, f64::max);
        let strong_convexity = if self.components.len() == 1 { regs[0].strong_convexity } else { None };
        Regularity { lipschitz, dissipativity: Dissipativity { a, b }, strong_convexity }
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }

    fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.components.iter().flat_map(|c| c.kinks()).collect();
        k.sort_by(|a, b| a.total_cmp(b));
        k.dedup();
        k
    }
}

/// Any density the laboratory knows how to evaluate.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(Gaussian),
    SmoothedUniform(SmoothedUniform),
    Mixture(Mixture),
    Custom(Arc<dyn Potential>),
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Density::Gaussian($p) => $e,
            Density::SmoothedUniform($p) => $e,
            Density::Mixture($p) => $e,
            Density::Custom($p) => $e,
        }
    };
}

impl Potential for Density {
    fn dim(&self) -> usize {
        delegate!(self, p => p.dim())
    }
    fn value(&self, x: &[f64]) -> f64 {
        delegate!(self, p => p.value(x))
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        delegate!(self, p => p.gradient(x, out))
    }
    fn regularity(&self) -> Regularity {
        delegate!(self, p => p.regularity())
    }
    fn log_normalizer(&self) -> Option<f64> {
        delegate!(self, p => p.log_normalizer())
    }
    fn kinks(&self) -> Vec<f64> {
        delegate!(self, p => p.kinks())
    }
    fn value_1d(&self, x: f64) -> f64 {
        delegate!(self, p => p.value_1d(x))
    }
    fn gradient_1d(&self, x: f64) -> f64 {
        delegate!(self, p => p.gradient_1d(x))
    }
}

impl Density {
    pub fn as_gaussian(&self) -> Option<&Gaussian> {
        match self {
            Density::Gaussian(g) => Some(g),
            _ => None,
        }
    }
}

impl From<Gaussian> for Density {
    fn from(g: Gaussian) -> Self {
        Density::Gaussian(g)
    }
}

impl From<&Gaussian> for Density {
    fn from(g: &Gaussian) -> Self {
        Density::Gaussian(g.clone())
    }
}

impl From<SmoothedUniform> for Density {
    fn from(u: SmoothedUniform) -> Self {
        Density::SmoothedUniform(u)
    }
}

impl From<Mixture> for Density {
    fn from(m: Mixture) -> Self {
        Density::Mixture(m)
    }
}

/// `½ N(0,1) + ½ N(m,1)`.
pub fn make_bimodal_target(m: f64) -> Result<Mixture> {
    ensure(m >= 0.0 && m.is_finite(), || format!("bimodal separation must be ≥ 0, got {m}"))?;
    Mixture::new(vec![
        (0.5, Gaussian::univariate(0.0, 1.0)?.into()),
        (0.5, Gaussian::univariate(m, 1.0)?.into()),
    ])
}

/// `(1 − e^{−a²m²/2}) N(m,1) + e^{−a²m²/2} u_m`.
pub fn make_contaminated_target(m: f64, a: f64) -> Result<Mixture> {
    ensure(m > 0.0 && a > 0.0 && a <= 1.0, || format!("need m > 0 and a ∈ (0,1], got m={m}, a={a}"))?;
    let e = 0.5 * a * a * m * m;
    // allow rounding at the equal-weight boundary a·m = √(2 log 2)
    ensure(e >= std::f64::consts::LN_2 * (1.0 - 1e-12), || {
        format!("contamination weight e^(-a²m²/2) = {} exceeds 1/2", (-e).exp())
    })?;
    let log_w_u = -e.max(std::f64::consts::LN_2);
    let log_w_n = (-log_w_u.exp_m1()).ln();
    Mixture::from_log_weights(vec![
        (log_w_n, Gaussian::univariate(m, 1.0)?.into()),
        (log_w_u, SmoothedUniform::new(m)?.into()),
    ])
}

/// The Gaussian proportional to `ν^{1−λ} π^λ`.
pub fn gaussian_geometric(nu: &Gaussian, pi: &Gaussian, lambda: f64) -> Result<Gaussian> {
    ensure((0.0..=1.0).contains(&lambda), || format!("λ = {lambda} outside [0, 1]"))?;
    ensure(nu.dim() == pi.dim(), || "endpoint dimensions differ".into())?;
    if lambda == 0.0 {
        return Ok(nu.clone());
    }
    if lambda == 1.0 {
        return Ok(pi.clone());
    }
    let p = nu.precision() * (1.0 - lambda) + pi.precision() * lambda;
    let h = nu.precision() * nu.mean() * (1.0 - lambda) + pi.precision() * pi.mean() * lambda;
    Gaussian::from_natural(&p, &h)
}

/// `μ_λ ∝ ν^{1−λ} π^λ` between a proposal `ν` and a target `π`.
#[derive(Debug, Clone)]
pub struct GeometricPath {
    proposal: Density,
    target: Density,
}

impl GeometricPath {
    pub fn new(proposal: impl Into<Density>, target: impl Into<Density>) -> Result<Self> {
        let proposal = proposal.into();
        let target = target.into();
        ensure(proposal.dim() == target.dim(), || {
            format!("proposal has dimension {}, target {}", proposal.dim(), target.dim())
        })?;
        Ok(Self { proposal, target })
    }

    pub fn proposal(&self) -> &Density {
        &self.proposal
    }

    pub fn target(&self) -> &Density {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.proposal.dim()
    }

    /// The tempered potential `(1−λ)V_ν + λV_π` as a [`Potential`].
    pub fn at(&self, lambda: f64) -> Tempered<'_> {
        Tempered { path: self, lambda }
    }

    /// `(1−λ)∇V_ν(x) + λ∇V_π(x)` without validation; `scratch` needs length `dim`.
    #[inline]
    pub fn tempered_gradient(&self, lambda: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        if self.dim() == 1 {
            out[0] = self.tempered_gradient_1d(lambda, x[0]);
            return;
        }
        if lambda == 1.0 {
            self.target.gradient(x, out);
            return;
        }
        self.proposal.gradient(x, out);
        if lambda == 0.0 {
            return;
        }
        self.target.gradient(x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = (1.0 - lambda) * *o + lambda * s;
        }
    }

    #[inline]
    pub fn tempered_gradient_1d(&self, lambda: f64, x: f64) -> f64 {
        if lambda == 1.0 {
            self.target.gradient_1d(x)
        } else if lambda == 0.0 {
            self.proposal.gradient_1d(x)
        } else {
            (1.0 - lambda) * self.proposal.gradient_1d(x) + lambda * self.target.gradient_1d(x)
        }
    }

    /// `∇ log μ_λ(x) = (1−λ) score_ν(x) + λ score_π(x)`.
    pub fn tempered_score(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        ensure(x.len() == self.dim(), || format!("point has length {}, expected {}", x.len(), self.dim()))?;
        ensure(x.iter().all(|v| v.is_finite()), || "point has non-finite components".into())?;
        let mut out = vec![0.0; self.dim()];
        let mut scratch = vec![0.0; self.dim()];
        self.tempered_gradient(lambda, x, &mut out, &mut scratch);
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(out)
    }

    fn endpoint_normalizers(&self) -> Result<(f64, f64)> {
        match (self.proposal.log_normalizer(), self.target.log_normalizer()) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Unsupported("endpoint normalizers are unknown".into())),
        }
    }

    /// `log(ν(x)^{1−λ} π(x)^λ)` with both endpoints normalized.
    pub fn log_geometric_mean(&self, lambda: f64, x: f64) -> Result<f64> {
        let (zn, zp) = self.endpoint_normalizers()?;
        Ok(geometric_log(lambda, self.proposal.value_1d(x) + zn, self.target.value_1d(x) + zp))
    }

    /// `log c_λ = −log ∫ ν^{1−λ} π^λ`.
    pub fn log_partition(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if lambda == 0.0 || lambda == 1.0 {
            return Ok(0.0);
        }
        if let (Density::Gaussian(nu), Density::Gaussian(pi)) = (&self.proposal, &self.target) {
            return Ok(gaussian_log_partition(nu, pi, lambda));
        }
        self.log_partition_quadrature(lambda)
    }

    /// `log c_λ` by 1D quadrature, regardless of closed forms.
    pub fn log_partition_quadrature(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if self.dim() != 1 {
            return Err(Error::Unsupported(
                "log-partition in dimension > 1 needs Gaussian endpoints".into(),
            ));
        }
        let (zn, zp) = self.endpoint_normalizers()?;
        let spec = line_spec(&self.at(lambda));
        let nu = &self.proposal;
        let pi = &self.target;
        let log_int = quadrature::log_integrate_line(
            |x| geometric_log(lambda, nu.value_1d(x) + zn, pi.value_1d(x) + zp),
            &spec,
            QUAD_TOL,
        )?;
        Ok(-log_int)
    }

    /// Normalized `log μ_λ(x)` for a 1D path.
    pub fn log_density(&self, lambda: f64, log_c: f64, x: f64) -> Result<f64> {
        Ok(log_c + self.log_geometric_mean(lambda, x)?)
    }
}

fn geometric_log(lambda: f64, vn: f64, vp: f64) -> f64 {
    // avoid 0·∞ when one endpoint vanishes
    if lambda == 0.0 {
        -vn
    } else if lambda == 1.0 {
        -vp
    } else {
        -(1.0 - lambda) * vn - lambda * vp
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    ensure((0.0..=1.0).contains(&lambda), || format!("λ = {lambda} outside [0, 1]"))
}

fn gaussian_log_partition(nu: &Gaussian, pi: &Gaussian, lambda: f64) -> f64 {
    let d = nu.dim() as f64;
    let p = nu.precision() * (1.0 - lambda) + pi.precision() * lambda;
    let h = nu.precision() * nu.mean() * (1.0 - lambda) + pi.precision() * pi.mean() * lambda;
    let k = (1.0 - lambda) * nu.mean().dot(&(nu.precision() * nu.mean()))
        + lambda * pi.mean().dot(&(pi.precision() * pi.mean()));
    let chol = p.cholesky().expect("convex combination of precisions is positive definite");
    let log_det_p = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = h.dot(&chol.solve(&h));
    let log_int = 0.5 * d * LN_2PI - 0.5 * log_det_p - 0.5 * (k - quad)
        - (1.0 - lambda) * nu.log_normalizer().unwrap()
        - lambda * pi.log_normalizer().unwrap();
    -log_int
}

/// The tempered potential of a path at a fixed λ.
#[derive(Debug, Clone, Copy)]
pub struct Tempered<'a> {
    path: &'a GeometricPath,
    lambda: f64,
}

impl Tempered<'_> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Potential for Tempered<'_> {
    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        -geometric_log(self.lambda, self.path.proposal.value(x), self.path.target.value(x))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut scratch = vec![0.0; self.dim()];
        self.path.tempered_gradient(self.lambda, x, out, &mut scratch);
    }

    fn value_1d(&self, x: f64) -> f64 {
        -geometric_log(self.lambda, self.path.proposal.value_1d(x), self.path.target.value_1d(x))
    }

    fn gradient_1d(&self, x: f64) -> f64 {
        self.path.tempered_gradient_1d(self.lambda, x)
    }

    fn regularity(&self) -> Regularity {
        let l = self.lambda;
        let rn = self.path.proposal.regularity();
        let rp = self.path.target.regularity();
        let mix = |a: f64, b: f64| {
            if l == 0.0 {
                a
            } else if l == 1.0 {
                b
            } else {
                (1.0 - l) * a + l * b
            }
        };
        Regularity {
            lipschitz: mix(rn.lipschitz, rp.lipschitz),
            dissipativity: Dissipativity {
                a: mix(rn.dissipativity.a, rp.dissipativity.a),
                b: mix(rn.dissipativity.b, rp.dissipativity.b),
            },
            strong_convexity: match (rn.strong_convexity, rp.strong_convexity) {
                (Some(a), Some(b)) => Some(mix(a, b)),
                _ => None,
            },
        }
    }

    fn kinks(&self) -> Vec<f64> {
        let mut k = self.path.proposal.kinks();
        k.extend(self.path.target.kinks());
        k.sort_by(|a, b| a.total_cmp(b));
        k.dedup();
        k
    }
}

/// Quadrature geometry for a 1D potential: certified tails from its
/// dissipativity constants, panel scale from its Lipschitz constant.
pub fn line_spec(p: &dyn Potential) -> LineSpec {
    let reg = p.regularity();
    let scale = if reg.lipschitz.is_finite() && reg.lipschitz > 0.0 {
        (1.0 / reg.lipschitz.sqrt()).clamp(0.02, 1.0)
    } else {
        0.1
    };
    let tails = if reg.dissipativity.a > 0.0 {
        TailControl::Dissipative { a: reg.dissipativity.a, b: reg.dissipativity.b }
    } else {
        TailControl::Empirical
    };
    LineSpec { tails, scale, breakpoints: p.kinks() }
}

/// `log ∫ exp(−V)` over ℝ for a 1D potential.
pub fn log_integral_1d(p: &dyn Potential) -> Result<f64> {
    ensure(p.dim() == 1, || "quadrature is one-dimensional".into())?;
    quadrature::log_integrate_line(|x| -p.value_1d(x), &line_spec(p), QUAD_TOL)
}

/// `log ∫_lo^hi exp(−V)`; infinite endpoints are allowed.
pub fn log_mass_1d(p: &dyn Potential, lo: f64, hi: f64) -> Result<f64> {
    ensure(p.dim() == 1, || "quadrature is one-dimensional".into())?;
    ensure(lo < hi, || format!("empty interval [{lo}, {hi}]"))?;
    let spec = line_spec(p);
    let logf = |x: f64| -p.value_1d(x);
    let (lo, hi) = if lo.is_infinite() || hi.is_infinite() {
        let (_, r) = quadrature::log_integrate_line_window(&logf, &spec, QUAD_TOL)?;
        (lo.max(-r), hi.min(r))
    } else {
        (lo, hi)
    };
    if lo >= hi {
        return Ok(f64::NEG_INFINITY);
    }
    let mut cuts = vec![lo];
    cuts.extend(spec.breakpoints.iter().copied().filter(|b| *b > lo && *b < hi));
    cuts.push(hi);
    let mut parts = Vec::new();
    for w in cuts.windows(2) {
        let panels = ((w[1] - w[0]) / spec.scale).ceil().clamp(1.0, 4096.0) as usize;
        parts.push(quadrature::log_integrate(logf, w[0], w[1], panels, QUAD_TOL)?);
    }
    Ok(log_sum_exp(&parts))
}

/// Normalized densities of `μ_λ` on a 1D grid.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    pub rows: Vec<DensityRow>,
}

#[derive(Debug, Clone)]
pub struct DensityRow {
    pub lambda: f64,
    pub density: Vec<f64>,
    /// Mass of `μ_λ` outside `[grid_min, grid_max]`.
    pub tail_mass: f64,
    /// Set when `tail_mass > 1e-6`: the grid is too narrow for this row.
    pub tail_warning: bool,
}

pub fn density_grid(path: &GeometricPath, lambdas: &[f64], grid: &[f64]) -> Result<DensityGrid> {
    ensure(path.dim() == 1, || "density grids are one-dimensional".into())?;
    ensure(grid.len() >= 2, || "grid needs at least two points".into())?;
    ensure(grid.windows(2).all(|w| w[0] < w[1]), || "grid must be strictly increasing".into())?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let log_c = path.log_partition(lambda)?;
        let density = grid
            .iter()
            .map(|&x| path.log_density(lambda, log_c, x).map(f64::exp))
            .collect::<Result<Vec<_>>>()?;
        let tempered = path.at(lambda);
        let log_z = log_integral_1d(&tempered)?;
        let inside = (log_mass_1d(&tempered, lo, hi)? - log_z).exp();
        let tail_mass = (1.0 - inside).max(0.0);
        rows.push(DensityRow { lambda, density, tail_mass, tail_warning: tail_mass > 1e-6 });
    }
    Ok(DensityGrid { grid: grid.to_vec(), rows })
}

impl DensityGrid {
    /// CSV `x,lambda,density`, row-major over (λ, x).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,lambda,density")?;
        for row in &self.rows {
            for (x, d) in self.grid.iter().zip(&row.density) {
                writeln!(w, "{},{},{}", fmt17(*x), fmt17(row.lambda), fmt17(*d))?;
            }
        }
        Ok(())
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
