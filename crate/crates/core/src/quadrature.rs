//! One-dimensional Gauss–Legendre quadrature: fixed rules, panel doubling,
//! log-space integration and whole-line integrals with certified tails.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// `log ∫_a^b exp(logf)` on a single panel.
    pub fn log_integrate<F: Fn(f64) -> f64>(&self, logf: F, a: f64, b: f64) -> f64 {
        let terms: Vec<f64> = self.mapped(a, b).map(|(x, w)| w.ln() + logf(x)).collect();
        log_sum_exp(&terms)
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// The 16-point rule used throughout the crate.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

const MAX_PANELS: usize = 1 << 17;

/// Composite 16-point rule with `panels` equal panels.
pub fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    let rule = gl16();
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * w;
            let hi = if i + 1 == panels { b } else { lo + w };
            rule.integrate(f, lo, hi)
        })
        .sum()
}

/// `∫_a^b f`, doubling the panel count (from `min_panels`) until two successive
/// estimates agree to `rel_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, min_panels: usize, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels = min_panels.max(1);
    let mut prev = composite(&f, a, b, panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = composite(&f, a, b, panels);
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite integral on [{a}, {b}]")));
        }
        if (next - prev).abs() <= rel_tol * next.abs() || (next - prev).abs() < 1e-300 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "quadrature on [{a}, {b}] did not reach relative tolerance {rel_tol}"
    )))
}

/// `∫ f` over consecutive pieces `[p_0, p_1], [p_1, p_2], ...`, each refined
/// independently. Use this to keep kinks of `f` on panel boundaries.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, pieces: &[f64], rel_tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in pieces.windows(2) {
        total += integrate(&f, w[0], w[1], 2, rel_tol)?;
    }
    Ok(total)
}

fn composite_log<F: Fn(f64) -> f64>(logf: &F, a: f64, b: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    let rule = gl16();
    let mut terms = Vec::with_capacity(panels * rule.len());
    for i in 0..panels {
        let lo = a + i as f64 * w;
        let hi = if i + 1 == panels { b } else { lo + w };
        terms.extend(rule.mapped(lo, hi).map(|(x, wt)| wt.ln() + logf(x)));
    }
    log_sum_exp(&terms)
}

/// `log ∫_a^b exp(logf)`, refined until successive log-estimates differ by
/// less than `tol` (a relative tolerance on the integral itself).
pub fn log_integrate<F: Fn(f64) -> f64>(logf: F, a: f64, b: f64, min_panels: usize, tol: f64) -> Result<f64> {
    if a >= b {
        return Ok(f64::NEG_INFINITY);
    }
    let mut panels = min_panels.max(1);
    let mut prev = composite_log(&logf, a, b, panels);
    while panels < MAX_PANELS {
        panels *= 2;
        let next = composite_log(&logf, a, b, panels);
        if next.is_nan() || next == f64::INFINITY {
            return Err(Error::Numerical(format!("log-integral on [{a}, {b}] is not finite")));
        }
        if next == f64::NEG_INFINITY && prev == f64::NEG_INFINITY {
            return Ok(next);
        }
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "log-quadrature on [{a}, {b}] did not reach tolerance {tol}"
    )))
}

/// How the tails of a whole-line integrand are controlled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailControl {
    /// `logf = -V + const` with `x·V'(x) ≥ a x² - b`; the tail beyond `R` is
    /// bounded by `exp(-V(R)) / (aR - b/R)`.
    Dissipative { a: f64, b: f64 },
    /// No certificate: the window grows until the integrand is negligible and
    /// decreasing at both edges.
    Empirical,
}

/// Geometry hints for [`log_integrate_line`].
#[derive(Debug, Clone)]
pub struct LineSpec {
    pub tails: TailControl,
    /// Length scale on which the integrand varies; sets the minimum panel density.
    pub scale: f64,
    /// Points where the integrand is not smooth.
    pub breakpoints: Vec<f64>,
}

/// Relative tail mass accepted by whole-line integrals.
pub const TAIL_TOL: f64 = 1e-12;

/// `log ∫_ℝ exp(logf)`.
pub fn log_integrate_line<F: Fn(f64) -> f64>(logf: F, spec: &LineSpec, tol: f64) -> Result<f64> {
    let (total, _) = log_integrate_line_window(&logf, spec, tol)?;
    Ok(total)
}

/// Like [`log_integrate_line`], also returning the truncation radius used.
pub fn log_integrate_line_window<F: Fn(f64) -> f64>(
    logf: &F,
    spec: &LineSpec,
    tol: f64,
) -> Result<(f64, f64)> {
    let bp_max = spec.breakpoints.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    let scale = spec.scale.max(1e-6);
    let mut radius = match spec.tails {
        TailControl::Dissipative { a, b } => {
            if a <= 0.0 {
                return Err(Error::Domain("dissipativity constant a must be positive".into()));
            }
            (b.max(0.0) / a).sqrt() + 8.0 / a.sqrt() + bp_max
        }
        TailControl::Empirical => bp_max + 10.0 * scale,
    };
    let log_tail_tol = TAIL_TOL.ln();
    for _ in 0..80 {
        let mut cuts = vec![-radius];
        let mut inner: Vec<f64> = spec
            .breakpoints
            .iter()
            .copied()
            .filter(|b| b.abs() < radius)
            .collect();
        inner.sort_by(|a, b| a.total_cmp(b));
        inner.dedup();
        cuts.extend(inner);
        cuts.push(radius);
        let mut parts = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let panels = ((w[1] - w[0]) / scale).ceil().clamp(2.0, 4096.0) as usize;
            parts.push(log_integrate(logf, w[0], w[1], panels, tol)?);
        }
        let total = log_sum_exp(&parts);
        if total == f64::NEG_INFINITY {
            radius *= 1.5;
            continue;
        }
        let done = match spec.tails {
            TailControl::Dissipative { a, b } => {
                let g = a * radius - b / radius;
                if g <= 0.0 || a * radius * radius <= b {
                    false
                } else {
                    let tail = crate::special::log_add_exp(logf(radius), logf(-radius)) - g.ln();
                    tail - total < log_tail_tol
                }
            }
            TailControl::Empirical => {
                let edge = [radius, -radius];
                edge.iter().all(|&r| {
                    let here = logf(r);
                    here - total < log_tail_tol - 10.0 && logf(1.25 * r) <= here
                })
            }
        };
        if done {
            return Ok((total, radius));
        }
        radius *= 1.5;
        if radius > 1e8 {
            break;
        }
    }
    Err(Error::Domain(
        "integrand is not integrable on the line (tails fail to decay)".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(16);
        // degree 31 is integrated exactly
        let got = gl.integrate(|x| x.powi(30), -1.0, 1.0);
        assert!((got - 2.0 / 31.0).abs() < 1e-14);
        let w: f64 = gl.mapped(-1.0, 1.0).map(|(_, w)| w).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_rules_have_centre_node() {
        let gl = GaussLegendre::new(5);
        let got = gl.integrate(|x| x.powi(8), 0.0, 2.0);
        assert!((got - 512.0 / 9.0).abs() < 1e-11);
    }

    #[test]
    fn doubling_converges_on_smooth_integrand() {
        let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_on_the_line() {
        let spec = LineSpec {
            tails: TailControl::Dissipative { a: 1.0, b: 0.0 },
            scale: 1.0,
            breakpoints: vec![],
        };
        let v = log_integrate_line(|x| -0.5 * x * x, &spec, 1e-12).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn empirical_tails_reject_heavy_integrands() {
        let spec = LineSpec { tails: TailControl::Empirical, scale: 1.0, breakpoints: vec![] };
        assert!(log_integrate_line(|x: f64| 0.01 * x * x, &spec, 1e-10).is_err());
    }

    #[test]
    fn log_integrate_survives_underflow() {
        // ∫_0^1 e^{-2000 + x} dx, far below f64::MIN_POSITIVE
        let v = log_integrate(|x| -2000.0 + x, 0.0, 1.0, 1, 1e-13).unwrap();
        let exact = -2000.0 + (std::f64::consts::E - 1.0).ln();
        assert!((v - exact).abs() < 1e-12);
    }
}
