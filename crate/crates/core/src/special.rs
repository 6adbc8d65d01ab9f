//! Special functions.

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Stable for large positive `x`, where `erfc` alone underflows.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfcx(-y) = 2 e^{y²} - erfcx(y)
        let y = -x;
        if y > 26.7 {
            return f64::INFINITY;
        }
        return 2.0 * (y * y).exp() - erfcx(y);
    }
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    if x > 1e8 {
        return std::f64::consts::FRAC_2_SQRT_PI * 0.5 / x;
    }
    continued_fraction(x)
}

// erfcx(x) = (1/√π) · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + 2/(x + ...)))))
// evaluated with the modified Lentz algorithm.
fn continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (std::f64::consts::PI.sqrt() * f)
}

/// `log(Σ exp(v))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    // erfcx(x) = (2/√π) ∫₀^∞ exp(-t² - 2xt) dt, for x ≥ 0.
    fn integral_oracle(x: f64) -> f64 {
        let gl = GaussLegendre::new(64);
        let upper = 12.0;
        let panels = 400;
        let w = upper / panels as f64;
        (0..panels)
            .map(|i| {
                let a = i as f64 * w;
                gl.integrate(|t| (-t * t - 2.0 * x * t).exp(), a, a + w)
            })
            .sum::<f64>()
            * std::f64::consts::FRAC_2_SQRT_PI
    }

    #[test]
    fn known_value_at_one() {
        assert!((erfcx(1.0) - 0.427_583_576_155_807).abs() < 1e-15);
        assert_eq!(erfcx(0.0), 1.0);
    }

    #[test]
    fn matches_integral_representation() {
        for &x in &[0.01, 0.3, 1.0, 2.5, 4.9, 5.0, 5.1, 7.0, 12.0, 30.0] {
            let exact = integral_oracle(x);
            let rel = (erfcx(x) - exact).abs() / exact;
            assert!(rel < 1e-12, "x = {x}: {} vs {exact}", erfcx(x));
        }
    }

    #[test]
    fn continuous_across_branch_switch() {
        let below = erfcx(5.0 - 1e-12);
        let above = erfcx(5.0);
        assert!((below - above).abs() / above < 1e-11);
    }

    #[test]
    fn large_argument_asymptote() {
        let x = 1e6;
        let asym = 1.0 / (x * std::f64::consts::PI.sqrt());
        assert!((erfcx(x) / asym - 1.0).abs() < 1e-11);
    }

    #[test]
    fn negative_reflection() {
        let x = -1.5_f64;
        let direct = (x * x).exp() * libm::erfc(x);
        assert!((erfcx(x) - direct).abs() / direct < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(-1e4, 0.0)).abs() < 1e-300);
    }
}
