//! Divergences between ensembles, Gaussian laws and closed-form densities.

use std::io::Write;

use nalgebra::Cholesky;

use crate::distributions::{line_spec, log_integral_1d, log_mass_1d, Density, Potential};
use crate::error::{ensure, Error, Result};
use crate::quadrature::{self, gl16, GaussLegendre, LineSpec, TailControl};
use crate::sampler::GaussianLaw;
use crate::special::log_sum_exp;

/// `KL(p‖q)` between Gaussian laws.
pub fn kl_gaussians(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    ensure(p.dim() == q.dim(), || "KL between laws of different dimension".into())?;
    let cp = Cholesky::new(p.cov.clone()).ok_or_else(|| Error::Numerical("covariance of p is not positive definite".into()))?;
    let cq = Cholesky::new(q.cov.clone()).ok_or_else(|| Error::Numerical("covariance of q is not positive definite".into()))?;
    let d = p.dim() as f64;
    let logdet = |c: &Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = cq.solve(&p.cov).trace();
    let dm = &q.mean - &p.mean;
    let maha = dm.dot(&cq.solve(&dm));
    Ok((0.5 * (trace - d + maha + logdet(&cq) - logdet(&cp))).max(0.0))
}

/// Bins per dimension used by the histogram estimators.
pub const HIST_BINS: usize = 256;
/// A resolution change moving the estimate by at least this much is flagged.
pub const SENSITIVITY_TOL: f64 = 0.02;
/// Below this many samples the estimate is flagged as noisy.
pub const MIN_SAMPLES: usize = 1000;

/// Counts of samples on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEstimate {
    /// Bin edges per dimension.
    pub edges: Vec<Vec<f64>>,
    /// Row-major counts (first dimension slowest).
    pub counts: Vec<u64>,
    pub n: usize,
    /// `Σ_b √(p̂_b(1−p̂_b)/N)`: the scale of sampling noise in `Σ|p̂_b − q_b|`.
    pub variance_proxy: f64,
}

impl HistogramEstimate {
    fn build(samples: &[f64], dim: usize, edges: Vec<Vec<f64>>) -> Self {
        let bins: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let mut counts = vec![0u64; bins.iter().product()];
        for row in samples.chunks(dim) {
            let mut idx = 0;
            for j in 0..dim {
                let e = &edges[j];
                let (lo, hi) = (e[0], e[bins[j]]);
                let b = (((row[j] - lo) / (hi - lo)) * bins[j] as f64).floor();
                idx = idx * bins[j] + (b.max(0.0) as usize).min(bins[j] - 1);
            }
            counts[idx] += 1;
        }
        let n = samples.len() / dim;
        let nf = n as f64;
        let variance_proxy = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                (p * (1.0 - p) / nf).sqrt()
            })
            .sum();
        Self { edges, counts, n, variance_proxy }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

/// A histogram-based divergence estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramMetric {
    pub value: f64,
    /// Bins per dimension of the reported value.
    pub bins: usize,
    /// The same estimate at twice the resolution.
    pub refined: f64,
    /// `|refined − value| ≥ 0.02`.
    pub sensitive: bool,
    /// Fewer than 1000 samples.
    pub few_samples: bool,
    /// Reference mass outside the histogram range.
    pub outside_mass: f64,
    pub histogram: HistogramEstimate,
}

impl HistogramMetric {
    /// Compact `key=value` description for CSV output.
    pub fn meta(&self) -> String {
        format!(
            "bins={};n={};refined={:.6e};sensitive={};few_samples={};noise={:.3e}",
            self.bins, self.histogram.n, self.refined, self.sensitive, self.few_samples, self.histogram.variance_proxy
        )
    }
}

// Reference law on the histogram grid: per-bin log masses plus outside mass.
struct Reference<'a> {
    density: &'a Density,
    dim: usize,
    log_z: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl<'a> Reference<'a> {
    fn new(density: &'a Density) -> Result<Self> {
        match density.dim() {
            1 => {
                let log_z = match density.log_normalizer() {
                    Some(z) => z,
                    None => log_integral_1d(density)?,
                };
                let logp = |x: f64| -density.value_1d(x) - log_z;
                let (_, r) = quadrature::log_integrate_line_window(&logp, &line_spec(density), 1e-9)?;
                let panels = ((2.0 * r / line_spec(density).scale).ceil() as usize).clamp(64, 1 << 14);
                let m1 = quadrature::composite(&|x: f64| x * logp(x).exp(), -r, r, panels);
                let m2 = quadrature::composite(&|x: f64| (x - m1).powi(2) * logp(x).exp(), -r, r, panels);
                Ok(Self { density, dim: 1, log_z, mean: vec![m1], std: vec![m2.sqrt()] })
            }
            2 => {
                let g = density.as_gaussian().ok_or_else(|| {
                    Error::Unsupported("two-dimensional histogram metrics need a Gaussian reference".into())
                })?;
                Ok(Self {
                    density,
                    dim: 2,
                    log_z: g.log_normalizer().unwrap_or(0.0),
                    mean: g.mean().iter().copied().collect(),
                    std: (0..2).map(|i| g.covariance()[(i, i)].sqrt()).collect(),
                })
            }
            d => Err(Error::Unsupported(format!("histogram metrics support d ≤ 2, got {d}"))),
        }
    }

    fn edges(&self, samples: &[f64], bins: usize) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|j| {
                let (smin, smax) = samples
                    .iter()
                    .skip(j)
                    .step_by(self.dim)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                let lo = smin.min(self.mean[j] - 4.0 * self.std[j]);
                let mut hi = smax.max(self.mean[j] + 4.0 * self.std[j]);
                if hi <= lo {
                    hi = lo + 1.0;
                }
                let w = (hi - lo) / bins as f64;
                (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * w }).collect()
            })
            .collect()
    }

    // Log mass of every bin (row-major) and the mass outside the grid.
    fn bin_log_masses(&self, edges: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
        if self.dim == 1 {
            let e = &edges[0];
            let kinks = self.density.kinks();
            let logp = |x: f64| -self.density.value_1d(x) - self.log_z;
            let masses: Vec<f64> = e
                .windows(2)
                .map(|w| {
                    let mut cuts = vec![w[0]];
                    cuts.extend(kinks.iter().copied().filter(|k| *k > w[0] && *k < w[1]));
                    cuts.push(w[1]);
                    let parts: Vec<f64> = cuts.windows(2).map(|c| gl16().log_integrate(logp, c[0], c[1])).collect();
                    log_sum_exp(&parts)
                })
                .collect();
            let left = log_mass_1d(self.density, f64::NEG_INFINITY, e[0])? - self.log_z;
            let right = log_mass_1d(self.density, e[e.len() - 1], f64::INFINITY)? - self.log_z;
            Ok((masses, left.exp() + right.exp()))
        } else {
            let rule = GaussLegendre::new(6);
            let (ex, ey) = (&edges[0], &edges[1]);
            let mut masses = Vec::with_capacity((ex.len() - 1) * (ey.len() - 1));
            let mut terms = Vec::with_capacity(rule.len() * rule.len());
            for wx in ex.windows(2) {
                let nx: Vec<(f64, f64)> = rule.mapped(wx[0], wx[1]).collect();
                for wy in ey.windows(2) {
                    terms.clear();
                    for (y, wty) in rule.mapped(wy[0], wy[1]) {
                        for &(x, wtx) in &nx {
                            terms.push((wtx * wty).ln() - self.density.value(&[x, y]) - self.log_z);
                        }
                    }
                    masses.push(log_sum_exp(&terms));
                }
            }
            let inside: f64 = masses.iter().map(|m| m.exp()).sum();
            Ok((masses, (1.0 - inside).max(0.0)))
        }
    }
}

fn validate_samples(samples: &[f64], dim: usize, density: &Density) -> Result<()> {
    ensure(dim == density.dim(), || "sample and density dimensions differ".into())?;
    ensure(!samples.is_empty() && samples.len() % dim == 0, || "samples must be a non-empty n × d array".into())?;
    ensure(samples.iter().all(|x| x.is_finite()), || "samples must be finite".into())
}

fn histogram_metric<F>(samples: &[f64], dim: usize, density: &Density, estimate: F) -> Result<HistogramMetric>
where
    F: Fn(&HistogramEstimate, &[f64], f64) -> Result<f64>,
{
    validate_samples(samples, dim, density)?;
    let reference = Reference::new(density)?;
    let eval = |bins: usize| -> Result<(f64, f64, HistogramEstimate)> {
        let edges = reference.edges(samples, bins);
        let (log_q, outside) = reference.bin_log_masses(&edges)?;
        let hist = HistogramEstimate::build(samples, dim, edges);
        Ok((estimate(&hist, &log_q, outside)?, outside, hist))
    };
    let (value, outside_mass, histogram) = eval(HIST_BINS)?;
    let (refined, _, _) = eval(2 * HIST_BINS)?;
    let n = samples.len() / dim;
    Ok(HistogramMetric {
        value,
        bins: HIST_BINS,
        refined,
        sensitive: (refined - value).abs() >= SENSITIVITY_TOL,
        few_samples: n < MIN_SAMPLES,
        outside_mass,
        histogram,
    })
}

/// Total variation between an ensemble (`n × dim`, row-major) and a density:
/// `½(Σ_b |p̂_b − q_b| + q(outside))` over 256 bins per dimension spanning the
/// samples and four reference standard deviations around its mean.
pub fn tv_hist(samples: &[f64], dim: usize, density: &Density) -> Result<HistogramMetric> {
    histogram_metric(samples, dim, density, |hist, log_q, outside| {
        let n = hist.n as f64;
        let inside: f64 = hist
            .counts
            .iter()
            .zip(log_q)
            .map(|(&c, &lq)| (c as f64 / n - lq.exp()).abs())
            .sum();
        Ok((0.5 * (inside + outside)).min(1.0))
    })
}

/// `Σ p̂_b log(p̂_b / q_b)` over occupied bins. By data processing this
/// under-estimates the true KL as bins shrink, up to sampling bias.
pub fn kl_hist(samples: &[f64], dim: usize, density: &Density) -> Result<HistogramMetric> {
    histogram_metric(samples, dim, density, |hist, log_q, _| {
        let n = hist.n as f64;
        let mut total = 0.0;
        for (&c, &lq) in hist.counts.iter().zip(log_q) {
            if c == 0 {
                continue;
            }
            if lq < (1e-300f64).ln() {
                return Err(Error::Domain("reference mass of an occupied bin is below 1e-300".into()));
            }
            let p = c as f64 / n;
            total += p * (p.ln() - lq);
        }
        Ok(total)
    })
}

fn normalized_log_density(p: &Density) -> Result<impl Fn(f64) -> f64 + '_> {
    ensure(p.dim() == 1, || "quadrature divergences are one-dimensional".into())?;
    let z = match p.log_normalizer() {
        Some(z) => z,
        None => log_integral_1d(p)?,
    };
    Ok(move |x: f64| -p.value_1d(x) - z)
}

fn joint_spec(p: &Density, q: &Density) -> LineSpec {
    let (sp, sq) = (line_spec(p), line_spec(q));
    let mut breakpoints = sp.breakpoints;
    breakpoints.extend(sq.breakpoints);
    LineSpec { tails: TailControl::Empirical, scale: sp.scale.min(sq.scale), breakpoints }
}

/// `χ²(p‖q) = ∫ p²/q − 1` for 1D densities, by log-space quadrature.
pub fn chi2_quadrature(p: &Density, q: &Density) -> Result<f64> {
    let lp = normalized_log_density(p)?;
    let lq = normalized_log_density(q)?;
    let log_int = quadrature::log_integrate_line(|x| 2.0 * lp(x) - lq(x), &joint_spec(p, q), 1e-13)
        .map_err(|_| Error::Domain("p²/q is not integrable: q's tails do not dominate p's".into()))?;
    Ok(log_int.exp_m1().max(0.0))
}

/// `∫ (s_p − s_q)² dp` with scores `s = −V′`, for 1D densities.
pub fn fisher_divergence(p: &Density, q: &Density) -> Result<f64> {
    let lp = normalized_log_density(p)?;
    ensure(q.dim() == 1, || "quadrature divergences are one-dimensional".into())?;
    let spec = line_spec(p);
    let (_, r) = quadrature::log_integrate_line_window(&lp, &spec, 1e-12)?;
    let r = 1.5 * r + 5.0 * spec.scale;
    let mut cuts = vec![-r];
    let mut kinks = joint_spec(p, q).breakpoints;
    kinks.retain(|k| k.abs() < r);
    kinks.sort_by(|a, b| a.total_cmp(b));
    kinks.dedup();
    cuts.extend(kinks);
    cuts.push(r);
    let f = |x: f64| {
        let d = q.gradient_1d(x) - p.gradient_1d(x);
        d * d * lp(x).exp()
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let panels = ((w[1] - w[0]) / spec.scale).ceil().clamp(2.0, 4096.0) as usize;
        total += quadrature::integrate(f, w[0], w[1], panels, 1e-11)?;
    }
    Ok(total)
}

/// One row of a metric time series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub time_or_level: f64,
    pub metric: String,
    pub value: f64,
    pub estimator_meta: String,
}

/// CSV `time_or_level,metric,value,estimator_meta`.
pub fn write_metric_csv<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_or_level", "metric", "value", "estimator_meta"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            crate::distributions::fmt17(r.time_or_level),
            r.metric.clone(),
            crate::distributions::fmt17(r.value),
            r.estimator_meta.clone(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Gaussian law fitted to an ensemble (sample mean and covariance).
pub fn gaussian_fit(samples: &[f64], dim: usize) -> Result<GaussianLaw> {
    ensure(dim >= 1 && samples.len() >= 2 * dim && samples.len() % dim == 0, || {
        "need at least two samples to fit a Gaussian".into()
    })?;
    let n = samples.len() / dim;
    let mut mean = nalgebra::DVector::zeros(dim);
    for row in samples.chunks(dim) {
        for j in 0..dim {
            mean[j] += row[j];
        }
    }
    mean /= n as f64;
    let mut cov = nalgebra::DMatrix::zeros(dim, dim);
    for row in samples.chunks(dim) {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in 0..dim {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    Ok(GaussianLaw::new(mean, cov, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Gaussian, SmoothedUniform};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn law(mean: &[f64], var: f64) -> GaussianLaw {
        let d = mean.len();
        GaussianLaw::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * var, 0.0)
    }

    fn normals(n: usize, seed: u64, mean: f64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn kl_gaussian_closed_form() {
        let p = law(&[0.0, 0.0], 1.0);
        let q = law(&[0.0, 0.0], 10.0);
        assert!((kl_gaussians(&p, &q).unwrap() - 0.5 * (0.2 - 2.0 + 100f64.ln())).abs() < 1e-12);
        assert_eq!(kl_gaussians(&p, &p).unwrap(), 0.0);
        let singular = GaussianLaw::new(DVector::zeros(2), DMatrix::zeros(2, 2), 0.0);
        assert!(kl_gaussians(&p, &singular).is_err());
    }

    #[test]
    fn self_histograms_are_small() {
        let d: Density = Gaussian::univariate(0.0, 1.0).unwrap().into();
        let xs = normals(100_000, 3, 0.0, 1.0);
        let tv = tv_hist(&xs, 1, &d).unwrap();
        let kl = kl_hist(&xs, 1, &d).unwrap();
        assert!(tv.value <= 0.02, "tv {}", tv.value);
        assert!(kl.value <= 0.05, "kl {}", kl.value);
        assert_eq!(tv.histogram.counts.iter().sum::<u64>(), 100_000);
        assert!(!tv.few_samples);
    }

    #[test]
    fn disjoint_support_gives_unit_tv() {
        let d: Density = Gaussian::univariate(0.0, 1.0).unwrap().into();
        let xs = vec![40.0; 2000];
        assert!(tv_hist(&xs, 1, &d).unwrap().value > 0.99);
        assert!(kl_hist(&xs, 1, &d).is_err());
        assert!(tv_hist(&xs[..10], 1, &d).unwrap().few_samples);
    }

    #[test]
    fn histogram_2d_gaussian() {
        let g = Gaussian::isotropic(&[0.0, 0.0], 1.0).unwrap();
        let d: Density = g.into();
        let xs = normals(200_000, 9, 0.0, 1.0);
        let tv = tv_hist(&xs, 2, &d).unwrap();
        assert!(tv.outside_mass < 1e-3);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 20.0).collect();
        assert!(tv_hist(&shifted, 2, &d).unwrap().value > 0.99);
    }

    #[test]
    fn chi2_gaussian_oracle() {
        let p: Density = Gaussian::univariate(0.0, 1.0).unwrap().into();
        let q: Density = Gaussian::univariate(0.0, 2.0).unwrap().into();
        assert!((chi2_quadrature(&p, &q).unwrap() - (2.0 / 3f64.sqrt() - 1.0)).abs() < 1e-10);
        assert!(chi2_quadrature(&p, &p).unwrap() < 1e-12);
        // N(0,2) against N(0,1): p²/q ∝ exp(x²/2 − x²/2) is not integrable
        assert!(matches!(chi2_quadrature(&q, &p), Err(Error::Domain(_))));
        let r: Density = Gaussian::univariate(1.5, 1.0).unwrap().into();
        assert!((chi2_quadrature(&p, &r).unwrap() - (2.25f64.exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn chi2_against_smoothed_uniform() {
        let m = 4.0;
        let p: Density = Gaussian::univariate(m, 1.0).unwrap().into();
        let q: Density = SmoothedUniform::new(m).unwrap().into();
        let v = chi2_quadrature(&p, &q).unwrap();
        assert!(v >= 0.0 && v + 1.0 <= 20.0);
    }

    #[test]
    fn fisher_oracles() {
        let p: Density = Gaussian::univariate(0.0, 1.0).unwrap().into();
        let q: Density = Gaussian::univariate(0.7, 1.0).unwrap().into();
        assert!((fisher_divergence(&p, &q).unwrap() - 0.49).abs() < 1e-10);
        let s2 = 3.0;
        let r: Density = Gaussian::univariate(0.0, s2).unwrap().into();
        assert!((fisher_divergence(&p, &r).unwrap() - (1.0 - 1.0 / s2).powi(2)).abs() < 1e-10);
        assert_eq!(fisher_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn metric_csv_quotes_meta() {
        let rows = vec![MetricRow { time_or_level: 1.0, metric: "tv".into(), value: 0.5, estimator_meta: "a,b".into() }];
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_or_level,metric,value,estimator_meta\n"));
        assert!(text.contains("\"a,b\""));
    }
}
