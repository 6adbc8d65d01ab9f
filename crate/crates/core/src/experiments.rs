//! Config-driven experiment runner behind the `temper-lab` binary.
//!
//! A config is a JSON object
//!
//! ```json
//! { "schema_version": 1, "kind": "reproduce-fig2", "seed": 7, "params": { "alpha_pi": 0.01 } }
//! ```
//!
//! `kind` may be omitted when given on the command line; `params` fields
//! not listed fall back to the documented defaults, and every parameter
//! actually used (defaults included) is echoed into `manifest.json` together
//! with SHA-256 hashes of all emitted files. Unknown keys are rejected with
//! their field path. CSV is the artifact of record; SVG is optional.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    constant_a, continuous_bound_sweep, discrete_bound_sweep, g_functional, g_linear_closed_form,
    precision_conditions_continuous, precision_conditions_discrete, write_continuous_csv, write_discrete_csv,
    DiscreteVariant, RegularityBundle,
};
use crate::distributions::{
    density_grid, fmt17, make_bimodal_target, make_contaminated_target, Density, Gaussian, GeometricPath, Mixture,
    Potential, SmoothedUniform,
};
use crate::error::{Error, Result};
use crate::inequalities::{
    chi2_gauss_um, lsi_um_upper, poincare_probe_sweep, thm5_tv_lower, thm6_tv_lower, verify_unimodal_facts,
    write_probe_csv, write_tv_lower_csv,
};
use crate::metrics::{gaussian_fit, kl_gaussians, kl_hist, tv_hist, write_metric_csv, MetricRow};
use crate::plot::{emit_svg_lineplot, PlotSpec};
use crate::sampler::{
    gaussian_moment_flow, gaussian_moment_recursion, run_ladder_on, run_schedule_on, GaussianLaw, ParticleEnsemble,
    Snapshot, StepPolicy,
};
use crate::schedules::{
    constant_schedule, custom_schedule, discretize, linear_schedule, optimal_schedule, InnerBudget, Schedule,
    TemperatureLadder,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sample,
    BoundsSweep,
    ScheduleCompare,
    Probe,
    ReproduceFig2,
    ReproduceFig3,
    ReproducePathviz,
    LowerBimodal,
    LowerUnimodal,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Sample,
        ExperimentKind::BoundsSweep,
        ExperimentKind::ScheduleCompare,
        ExperimentKind::Probe,
        ExperimentKind::ReproduceFig2,
        ExperimentKind::ReproduceFig3,
        ExperimentKind::ReproducePathviz,
        ExperimentKind::LowerBimodal,
        ExperimentKind::LowerUnimodal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::BoundsSweep => "bounds-sweep",
            ExperimentKind::ScheduleCompare => "schedule-compare",
            ExperimentKind::Probe => "probe",
            ExperimentKind::ReproduceFig2 => "reproduce-fig2",
            ExperimentKind::ReproduceFig3 => "reproduce-fig3",
            ExperimentKind::ReproducePathviz => "reproduce-pathviz",
            ExperimentKind::LowerBimodal => "lower-bimodal",
            ExperimentKind::LowerUnimodal => "lower-unimodal",
        }
    }

    /// Kinds that draw random numbers and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            ExperimentKind::Sample
                | ExperimentKind::ReproduceFig3
                | ExperimentKind::LowerBimodal
                | ExperimentKind::LowerUnimodal
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| config_err("kind", format!("unknown experiment kind `{s}`")))
    }
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

// ---------------------------------------------------------------------------
// Parameter vocabulary shared by several kinds.

/// A one- or multi-dimensional law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    /// `cov` or isotropic `var` (default 1).
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        var: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
    },
    SmoothedUniform { m: f64 },
    /// `½N(0,1) + ½N(m,1)`.
    Bimodal { m: f64 },
    /// `(1−e^{−a²m²/2})N(m,1) + e^{−a²m²/2}u_m`.
    Contaminated { m: f64, a: f64 },
    Mixture { components: Vec<ComponentSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub density: DistSpec,
}

impl DistSpec {
    pub fn gaussian(mean: &[f64], var: f64) -> Self {
        DistSpec::Gaussian { mean: mean.to_vec(), var: Some(var), cov: None }
    }

    pub fn build(&self) -> Result<Density> {
        Ok(match self {
            DistSpec::Gaussian { mean, var, cov } => match (var, cov) {
                (Some(_), Some(_)) => return Err(crate::error::domain("give either `var` or `cov`, not both")),
                (_, Some(rows)) => {
                    let d = mean.len();
                    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                        return Err(crate::error::domain(format!("`cov` must be {d} × {d}")));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    Gaussian::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(d, d, &flat))?.into()
                }
                (v, None) => Gaussian::isotropic(mean, v.unwrap_or(1.0))?.into(),
            },
            DistSpec::SmoothedUniform { m } => SmoothedUniform::new(*m)?.into(),
            DistSpec::Bimodal { m } => make_bimodal_target(*m)?.into(),
            DistSpec::Contaminated { m, a } => make_contaminated_target(*m, *a)?.into(),
            DistSpec::Mixture { components } => {
                let parts = components.iter().map(|c| Ok((c.weight, c.density.build()?))).collect::<Result<Vec<_>>>()?;
                Mixture::new(parts)?.into()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `λ_s = s/T`.
    Linear { horizon: f64 },
    Constant { value: f64, horizon: f64 },
    /// `λ ≡ 1`.
    Vanilla { horizon: f64 },
    /// The G-optimal schedule; α's default to the endpoints' strong convexity.
    Optimal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_pi: Option<f64>,
    },
    /// Piecewise-linear through `(s_i, λ_i)`.
    Custom { s: Vec<f64>, lambda: Vec<f64> },
}

impl ScheduleSpec {
    fn build(&self, path: Option<&GeometricPath>) -> Result<Schedule> {
        match self {
            ScheduleSpec::Linear { horizon } => linear_schedule(*horizon),
            ScheduleSpec::Constant { value, horizon } => constant_schedule(*value, *horizon),
            ScheduleSpec::Vanilla { horizon } => constant_schedule(1.0, *horizon),
            ScheduleSpec::Optimal { horizon, alpha_nu, alpha_pi } => {
                let (an, ap) = match (alpha_nu, alpha_pi) {
                    (Some(a), Some(b)) => (*a, *b),
                    _ => path.and_then(endpoint_alphas).ok_or_else(|| {
                        Error::Unsupported("optimal schedule needs alpha_nu/alpha_pi or strongly log-concave endpoints".into())
                    })?,
                };
                let s = optimal_schedule(an, ap)?;
                match horizon {
                    Some(t) => s.with_horizon(*t),
                    None => Ok(s),
                }
            }
            ScheduleSpec::Custom { s, lambda } => custom_schedule(s.clone(), lambda.clone()),
        }
    }
}

fn endpoint_alphas(path: &GeometricPath) -> Option<(f64, f64)> {
    Some((path.proposal().regularity().strong_convexity?, path.target().regularity().strong_convexity?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    #[serde(default)]
    pub lambda0: f64,
    /// Explicit levels `λ_1 < … < λ_K`; alternatively `uniform: K` for `λ_k = k/K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<usize>,
    /// Inner time per level (with optional step `h`), or `inner_steps` with a required `h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

impl LadderSpec {
    fn build(&self) -> Result<TemperatureLadder> {
        let levels = match (&self.levels, self.uniform) {
            (Some(l), None) => l.clone(),
            (None, Some(k)) if k > 0 => (1..=k).map(|i| i as f64 / k as f64).collect(),
            _ => return Err(crate::error::domain("ladder needs exactly one of `levels` or `uniform` (K ≥ 1)")),
        };
        let budget = match (self.inner_time, self.inner_steps, self.h) {
            (Some(t), None, h) => InnerBudget::Time { t, h },
            (None, Some(n), Some(h)) => InnerBudget::Steps { h, n },
            _ => return Err(crate::error::domain("ladder needs `inner_time`, or `inner_steps` together with `h`")),
        };
        TemperatureLadder::new(self.lambda0, levels.clone(), vec![budget; levels.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    #[default]
    Explicit,
    Guarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSpec {
    #[default]
    Printed,
    Proof,
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Per-kind parameters. Every struct is fully defaulted.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    pub proposal: DistSpec,
    pub target: DistSpec,
    /// Law of `X_0` (Gaussian); defaults to the proposal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<DistSpec>,
    pub n_particles: usize,
    /// Drive either by a schedule (with `h` and `snapshot_times`) or by a ladder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    pub h: f64,
    pub snapshot_times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_levels: Option<Vec<usize>>,
    pub policy: PolicySpec,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            proposal: DistSpec::gaussian(&[0.0], 1.0),
            target: DistSpec::gaussian(&[0.0], 10.0),
            init: None,
            n_particles: 10_000,
            schedule: Some(ScheduleSpec::Linear { horizon: 10.0 }),
            h: 0.01,
            snapshot_times: vec![0.0, 1.0, 5.0, 10.0],
            ladder: None,
            snapshot_levels: None,
            policy: PolicySpec::Explicit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSweepParams {
    pub proposal: DistSpec,
    pub target: DistSpec,
    /// Initial law; defaults to the proposal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<DistSpec>,
    pub schedule: ScheduleSpec,
    /// Continuous-bound evaluation times; default 25 log-spaced points up to the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Number of equal steps for the discrete bound (0 disables it).
    pub discrete_steps: usize,
    /// Precision ε for the precision conditions (omitted: not reported).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub variant: VariantSpec,
}

impl Default for BoundsSweepParams {
    fn default() -> Self {
        Self {
            proposal: DistSpec::gaussian(&[0.0, 0.0], 1.0),
            target: DistSpec::gaussian(&[0.0, 0.0], 10.0),
            init: None,
            schedule: ScheduleSpec::Linear { horizon: 50.0 },
            times: None,
            discrete_steps: 1250,
            eps: None,
            variant: VariantSpec::Printed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    pub alpha_nu: f64,
    pub alpha_pi: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
}

impl CompareParams {
    fn fig2() -> Self {
        Self { alpha_nu: 1.0, alpha_pi: 0.01, t_min: 0.1, t_max: 1e3, n_points: 41 }
    }
}

impl Default for CompareParams {
    fn default() -> Self {
        Self { alpha_nu: 1.0, alpha_pi: 0.1, t_min: 0.1, t_max: 1e3, n_points: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    /// Separation values of the Poincaré probe (`a = 1/√2`).
    pub ms: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub facts_m: f64,
    pub facts_a: f64,
    pub facts_lambdas: Vec<f64>,
    /// `m` values for the `u_m` log-Sobolev and χ² checks.
    pub lsi_ms: Vec<f64>,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            ms: vec![10.0, 12.0, 14.0, 16.0],
            lambdas: vec![0.5, 0.6, 0.75, 0.9],
            facts_m: 10.0,
            facts_a: std::f64::consts::FRAC_1_SQRT_2,
            facts_lambdas: vec![0.5, 0.75, 0.9],
            lsi_ms: vec![4.0, 10.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3Params {
    pub dim: usize,
    pub var_nu: f64,
    pub var_pi: f64,
    pub n_particles: usize,
    /// Step size; each horizon is rounded to a whole number of steps.
    pub h: f64,
    /// Linear-schedule horizons, one independent run each.
    pub horizons: Vec<f64>,
    /// Bootstrap resamples for the standard error of the empirical KL.
    pub bootstrap: usize,
}

impl Default for Fig3Params {
    fn default() -> Self {
        Self {
            dim: 2,
            var_nu: 1.0,
            var_pi: 10.0,
            n_particles: 10_000,
            h: 0.005,
            horizons: log_grid(0.5, 50.0, 10).into_iter().map(|t| (t / 0.005).round() * 0.005).collect(),
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathvizParams {
    pub proposal: DistSpec,
    pub target: DistSpec,
    pub lambdas: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub n_grid: usize,
}

impl Default for PathvizParams {
    fn default() -> Self {
        Self {
            proposal: DistSpec::gaussian(&[0.0], 1.0),
            target: DistSpec::Mixture {
                components: vec![
                    ComponentSpec { weight: 0.5, density: DistSpec::gaussian(&[3.0], 0.25) },
                    ComponentSpec { weight: 0.5, density: DistSpec::gaussian(&[8.0], 0.25) },
                ],
            },
            lambdas: vec![0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0],
            x_min: -4.0,
            x_max: 11.0,
            n_grid: 601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerParams {
    pub m: f64,
    pub levels: Vec<f64>,
    pub inner_time: f64,
    pub h: f64,
    pub n_particles: usize,
}

impl LowerParams {
    fn bimodal() -> Self {
        Self {
            m: 24.0,
            levels: (1..=20).map(|k| k as f64 / 20.0).collect(),
            inner_time: 0.5,
            h: 1e-3,
            n_particles: 100_000,
        }
    }

    fn unimodal() -> Self {
        Self {
            m: 30.0,
            levels: (1..=10).map(|k| k as f64 / 20.0).collect(),
            inner_time: 1.0,
            h: 1e-3,
            n_particles: 20_000,
        }
    }
}

impl Default for LowerParams {
    fn default() -> Self {
        Self::bimodal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Sample(SampleParams),
    BoundsSweep(BoundsSweepParams),
    Compare(CompareParams),
    Probe(ProbeParams),
    Fig3(Fig3Params),
    Pathviz(PathvizParams),
    Lower(LowerParams),
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    schema_version: u32,
    #[serde(default)]
    kind: Option<ExperimentKind>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

fn parse_at<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_string() } else { format!("{prefix}.{inner}") };
        config_err(path, e.into_inner().to_string())
    })
}

fn kind_params(kind: ExperimentKind, raw: Option<serde_json::Value>) -> Result<Params> {
    use ExperimentKind as K;
    let Some(raw) = raw else {
        return Ok(default_params(kind));
    };
    let mut raw = raw;
    let ladder_only = matches!(&raw, serde_json::Value::Object(u) if u.contains_key("ladder") && !u.contains_key("schedule"));
    // Layer the user's keys over the kind's defaults so kind-specific defaults survive.
    if let (serde_json::Value::Object(user), Ok(serde_json::Value::Object(mut base))) =
        (&raw, serde_json::to_value(default_params(kind)))
    {
        for (k, v) in user {
            base.insert(k.clone(), v.clone());
        }
        raw = serde_json::Value::Object(base);
    }
    Ok(match kind {
        K::Sample => {
            let mut p: SampleParams = parse_at(raw, "params")?;
            // Choosing a ladder replaces the default schedule driver.
            if ladder_only {
                p.schedule = None;
            }
            Params::Sample(p)
        }
        K::BoundsSweep => Params::BoundsSweep(parse_at(raw, "params")?),
        K::ScheduleCompare | K::ReproduceFig2 => Params::Compare(parse_at(raw, "params")?),
        K::Probe => Params::Probe(parse_at(raw, "params")?),
        K::ReproduceFig3 => Params::Fig3(parse_at(raw, "params")?),
        K::ReproducePathviz => Params::Pathviz(parse_at(raw, "params")?),
        K::LowerBimodal | K::LowerUnimodal => Params::Lower(parse_at(raw, "params")?),
    })
}

/// Defaults for a kind, as echoed in the manifest.
pub fn default_params(kind: ExperimentKind) -> Params {
    use ExperimentKind as K;
    match kind {
        K::Sample => Params::Sample(SampleParams::default()),
        K::BoundsSweep => Params::BoundsSweep(BoundsSweepParams::default()),
        K::ScheduleCompare => Params::Compare(CompareParams::default()),
        K::ReproduceFig2 => Params::Compare(CompareParams::fig2()),
        K::Probe => Params::Probe(ProbeParams::default()),
        K::ReproduceFig3 => Params::Fig3(Fig3Params::default()),
        K::ReproducePathviz => Params::Pathviz(PathvizParams::default()),
        K::LowerBimodal => Params::Lower(LowerParams::bimodal()),
        K::LowerUnimodal => Params::Lower(LowerParams::unimodal()),
    }
}

/// Parses and validates a config. `cli_kind` (from the command line) must
/// agree with the config's own `kind` when both are present.
pub fn parse_config(text: &str, cli_kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let env: Envelope = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(config_err(
            "schema_version",
            format!("unsupported schema version {} (expected {SCHEMA_VERSION})", env.schema_version),
        ));
    }
    let kind = match (cli_kind, env.kind) {
        (Some(a), Some(b)) if a != b => {
            return Err(config_err("kind", format!("config is for `{b}` but `{a}` was requested")))
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => return Err(config_err("kind", "missing experiment kind")),
    };
    let params = kind_params(kind, env.params)?;
    Ok(ExperimentConfig { kind, seed: env.seed, params })
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, seed: Option<u64>) -> Self {
        Self { kind, seed, params: default_params(kind) }
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| config_err("seed", format!("`{}` is stochastic and needs a seed", self.kind)))
    }
}

// ---------------------------------------------------------------------------
// Manifest.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one run: every parameter used, every file written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub crate_version: &'static str,
    pub parameters: serde_json::Value,
    pub files: Vec<FileEntry>,
    /// Headline numbers (e.g. final TV and the matching lower bound).
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn file(&self, name: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == name)
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    svg: bool,
    summary: BTreeMap<String, f64>,
    warnings: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        Ok(BufWriter::new(File::create(p)?))
    }

    fn write<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn plot(&mut self, name: &str, spec: PlotSpec) -> Result<()> {
        if self.svg {
            let p = emit_svg_lineplot(&self.dir.join(name), &spec)?;
            self.files.push(p);
        }
        Ok(())
    }
}

fn sha256_file(p: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(p)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Runs `cfg`, writing outputs and `manifest.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, svg: bool) -> Result<Manifest> {
    std::fs::create_dir_all(out)?;
    let mut o = Outputs { dir: out.to_path_buf(), files: Vec::new(), svg, summary: BTreeMap::new(), warnings: Vec::new() };
    let kind = cfg.kind;
    let mut run = || -> Result<()> {
        match (&cfg.params, kind) {
            (Params::Sample(p), _) => run_sample(p, cfg.require_seed()?, &mut o),
            (Params::BoundsSweep(p), _) => run_bounds_sweep(p, &mut o),
            (Params::Compare(p), ExperimentKind::ReproduceFig2) => run_compare(p, "fig2.csv", &mut o),
            (Params::Compare(p), _) => run_compare(p, "g_compare.csv", &mut o),
            (Params::Probe(p), _) => run_probe(p, &mut o),
            (Params::Fig3(p), _) => run_fig3(p, cfg.require_seed()?, &mut o),
            (Params::Pathviz(p), _) => run_pathviz(p, &mut o),
            (Params::Lower(p), ExperimentKind::LowerUnimodal) => run_lower_unimodal(p, cfg.require_seed()?, &mut o),
            (Params::Lower(p), _) => run_lower_bimodal(p, cfg.require_seed()?, &mut o),
        }
    };
    run().map_err(|e| match e {
        Error::Config { .. } => e,
        other => other.context(format!("experiment `{kind}`")),
    })?;
    let mut files = Vec::new();
    for p in &o.files {
        let (sha256, bytes) = sha256_file(p)?;
        let path = p.strip_prefix(out).unwrap_or(p).to_string_lossy().into_owned();
        files.push(FileEntry { path, sha256, bytes });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind,
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        parameters: serde_json::to_value(&cfg.params).map_err(|e| Error::Io(e.into()))?,
        files,
        summary: o.summary,
        warnings: o.warnings,
    };
    let mut w = BufWriter::new(File::create(out.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(manifest)
}

// Building objects from parameters: failures here are configuration errors.
fn cfg<T>(r: Result<T>, path: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::Domain(m) | Error::Unsupported(m) => config_err(path, m),
        other => other,
    })
}

fn gaussian_law_of(d: &Density, path: &str) -> Result<Gaussian> {
    d.as_gaussian().cloned().ok_or_else(|| config_err(path, "initial law must be Gaussian"))
}

fn second_moment(g: &Gaussian) -> f64 {
    g.mean().norm_squared() + g.covariance().trace()
}

fn gaussian_endpoints(path: &GeometricPath) -> Option<(&Gaussian, &Gaussian)> {
    Some((path.proposal().as_gaussian()?, path.target().as_gaussian()?))
}

// ---------------------------------------------------------------------------
// Runners.

fn snapshot_metrics(snap: &Snapshot, stamp: f64, target: &Density, exact: Option<(&GaussianLaw, &Gaussian)>, rows: &mut Vec<MetricRow>, warnings: &mut Vec<String>) -> Result<()> {
    if snap.dim <= 2 && (snap.dim == 1 || target.as_gaussian().is_some()) {
        let tv = tv_hist(&snap.states, snap.dim, target)?;
        if tv.few_samples {
            warnings.push(format!("histogram at {stamp}: fewer than 1000 samples"));
        }
        rows.push(MetricRow { time_or_level: stamp, metric: "tv_target".into(), value: tv.value, estimator_meta: tv.meta() });
        match kl_hist(&snap.states, snap.dim, target) {
            Ok(kl) => rows.push(MetricRow {
                time_or_level: stamp,
                metric: "kl_target_hist".into(),
                value: kl.value,
                estimator_meta: format!("{};lower_estimate", kl.meta()),
            }),
            Err(e) => warnings.push(format!("histogram KL at {stamp} skipped: {e}")),
        }
    }
    if let Some((law, pi)) = exact {
        let pi_law = GaussianLaw::from(pi);
        rows.push(MetricRow {
            time_or_level: stamp,
            metric: "kl_exact".into(),
            value: kl_gaussians(law, &pi_law)?,
            estimator_meta: "moment oracle".into(),
        });
        let fit = gaussian_fit(&snap.states, snap.dim)?;
        rows.push(MetricRow {
            time_or_level: stamp,
            metric: "kl_gaussian_fit".into(),
            value: kl_gaussians(&fit, &pi_law)?,
            estimator_meta: format!("n={}", snap.len()),
        });
    }
    Ok(())
}

fn write_snapshot(o: &mut Outputs, name: &str, snap: &Snapshot, hash: &str) -> Result<()> {
    o.write(&format!("{name}.csv"), |w| snap.write_csv(w))?;
    o.write(&format!("{name}.json"), |w| {
        snap.write_sidecar(&mut *w, hash)?;
        writeln!(w)?;
        Ok(())
    })
}

fn run_sample(p: &SampleParams, seed: u64, o: &mut Outputs) -> Result<()> {
    let proposal = cfg(p.proposal.build(), "params.proposal")?;
    let target = cfg(p.target.build(), "params.target")?;
    let path = cfg(GeometricPath::new(proposal.clone(), target.clone()), "params.target")?;
    let init = match &p.init {
        Some(d) => gaussian_law_of(&cfg(d.build(), "params.init")?, "params.init")?,
        None => gaussian_law_of(&proposal, "params.proposal")?,
    };
    let policy = match p.policy {
        PolicySpec::Explicit => StepPolicy::Explicit,
        PolicySpec::Guarded => StepPolicy::Guarded(RegularityBundle::from_path(&path, second_moment(&init))),
    };
    if p.n_particles == 0 {
        return Err(config_err("params.n_particles", "must be at least 1"));
    }
    let mut ens = ParticleEnsemble::from_gaussian(&init, p.n_particles, seed)?;
    let oracle = gaussian_endpoints(&path);
    let init_law = GaussianLaw::from(&init);
    let mut rows = Vec::new();
    match (&p.schedule, &p.ladder) {
        (Some(s), None) => {
            let schedule = cfg(s.build(Some(&path)), "params.schedule")?;
            let snaps = cfg(run_schedule_on(&mut ens, &path, &schedule, p.h, &p.snapshot_times, &policy), "params.snapshot_times")?;
            let hash = schedule.fingerprint();
            for (i, snap) in snaps.iter().enumerate() {
                write_snapshot(o, &format!("snapshot_{i:03}"), snap, &hash)?;
                let law = match oracle {
                    Some((nu, pi)) => Some((gaussian_moment_flow(nu, pi, &schedule, &init_law, snap.time)?, pi)),
                    None => None,
                };
                snapshot_metrics(snap, snap.time, &target, law.as_ref().map(|(l, pi)| (l, *pi)), &mut rows, &mut o.warnings)?;
            }
        }
        (None, Some(l)) => {
            let ladder = cfg(l.build(), "params.ladder")?;
            let snaps = run_ladder_on(&mut ens, &path, &ladder, p.snapshot_levels.as_deref(), &policy)?;
            let hash = ladder.fingerprint();
            let laws = match oracle {
                Some((nu, pi)) => {
                    let seq = ladder_sequence(&path, &ladder)?;
                    Some((gaussian_moment_recursion(nu, pi, &seq, &init_law)?, seq.level_ends.clone(), pi))
                }
                None => None,
            };
            for snap in &snaps {
                let level = snap.level.unwrap_or(0);
                write_snapshot(o, &format!("snapshot_level_{level:03}"), snap, &hash)?;
                let exact = laws.as_ref().map(|(laws, ends, pi)| {
                    let idx = if level == 0 { 0 } else { ends[level - 1] };
                    (&laws[idx], *pi)
                });
                snapshot_metrics(snap, level as f64, &target, exact, &mut rows, &mut o.warnings)?;
            }
        }
        _ => return Err(config_err("params", "give exactly one of `schedule` or `ladder`")),
    }
    o.write("metrics.csv", |w| write_metric_csv(w, &rows))?;
    o.plot("metrics.csv", PlotSpec::new("time_or_level", &["value"], "metrics").grouped("metric"))
}

// Step sequence of a ladder with the sampler's default inner step resolved.
fn ladder_sequence(path: &GeometricPath, ladder: &TemperatureLadder) -> Result<crate::schedules::StepSequence> {
    let budgets = ladder
        .levels()
        .iter()
        .zip(ladder.budgets())
        .map(|(&l, b)| {
            let (n, h) = b.resolve(crate::sampler::default_inner_step(path, l))?;
            Ok(InnerBudget::Steps { h, n })
        })
        .collect::<Result<Vec<_>>>()?;
    TemperatureLadder::new(ladder.lambda0(), ladder.levels().to_vec(), budgets)?.step_sequence()
}

fn run_bounds_sweep(p: &BoundsSweepParams, o: &mut Outputs) -> Result<()> {
    let proposal = cfg(p.proposal.build(), "params.proposal")?;
    let target = cfg(p.target.build(), "params.target")?;
    let path = cfg(GeometricPath::new(proposal.clone(), target), "params.target")?;
    let init = match &p.init {
        Some(d) => gaussian_law_of(&cfg(d.build(), "params.init")?, "params.init")?,
        None => gaussian_law_of(&proposal, "params.proposal")?,
    };
    let schedule = cfg(p.schedule.build(Some(&path)), "params.schedule")?;
    if !schedule.horizon().is_finite() {
        return Err(config_err("params.schedule.horizon", "bounds sweeps need a finite horizon"));
    }
    let bundle = RegularityBundle::from_path(&path, second_moment(&init));
    let lambda0 = schedule.value(0.0);
    let mu0 = crate::distributions::gaussian_geometric(
        path.proposal().as_gaussian().ok_or_else(|| config_err("params.proposal", "bounds sweeps need Gaussian endpoints"))?,
        path.target().as_gaussian().ok_or_else(|| config_err("params.target", "bounds sweeps need Gaussian endpoints"))?,
        lambda0,
    )?;
    let init_law = GaussianLaw::from(&init);
    let kl0 = kl_gaussians(&init_law, &GaussianLaw::from(&mu0))?;
    let (nu, pi) = gaussian_endpoints(&path).expect("checked above");
    let pi_law = GaussianLaw::from(pi);

    let times = p.times.clone().unwrap_or_else(|| log_grid(schedule.horizon() / 100.0, schedule.horizon(), 25));
    for (i, t) in times.iter().enumerate() {
        cfg(schedule.check_time(*t), &format!("params.times[{i}]"))?;
    }
    let reports = cfg(continuous_bound_sweep(&schedule, &bundle, kl0, &times), "params")?;
    let mut rows = Vec::new();
    for r in reports {
        let law = gaussian_moment_flow(nu, pi, &schedule, &init_law, r.t)?;
        let kl = kl_gaussians(&law, &pi_law)?;
        rows.push((r, Some(kl)));
    }
    o.summary.insert("A".into(), constant_a(&bundle)?);
    o.write("continuous_bound.csv", |w| write_continuous_csv(w, &rows))?;
    o.plot("continuous_bound.csv", PlotSpec::new("t", &["total", "kl_exact"], "continuous bound"))?;

    if p.discrete_steps > 0 {
        let ladder = discretize(&schedule, p.discrete_steps)?;
        let seq = ladder.step_sequence()?;
        let laws = gaussian_moment_recursion(nu, pi, &seq, &init_law)?;
        let reports = discrete_bound_sweep(&seq, &bundle, kl0, seq.len())?;
        let mut rows = Vec::new();
        for r in reports {
            rows.push((r.clone(), Some(kl_gaussians(&laws[r.k], &pi_law)?)));
        }
        o.write("discrete_bound.csv", |w| write_discrete_csv(w, &rows))?;
        o.plot("discrete_bound.csv", PlotSpec::new("k", &["total", "kl_exact"], "discrete bound"))?;
    }

    if let Some(eps) = p.eps {
        let c = cfg(precision_conditions_continuous(&bundle, kl0, eps), "params.eps")?;
        let variant = match p.variant {
            VariantSpec::Printed => DiscreteVariant::Printed,
            VariantSpec::Proof => DiscreteVariant::Proof,
        };
        let d = cfg(precision_conditions_discrete(&bundle, kl0, eps, variant), "params.eps")?;
        let doc = serde_json::json!({
            "eps": eps,
            "kl0": kl0,
            "continuous": { "t_min": c.t_min, "lambda_floor": c.lambda_floor, "lambda_half_gap": c.lambda_half_gap },
            "discrete": {
                "variant": p.variant,
                "h_max": d.h_max,
                "k_min": d.k_min,
                "lambda_floor": d.lambda_floor,
                "lambda_half_gap": d.lambda_half_gap,
                "a_prime": d.a_prime,
            },
        });
        o.write("precision.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| Error::Io(e.into()))?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(())
}

/// `G_t` of the optimal, linear and vanilla schedules on a log grid.
pub fn g_comparison(p: &CompareParams) -> Result<Vec<[f64; 4]>> {
    if !(p.t_min > 0.0 && p.t_max > p.t_min && p.n_points >= 2) {
        return Err(config_err("params", "need 0 < t_min < t_max and n_points ≥ 2"));
    }
    let optimal = cfg(optimal_schedule(p.alpha_nu, p.alpha_pi), "params.alpha_pi")?;
    let vanilla = constant_schedule(1.0, p.t_max)?;
    log_grid(p.t_min, p.t_max, p.n_points)
        .into_iter()
        .map(|t| {
            let go = g_functional(&optimal, p.alpha_nu, p.alpha_pi, t)?;
            let gl = if p.alpha_pi < p.alpha_nu {
                g_linear_closed_form(p.alpha_nu, p.alpha_pi, t)?
            } else {
                g_functional(&linear_schedule(t)?, p.alpha_nu, p.alpha_pi, t)?
            };
            let gv = g_functional(&vanilla, p.alpha_nu, p.alpha_pi, t)?;
            Ok([t, go, gl, gv])
        })
        .collect()
}

fn run_compare(p: &CompareParams, name: &str, o: &mut Outputs) -> Result<()> {
    let rows = g_comparison(p)?;
    o.write(name, |w| {
        writeln!(w, "t,G_optimal,G_linear,G_vanilla")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", fmt17(r[0]), fmt17(r[1]), fmt17(r[2]), fmt17(r[3]))?;
        }
        Ok(())
    })?;
    let optimal = optimal_schedule(p.alpha_nu, p.alpha_pi)?;
    if let Some(s) = optimal.clamp_time() {
        o.summary.insert("optimal_clamp_time".into(), s);
    }
    let horizon = optimal.clamp_time().map_or(p.t_max, |s| (2.0 * s).min(p.t_max).max(p.t_min));
    o.write("schedule_optimal.csv", |w| optimal.with_horizon(horizon)?.write_csv(w, 201))?;
    o.plot(name, PlotSpec { log_y: Some(true), ..PlotSpec::new("t", &["G_optimal", "G_linear", "G_vanilla"], "G_t by schedule") })?;
    o.plot("schedule_optimal.csv", PlotSpec::new("s", &["lambda"], "optimal schedule"))
}

fn run_probe(p: &ProbeParams, o: &mut Outputs) -> Result<()> {
    let rows = cfg(poincare_probe_sweep(&p.ms, &p.lambdas), "params.ms")?;
    o.write("probe.csv", |w| write_probe_csv(w, &rows))?;
    o.plot("probe.csv", PlotSpec { log_y: Some(true), ..PlotSpec::new("m", &["rayleigh_lower"], "Rayleigh probe").grouped("lambda") })?;

    let mut facts = Vec::new();
    for &l in &p.facts_lambdas {
        facts.push(cfg(verify_unimodal_facts(p.facts_m, p.facts_a, l), "params.facts_lambdas")?);
    }
    let all = facts.iter().all(|f| f.all_hold());
    o.summary.insert("facts_hold".into(), if all { 1.0 } else { 0.0 });
    o.write("facts.csv", |w| {
        writeln!(w, "m,a,lambda,fact,applicable,log_value,log_bound,holds")?;
        for f in &facts {
            for c in &f.checks {
                let holds = c.holds().map_or("n/a".to_string(), |h| h.to_string());
                writeln!(w, "{},{},{},{},{},{},{},{holds}", fmt17(f.m), fmt17(f.a), fmt17(f.lambda), c.name, c.applicable, fmt17(c.log_value), fmt17(c.log_bound))?;
            }
        }
        Ok(())
    })?;

    let mut lsi = Vec::new();
    for &m in &p.lsi_ms {
        lsi.push([m, cfg(lsi_um_upper(m), "params.lsi_ms")?, cfg(chi2_gauss_um(m), "params.lsi_ms")?]);
    }
    o.write("lsi.csv", |w| {
        writeln!(w, "m,lsi_um_upper,sixteen_m2,chi2_gauss_um,five_m")?;
        for r in &lsi {
            writeln!(w, "{},{},{},{},{}", fmt17(r[0]), fmt17(r[1]), fmt17(16.0 * r[0] * r[0]), fmt17(r[2]), fmt17(5.0 * r[0]))?;
        }
        Ok(())
    })
}

/// One checkpoint of the linear-schedule validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig3Row {
    pub t: f64,
    pub kl_exact: f64,
    pub kl_empirical: f64,
    pub kl_se: f64,
    /// `A·G_t` for the linear schedule.
    pub a_times_g: f64,
    /// Full continuous bound (equals `A·G_t` when the run starts at the proposal).
    pub bound_total: f64,
}

/// Independent linear-schedule runs, one per horizon, compared with the
/// moment-ODE law and the continuous bound.
pub fn fig3_rows(p: &Fig3Params, seed: u64) -> Result<Vec<Fig3Row>> {
    if p.dim == 0 || p.n_particles < 2 || !(p.h > 0.0) {
        return Err(config_err("params", "need dim ≥ 1, n_particles ≥ 2 and h > 0"));
    }
    let zeros = vec![0.0; p.dim];
    let nu = cfg(Gaussian::isotropic(&zeros, p.var_nu), "params.var_nu")?;
    let pi = cfg(Gaussian::isotropic(&zeros, p.var_pi), "params.var_pi")?;
    let path = GeometricPath::new(nu.clone(), pi.clone())?;
    let bundle = RegularityBundle::from_path(&path, second_moment(&nu));
    let (an, ap) = (1.0 / p.var_nu, 1.0 / p.var_pi);
    let a = constant_a(&bundle)?;
    let pi_law = GaussianLaw::from(&pi);
    let init_law = GaussianLaw::from(&nu);
    let mut rows = Vec::new();
    for (i, &t) in p.horizons.iter().enumerate() {
        let steps = (t / p.h).round().max(1.0);
        let t = steps * p.h;
        let schedule = cfg(linear_schedule(t), &format!("params.horizons[{i}]"))?;
        let mut ens = ParticleEnsemble::from_gaussian(&nu, p.n_particles, seed)?;
        let snap = run_schedule_on(&mut ens, &path, &schedule, p.h, &[t], &StepPolicy::Explicit)?.remove(0);
        let law = gaussian_moment_flow(&nu, &pi, &schedule, &init_law, t)?;
        let kl_exact = kl_gaussians(&law, &pi_law)?;
        let fit = gaussian_fit(&snap.states, p.dim)?;
        let kl_empirical = kl_gaussians(&fit, &pi_law)?;
        let kl_se = bootstrap_se(&snap.states, p.dim, &pi_law, p.bootstrap, seed, i as u64)?;
        let g = if an > ap { g_linear_closed_form(an, ap, t)? } else { g_functional(&schedule, an, ap, t)? };
        let bound = continuous_bound_sweep(&schedule, &bundle, 0.0, &[t])?[0].total;
        rows.push(Fig3Row { t, kl_exact, kl_empirical, kl_se, a_times_g: a * g, bound_total: bound });
    }
    Ok(rows)
}

fn bootstrap_se(states: &[f64], dim: usize, pi: &GaussianLaw, reps: usize, seed: u64, index: u64) -> Result<f64> {
    if reps < 2 {
        return Ok(f64::NAN);
    }
    let n = states.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 40) + index);
    let mut buf = vec![0.0; states.len()];
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        for row in buf.chunks_mut(dim) {
            let j = rng.random_range(0..n);
            row.copy_from_slice(&states[j * dim..(j + 1) * dim]);
        }
        vals.push(kl_gaussians(&gaussian_fit(&buf, dim)?, pi)?);
    }
    let mean = vals.iter().sum::<f64>() / reps as f64;
    Ok((vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt())
}

fn run_fig3(p: &Fig3Params, seed: u64, o: &mut Outputs) -> Result<()> {
    let rows = fig3_rows(p, seed)?;
    o.write("fig3.csv", |w| {
        writeln!(w, "t,kl_exact,kl_empirical,kl_se,a_times_g,bound_total")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{}", fmt17(r.t), fmt17(r.kl_exact), fmt17(r.kl_empirical), fmt17(r.kl_se), fmt17(r.a_times_g), fmt17(r.bound_total))?;
        }
        Ok(())
    })?;
    let within = rows.iter().filter(|r| (r.kl_empirical - r.kl_exact).abs() <= 4.0 * r.kl_se).count();
    o.summary.insert("checkpoints_within_4se".into(), within as f64);
    o.summary.insert("checkpoints".into(), rows.len() as f64);
    o.plot("fig3.csv", PlotSpec { log_y: Some(true), ..PlotSpec::new("t", &["kl_exact", "kl_empirical", "a_times_g"], "linear schedule: KL vs A·G") })
}

fn run_pathviz(p: &PathvizParams, o: &mut Outputs) -> Result<()> {
    let proposal = cfg(p.proposal.build(), "params.proposal")?;
    let target = cfg(p.target.build(), "params.target")?;
    let path = cfg(GeometricPath::new(proposal, target), "params.target")?;
    if p.n_grid < 2 || p.x_max <= p.x_min {
        return Err(config_err("params", "need n_grid ≥ 2 and x_min < x_max"));
    }
    let grid: Vec<f64> = (0..p.n_grid)
        .map(|i| p.x_min + (p.x_max - p.x_min) * i as f64 / (p.n_grid - 1) as f64)
        .collect();
    let dg = cfg(density_grid(&path, &p.lambdas, &grid), "params")?;
    for row in &dg.rows {
        if row.tail_warning {
            o.warnings.push(format!("λ = {}: {:.2e} of the mass lies outside the grid", row.lambda, row.tail_mass));
        }
    }
    o.write("density_grid.csv", |w| dg.write_csv(w))?;
    o.plot("density_grid.csv", PlotSpec::new("x", &["density"], "geometric path").grouped("lambda"))
}

fn lower_ladder(p: &LowerParams) -> Result<TemperatureLadder> {
    let budgets = vec![InnerBudget::Time { t: p.inner_time, h: Some(p.h) }; p.levels.len()];
    cfg(TemperatureLadder::new(0.0, p.levels.clone(), budgets), "params.levels")
}

/// Runs the ladder from `N(0,1)` and records `TV(p^k, π)` after every level.
fn lower_run(path: &GeometricPath, p: &LowerParams, seed: u64) -> Result<(Vec<f64>, Vec<MetricRow>)> {
    let ladder = lower_ladder(p)?;
    let init = Gaussian::standard(1)?;
    let mut ens = ParticleEnsemble::from_gaussian(&init, p.n_particles, seed)?;
    let snaps = run_ladder_on(&mut ens, path, &ladder, None, &StepPolicy::Explicit)?;
    let mut tvs = Vec::new();
    let mut rows = Vec::new();
    for s in &snaps {
        let tv = tv_hist(&s.states, 1, path.target())?;
        tvs.push(tv.value);
        rows.push(MetricRow {
            time_or_level: s.level.unwrap_or(0) as f64,
            metric: "tv_target".into(),
            value: tv.value,
            estimator_meta: tv.meta(),
        });
    }
    Ok((tvs, rows))
}

fn emit_lower(o: &mut Outputs, p: &LowerParams, tvs: &[f64], rows: &[MetricRow], bounds: &[f64]) -> Result<()> {
    let times = vec![p.inner_time; p.levels.len()];
    o.write("tv.csv", |w| write_metric_csv(w, rows))?;
    o.write("tv_lower.csv", |w| write_tv_lower_csv(w, &p.levels, &times, bounds))?;
    o.summary.insert("final_tv".into(), *tvs.last().unwrap_or(&f64::NAN));
    o.summary.insert("final_lower_bound".into(), *bounds.last().unwrap_or(&f64::NAN));
    o.summary.insert("final_lambda".into(), *p.levels.last().unwrap_or(&f64::NAN));
    o.plot("tv.csv", PlotSpec::new("time_or_level", &["value"], "TV to target by level"))
}

fn run_lower_bimodal(p: &LowerParams, seed: u64, o: &mut Outputs) -> Result<()> {
    let target = cfg(make_bimodal_target(p.m), "params.m")?;
    let path = GeometricPath::new(Gaussian::standard(1)?, target)?;
    let bounds = cfg(thm5_tv_lower(p.m, &vec![p.inner_time; p.levels.len()]), "params.m")?;
    let (tvs, rows) = lower_run(&path, p, seed)?;
    emit_lower(o, p, &tvs, &rows, &bounds)
}

fn run_lower_unimodal(p: &LowerParams, seed: u64, o: &mut Outputs) -> Result<()> {
    let a = (2.0 * std::f64::consts::LN_2).sqrt() / p.m;
    let target = cfg(make_contaminated_target(p.m, a), "params.m")?;
    let path = GeometricPath::new(Gaussian::standard(1)?, target)?;
    let bounds = cfg(thm6_tv_lower(p.m, &p.levels, &vec![p.inner_time; p.levels.len()]), "params.m")?;
    let (tvs, rows) = lower_run(&path, p, seed)?;
    emit_lower(o, p, &tvs, &rows, &bounds)
}
