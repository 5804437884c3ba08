//! Experiment configuration: a strict TOML file resolved against presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{HiddenModel, IntensityChannel};
use crate::error::{Error, Result};
use crate::gain::{GainSolverConfig, Kernel, DEFAULT_JITTER};
use crate::manifold::ManifoldKind;

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_STEPS: usize = 10_000;
pub const DEFAULT_PARTICLES: usize = 200;
pub const DEFAULT_HOMOTOPY_STEPS: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_LINE_POINTS: usize = 2001;
pub const DEFAULT_CIRCLE_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig2Ou,
    Fig3Circle,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig2Ou, Preset::Fig3Circle, Preset::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2Ou => "fig2_ou",
            Preset::Fig3Circle => "fig3_circle",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Bpf,
    Ekspf,
    Adf,
    Ppfpf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Bpf, FilterKind::Ekspf, FilterKind::Adf, FilterKind::Ppfpf];

    /// Identifier used in config files and file names.
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Bpf => "bpf",
            FilterKind::Ekspf => "ekspf",
            FilterKind::Adf => "adf",
            FilterKind::Ppfpf => "ppfpf",
        }
    }

    /// Display label used in metrics and plots.
    pub fn label(self) -> &'static str {
        match self {
            FilterKind::Bpf => "BPF",
            FilterKind::Ekspf => "EKSPF",
            FilterKind::Adf => "ADF",
            FilterKind::Ppfpf => "ppFPF",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<FilterKind> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = FilterKind::ALL.iter().map(|k| k.name()).collect();
                Error::Validation(format!("unknown filter '{s}'; valid filters: {}", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpace {
    Real,
    Circle,
}

impl StateSpace {
    pub fn manifold(self) -> ManifoldKind {
        match self {
            StateSpace::Real => ManifoldKind::Euclidean(1),
            StateSpace::Circle => ManifoldKind::Circle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// `c·exp(β·x)` on ℝ.
    Exponential { c: f64, beta: f64 },
    /// `peak·exp(κ(cos(θ − center) − 1))` on the circle.
    VonMises { peak: f64, kappa: f64, center: f64 },
    Constant { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub state_space: StateSpace,
    /// Linear drift coefficient `a` in `dX = a·X dt + √σ² dW` (ℝ only).
    #[serde(default)]
    pub drift: f64,
    pub sigma2: f64,
    /// Gaussian initial law on ℝ; ignored on the circle, where the initial
    /// law is uniform.
    #[serde(default)]
    pub initial_mean: f64,
    #[serde(default = "one")]
    pub initial_var: f64,
    pub channels: Vec<ChannelSpec>,
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn fig2() -> ModelSpec {
        ModelSpec {
            state_space: StateSpace::Real,
            drift: -1.0,
            sigma2: 2.0,
            initial_mean: 0.0,
            initial_var: 1.0,
            channels: vec![ChannelSpec::Exponential { c: 2.0, beta: 1.0 }],
        }
    }

    pub fn fig3() -> ModelSpec {
        ModelSpec {
            state_space: StateSpace::Circle,
            drift: 0.0,
            sigma2: 1.0,
            initial_mean: 0.0,
            initial_var: 1.0,
            channels: (1..=4)
                .map(|i| ChannelSpec::VonMises {
                    peak: 20.0,
                    kappa: 10.0,
                    center: i as f64 * std::f64::consts::FRAC_PI_2,
                })
                .collect(),
        }
    }

    pub fn hidden_model(&self) -> HiddenModel {
        match self.state_space {
            StateSpace::Real => HiddenModel::ornstein_uhlenbeck(self.drift, self.sigma2),
            StateSpace::Circle => HiddenModel::circle_brownian(self.sigma2),
        }
    }

    pub fn channels(&self) -> Vec<IntensityChannel> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                let label = format!("h{}", i + 1);
                match *ch {
                    ChannelSpec::Exponential { c, beta } => IntensityChannel::exponential(label, c, beta),
                    ChannelSpec::VonMises { peak, kappa, center } => {
                        IntensityChannel::von_mises_bump(label, peak, kappa, center)
                    }
                    ChannelSpec::Constant { rate } => IntensityChannel::constant(label, rate),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Validation(format!("model.sigma2 must be nonnegative, got {}", self.sigma2)));
        }
        if !self.drift.is_finite() || !self.initial_mean.is_finite() {
            return Err(Error::Validation("model.drift and model.initial_mean must be finite".into()));
        }
        if !(self.initial_var > 0.0) || !self.initial_var.is_finite() {
            return Err(Error::Validation(format!(
                "model.initial_var must be positive, got {}",
                self.initial_var
            )));
        }
        if self.state_space == StateSpace::Circle && self.drift != 0.0 {
            return Err(Error::Validation("model.drift must be 0 on the circle".into()));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            let ok = match (*ch, self.state_space) {
                (ChannelSpec::Exponential { c, beta }, StateSpace::Real) => c > 0.0 && beta.is_finite(),
                (ChannelSpec::VonMises { peak, kappa, center }, StateSpace::Circle) => {
                    peak > 0.0 && kappa >= 0.0 && center.is_finite()
                }
                (ChannelSpec::Constant { rate }, _) => rate > 0.0 && rate.is_finite(),
                _ => {
                    return Err(Error::Validation(format!(
                        "model.channels[{i}] is not defined on this state space"
                    )))
                }
            };
            if !ok {
                return Err(Error::Validation(format!("model.channels[{i}] has invalid parameters")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub enabled: bool,
    pub points: usize,
    /// Truncation interval on ℝ; ignored on the circle.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpfSettings {
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    VonMises,
}

/// One gain solver's settings as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSettings {
    pub kernel: KernelFamily,
    /// Gaussian bandwidth `ε`; the kernel is `exp(−|x − y|²/(4ε))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// von Mises concentration `κ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub lambda: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_centers: Option<usize>,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl GainSettings {
    pub fn to_solver(&self) -> Result<GainSolverConfig> {
        let kernel = match self.kernel {
            KernelFamily::Gaussian => Kernel::Gaussian {
                epsilon: self
                    .epsilon
                    .ok_or_else(|| Error::Validation("gaussian kernel needs 'epsilon'".into()))?,
            },
            KernelFamily::VonMises => Kernel::VonMises {
                kappa: self
                    .kappa
                    .ok_or_else(|| Error::Validation("von_mises kernel needs 'kappa'".into()))?,
            },
        };
        let mut cfg = GainSolverConfig::galerkin(kernel, self.lambda);
        cfg.jitter = self.jitter;
        cfg.max_centers = self.max_centers;
        cfg.validate().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpfpfSettings {
    pub n_steps: usize,
    pub adaptive: bool,
    /// Gain solver for the control drift.
    pub gain: GainSettings,
    /// Gain solver for the event homotopy; defaults to `gain`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homotopy_gain: Option<GainSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub particles: usize,
    pub repeat: usize,
    pub filters: Vec<FilterKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub model: ModelSpec,
    pub oracle: OracleSettings,
    pub bpf: BpfSettings,
    pub ppfpf: PpfpfSettings,
}

// Everything optional so that presets can fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    seed: Option<u64>,
    dt: Option<f64>,
    steps: Option<usize>,
    particles: Option<usize>,
    repeat: Option<usize>,
    filters: Option<Vec<String>>,
    out_dir: Option<PathBuf>,
    model: Option<ModelSpec>,
    oracle: Option<RawOracle>,
    bpf: Option<RawBpf>,
    ppfpf: Option<RawPpfpf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    enabled: Option<bool>,
    points: Option<usize>,
    lo: Option<f64>,
    hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBpf {
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPpfpf {
    n_steps: Option<usize>,
    adaptive: Option<bool>,
    gain: Option<GainSettings>,
    homotopy_gain: Option<GainSettings>,
}

impl ExperimentConfig {
    /// Built-in configuration for a preset with every default filled in.
    /// The custom preset starts from the Fig. 2 model.
    pub fn preset(preset: Preset, seed: u64) -> ExperimentConfig {
        let circle = preset == Preset::Fig3Circle;
        let model = if circle { ModelSpec::fig3() } else { ModelSpec::fig2() };
        ExperimentConfig {
            preset,
            seed,
            dt: DEFAULT_DT,
            steps: DEFAULT_STEPS,
            particles: DEFAULT_PARTICLES,
            repeat: 1,
            filters: default_filters(model.state_space),
            out_dir: None,
            oracle: default_oracle(model.state_space),
            bpf: BpfSettings {
                threshold: DEFAULT_THRESHOLD,
            },
            ppfpf: PpfpfSettings {
                n_steps: DEFAULT_HOMOTOPY_STEPS,
                adaptive: true,
                gain: default_gain(model.state_space),
                homotopy_gain: None,
            },
            model,
        }
    }

    pub fn manifold(&self) -> ManifoldKind {
        self.model.state_space.manifold()
    }

    pub fn drift_gain(&self) -> Result<GainSolverConfig> {
        self.ppfpf.gain.to_solver()
    }

    pub fn homotopy_gain(&self) -> Result<GainSolverConfig> {
        self.ppfpf.homotopy_gain.as_ref().unwrap_or(&self.ppfpf.gain).to_solver()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.steps < 1 {
            return fail("steps must be at least 1".into());
        }
        if self.particles < 2 {
            return fail(format!("particles must be at least 2, got {}", self.particles));
        }
        if self.repeat < 1 {
            return fail("repeat must be at least 1".into());
        }
        if self.filters.is_empty() {
            return fail("filters must name at least one filter".into());
        }
        for (i, f) in self.filters.iter().enumerate() {
            if self.filters[..i].contains(f) {
                return fail(format!("filter '{}' is listed twice", f.name()));
            }
        }
        if !(self.bpf.threshold > 0.0 && self.bpf.threshold <= 1.0) {
            return fail(format!("bpf.threshold must lie in (0, 1], got {}", self.bpf.threshold));
        }
        if self.ppfpf.n_steps < 1 {
            return fail("ppfpf.n_steps must be at least 1".into());
        }
        self.model.validate()?;
        let circle = self.model.state_space == StateSpace::Circle;
        if circle && self.filters.contains(&FilterKind::Adf) {
            return fail("the ADF is defined on ℝ only; remove 'adf' from filters".into());
        }
        for (key, gain) in [("ppfpf.gain", Some(&self.ppfpf.gain)), ("ppfpf.homotopy_gain", self.ppfpf.homotopy_gain.as_ref())] {
            let Some(gain) = gain else { continue };
            let expected = if circle { KernelFamily::VonMises } else { KernelFamily::Gaussian };
            if gain.kernel != expected {
                return fail(format!("{key}.kernel must be '{}' on this state space", family_name(expected)));
            }
            gain.to_solver().map_err(|e| Error::Validation(format!("{key}: {e}")))?;
        }
        if self.oracle.points < 3 {
            return fail("oracle.points must be at least 3".into());
        }
        if !circle && !(self.oracle.lo < self.oracle.hi) {
            return fail("oracle.lo must be below oracle.hi".into());
        }
        Ok(())
    }

    /// Render as a config file that [`parse_config_str`] accepts. Named
    /// presets omit the `[model]` section.
    pub fn to_toml(&self) -> String {
        let mut value = toml::Value::try_from(self).expect("config serializes to TOML");
        if self.preset != Preset::Custom {
            if let Some(table) = value.as_table_mut() {
                table.remove("model");
            }
        }
        toml::to_string(&value).expect("config serializes to TOML")
    }
}

fn family_name(f: KernelFamily) -> &'static str {
    match f {
        KernelFamily::Gaussian => "gaussian",
        KernelFamily::VonMises => "von_mises",
    }
}

fn default_filters(space: StateSpace) -> Vec<FilterKind> {
    match space {
        StateSpace::Real => FilterKind::ALL.to_vec(),
        StateSpace::Circle => vec![FilterKind::Bpf, FilterKind::Ekspf, FilterKind::Ppfpf],
    }
}

fn default_oracle(space: StateSpace) -> OracleSettings {
    OracleSettings {
        enabled: true,
        points: match space {
            StateSpace::Real => DEFAULT_LINE_POINTS,
            StateSpace::Circle => DEFAULT_CIRCLE_POINTS,
        },
        lo: -8.0,
        hi: 8.0,
    }
}

fn default_gain(space: StateSpace) -> GainSettings {
    match space {
        StateSpace::Real => GainSettings {
            kernel: KernelFamily::Gaussian,
            epsilon: Some(10.0),
            kappa: None,
            lambda: 1e-7,
            jitter: DEFAULT_JITTER,
            max_centers: Some(100),
        },
        StateSpace::Circle => GainSettings {
            kernel: KernelFamily::VonMises,
            epsilon: None,
            kappa: Some(0.1),
            lambda: 1e-2,
            jitter: DEFAULT_JITTER,
            max_centers: Some(100),
        },
    }
}

/// Parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let preset = raw
        .preset
        .ok_or_else(|| Error::Validation("'preset' is required (fig2_ou, fig3_circle or custom)".into()))?;
    let seed = raw
        .seed
        .ok_or_else(|| Error::Validation("'seed' is required for reproducibility".into()))?;
    let model = match (preset, raw.model) {
        (Preset::Custom, Some(m)) => m,
        (Preset::Custom, None) => {
            return Err(Error::Validation("preset 'custom' requires a [model] section".into()))
        }
        (_, Some(_)) => {
            return Err(Error::Validation(format!(
                "[model] is only allowed with preset 'custom', not '{}'",
                preset.name()
            )))
        }
        (Preset::Fig2Ou, None) => ModelSpec::fig2(),
        (Preset::Fig3Circle, None) => ModelSpec::fig3(),
    };
    let mut cfg = ExperimentConfig::preset(preset, seed);
    cfg.filters = default_filters(model.state_space);
    cfg.oracle = default_oracle(model.state_space);
    cfg.ppfpf.gain = default_gain(model.state_space);
    cfg.model = model;

    if let Some(dt) = raw.dt {
        cfg.dt = dt;
    }
    if let Some(s) = raw.steps {
        cfg.steps = s;
    }
    if let Some(n) = raw.particles {
        cfg.particles = n;
    }
    if let Some(r) = raw.repeat {
        cfg.repeat = r;
    }
    if let Some(names) = raw.filters {
        cfg.filters = names.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    cfg.out_dir = raw.out_dir;
    if let Some(o) = raw.oracle {
        cfg.oracle.enabled = o.enabled.unwrap_or(cfg.oracle.enabled);
        cfg.oracle.points = o.points.unwrap_or(cfg.oracle.points);
        cfg.oracle.lo = o.lo.unwrap_or(cfg.oracle.lo);
        cfg.oracle.hi = o.hi.unwrap_or(cfg.oracle.hi);
    }
    if let Some(b) = raw.bpf {
        cfg.bpf.threshold = b.threshold.unwrap_or(cfg.bpf.threshold);
    }
    if let Some(p) = raw.ppfpf {
        cfg.ppfpf.n_steps = p.n_steps.unwrap_or(cfg.ppfpf.n_steps);
        cfg.ppfpf.adaptive = p.adaptive.unwrap_or(cfg.ppfpf.adaptive);
        if let Some(g) = p.gain {
            cfg.ppfpf.gain = g;
        }
        cfg.ppfpf.homotopy_gain = p.homotopy_gain;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Documented schema with defaults, printed by `config-reference`.
pub fn config_reference() -> String {
    format!(
        r#"# Experiment config reference (TOML). Unknown keys are rejected.
#
# Top level
preset = "fig2_ou"     # required: fig2_ou | fig3_circle | custom
seed = 7               # required: base seed; repeat r uses seed + r
dt = {DEFAULT_DT}              # step size, > 0
steps = {DEFAULT_STEPS}          # number of steps, >= 1
particles = {DEFAULT_PARTICLES}        # ensemble size N, >= 2
repeat = 1             # number of independent runs
filters = ["bpf", "ekspf", "adf", "ppfpf"]
                       # default: all four on R, no "adf" on the circle
# out_dir = "runs/x"   # optional; the CLI's --out overrides it

[oracle]
enabled = true
points = {DEFAULT_LINE_POINTS}          # grid size; default {DEFAULT_CIRCLE_POINTS} on the circle
lo = -8.0              # truncation of R (ignored on the circle)
hi = 8.0

[bpf]
threshold = {DEFAULT_THRESHOLD}        # resample when ESS/N < threshold, in (0, 1]

[ppfpf]
n_steps = {DEFAULT_HOMOTOPY_STEPS}           # homotopy steps per event
adaptive = true        # halve a homotopy step when a particle would move
                       # farther than the kernel length scale

[ppfpf.gain]           # gain solver for the control drift
kernel = "gaussian"    # gaussian on R, von_mises on the circle
epsilon = 10.0         # gaussian bandwidth (kernel exp(-|x-y|^2/(4 eps)))
# kappa = 0.1          # von Mises concentration (circle default 0.1)
lambda = 1e-7          # RKHS penalty (circle default 1e-2)
jitter = {DEFAULT_JITTER:e}         # diagonal jitter
max_centers = 100      # basis centers drawn from the particles; omit for all

# [ppfpf.homotopy_gain] # optional: separate solver for event updates,
#                       # same keys as [ppfpf.gain]

# [model]              # only with preset = "custom"
# state_space = "real" # real | circle
# drift = -1.0         # a in dX = a X dt + sqrt(sigma2) dW (0 on the circle)
# sigma2 = 2.0
# initial_mean = 0.0   # Gaussian initial law on R; uniform on the circle
# initial_var = 1.0
# channels = [
#   {{ kind = "exponential", c = 2.0, beta = 1.0 }},
#   {{ kind = "von_mises", peak = 20.0, kappa = 10.0, center = 1.5707963 }},
#   {{ kind = "constant", rate = 3.0 }},
# ]
"#
    )
}
