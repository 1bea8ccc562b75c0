//! Experiment configuration: a strict JSON schema layered over the library's
//! model types, with command-line overrides and per-experiment defaults.
//!
//! Every field in the JSON file is optional; anything left out falls back to
//! the shipped default for the selected experiment, and the fully resolved
//! settings are echoed into `summary.json` so a run can be reproduced from
//! its artifacts alone. Unknown fields are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mwg_core::sir::{reference_scenario, EpiParams, InitialState, MetaPopConfig};
use mwg_core::target::GaussianModelSpec;

use crate::CliError;

/// The four shipped experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Two-kernel blockwise sampler on the Gaussian mean model.
    GaussianMwg,
    /// Single full-space Metropolis kernel on the same model.
    MetropolisDemo,
    /// Simulate one epidemic and write its event/trajectory tables.
    SirSimulate,
    /// Data-augmentation fit of transmission rates from observed removals.
    SirFit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GaussianMwg => "gaussian-mwg",
            ExperimentKind::MetropolisDemo => "metropolis-demo",
            ExperimentKind::SirSimulate => "sir-simulate",
            ExperimentKind::SirFit => "sir-fit",
        }
    }
}

/// Partial override of [`GaussianModelSpec`]; omitted fields keep defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianOverrides {
    pub cov: Option<[[f64; 2]; 2]>,
    pub prior_mean: Option<[f64; 2]>,
    pub prior_sd: Option<f64>,
    pub true_mean: Option<[f64; 2]>,
    pub num_points: Option<usize>,
}

impl GaussianOverrides {
    fn apply(&self, mut spec: GaussianModelSpec) -> GaussianModelSpec {
        if let Some(v) = self.cov {
            spec.cov = v;
        }
        if let Some(v) = self.prior_mean {
            spec.prior_mean = v;
        }
        if let Some(v) = self.prior_sd {
            spec.prior_sd = v;
        }
        if let Some(v) = self.true_mean {
            spec.true_mean = v;
        }
        if let Some(v) = self.num_points {
            spec.num_points = v;
        }
        spec
    }
}

/// Kernel hyperparameters, shared across experiments.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Proposal scale of the fixed-scale random-walk kernel on `mu_x`.
    pub rwmh_scale: Option<f64>,
    /// Warmup proposal scale of the adaptive kernel on `mu_y`.
    pub adaptive_scale: Option<f64>,
    /// Half-width of the full-space uniform-window Metropolis kernel.
    pub metropolis_tau: Option<f64>,
    /// Warmup proposal scale of the adaptive kernel on the log-rates.
    pub param_scale: Option<f64>,
}

/// Epidemic-experiment block: model, simulation truth, and data source.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirConfig {
    /// Metapopulation layout; defaults to the shipped reference scenario.
    pub model: Option<MetaPopConfig>,
    /// Transmission rates used when simulating data.
    pub params: Option<EpiParams>,
    /// Initial `(S, I, R)` rows, one per population.
    pub initial_state: Option<Vec<[i64; 3]>>,
    /// Observed events to fit against (same schema as `events.csv`); the
    /// infection column is treated as latent and re-imputed. When absent the
    /// fit simulates its own data from `params`.
    pub events_csv: Option<PathBuf>,
}

/// On-disk experiment configuration. Strict: unknown fields are errors.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional experiment tag; must agree with the command line when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianOverrides>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernels: Option<KernelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sir: Option<SirConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("invalid config {}: {e}", path.display()))
        })
    }
}

/// Settings shared by every experiment, fully resolved.
#[derive(Clone, Debug, Serialize)]
pub struct CommonSettings {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub num_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub output_dir: PathBuf,
}

/// Resolved settings for the two Gaussian experiments.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianSettings {
    #[serde(flatten)]
    pub common: CommonSettings,
    pub model: GaussianModelSpec,
    pub rwmh_scale: f64,
    pub adaptive_scale: f64,
    pub metropolis_tau: f64,
}

/// Resolved settings for the epidemic experiments.
#[derive(Clone, Debug, Serialize)]
pub struct SirSettings {
    #[serde(flatten)]
    pub common: CommonSettings,
    pub model: MetaPopConfig,
    pub params: EpiParams,
    pub initial_state: Vec<[i64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events_csv: Option<PathBuf>,
    pub param_scale: f64,
}

impl SirSettings {
    pub fn initial(&self) -> InitialState {
        InitialState {
            x0: self.initial_state.clone(),
        }
    }
}

/// Command-line overrides applied on top of the file configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub num_samples: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub chains: Option<usize>,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GAUSSIAN_SAMPLES: usize = 10_000;
pub const DEFAULT_GAUSSIAN_BURN_IN: usize = 2_000;
pub const DEFAULT_DEMO_THIN: usize = 10;
pub const DEFAULT_RWMH_SCALE: f64 = 1.8;
pub const DEFAULT_ADAPTIVE_SCALE: f64 = 1.0;
pub const DEFAULT_METROPOLIS_TAU: f64 = 0.085;
pub const DEFAULT_SIR_SAMPLES: usize = 20_000;
pub const DEFAULT_SIR_BURN_IN: usize = 4_000;
pub const DEFAULT_PARAM_SCALE: f64 = 0.5;

fn resolve_common(
    experiment: ExperimentKind,
    file: &ExperimentConfig,
    over: &Overrides,
) -> Result<CommonSettings, CliError> {
    if let Some(tag) = file.experiment {
        if tag != experiment {
            return Err(CliError::Config(format!(
                "config is tagged for experiment '{}' but '{}' was requested",
                tag.name(),
                experiment.name()
            )));
        }
    }
    let (def_samples, def_burn, def_thin) = match experiment {
        ExperimentKind::GaussianMwg => (DEFAULT_GAUSSIAN_SAMPLES, DEFAULT_GAUSSIAN_BURN_IN, 1),
        ExperimentKind::MetropolisDemo => (
            DEFAULT_GAUSSIAN_SAMPLES,
            DEFAULT_GAUSSIAN_BURN_IN,
            DEFAULT_DEMO_THIN,
        ),
        // Simulation draws one realization; the sample count is unused.
        ExperimentKind::SirSimulate => (1, 0, 1),
        ExperimentKind::SirFit => (DEFAULT_SIR_SAMPLES, DEFAULT_SIR_BURN_IN, 1),
    };
    let num_samples = over.num_samples.or(file.num_samples).unwrap_or(def_samples);
    let burn_in = file.burn_in.unwrap_or_else(|| def_burn.min(num_samples / 5));
    let thin = file.thin.unwrap_or(def_thin);
    let chains = over.chains.or(file.chains).unwrap_or(1);
    let settings = CommonSettings {
        experiment,
        seed: over.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        num_samples,
        burn_in,
        thin,
        chains,
        output_dir: over
            .output_dir
            .clone()
            .or_else(|| file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(experiment.name())),
    };
    if settings.num_samples == 0 {
        return Err(CliError::Config("num_samples must be at least 1".into()));
    }
    if settings.burn_in >= settings.num_samples && experiment != ExperimentKind::SirSimulate {
        return Err(CliError::Config(format!(
            "burn_in ({}) must be smaller than num_samples ({})",
            settings.burn_in, settings.num_samples
        )));
    }
    if settings.thin == 0 {
        return Err(CliError::Config("thin must be at least 1".into()));
    }
    if settings.chains == 0 {
        return Err(CliError::Config("chains must be at least 1".into()));
    }
    Ok(settings)
}

pub fn resolve_gaussian(
    experiment: ExperimentKind,
    file: &ExperimentConfig,
    over: &Overrides,
) -> Result<GaussianSettings, CliError> {
    let common = resolve_common(experiment, file, over)?;
    if file.sir.is_some() {
        return Err(CliError::Config(
            "a 'sir' block is not valid for a Gaussian experiment".into(),
        ));
    }
    let model = file
        .gaussian
        .clone()
        .unwrap_or_default()
        .apply(GaussianModelSpec::default());
    model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let kernels = file.kernels.clone().unwrap_or_default();
    let settings = GaussianSettings {
        common,
        model,
        rwmh_scale: kernels.rwmh_scale.unwrap_or(DEFAULT_RWMH_SCALE),
        adaptive_scale: kernels.adaptive_scale.unwrap_or(DEFAULT_ADAPTIVE_SCALE),
        metropolis_tau: kernels.metropolis_tau.unwrap_or(DEFAULT_METROPOLIS_TAU),
    };
    for (name, value) in [
        ("kernels.rwmh_scale", settings.rwmh_scale),
        ("kernels.adaptive_scale", settings.adaptive_scale),
        ("kernels.metropolis_tau", settings.metropolis_tau),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(CliError::Config(format!(
                "{name} must be positive and finite, got {value}"
            )));
        }
    }
    Ok(settings)
}

pub fn resolve_sir(
    experiment: ExperimentKind,
    file: &ExperimentConfig,
    over: &Overrides,
) -> Result<SirSettings, CliError> {
    let common = resolve_common(experiment, file, over)?;
    if file.gaussian.is_some() {
        return Err(CliError::Config(
            "a 'gaussian' block is not valid for an epidemic experiment".into(),
        ));
    }
    let (ref_model, ref_params, ref_initial) = reference_scenario();
    let sir = file.sir.clone().unwrap_or_default();
    let model = sir.model.unwrap_or(ref_model);
    model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let params = sir.params.unwrap_or(ref_params);
    if !(params.beta1 > 0.0 && params.beta2 >= 0.0)
        || !params.beta1.is_finite()
        || !params.beta2.is_finite()
    {
        return Err(CliError::Config(format!(
            "transmission rates must be finite with beta1 > 0 and beta2 >= 0, \
             got ({}, {})",
            params.beta1, params.beta2
        )));
    }
    let initial_state = sir.initial_state.unwrap_or(ref_initial.x0);
    InitialState {
        x0: initial_state.clone(),
    }
    .validate(&model)
    .map_err(|e| CliError::Config(e.to_string()))?;
    let kernels = file.kernels.clone().unwrap_or_default();
    let param_scale = kernels.param_scale.unwrap_or(DEFAULT_PARAM_SCALE);
    if !(param_scale > 0.0 && param_scale.is_finite()) {
        return Err(CliError::Config(format!(
            "kernels.param_scale must be positive and finite, got {param_scale}"
        )));
    }
    Ok(SirSettings {
        common,
        model,
        params,
        initial_state,
        events_csv: sir.events_csv,
        param_scale,
    })
}
