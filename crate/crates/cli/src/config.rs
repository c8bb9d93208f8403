//! Run configuration: a JSON file merged with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use oed_core::category::{self, ParameterMode, SimilarityParams, DEFAULT_SIMILARITY};
use oed_core::coin;
use oed_core::OutcomePrior;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Coin,
    Category,
}

impl Suite {
    pub fn model_names(self) -> &'static [&'static str] {
        match self {
            Suite::Coin => &coin::MODEL_NAMES,
            Suite::Category => &category::MODEL_NAMES,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Coin => "coin",
            Suite::Category => "category",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    Point,
    Marginalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Outcome prior as a clap value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutcomePriorArg {
    Uniform,
    Predictive,
}

impl From<OutcomePriorArg> for OutcomePrior {
    fn from(v: OutcomePriorArg) -> Self {
        match v {
            OutcomePriorArg::Uniform => OutcomePrior::Uniform,
            OutcomePriorArg::Predictive => OutcomePrior::Predictive,
        }
    }
}

/// Everything a run needs. In a file every field is optional; after
/// [`resolve`] all defaults are filled in, and that form is what
/// `print-config` echoes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
    /// Model prior weights in `models` order; uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none", alias = "prior")]
    pub model_prior: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_prior: Option<OutcomePrior>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter_mode: Option<ParamMode>,
    /// Per-dimension similarity for point mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Experiment keys for `curve`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiments: Option<Vec<String>>,
    /// Inclusive group-size range for `curve`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[u32; 2]>,
    /// Empirical data file for `aig`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<bool>,
    /// Softmax temperature for sampling one experiment after `rank`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Comma-separated model names
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Comma-separated model prior weights
    #[arg(long, value_delimiter = ',')]
    pub model_prior: Option<Vec<f64>>,
    /// Number of participants
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, value_enum)]
    pub outcome_prior: Option<OutcomePriorArg>,
    #[arg(long, value_enum)]
    pub parameter_mode: Option<ParamMode>,
    /// One value, or four comma-separated per-dimension values
    #[arg(long, value_delimiter = ',')]
    pub similarity: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Comma-separated experiment keys
    #[arg(long, value_delimiter = ',')]
    pub experiments: Option<Vec<String>>,
    /// Group sizes as LO..HI (inclusive)
    #[arg(long)]
    pub n_range: Option<String>,
    /// Empirical CSV with header experiment,n,response
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Accumulate rows of each experiment and report AIG after each one
    #[arg(long)]
    pub prefix: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Seed for the softmax sampler
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone)]
struct Origin {
    path: Option<PathBuf>,
    text: String,
    from_flags: Vec<&'static str>,
}

impl Origin {
    fn error(&self, key: &'static str, flag: &'static str, message: impl Into<String>) -> ConfigError {
        let message = message.into();
        if self.from_flags.contains(&key) || self.path.is_none() {
            return ConfigError::new(format!("--{flag}"), None, message);
        }
        let line = find_key_line(&self.text, key);
        ConfigError::new(self.path.as_ref().unwrap().display().to_string(), line, message)
    }
}

/// 1-based line of the first `"key"` in a JSON document.
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.find(&needle).map(|at| text[..at].matches('\n').count() + 1)
}

fn parse_n_range(s: &str) -> Result<[u32; 2], String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("n range `{s}` must look like LO..HI"))?;
    let num = |v: &str| v.trim().parse::<u32>().map_err(|_| format!("invalid group size `{v}`"));
    Ok([num(lo)?, num(hi)?])
}

/// Reads the config file (if any), applies overrides, fills defaults and
/// validates.
/// `default_suite` applies when neither the file nor the flags name one.
pub fn resolve(overrides: &Overrides, default_suite: Option<Suite>) -> Result<RunConfig, ConfigError> {
    let (mut cfg, text) = match &overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new(path.display().to_string(), None, format!("cannot read: {e}")))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| ConfigError::new(path.display().to_string(), Some(e.line()), e.to_string()))?;
            (cfg, text)
        }
        None => (RunConfig::default(), String::new()),
    };
    let mut from_flags = Vec::new();
    macro_rules! take {
        ($field:ident, $key:literal, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = Some(v);
                from_flags.push($key);
            }
        };
    }
    take!(suite, "suite", overrides.suite);
    take!(models, "models", overrides.models.clone());
    take!(model_prior, "modelPrior", overrides.model_prior.clone());
    take!(n, "n", overrides.n);
    take!(
        outcome_prior,
        "outcomePrior",
        overrides.outcome_prior.map(OutcomePrior::from)
    );
    take!(parameter_mode, "parameterMode", overrides.parameter_mode);
    take!(output, "output", overrides.out.clone());
    take!(format, "format", overrides.format);
    take!(experiments, "experiments", overrides.experiments.clone());
    take!(data, "data", overrides.data.clone());
    take!(temperature, "temperature", overrides.temperature);
    take!(seed, "seed", overrides.seed);
    if overrides.prefix {
        cfg.prefix = Some(true);
        from_flags.push("prefix");
    }
    if let Some(s) = &overrides.similarity {
        let values: [f64; 4] = match s.as_slice() {
            [v] => [*v; 4],
            [a, b, c, d] => [*a, *b, *c, *d],
            _ => {
                return Err(ConfigError::new(
                    "--similarity",
                    None,
                    "expected one value or four values",
                ))
            }
        };
        cfg.similarity = Some(values);
        from_flags.push("similarity");
    }
    if let Some(r) = &overrides.n_range {
        let r = parse_n_range(r).map_err(|m| ConfigError::new("--n-range", None, m))?;
        cfg.n_range = Some(r);
        from_flags.push("nRange");
    }
    if cfg.suite.is_none() {
        cfg.suite = default_suite;
    }
    let origin = Origin {
        path: overrides.config.clone(),
        text,
        from_flags,
    };
    fill_and_validate(cfg, &origin)
}

fn fill_and_validate(mut cfg: RunConfig, origin: &Origin) -> Result<RunConfig, ConfigError> {
    let suite = cfg
        .suite
        .ok_or_else(|| origin.error("suite", "suite", "a suite (coin or category) is required"))?;
    let registry = suite.model_names();
    let models = cfg
        .models
        .get_or_insert_with(|| registry.iter().map(|s| s.to_string()).collect());
    if let Some(bad) = models.iter().find(|m| !registry.contains(&m.as_str())) {
        return Err(origin.error(
            "models",
            "models",
            format!(
                "unknown {suite} model `{bad}` (expected one of {})",
                registry.join(", ")
            ),
        ));
    }
    if models.len() < 2 {
        return Err(origin.error("models", "models", "at least two models are required"));
    }
    let mut sorted = models.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(origin.error("models", "models", "model names must be distinct"));
    }
    let model_count = models.len();
    let prior = cfg
        .model_prior
        .get_or_insert_with(|| vec![1.0 / model_count as f64; model_count]);
    if prior.len() != model_count {
        return Err(origin.error(
            "modelPrior",
            "model-prior",
            format!("{} weights given for {model_count} models", prior.len()),
        ));
    }
    if prior.iter().any(|w| !w.is_finite() || *w < 0.0) || prior.iter().sum::<f64>() <= 0.0 {
        return Err(origin.error(
            "modelPrior",
            "model-prior",
            "weights must be nonnegative with a positive sum",
        ));
    }
    let n = *cfg.n.get_or_insert(1);
    if n == 0 {
        return Err(origin.error("n", "n", "n must be at least 1"));
    }
    cfg.outcome_prior.get_or_insert(OutcomePrior::Uniform);
    let mode = *cfg.parameter_mode.get_or_insert(ParamMode::Point);
    let similarity = *cfg.similarity.get_or_insert([DEFAULT_SIMILARITY; 4]);
    if SimilarityParams::new(similarity).is_err() {
        return Err(origin.error("similarity", "similarity", "similarity values must lie in (0, 1]"));
    }
    let range_top = cfg.n_range.map_or(1, |[_, hi]| hi);
    if suite == Suite::Category && mode == ParamMode::Marginalized && range_top > 1 {
        return Err(origin.error(
            "nRange",
            "n-range",
            "marginalized mode is only defined for a single participant (n = 1)",
        ));
    }
    if suite == Suite::Category && mode == ParamMode::Marginalized && n > 1 {
        return Err(origin.error(
            "parameterMode",
            "parameter-mode",
            "marginalized mode is only defined for a single participant (n = 1)",
        ));
    }
    let format = match (cfg.format, &cfg.output) {
        (Some(f), _) => f,
        (None, Some(p)) if p.extension().is_some_and(|e| e == "json") => Format::Json,
        _ => Format::Csv,
    };
    cfg.format = Some(format);
    if let Some([lo, hi]) = cfg.n_range {
        if lo == 0 || lo > hi {
            return Err(origin.error("nRange", "n-range", format!("invalid range {lo}..{hi}")));
        }
    }
    cfg.prefix.get_or_insert(false);
    if let Some(t) = cfg.temperature {
        if !(t.is_finite() && t > 0.0) {
            return Err(origin.error("temperature", "temperature", "temperature must be positive"));
        }
        cfg.seed.get_or_insert(0);
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn suite(&self) -> Suite {
        self.suite.expect("resolved config")
    }

    pub fn model_refs(&self) -> Vec<&str> {
        self.models
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(String::as_str)
            .collect()
    }

    pub fn prior(&self) -> &[f64] {
        self.model_prior.as_deref().unwrap_or_default()
    }

    pub fn group_size(&self) -> u32 {
        self.n.unwrap_or(1)
    }

    pub fn outcome(&self) -> OutcomePrior {
        self.outcome_prior.unwrap_or(OutcomePrior::Uniform)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }

    pub fn parameter_mode(&self) -> ParameterMode {
        match self.parameter_mode.unwrap_or(ParamMode::Point) {
            ParamMode::Marginalized => ParameterMode::Marginalized,
            ParamMode::Point => ParameterMode::Point(
                SimilarityParams::new(self.similarity.unwrap_or([DEFAULT_SIMILARITY; 4])).expect("validated"),
            ),
        }
    }

    pub fn output_path(&self) -> Option<&Path> {
        self.output.as_deref()
    }
}
