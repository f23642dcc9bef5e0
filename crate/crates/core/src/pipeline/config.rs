use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::format::sha256_hex;
use super::PipelineError;
use crate::ingest::parse_date;
use crate::metrics::MetricSpec;
use crate::stats::{OutlierTreatment, Rotation};
use crate::windows::{PopulationAnchor, PopulationWindow, ResourceWindow, Threshold, WindowConfig};

/// The only accepted processing order.
pub const PIPELINE_ORDER: &str = "cluster,estimate,threshold";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    #[default]
    Consensus,
    Tokenomics,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Consensus => "consensus",
            Layer::Tokenomics => "tokenomics",
        })
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "consensus" => Ok(Layer::Consensus),
            "tokenomics" => Ok(Layer::Tokenomics),
            other => Err(format!("unknown layer {other:?} (expected consensus or tokenomics)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    BoxCox,
    None,
}

impl FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "box-cox" => Ok(Transform::BoxCox),
            "none" => Ok(Transform::None),
            other => Err(format!("unknown transform {other:?} (expected box-cox or none)")),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::BoxCox => "box-cox",
            Transform::None => "none",
        })
    }
}

/// Settings for every subcommand, loaded from TOML and overridable key by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub chain_id: String,
    pub blocks: Option<PathBuf>,
    pub balances: Option<PathBuf>,
    pub attribution: Option<PathBuf>,
    pub tx_inputs: Option<PathBuf>,
    pub stake_keys: Option<PathBuf>,
    pub layer: Layer,
    /// `7d`, `12h`, `3600s`, `2w`, or `2016b` for a block-count window.
    pub resource_window: String,
    pub population_window: String,
    pub population_anchor: String,
    pub frequency: String,
    pub threshold: String,
    pub metrics: Vec<String>,
    pub study_start: Option<String>,
    pub study_end: Option<String>,
    pub pipeline_order: String,
    pub rotation: String,
    pub promax_power: f64,
    pub outlier_treatment: String,
    pub transform: String,
    pub box_cox_shift: bool,
    pub n_factors: Option<usize>,
    pub force: bool,
    pub jobs: Option<usize>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chain_id: "chain".into(),
            blocks: None,
            balances: None,
            attribution: None,
            tx_inputs: None,
            stake_keys: None,
            layer: Layer::Consensus,
            resource_window: "7d".into(),
            population_window: "factor:2".into(),
            population_anchor: "centered".into(),
            frequency: "7d".into(),
            threshold: "none".into(),
            metrics: MetricSpec::default_suite().iter().map(ToString::to_string).collect(),
            study_start: None,
            study_end: None,
            pipeline_order: PIPELINE_ORDER.into(),
            rotation: "promax".into(),
            promax_power: 4.0,
            outlier_treatment: "transform-only".into(),
            transform: "box-cox".into(),
            box_cox_shift: true,
            n_factors: None,
            force: false,
            jobs: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Copy)]
enum KeyKind {
    Text,
    Path,
    OptionalText,
    List,
    Float,
    Bool,
    OptionalCount,
}

const KEYS: &[(&str, KeyKind)] = &[
    ("chain-id", KeyKind::Text),
    ("blocks", KeyKind::Path),
    ("balances", KeyKind::Path),
    ("attribution", KeyKind::Path),
    ("tx-inputs", KeyKind::Path),
    ("stake-keys", KeyKind::Path),
    ("layer", KeyKind::Text),
    ("resource-window", KeyKind::Text),
    ("population-window", KeyKind::Text),
    ("population-anchor", KeyKind::Text),
    ("frequency", KeyKind::Text),
    ("threshold", KeyKind::Text),
    ("metrics", KeyKind::List),
    ("study-start", KeyKind::OptionalText),
    ("study-end", KeyKind::OptionalText),
    ("pipeline-order", KeyKind::Text),
    ("rotation", KeyKind::Text),
    ("promax-power", KeyKind::Float),
    ("outlier-treatment", KeyKind::Text),
    ("transform", KeyKind::Text),
    ("box-cox-shift", KeyKind::Bool),
    ("n-factors", KeyKind::OptionalCount),
    ("force", KeyKind::Bool),
    ("jobs", KeyKind::OptionalCount),
    ("output", KeyKind::Path),
];

/// Parses `7d`, `12h`, `30m`, `3600s` or `2w`.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let bad = || format!("invalid duration {s:?} (expected e.g. 7d, 12h, 3600s)");
    let split = s.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
    let (num, unit) = s.split_at(split);
    let n: i64 = num.parse().map_err(|_| bad())?;
    let d = match unit {
        "s" => Duration::try_seconds(n),
        "m" => Duration::try_minutes(n),
        "h" => Duration::try_hours(n),
        "d" => Duration::try_days(n),
        "w" => Duration::try_weeks(n),
        _ => None,
    };
    d.ok_or_else(bad)
}

pub fn parse_resource_window(s: &str) -> Result<ResourceWindow, String> {
    if let Some(n) = s.strip_suffix('b') {
        return n
            .parse()
            .map(ResourceWindow::Blocks)
            .map_err(|_| format!("invalid block window {s:?}"));
    }
    parse_duration(s).map(ResourceWindow::Time)
}

fn format_duration(d: Duration) -> String {
    let s = d.num_seconds();
    if s % 86_400 == 0 {
        format!("{}d", s / 86_400)
    } else {
        format!("{s}s")
    }
}

pub fn format_resource_window(w: ResourceWindow) -> String {
    match w {
        ResourceWindow::Time(d) => format_duration(d),
        ResourceWindow::Blocks(n) => format!("{n}b"),
    }
}

impl RunConfig {
    /// Loads a TOML file. Relative paths inside it resolve against the file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    fn rebase_paths(&mut self, dir: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [
            &mut self.blocks,
            &mut self.balances,
            &mut self.attribution,
            &mut self.tx_inputs,
            &mut self.stake_keys,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        rebase(&mut self.output);
    }

    /// Overrides one key, named as in the TOML file, with a textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let kind = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, kind)| *kind)
            .ok_or_else(|| PipelineError::Config(format!("unknown config key {key:?}")))?;
        let bad = |what: &str| PipelineError::Config(format!("{key}: expected {what}, got {value:?}"));
        let v = match kind {
            KeyKind::Text | KeyKind::Path | KeyKind::OptionalText => {
                toml::Value::String(value.to_string())
            }
            KeyKind::List => toml::Value::Array(
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| toml::Value::String(s.to_string()))
                    .collect(),
            ),
            KeyKind::Float => toml::Value::Float(value.parse().map_err(|_| bad("a number"))?),
            KeyKind::Bool => toml::Value::Boolean(value.parse().map_err(|_| bad("true or false"))?),
            KeyKind::OptionalCount => {
                toml::Value::Integer(value.parse::<u32>().map_err(|_| bad("a count"))?.into())
            }
        };
        let mut table = toml::Table::try_from(&*self)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        table.insert(key.to_string(), v);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _)| *k)
    }

    pub fn window_config(&self) -> Result<WindowConfig, PipelineError> {
        let cfg_err = |key: &str, e: String| PipelineError::Config(format!("{key}: {e}"));
        let anchor = match self.population_anchor.as_str() {
            "centered" => PopulationAnchor::Centered,
            "trailing" => PopulationAnchor::Trailing,
            other => {
                return Err(cfg_err(
                    "population-anchor",
                    format!("unknown anchor {other:?} (expected centered or trailing)"),
                ))
            }
        };
        let cfg = WindowConfig {
            resource_window: parse_resource_window(&self.resource_window)
                .map_err(|e| cfg_err("resource-window", e))?,
            population_window: self
                .population_window
                .parse::<PopulationWindow>()
                .map_err(|e| cfg_err("population-window", e))?,
            population_anchor: anchor,
            frequency: parse_duration(&self.frequency).map_err(|e| cfg_err("frequency", e))?,
            threshold: self
                .threshold
                .parse::<Threshold>()
                .map_err(|e| cfg_err("threshold", e))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn metric_specs(&self) -> Result<Vec<MetricSpec>, PipelineError> {
        if self.metrics.is_empty() {
            return Err(PipelineError::Config("metrics: at least one metric is required".into()));
        }
        let specs = self
            .metrics
            .iter()
            .map(|m| m.parse::<MetricSpec>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::Config(format!("metrics: {e}")))?;
        let mut names: Vec<String> = specs.iter().map(MetricSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(PipelineError::Config(format!("metrics: {} listed twice", w[0])));
        }
        Ok(specs)
    }

    pub fn study_bounds(&self) -> Result<(Option<NaiveDate>, Option<NaiveDate>), PipelineError> {
        let parse = |key: &str, v: &Option<String>| {
            v.as_deref()
                .map(|s| {
                    parse_date(s).ok_or_else(|| {
                        PipelineError::Config(format!("{key}: invalid date {s:?} (expected YYYY-MM-DD)"))
                    })
                })
                .transpose()
        };
        let start = parse("study-start", &self.study_start)?;
        let end = parse("study-end", &self.study_end)?;
        if let (Some(s), Some(e)) = (start, end) {
            if s >= e {
                return Err(PipelineError::Config("study-start must precede study-end".into()));
            }
        }
        Ok((start, end))
    }

    pub fn rotation(&self) -> Result<Rotation, PipelineError> {
        self.rotation
            .parse()
            .map_err(|e| PipelineError::Config(format!("rotation: {e}")))
    }

    pub fn outlier_treatment(&self) -> Result<OutlierTreatment, PipelineError> {
        self.outlier_treatment
            .parse()
            .map_err(|e| PipelineError::Config(format!("outlier-treatment: {e}")))
    }

    pub fn transform(&self) -> Result<Transform, PipelineError> {
        self.transform
            .parse()
            .map_err(|e| PipelineError::Config(format!("transform: {e}")))
    }

    /// Checks every value and that referenced inputs exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.pipeline_order != PIPELINE_ORDER {
            return Err(PipelineError::Config(format!(
                "pipeline-order: only {PIPELINE_ORDER:?} is supported; thresholds cannot precede clustering"
            )));
        }
        self.window_config()?;
        self.metric_specs()?;
        self.study_bounds()?;
        self.rotation()?;
        self.outlier_treatment()?;
        self.transform()?;
        if !(self.promax_power.is_finite() && self.promax_power > 1.0) {
            return Err(PipelineError::Config("promax-power must be greater than 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        if self.n_factors == Some(0) {
            return Err(PipelineError::Config("n-factors must be at least 1".into()));
        }
        for (key, path) in [
            ("blocks", &self.blocks),
            ("balances", &self.balances),
            ("attribution", &self.attribution),
            ("tx-inputs", &self.tx_inputs),
            ("stake-keys", &self.stake_keys),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(PipelineError::Config(format!(
                        "{key}: input file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over every setting that can change a computed value.
    ///
    /// Input paths, the output directory and the worker count are excluded.
    pub fn fingerprint(&self) -> Result<String, PipelineError> {
        let w = self.window_config()?;
        let canonical = serde_json::json!({
            "chain-id": self.chain_id,
            "layer": self.layer.to_string(),
            "resource-window": format_resource_window(w.resource_window),
            "population-window": w.population_window.to_string(),
            "population-anchor": self.population_anchor,
            "frequency": format_duration(w.frequency),
            "threshold": w.threshold.to_string(),
            "metrics": self.metric_specs()?.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "study-start": self.study_start,
            "study-end": self.study_end,
            "rotation": self.rotation()?.to_string(),
            "promax-power": self.promax_power,
            "outlier-treatment": self.outlier_treatment()?.to_string(),
            "transform": self.transform()?.to_string(),
            "box-cox-shift": self.box_cox_shift,
            "n-factors": self.n_factors,
            "force": self.force,
        });
        Ok(sha256_hex(canonical.to_string().as_bytes()))
    }
}
