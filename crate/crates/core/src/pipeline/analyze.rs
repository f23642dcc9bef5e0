use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{format_resource_window, Layer};
use super::format::{csv_line, ensure_dir, g12, json_bytes, write_output};
use super::inputs::{load_inputs, Inputs};
use super::{with_jobs, PipelineError, RunConfig};
use crate::cluster::{build_clusters, EntityMap, Resolver};
use crate::ingest::format_timestamp;
use crate::metrics::MetricSpec;
use crate::model::{EventLedger, MetricSeries, ResourceDistribution, StudyWindow};
use crate::windows::{
    apply_threshold, consensus_distribution, snapshot_times, tokenomics_distribution,
    WindowConfig, WindowWarning, MIN_RECOMMENDED_WINDOW_BLOCKS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedSnapshot {
    pub snapshot: String,
    pub reason: String,
}

/// Run description written next to the series files.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub chain_id: String,
    pub layer: String,
    pub config_fingerprint: String,
    pub resource_window: String,
    pub population_window: String,
    pub population_anchor: String,
    pub frequency: String,
    pub threshold: String,
    pub overlapping: bool,
    pub study_start: String,
    pub study_end: String,
    pub metrics: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub snapshots_requested: usize,
    pub snapshots_computed: usize,
    pub skipped: Vec<SkippedSnapshot>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalyzeSummary {
    pub series: Vec<MetricSeries>,
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
}

fn midnight(d: NaiveDate) -> DateTime<Utc> {
    d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

/// Configured bounds, falling back to the days spanned by `first..=last`.
fn study_window(
    bounds: (Option<NaiveDate>, Option<NaiveDate>),
    first: NaiveDate,
    last: NaiveDate,
) -> Result<StudyWindow, PipelineError> {
    let start = bounds.0.unwrap_or(first);
    let end = bounds.1.unwrap_or(last + Duration::days(1));
    Ok(StudyWindow::new(midnight(start), midnight(end))?)
}

fn build_ledger(cfg: &RunConfig, inputs: &Inputs, warnings: &mut Vec<String>) -> Result<EventLedger, PipelineError> {
    let bounds = cfg.study_bounds()?;
    match cfg.layer {
        Layer::Consensus => {
            let blocks = &inputs
                .blocks
                .as_ref()
                .ok_or_else(|| PipelineError::Config("blocks input is required for the consensus layer".into()))?
                .records;
            let (Some(first), Some(last)) = (blocks.first(), blocks.last()) else {
                return Err(PipelineError::NoSnapshots("blocks input has no valid rows".into()));
            };
            let study = study_window(bounds, first.timestamp.date_naive(), last.timestamp.date_naive())?;
            let kept: Vec<_> = blocks.iter().filter(|b| study.contains(b.timestamp)).cloned().collect();
            if kept.len() < blocks.len() {
                warnings.push(format!(
                    "{} blocks outside the study window were ignored",
                    blocks.len() - kept.len()
                ));
            }
            Ok(EventLedger::new(cfg.chain_id.clone(), kept, BTreeMap::new(), study)?)
        }
        Layer::Tokenomics => {
            let balances = &inputs
                .balances
                .as_ref()
                .ok_or_else(|| PipelineError::Config("balances input is required for the tokenomics layer".into()))?
                .records;
            let dates: BTreeSet<NaiveDate> = balances.iter().map(|b| b.snapshot_date).collect();
            let (Some(first), Some(last)) = (dates.first(), dates.last()) else {
                return Err(PipelineError::NoSnapshots("balances input has no valid rows".into()));
            };
            let study = study_window(bounds, *first, *last)?;
            let kept: Vec<_> = balances
                .iter()
                .filter(|b| study.contains(midnight(b.snapshot_date)))
                .cloned()
                .collect();
            Ok(EventLedger::new(
                cfg.chain_id.clone(),
                Vec::new(),
                EventLedger::group_balances(kept),
                study,
            )?)
        }
    }
}

/// Balance dates spaced at least `frequency` apart, starting from the earliest.
fn tokenomics_dates(ledger: &EventLedger, frequency: Duration) -> Vec<NaiveDate> {
    let mut out: Vec<NaiveDate> = Vec::new();
    for &d in ledger.balance_snapshots().keys() {
        if out.last().is_none_or(|prev| midnight(d) >= midnight(*prev) + frequency) {
            out.push(d);
        }
    }
    out
}

enum Outcome {
    Computed {
        snapshot: DateTime<Utc>,
        values: Vec<(String, Result<(f64, usize), String>)>,
        warnings: Vec<String>,
    },
    Skipped(SkippedSnapshot),
}

fn evaluate(
    d: Result<ResourceDistribution, String>,
    snapshot: DateTime<Utc>,
    cfg: &WindowConfig,
    metrics: &[MetricSpec],
    warnings: Vec<String>,
) -> Outcome {
    let thresholded = d.and_then(|d| apply_threshold(&d, cfg.threshold).map_err(|e| e.to_string()));
    match thresholded {
        Err(reason) => Outcome::Skipped(SkippedSnapshot {
            snapshot: format_timestamp(snapshot),
            reason,
        }),
        Ok(d) => Outcome::Computed {
            snapshot,
            values: metrics
                .iter()
                .map(|m| {
                    let v = m
                        .evaluate::<f64>(&d)
                        .map(|v| (v.value, v.n))
                        .map_err(|e| e.to_string());
                    (m.name(), v)
                })
                .collect(),
            warnings,
        },
    }
}

fn compute(
    ledger: &EventLedger,
    resolver: &Resolver<'_>,
    cfg: &RunConfig,
    wcfg: &WindowConfig,
    metrics: &[MetricSpec],
) -> Result<Vec<Outcome>, PipelineError> {
    match cfg.layer {
        Layer::Consensus => {
            let times = snapshot_times(ledger.study_window(), wcfg)?;
            Ok(times
                .par_iter()
                .map(|&t| match consensus_distribution(ledger, resolver, t, wcfg) {
                    Ok(snap) => {
                        let warnings = snap
                            .warnings
                            .iter()
                            .filter_map(|w| match w {
                                WindowWarning::SmallWindow { snapshot, blocks } => Some(format!(
                                    "resource window ending {} holds {blocks} blocks (fewer than {MIN_RECOMMENDED_WINDOW_BLOCKS})",
                                    format_timestamp(*snapshot)
                                )),
                                WindowWarning::OverlappingWindows => None,
                            })
                            .collect();
                        evaluate(Ok(snap.distribution), t, wcfg, metrics, warnings)
                    }
                    Err(e) => evaluate(Err(e.to_string()), t, wcfg, metrics, Vec::new()),
                })
                .collect())
        }
        Layer::Tokenomics => {
            let dates = tokenomics_dates(ledger, wcfg.frequency);
            Ok(dates
                .par_iter()
                .map(|&d| {
                    let dist = tokenomics_distribution(ledger, resolver, d).map_err(|e| e.to_string());
                    evaluate(dist, midnight(d), wcfg, metrics, Vec::new())
                })
                .collect())
        }
    }
}

/// Computes every configured metric at every snapshot and writes the series files,
/// `metrics_wide.csv` and `manifest.json`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeSummary, PipelineError> {
    cfg.validate()?;
    let wcfg = cfg.window_config()?;
    let metrics = cfg.metric_specs()?;
    let fingerprint = cfg.fingerprint()?;
    let inputs = load_inputs(cfg)?;
    let mut warnings = Vec::new();
    if wcfg.overlapping() {
        warnings.push("measurement frequency is shorter than the resource window, so windows overlap".to_string());
    }
    let ledger = build_ledger(cfg, &inputs, &mut warnings)?;
    let clusters = build_clusters(inputs.tx_input_records(), inputs.stake_key_records());
    let entities = EntityMap::from_records(inputs.attribution_records())?;
    let resolver = Resolver::new(&clusters, &entities);

    let outcomes = with_jobs(cfg.jobs, || compute(&ledger, &resolver, cfg, &wcfg, &metrics))??;

    let names: Vec<String> = metrics.iter().map(MetricSpec::name).collect();
    let mut series: Vec<MetricSeries> = names
        .iter()
        .map(|n| MetricSeries::new(n.clone(), fingerprint.clone()))
        .collect();
    let mut series_csv: Vec<String> = names.iter().map(|_| "snapshot,value,n\n".to_string()).collect();
    let mut wide = csv_line(&std::iter::once("snapshot".to_string()).chain(names.iter().cloned()).collect::<Vec<_>>());
    let mut skipped = Vec::new();
    let mut computed = 0;
    let requested = outcomes.len();
    for outcome in outcomes {
        match outcome {
            Outcome::Skipped(s) => skipped.push(s),
            Outcome::Computed {
                snapshot,
                values,
                warnings: w,
            } => {
                computed += 1;
                warnings.extend(w);
                let stamp = format_timestamp(snapshot);
                let mut row = vec![stamp.clone()];
                for (j, (name, v)) in values.into_iter().enumerate() {
                    match v.and_then(|(value, n)| {
                        series[j].push(snapshot, value).map_err(|e| e.to_string())?;
                        Ok((value, n))
                    }) {
                        Ok((value, n)) => {
                            series_csv[j].push_str(&csv_line(&[stamp.clone(), g12(value), n.to_string()]));
                            row.push(g12(value));
                        }
                        Err(e) => {
                            warnings.push(format!("{name} undefined at {stamp}: {e}"));
                            row.push(String::new());
                        }
                    }
                }
                wide.push_str(&csv_line(&row));
            }
        }
    }
    if computed == 0 {
        let reason = skipped
            .first()
            .map_or("the study window holds no snapshot".to_string(), |s| s.reason.clone());
        return Err(PipelineError::NoSnapshots(reason));
    }

    let study = ledger.study_window();
    let manifest = Manifest {
        tool: "decentra".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        chain_id: cfg.chain_id.clone(),
        layer: cfg.layer.to_string(),
        config_fingerprint: fingerprint,
        resource_window: format_resource_window(wcfg.resource_window),
        population_window: wcfg.population_window.to_string(),
        population_anchor: cfg.population_anchor.clone(),
        frequency: cfg.frequency.clone(),
        threshold: wcfg.threshold.to_string(),
        overlapping: wcfg.overlapping(),
        study_start: format_timestamp(study.start),
        study_end: format_timestamp(study.end),
        metrics: names.clone(),
        inputs: inputs.digests.clone(),
        snapshots_requested: requested,
        snapshots_computed: computed,
        skipped,
        warnings,
    };

    ensure_dir(&cfg.output)?;
    let mut files = Vec::new();
    for (name, text) in names.iter().zip(&series_csv) {
        files.push(write_output(&cfg.output, &format!("series_{name}.csv"), text.as_bytes())?);
    }
    files.push(write_output(&cfg.output, "metrics_wide.csv", wide.as_bytes())?);
    files.push(write_output(&cfg.output, "manifest.json", &json_bytes(&manifest))?);
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    Ok(AnalyzeSummary {
        series,
        manifest,
        files,
    })
}
