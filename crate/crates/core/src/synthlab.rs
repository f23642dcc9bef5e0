//! Synthetic block streams and planted-factor datasets with known ground truth.
//!
//! The random source is ChaCha20 (`rand_chacha`) seeded from a `u64`. Block counts,
//! creator choices and timestamps are drawn with integer arithmetic only, so a seed
//! produces the same stream on every platform.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::nakamoto;
use crate::model::{BlockRecord, EventLedger, ModelError, StudyWindow};
use crate::stats::{tucker_congruence, DataMatrix, Matrix};

/// Precision of the integer creator weights.
const WEIGHT_BITS: u32 = 40;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShareModel {
    Uniform,
    Zipf(f64),
    Explicit(Vec<f64>),
}

/// Entities beyond the first `stable_entities` mine only `active_days` out of every
/// `period_days`, each with its own phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Intermittent {
    pub stable_entities: usize,
    pub period_days: u32,
    pub active_days: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub share_model: ShareModel,
    pub blocks_per_day: f64,
    pub duration_days: u32,
    pub seed: u64,
    pub start: NaiveDate,
    pub intermittent: Option<Intermittent>,
}

impl SynthSpec {
    pub fn new(n_entities: usize, share_model: ShareModel, blocks_per_day: f64, duration_days: u32, seed: u64) -> Self {
        Self {
            n_entities,
            share_model,
            blocks_per_day,
            duration_days,
            seed,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            intermittent: None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_entities == 0 {
            return bad("n_entities must be positive".into());
        }
        if !(self.blocks_per_day.is_finite() && self.blocks_per_day > 0.0) {
            return bad(format!("blocks_per_day must be positive, got {}", self.blocks_per_day));
        }
        if self.duration_days == 0 {
            return bad("duration must be at least one day".into());
        }
        match &self.share_model {
            ShareModel::Uniform => {}
            ShareModel::Zipf(s) => {
                if !(s.is_finite() && *s > 0.0) {
                    return bad(format!("zipf exponent must be positive, got {s}"));
                }
            }
            ShareModel::Explicit(v) => {
                if v.len() != self.n_entities {
                    return bad(format!("{} shares given for {} entities", v.len(), self.n_entities));
                }
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return bad("shares must be nonnegative".into());
                }
                let total: f64 = v.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("shares sum to {total}, expected 1"));
                }
            }
        }
        if let Some(i) = self.intermittent {
            if i.period_days == 0 || i.active_days == 0 || i.active_days > i.period_days {
                return bad("intermittent schedule needs 0 < active_days <= period_days".into());
            }
        }
        Ok(())
    }

    /// Planted share of each entity.
    pub fn shares(&self) -> Vec<f64> {
        let raw: Vec<f64> = match &self.share_model {
            ShareModel::Uniform => vec![1.0; self.n_entities],
            ShareModel::Zipf(s) => (1..=self.n_entities).map(|k| (k as f64).powf(-s)).collect(),
            ShareModel::Explicit(v) => return v.clone(),
        };
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| w / total).collect()
    }

    pub fn study_window(&self) -> StudyWindow {
        let start = self.start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        StudyWindow::new(start, start + Duration::days(i64::from(self.duration_days)))
            .expect("positive duration")
    }

    fn active(&self, entity: usize, day: u32) -> bool {
        match self.intermittent {
            Some(i) if entity >= i.stable_entities => {
                (day + entity as u32) % i.period_days < i.active_days
            }
            _ => true,
        }
    }
}

pub fn entity_address(i: usize) -> String {
    format!("addr_{i}")
}

fn integer_weights(shares: &[f64]) -> Vec<u64> {
    let scale = (1u64 << WEIGHT_BITS) as f64;
    shares.iter().map(|s| (s * scale).round() as u64).collect()
}

/// Whole-unit part plus a Bernoulli draw for the fraction, in 2^-32 steps.
fn daily_count(rng: &mut ChaCha20Rng, blocks_per_day: f64) -> u64 {
    let base = blocks_per_day.floor();
    let frac = ((blocks_per_day - base) * 4_294_967_296.0) as u64;
    base as u64 + u64::from(u64::from(rng.random::<u32>()) < frac)
}

fn pick(rng: &mut ChaCha20Rng, cumulative: &[u64]) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let u = rng.random_range(0..total);
    cumulative.partition_point(|&c| c <= u)
}

/// Simulated block stream. Entity `i` receives rewards at `addr_i`.
pub fn generate_block_stream(spec: &SynthSpec) -> Result<EventLedger, SynthError> {
    spec.validate()?;
    let weights = integer_weights(&spec.shares());
    let study = spec.study_window();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut blocks = Vec::new();
    let mut height = 0u64;
    for day in 0..spec.duration_days {
        let active: Vec<usize> = (0..spec.n_entities)
            .filter(|&e| weights[e] > 0 && spec.active(e, day))
            .collect();
        let count = daily_count(&mut rng, spec.blocks_per_day);
        if active.is_empty() {
            continue;
        }
        let cumulative: Vec<u64> = active
            .iter()
            .scan(0u64, |acc, &e| {
                *acc += weights[e];
                Some(*acc)
            })
            .collect();
        let mut offsets: Vec<i64> = (0..count).map(|_| rng.random_range(0..86_400)).collect();
        offsets.sort_unstable();
        let day_start = study.start + Duration::days(i64::from(day));
        for off in offsets {
            let creator = active[pick(&mut rng, &cumulative)];
            height += 1;
            blocks.push(BlockRecord::new(
                height,
                day_start + Duration::seconds(off),
                vec![entity_address(creator)],
                None,
            )?);
        }
    }
    Ok(EventLedger::new(
        format!("synth-{}", spec.seed),
        blocks,
        BTreeMap::new(),
        study,
    )?)
}

/// Rows of `L·f + ε` with standard-normal factors and noise of the given sd.
///
/// Columns are named `v1..vp`; rows are dated one day apart from 2020-01-01.
pub fn generate_factor_dataset(
    n_rows: usize,
    loadings: &Matrix<f64>,
    noise_sd: f64,
    seed: u64,
) -> Result<DataMatrix<f64>, SynthError> {
    if loadings.max_abs() > 1.0 {
        return Err(SynthError::InvalidSpec("loadings must lie in [-1, 1]".into()));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(SynthError::InvalidSpec("noise sd must be nonnegative".into()));
    }
    let (p, k) = (loadings.rows(), loadings.cols());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let f: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let row = (0..p)
            .map(|i| {
                let signal: f64 = (0..k).map(|j| loadings[(i, j)] * f[j]).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                signal + noise_sd * e
            })
            .collect();
        data.push(row);
    }
    let start: DateTime<Utc> = NaiveDate::from_ymd_opt(2020, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc();
    let values = if data.is_empty() {
        Matrix::zeros(0, p)
    } else {
        Matrix::from_rows(&data)
    };
    Ok(DataMatrix::new(
        (1..=p).map(|i| format!("v{i}")).collect(),
        (0..n_rows).map(|i| start + Duration::days(i as i64)).collect(),
        values,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowConfidence {
    pub window_days: u32,
    pub repetitions: usize,
    pub nc_mean: f64,
    /// Sample standard deviation across repetitions.
    pub nc_sd: f64,
}

fn stream_nakamoto(spec: &SynthSpec) -> Result<Option<usize>, SynthError> {
    let ledger = generate_block_stream(spec)?;
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for b in ledger.blocks() {
        *counts.entry(b.reward_addresses[0].as_str()).or_default() += 1;
    }
    let amounts: Vec<f64> = counts.values().map(|c| *c as f64).collect();
    Ok(nakamoto(&amounts).ok())
}

/// Nakamoto coefficient spread over independent streams of each window length.
///
/// Repetition `r` uses seed `spec.seed + r`. Streams that produce no blocks are skipped.
pub fn window_confidence_experiment(
    spec: &SynthSpec,
    window_days: &[u32],
    repetitions: usize,
) -> Result<Vec<WindowConfidence>, SynthError> {
    if window_days.len() < 2 {
        return Err(SynthError::InvalidSpec("need at least two window lengths".into()));
    }
    if repetitions < 2 {
        return Err(SynthError::InvalidSpec("need at least two repetitions".into()));
    }
    window_days
        .iter()
        .map(|&w| {
            let estimates = (0..repetitions)
                .into_par_iter()
                .map(|r| {
                    let rep = SynthSpec {
                        duration_days: w,
                        seed: spec.seed.wrapping_add(r as u64),
                        ..spec.clone()
                    };
                    stream_nakamoto(&rep)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let xs: Vec<f64> = estimates.into_iter().flatten().map(|v| v as f64).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(WindowConfidence {
                window_days: w,
                repetitions: xs.len(),
                nc_mean: mean,
                nc_sd: var.sqrt(),
            })
        })
        .collect()
}

/// Best column matching between estimated and planted loadings.
///
/// Tries every assignment of estimated columns to planted ones and returns, per planted
/// factor, the absolute Tucker congruence under the assignment with the largest total.
pub fn matched_congruence(estimated: &Matrix<f64>, planted: &Matrix<f64>) -> Vec<f64> {
    fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for prefix in permutations(n, k - 1) {
            for i in 0..n {
                if !prefix.contains(&i) {
                    let mut p = prefix.clone();
                    p.push(i);
                    out.push(p);
                }
            }
        }
        out
    }
    let k = planted.cols();
    permutations(estimated.cols(), k)
        .into_iter()
        .map(|assign| {
            (0..k)
                .map(|j| tucker_congruence(&estimated.column(assign[j]), &planted.column(j)).abs())
                .collect::<Vec<f64>>()
        })
        .max_by(|a, b| {
            a.iter()
                .sum::<f64>()
                .partial_cmp(&b.iter().sum::<f64>())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or_default()
}
