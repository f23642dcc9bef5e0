//! Core domain types: block and balance records, ledgers, resource distributions
//! and metric series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("block {height} has no reward address")]
    NoRewardAddress { height: u64 },
    #[error("block {height} has an empty reward address")]
    EmptyAddress { height: u64 },
    #[error("block heights must be strictly increasing ({previous} then {next})")]
    HeightOrder { previous: u64, next: u64 },
    #[error("block {height} timestamp goes backwards")]
    TimestampOrder { height: u64 },
    #[error("block {height} at {timestamp} lies outside the study window")]
    OutsideStudyWindow { height: u64, timestamp: DateTime<Utc> },
    #[error("study window is empty or inverted ({start} .. {end})")]
    InvalidStudyWindow { start: DateTime<Utc>, end: DateTime<Utc> },
    #[error("zero balance stored for {address} on {date}")]
    ZeroBalance { address: String, date: NaiveDate },
    #[error("balance record for {address} filed under {filed} but dated {dated}")]
    SnapshotDateMismatch { address: String, filed: NaiveDate, dated: NaiveDate },
    #[error("duplicate balance for {address} on {date}")]
    DuplicateBalance { address: String, date: NaiveDate },
    #[error("entity {0} has an amount but is not in the population")]
    EntryOutsidePopulation(String),
    #[error("total resource is zero")]
    ZeroTotal,
    #[error("series {series}: snapshot {snapshot} is not after the previous point")]
    SnapshotOrder { series: String, snapshot: DateTime<Utc> },
    #[error("series {series}: non-finite value at {snapshot}")]
    NonFiniteValue { series: String, snapshot: DateTime<Utc> },
}

/// One produced block and the addresses that received its reward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    pub timestamp: DateTime<Utc>,
    pub reward_addresses: Vec<String>,
    pub creator_tag: Option<String>,
}

impl BlockRecord {
    pub fn new(
        height: u64,
        timestamp: DateTime<Utc>,
        reward_addresses: Vec<String>,
        creator_tag: Option<String>,
    ) -> Result<Self, ModelError> {
        if reward_addresses.is_empty() {
            return Err(ModelError::NoRewardAddress { height });
        }
        if reward_addresses.iter().any(|a| a.is_empty()) {
            return Err(ModelError::EmptyAddress { height });
        }
        Ok(Self {
            height,
            timestamp,
            reward_addresses,
            creator_tag,
        })
    }
}

/// Non-zero balance of one address at one snapshot date, in base token units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceRecord {
    pub address: String,
    pub balance: u64,
    pub snapshot_date: NaiveDate,
}

/// Half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl StudyWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, ModelError> {
        if end <= start {
            return Err(ModelError::InvalidStudyWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// Block production and balance snapshots of one chain over a study window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLedger {
    chain_id: String,
    blocks: Vec<BlockRecord>,
    balance_snapshots: BTreeMap<NaiveDate, Vec<BalanceRecord>>,
    study_window: StudyWindow,
}

impl EventLedger {
    /// Validates ordering, window containment and balance uniqueness.
    pub fn new(
        chain_id: impl Into<String>,
        blocks: Vec<BlockRecord>,
        balance_snapshots: BTreeMap<NaiveDate, Vec<BalanceRecord>>,
        study_window: StudyWindow,
    ) -> Result<Self, ModelError> {
        for pair in blocks.windows(2) {
            if pair[1].height <= pair[0].height {
                return Err(ModelError::HeightOrder {
                    previous: pair[0].height,
                    next: pair[1].height,
                });
            }
            if pair[1].timestamp < pair[0].timestamp {
                return Err(ModelError::TimestampOrder {
                    height: pair[1].height,
                });
            }
        }
        if let Some(b) = blocks.iter().find(|b| !study_window.contains(b.timestamp)) {
            return Err(ModelError::OutsideStudyWindow {
                height: b.height,
                timestamp: b.timestamp,
            });
        }
        for (date, records) in &balance_snapshots {
            let mut seen = BTreeSet::new();
            for r in records {
                if r.snapshot_date != *date {
                    return Err(ModelError::SnapshotDateMismatch {
                        address: r.address.clone(),
                        filed: *date,
                        dated: r.snapshot_date,
                    });
                }
                if r.balance == 0 {
                    return Err(ModelError::ZeroBalance {
                        address: r.address.clone(),
                        date: *date,
                    });
                }
                if !seen.insert(r.address.as_str()) {
                    return Err(ModelError::DuplicateBalance {
                        address: r.address.clone(),
                        date: *date,
                    });
                }
            }
        }
        Ok(Self {
            chain_id: chain_id.into(),
            blocks,
            balance_snapshots,
            study_window,
        })
    }

    /// Groups flat balance records by snapshot date.
    pub fn group_balances(records: Vec<BalanceRecord>) -> BTreeMap<NaiveDate, Vec<BalanceRecord>> {
        let mut out: BTreeMap<NaiveDate, Vec<BalanceRecord>> = BTreeMap::new();
        for r in records {
            out.entry(r.snapshot_date).or_default().push(r);
        }
        out
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn balance_snapshots(&self) -> &BTreeMap<NaiveDate, Vec<BalanceRecord>> {
        &self.balance_snapshots
    }

    pub fn study_window(&self) -> StudyWindow {
        self.study_window
    }

    /// Index range of blocks with `from <= timestamp < to`.
    pub fn block_range(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> std::ops::Range<usize> {
        let lo = self.blocks.partition_point(|b| b.timestamp < from);
        let hi = self.blocks.partition_point(|b| b.timestamp < to);
        lo..hi.max(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Blocks,
    Tokens,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceKind::Blocks => f.write_str("blocks"),
            ResourceKind::Tokens => f.write_str("tokens"),
        }
    }
}

/// Resource amounts per entity at one snapshot.
///
/// `population` is explicit: members without an entry (or with a zero entry)
/// still count towards population-sensitive metrics such as Gini.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceDistribution {
    snapshot: DateTime<Utc>,
    entries: BTreeMap<String, u64>,
    population: BTreeSet<String>,
    kind: ResourceKind,
}

impl ResourceDistribution {
    pub fn new(
        snapshot: DateTime<Utc>,
        entries: BTreeMap<String, u64>,
        population: BTreeSet<String>,
        kind: ResourceKind,
    ) -> Result<Self, ModelError> {
        if let Some(k) = entries.keys().find(|k| !population.contains(*k)) {
            return Err(ModelError::EntryOutsidePopulation(k.clone()));
        }
        Ok(Self {
            snapshot,
            entries,
            population,
            kind,
        })
    }

    /// Distribution whose population is exactly the set of entry keys.
    pub fn from_entries(
        snapshot: DateTime<Utc>,
        entries: BTreeMap<String, u64>,
        kind: ResourceKind,
    ) -> Self {
        let population = entries.keys().cloned().collect();
        Self {
            snapshot,
            entries,
            population,
            kind,
        }
    }

    pub fn snapshot(&self) -> DateTime<Utc> {
        self.snapshot
    }

    pub fn entries(&self) -> &BTreeMap<String, u64> {
        &self.entries
    }

    pub fn population(&self) -> &BTreeSet<String> {
        &self.population
    }

    pub fn kind(&self) -> ResourceKind {
        self.kind
    }

    /// Population size `n`.
    pub fn n(&self) -> usize {
        self.population.len()
    }

    pub fn amount(&self, entity: &str) -> u64 {
        self.entries.get(entity).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u128 {
        self.entries.values().map(|&a| a as u128).sum()
    }

    /// Every population member with its amount, largest first, ties by ascending id.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut out: Vec<(&str, u64)> = self
            .population
            .iter()
            .map(|e| (e.as_str(), self.amount(e)))
            .collect();
        // population iterates in ascending id order and the sort is stable
        out.sort_by(|a, b| b.1.cmp(&a.1));
        out
    }

    /// Amounts of the full population (zeros included), largest first.
    pub fn amounts<T: Scalar>(&self) -> Vec<T> {
        self.ranked()
            .into_iter()
            .map(|(_, a)| T::from_u64(a).expect("u64 converts to float"))
            .collect()
    }

    /// Shares `x_i / total`, descending, zero-amount members at the tail.
    pub fn shares<T: Scalar>(&self) -> Result<Vec<(String, T)>, ModelError> {
        let total = self.total();
        if total == 0 {
            return Err(ModelError::ZeroTotal);
        }
        let total = T::from_u128(total).expect("u128 converts to float");
        Ok(self
            .ranked()
            .into_iter()
            .map(|(e, a)| {
                let a = T::from_u64(a).expect("u64 converts to float");
                (e.to_string(), a / total)
            })
            .collect())
    }
}

/// Values of one metric over successive snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric_name: String,
    points: Vec<(DateTime<Utc>, f64)>,
    pub config_fingerprint: String,
}

impl MetricSeries {
    pub fn new(metric_name: impl Into<String>, config_fingerprint: impl Into<String>) -> Self {
        Self {
            metric_name: metric_name.into(),
            points: Vec::new(),
            config_fingerprint: config_fingerprint.into(),
        }
    }

    /// Appends a point; snapshots must be strictly increasing and values finite.
    pub fn push(&mut self, snapshot: DateTime<Utc>, value: f64) -> Result<(), ModelError> {
        if !value.is_finite() {
            return Err(ModelError::NonFiniteValue {
                series: self.metric_name.clone(),
                snapshot,
            });
        }
        if self.points.last().is_some_and(|(t, _)| *t >= snapshot) {
            return Err(ModelError::SnapshotOrder {
                series: self.metric_name.clone(),
                snapshot,
            });
        }
        self.points.push((snapshot, value));
        Ok(())
    }

    pub fn points(&self) -> &[(DateTime<Utc>, f64)] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
