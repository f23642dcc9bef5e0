//! Per-snapshot resource distributions: estimation windows, population
//! estimation, measurement frequency and inclusion thresholds.
//!
//! Pipeline order is fixed: entities are resolved first, then resources and
//! population are estimated, and only then is an inclusion threshold applied.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Resolver;
use crate::model::{EventLedger, ModelError, ResourceDistribution, ResourceKind, StudyWindow};

/// Resource windows covering fewer blocks than this trigger a warning.
pub const MIN_RECOMMENDED_WINDOW_BLOCKS: usize = 150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("measurement frequency must be positive")]
    NonPositiveFrequency,
    #[error("resource window must be positive")]
    NonPositiveWindow,
    #[error("population window factor must be a finite number >= 1, got {0}")]
    InvalidFactor(f64),
    #[error("no snapshot fits in the study window")]
    EmptyStudyWindow,
    #[error("no blocks in the resource window ending {0}")]
    EmptyWindow(DateTime<Utc>),
    #[error("only {available} of {required} blocks precede {snapshot}")]
    IncompleteWindow {
        snapshot: DateTime<Utc>,
        available: usize,
        required: usize,
    },
    #[error("no balance snapshot for {0}")]
    MissingSnapshot(NaiveDate),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("balance total of {entity} overflows 64 bits")]
    Overflow { entity: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Length of the resource estimation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceWindow {
    /// Time-based window, in seconds.
    Time(#[serde(with = "seconds")] Duration),
    /// The last `n` blocks before the snapshot.
    Blocks(usize),
}

mod seconds {
    use chrono::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(d.num_seconds())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::seconds(i64::deserialize(d)?))
    }
}

impl ResourceWindow {
    pub fn days(days: i64) -> Self {
        Self::Time(Duration::days(days))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationWindow {
    /// Population equals the producers seen in the resource window.
    Same,
    /// A window `k` times the resource window.
    Factor(f64),
    /// Anyone active at any time in the study window.
    AllTime,
}

impl fmt::Display for PopulationWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PopulationWindow::Same => f.write_str("same"),
            PopulationWindow::Factor(k) => write!(f, "factor:{k}"),
            PopulationWindow::AllTime => f.write_str("all_time"),
        }
    }
}

impl FromStr for PopulationWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same" => Ok(Self::Same),
            "all_time" => Ok(Self::AllTime),
            _ => {
                let k = s
                    .strip_prefix("factor:")
                    .ok_or_else(|| format!("unknown population window `{s}`"))?;
                k.parse::<f64>()
                    .map(Self::Factor)
                    .map_err(|_| format!("invalid factor `{k}`"))
            }
        }
    }
}

/// Placement of a `factor(k)` population window relative to the resource window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationAnchor {
    /// Extends equally before and after the resource window.
    #[default]
    Centered,
    /// Ends at the snapshot, like the resource window.
    Trailing,
}

/// Inclusion threshold applied after estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    None,
    /// The `K` largest population members.
    TopK(i64),
    /// The top `P` percent of population members by count.
    TopPercent(f64),
    /// Members holding strictly more than `B` base units.
    MinBalance(i64),
}

impl Threshold {
    pub fn validate(&self) -> Result<(), WindowError> {
        match *self {
            Threshold::None => Ok(()),
            Threshold::TopK(k) if k <= 0 => Err(WindowError::InvalidThreshold(format!("top_k needs K > 0, got {k}"))),
            Threshold::TopPercent(p) if !(p > 0.0 && p <= 100.0) => Err(WindowError::InvalidThreshold(format!(
                "top_percent needs P in (0, 100], got {p}"
            ))),
            Threshold::MinBalance(b) if b < 0 => {
                Err(WindowError::InvalidThreshold(format!("min_balance needs B >= 0, got {b}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::None => f.write_str("none"),
            Threshold::TopK(k) => write!(f, "top_k:{k}"),
            Threshold::TopPercent(p) => write!(f, "top_percent:{p}"),
            Threshold::MinBalance(b) => write!(f, "min_balance:{b}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            return Ok(Self::None);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("threshold `{s}` must be none, top_k:K, top_percent:P or min_balance:B"))?;
        let bad = |_| format!("invalid threshold value `{value}`");
        match kind {
            "top_k" => value.parse().map(Self::TopK).map_err(bad),
            "top_percent" => value.parse().map(Self::TopPercent).map_err(|_| format!("invalid threshold value `{value}`")),
            "min_balance" => value.parse().map(Self::MinBalance).map_err(bad),
            _ => Err(format!("unknown threshold kind `{kind}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub resource_window: ResourceWindow,
    pub population_window: PopulationWindow,
    pub population_anchor: PopulationAnchor,
    #[serde(with = "seconds")]
    pub frequency: Duration,
    pub threshold: Threshold,
}

impl Default for WindowConfig {
    /// Weekly snapshots of 7-day windows with a population window twice as long.
    fn default() -> Self {
        Self {
            resource_window: ResourceWindow::days(7),
            population_window: PopulationWindow::Factor(2.0),
            population_anchor: PopulationAnchor::Centered,
            frequency: Duration::days(7),
            threshold: Threshold::None,
        }
    }
}

/// Non-fatal observations made while building distributions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowWarning {
    /// Frequency shorter than the resource window: snapshots share blocks.
    OverlappingWindows,
    /// Fewer than 150 blocks in the resource window.
    SmallWindow { snapshot: DateTime<Utc>, blocks: usize },
}

impl WindowConfig {
    /// Checks invariants and returns configuration-level warnings.
    pub fn validate(&self) -> Result<Vec<WindowWarning>, WindowError> {
        if self.frequency <= Duration::zero() {
            return Err(WindowError::NonPositiveFrequency);
        }
        match self.resource_window {
            ResourceWindow::Time(d) if d <= Duration::zero() => return Err(WindowError::NonPositiveWindow),
            ResourceWindow::Blocks(0) => return Err(WindowError::NonPositiveWindow),
            _ => {}
        }
        if let PopulationWindow::Factor(k) = self.population_window {
            if !(k.is_finite() && k >= 1.0) {
                return Err(WindowError::InvalidFactor(k));
            }
        }
        self.threshold.validate()?;
        Ok(if self.overlapping() {
            vec![WindowWarning::OverlappingWindows]
        } else {
            Vec::new()
        })
    }

    /// Whether consecutive time-based resource windows overlap.
    pub fn overlapping(&self) -> bool {
        match self.resource_window {
            ResourceWindow::Time(d) => self.frequency < d,
            ResourceWindow::Blocks(_) => false,
        }
    }

    /// Offset of the first snapshot from the study start.
    fn lead(&self) -> Duration {
        match self.resource_window {
            ResourceWindow::Time(d) => d,
            ResourceWindow::Blocks(_) => self.frequency,
        }
    }
}

/// `t_i = start + lead + i * frequency` for every `t_i` before the study end.
pub fn snapshot_sequence(
    study: StudyWindow,
    lead: Duration,
    frequency: Duration,
) -> Result<Vec<DateTime<Utc>>, WindowError> {
    if frequency <= Duration::zero() {
        return Err(WindowError::NonPositiveFrequency);
    }
    let mut out = Vec::new();
    let mut t = study.start + lead;
    while t < study.end {
        out.push(t);
        t += frequency;
    }
    if out.is_empty() {
        return Err(WindowError::EmptyStudyWindow);
    }
    Ok(out)
}

/// Snapshot instants for a configuration; the first lands one resource window in.
pub fn snapshot_times(study: StudyWindow, cfg: &WindowConfig) -> Result<Vec<DateTime<Utc>>, WindowError> {
    snapshot_sequence(study, cfg.lead(), cfg.frequency)
}

/// Consensus distribution plus the block count of its resource window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusSnapshot {
    pub distribution: ResourceDistribution,
    pub resource_blocks: usize,
    pub warnings: Vec<WindowWarning>,
}

/// Attribution date for a snapshot: the last day its resource window covers.
pub fn attribution_date(t: DateTime<Utc>) -> NaiveDate {
    (t - Duration::seconds(1)).date_naive()
}

fn clip(ledger: &EventLedger, from: DateTime<Utc>, to: DateTime<Utc>) -> std::ops::Range<usize> {
    let study = ledger.study_window();
    ledger.block_range(from.max(study.start), to.min(study.end))
}

/// Block index ranges of the resource and population windows ending at `t`.
pub fn window_ranges(
    ledger: &EventLedger,
    t: DateTime<Utc>,
    cfg: &WindowConfig,
) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>), WindowError> {
    let n_blocks = ledger.blocks().len();
    let resource = match cfg.resource_window {
        ResourceWindow::Time(len) => ledger.block_range(t - len, t),
        ResourceWindow::Blocks(n) => {
            let hi = ledger.blocks().partition_point(|b| b.timestamp < t);
            if hi < n {
                return Err(WindowError::IncompleteWindow {
                    snapshot: t,
                    available: hi,
                    required: n,
                });
            }
            hi - n..hi
        }
    };
    if resource.is_empty() {
        return Err(WindowError::EmptyWindow(t));
    }
    let population = match (cfg.population_window, cfg.resource_window) {
        (PopulationWindow::Same, _) => resource.clone(),
        (PopulationWindow::AllTime, _) => 0..n_blocks,
        (PopulationWindow::Factor(k), ResourceWindow::Time(len)) => {
            let extra = Duration::seconds((len.num_seconds() as f64 * (k - 1.0)).round() as i64);
            let range = match cfg.population_anchor {
                PopulationAnchor::Centered => {
                    let before = Duration::seconds(extra.num_seconds() / 2);
                    clip(ledger, t - len - before, t + (extra - before))
                }
                PopulationAnchor::Trailing => clip(ledger, t - len - extra, t),
            };
            range.start.min(resource.start)..range.end.max(resource.end)
        }
        (PopulationWindow::Factor(k), ResourceWindow::Blocks(n)) => {
            let extra = ((n as f64) * (k - 1.0)).round() as usize;
            match cfg.population_anchor {
                PopulationAnchor::Centered => {
                    let before = extra / 2;
                    resource.start.saturating_sub(before)..(resource.end + (extra - before)).min(n_blocks)
                }
                PopulationAnchor::Trailing => resource.start.saturating_sub(extra)..resource.end,
            }
        }
    };
    Ok((resource, population))
}

/// Blocks-per-entity distribution at snapshot `t`.
pub fn consensus_distribution(
    ledger: &EventLedger,
    resolver: &Resolver<'_>,
    t: DateTime<Utc>,
    cfg: &WindowConfig,
) -> Result<ConsensusSnapshot, WindowError> {
    let as_of = attribution_date(t);
    consensus_distribution_with(ledger, t, cfg, |i| {
        Cow::Owned(resolver.resolve_block_creator(&ledger.blocks()[i], as_of))
    })
}

/// Like [`consensus_distribution`] with a caller-supplied creator lookup by block index.
pub fn consensus_distribution_with<'c, F>(
    ledger: &EventLedger,
    t: DateTime<Utc>,
    cfg: &WindowConfig,
    creator: F,
) -> Result<ConsensusSnapshot, WindowError>
where
    F: Fn(usize) -> Cow<'c, str>,
{
    let (resource, population_range) = window_ranges(ledger, t, cfg)?;
    let mut entries: BTreeMap<String, u64> = BTreeMap::new();
    for i in resource.clone() {
        *entries.entry(creator(i).into_owned()).or_insert(0) += 1;
    }
    let mut population: BTreeSet<String> = entries.keys().cloned().collect();
    for i in population_range {
        if !resource.contains(&i) {
            let c = creator(i);
            if !population.contains(c.as_ref()) {
                population.insert(c.into_owned());
            }
        }
    }
    let resource_blocks = resource.len();
    let mut warnings = Vec::new();
    if resource_blocks < MIN_RECOMMENDED_WINDOW_BLOCKS {
        warnings.push(WindowWarning::SmallWindow {
            snapshot: t,
            blocks: resource_blocks,
        });
    }
    Ok(ConsensusSnapshot {
        distribution: ResourceDistribution::new(t, entries, population, ResourceKind::Blocks)?,
        resource_blocks,
        warnings,
    })
}

/// Token balances summed per entity on `date`; the population is every holder.
pub fn tokenomics_distribution(
    ledger: &EventLedger,
    resolver: &Resolver<'_>,
    date: NaiveDate,
) -> Result<ResourceDistribution, WindowError> {
    let records = ledger
        .balance_snapshots()
        .get(&date)
        .ok_or(WindowError::MissingSnapshot(date))?;
    let mut entries: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        let entity = resolver.resolve_entity(&r.address, date).entity_id;
        let slot = entries.entry(entity.clone()).or_insert(0);
        *slot = slot
            .checked_add(r.balance)
            .ok_or(WindowError::Overflow { entity })?;
    }
    let snapshot = date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
    Ok(ResourceDistribution::from_entries(snapshot, entries, ResourceKind::Tokens))
}

/// Restricts a fully estimated distribution to the members selected by `threshold`.
pub fn apply_threshold(d: &ResourceDistribution, threshold: Threshold) -> Result<ResourceDistribution, WindowError> {
    threshold.validate()?;
    let keep: BTreeSet<String> = match threshold {
        Threshold::None => return Ok(d.clone()),
        Threshold::TopK(k) => d
            .ranked()
            .into_iter()
            .take(k as usize)
            .map(|(e, _)| e.to_string())
            .collect(),
        Threshold::TopPercent(p) => {
            let n = d.n();
            // guard against 50% of 4 evaluating to 2.0000000000000004
            let count = ((p / 100.0 * n as f64) - 1e-9).ceil().max(0.0) as usize;
            d.ranked()
                .into_iter()
                .take(count.min(n))
                .map(|(e, _)| e.to_string())
                .collect()
        }
        Threshold::MinBalance(b) => d
            .ranked()
            .into_iter()
            .filter(|(_, a)| *a > b as u64)
            .map(|(e, _)| e.to_string())
            .collect(),
    };
    let entries = d
        .entries()
        .iter()
        .filter(|(e, _)| keep.contains(*e))
        .map(|(e, a)| (e.clone(), *a))
        .collect();
    Ok(ResourceDistribution::new(d.snapshot(), entries, keep, d.kind())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ClusterMap, EntityMap};
    use crate::model::BlockRecord;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn day(d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 1, d, 0, 0, 0).unwrap()
    }

    fn study(a: u32, b: u32) -> StudyWindow {
        StudyWindow::new(day(a), day(b)).unwrap()
    }

    fn dist(entries: &[(&str, u64)]) -> ResourceDistribution {
        ResourceDistribution::from_entries(
            day(1),
            entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ResourceKind::Tokens,
        )
    }

    fn ids(d: &ResourceDistribution) -> Vec<&str> {
        d.population().iter().map(String::as_str).collect()
    }

    /// Ledger with one block per (day, creator) pair at noon.
    fn ledger(blocks: &[(u32, &str)], window: StudyWindow) -> EventLedger {
        let records = blocks
            .iter()
            .enumerate()
            .map(|(h, (d, who))| {
                BlockRecord::new(h as u64, day(*d) + Duration::hours(12), vec![who.to_string()], None).unwrap()
            })
            .collect();
        EventLedger::new("test", records, BTreeMap::new(), window).unwrap()
    }

    #[test]
    fn snapshot_sequence_examples() {
        let cfg = WindowConfig {
            frequency: Duration::days(7),
            ..Default::default()
        };
        assert_eq!(snapshot_times(study(1, 29), &cfg).unwrap(), vec![day(8), day(15), day(22)]);
        let cfg = WindowConfig {
            frequency: Duration::days(1),
            ..Default::default()
        };
        assert_eq!(snapshot_times(study(1, 9), &cfg).unwrap(), vec![day(8)]);
        assert_eq!(
            snapshot_sequence(study(1, 9), Duration::days(7), Duration::zero()),
            Err(WindowError::NonPositiveFrequency)
        );
        assert_eq!(
            snapshot_times(study(1, 5), &WindowConfig::default()),
            Err(WindowError::EmptyStudyWindow)
        );
    }

    #[test]
    fn share_follows_block_count() {
        let mut blocks = vec![(2, "A"); 4];
        blocks.extend(vec![(3, "B"); 6]);
        let l = ledger(&blocks, study(1, 20));
        let (c, e) = (ClusterMap::empty(), EntityMap::empty());
        let r = Resolver::new(&c, &e);
        let cfg = WindowConfig {
            population_window: PopulationWindow::Same,
            ..Default::default()
        };
        let snap = consensus_distribution(&l, &r, day(8), &cfg).unwrap();
        let shares = snap.distribution.shares::<f64>().unwrap();
        assert_eq!(snap.resource_blocks, 10);
        assert!(shares.contains(&("cluster:A".to_string(), 0.4)));
        assert!(matches!(snap.warnings[0], WindowWarning::SmallWindow { blocks: 10, .. }));
    }

    #[test]
    fn population_window_admits_idle_producers() {
        // B mines only on day 9, after the resource window [1, 8)
        let l = ledger(&[(2, "A"), (3, "A"), (9, "B"), (20, "C")], study(1, 30));
        let (c, e) = (ClusterMap::empty(), EntityMap::empty());
        let r = Resolver::new(&c, &e);
        let base = WindowConfig::default();
        let snap = consensus_distribution(&l, &r, day(8), &base).unwrap().distribution;
        assert_eq!(ids(&snap), vec!["cluster:A", "cluster:B"]);
        assert_eq!(snap.amount("cluster:B"), 0);

        let all = WindowConfig {
            population_window: PopulationWindow::AllTime,
            ..base.clone()
        };
        let snap = consensus_distribution(&l, &r, day(8), &all).unwrap().distribution;
        assert_eq!(snap.n(), 3);

        let same = WindowConfig {
            population_window: PopulationWindow::Same,
            ..base.clone()
        };
        assert_eq!(consensus_distribution(&l, &r, day(8), &same).unwrap().distribution.n(), 1);

        let trailing = WindowConfig {
            population_anchor: PopulationAnchor::Trailing,
            ..base
        };
        assert_eq!(consensus_distribution(&l, &r, day(8), &trailing).unwrap().distribution.n(), 1);
    }

    #[test]
    fn empty_resource_window_errors() {
        let l = ledger(&[(20, "A")], study(1, 30));
        let (c, e) = (ClusterMap::empty(), EntityMap::empty());
        let r = Resolver::new(&c, &e);
        assert_eq!(
            consensus_distribution(&l, &r, day(8), &WindowConfig::default()),
            Err(WindowError::EmptyWindow(day(8)))
        );
    }

    #[test]
    fn block_count_windows() {
        let blocks: Vec<(u32, &str)> = (1..=10).map(|d| (d, if d % 2 == 0 { "A" } else { "B" })).collect();
        let l = ledger(&blocks, study(1, 30));
        let (c, e) = (ClusterMap::empty(), EntityMap::empty());
        let r = Resolver::new(&c, &e);
        let cfg = WindowConfig {
            resource_window: ResourceWindow::Blocks(4),
            population_window: PopulationWindow::Same,
            ..Default::default()
        };
        let snap = consensus_distribution(&l, &r, day(11), &cfg).unwrap();
        assert_eq!(snap.resource_blocks, 4);
        assert_eq!(snap.distribution.total(), 4);
        assert!(matches!(
            consensus_distribution(&l, &r, day(3), &cfg),
            Err(WindowError::IncompleteWindow { available: 2, .. })
        ));
    }

    #[test]
    fn tokenomics_aggregates_clusters() {
        let date = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        let recs = vec![
            crate::model::BalanceRecord { address: "a".into(), balance: 5, snapshot_date: date },
            crate::model::BalanceRecord { address: "b".into(), balance: 7, snapshot_date: date },
        ];
        let l = EventLedger::new(
            "t",
            vec![],
            EventLedger::group_balances(recs),
            study(1, 2),
        )
        .unwrap();
        let clusters = crate::cluster::build_multi_input_clusters(&[crate::ingest::TxInputs {
            tx_id: "t".into(),
            addresses: vec!["a".into(), "b".into()],
        }]);
        let e = EntityMap::empty();
        let d = tokenomics_distribution(&l, &Resolver::new(&clusters, &e), date).unwrap();
        assert_eq!(d.entries().get("cluster:a"), Some(&12));
        let empty = ClusterMap::empty();
        let d = tokenomics_distribution(&l, &Resolver::new(&empty, &e), date).unwrap();
        assert_eq!(d.n(), 2);
        let other = NaiveDate::from_ymd_opt(2020, 7, 1).unwrap();
        assert_eq!(
            tokenomics_distribution(&l, &Resolver::new(&empty, &e), other),
            Err(WindowError::MissingSnapshot(other))
        );
    }

    #[test]
    fn thresholds() {
        let d = dist(&[("A", 5), ("B", 3), ("C", 1)]);
        assert_eq!(ids(&apply_threshold(&d, Threshold::TopK(2)).unwrap()), vec!["A", "B"]);
        assert_eq!(ids(&apply_threshold(&d, Threshold::MinBalance(1)).unwrap()), vec!["A", "B"]);
        let d4 = dist(&[("A", 5), ("B", 3), ("C", 1), ("D", 1)]);
        let top = apply_threshold(&d4, Threshold::TopPercent(50.0)).unwrap();
        assert_eq!(ids(&top), vec!["A", "B"]);
        assert_eq!(top.total(), 8);
        assert_eq!(apply_threshold(&d, Threshold::None).unwrap(), d);
        for bad in [Threshold::TopK(0), Threshold::TopPercent(0.0), Threshold::TopPercent(101.0), Threshold::MinBalance(-1)] {
            assert!(matches!(apply_threshold(&d, bad), Err(WindowError::InvalidThreshold(_))));
        }
    }

    #[test]
    fn top_k_ties_by_id() {
        let d = dist(&[("b", 2), ("a", 2), ("c", 1)]);
        assert_eq!(ids(&apply_threshold(&d, Threshold::TopK(1)).unwrap()), vec!["a"]);
    }

    #[test]
    fn threshold_and_window_strings() {
        for s in ["none", "top_k:10", "top_percent:50", "min_balance:1000"] {
            assert_eq!(s.parse::<Threshold>().unwrap().to_string(), s);
        }
        for s in ["same", "all_time", "factor:2"] {
            assert_eq!(s.parse::<PopulationWindow>().unwrap().to_string(), s);
        }
        assert!("top:3".parse::<Threshold>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = WindowConfig::default();
        assert!(ok.validate().unwrap().is_empty());
        let overlap = WindowConfig {
            frequency: Duration::days(1),
            ..ok.clone()
        };
        assert_eq!(overlap.validate().unwrap(), vec![WindowWarning::OverlappingWindows]);
        let bad = WindowConfig {
            population_window: PopulationWindow::Factor(0.5),
            ..ok
        };
        assert_eq!(bad.validate(), Err(WindowError::InvalidFactor(0.5)));
    }

    fn arb_dist() -> impl Strategy<Value = ResourceDistribution> {
        (prop::collection::vec(0u64..50, 1..25), 0usize..5).prop_map(|(amounts, zeros)| {
            let entries: BTreeMap<String, u64> =
                amounts.iter().enumerate().map(|(i, a)| (format!("e{i:02}"), *a)).collect();
            let mut population: BTreeSet<String> = entries.keys().cloned().collect();
            for z in 0..zeros {
                population.insert(format!("z{z}"));
            }
            ResourceDistribution::new(day(1), entries, population, ResourceKind::Tokens).unwrap()
        })
    }

    fn arb_threshold() -> impl Strategy<Value = Threshold> {
        prop_oneof![
            Just(Threshold::None),
            (1i64..30).prop_map(Threshold::TopK),
            (0i64..40).prop_map(Threshold::MinBalance),
        ]
    }

    proptest! {
        #[test]
        fn threshold_idempotent(d in arb_dist(), th in arb_threshold()) {
            let once = apply_threshold(&d, th).unwrap();
            let twice = apply_threshold(&once, th).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn top_k_at_least_n_is_identity(d in arb_dist(), extra in 0i64..5) {
            let k = d.n() as i64 + extra;
            prop_assert_eq!(apply_threshold(&d, Threshold::TopK(k)).unwrap(), d);
        }
    }
}
