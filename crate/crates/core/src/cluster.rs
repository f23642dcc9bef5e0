//! Address clustering and entity resolution.
//!
//! Addresses are grouped with a union-find forest (multi-input co-spending,
//! shared stake keys). Clusters are then resolved to entities through tags,
//! falling back to a synthetic `cluster:<representative>` id, and finally
//! through time-ranged acquisition merges.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use log::warn;
use thiserror::Error;

use crate::ingest::{AttributionKind, AttributionRecord, StakeKeyRecord, TxInputs};
use crate::model::BlockRecord;

/// Prefix of synthetic entity ids derived from address clusters.
pub const CLUSTER_PREFIX: &str = "cluster:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("acquisition links form a cycle through entity {0}")]
    MergeCycle(String),
}

/// Mutable union-find with path compression and union by size.
#[derive(Debug, Default, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `address`, inserting it as a singleton if unseen.
    pub fn insert(&mut self, address: &str) -> usize {
        if let Some(&i) = self.index.get(address) {
            return i;
        }
        let i = self.parent.len();
        self.parent.push(i);
        self.size.push(1);
        self.index.insert(address.to_string(), i);
        self.names.push(address.to_string());
        i
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        ra
    }

    /// Unions every address of the group together.
    pub fn add_group<'a>(&mut self, group: impl IntoIterator<Item = &'a str>) {
        let mut first = None;
        for a in group {
            let i = self.insert(a);
            match first {
                None => first = Some(i),
                Some(f) => {
                    self.union(f, i);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Freezes the forest into an immutable [`ClusterMap`].
    pub fn build(mut self) -> ClusterMap {
        let mut members: HashMap<usize, Vec<String>> = HashMap::new();
        for i in 0..self.parent.len() {
            let r = self.find(i);
            members.entry(r).or_default().push(self.names[i].clone());
        }
        let mut representative = HashMap::with_capacity(self.parent.len());
        let mut clusters = BTreeMap::new();
        for (_, mut group) in members {
            group.sort();
            let rep = group[0].clone();
            for a in &group {
                representative.insert(a.clone(), rep.clone());
            }
            clusters.insert(rep, group);
        }
        ClusterMap {
            representative,
            clusters,
        }
    }
}

/// Read-only address partition.
///
/// The representative of each set is its lexicographically smallest address,
/// so the result does not depend on insertion order.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    representative: HashMap<String, String>,
    clusters: BTreeMap<String, Vec<String>>,
}

impl ClusterMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Representative of the address's cluster; unknown addresses are their own.
    pub fn find<'a>(&'a self, address: &'a str) -> &'a str {
        self.representative
            .get(address)
            .map(String::as_str)
            .unwrap_or(address)
    }

    /// Sorted members of the cluster containing `address`.
    pub fn members(&self, address: &str) -> Option<&[String]> {
        self.clusters.get(self.find(address)).map(Vec::as_slice)
    }

    /// Every cluster keyed by representative, members sorted.
    pub fn clusters(&self) -> &BTreeMap<String, Vec<String>> {
        &self.clusters
    }

    /// Partition as a set of sorted member sets.
    pub fn partition(&self) -> BTreeSet<Vec<String>> {
        self.clusters.values().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn address_count(&self) -> usize {
        self.representative.len()
    }
}

/// Multi-input heuristic: addresses co-spent in one transaction share an owner.
pub fn build_multi_input_clusters(txs: &[TxInputs]) -> ClusterMap {
    let mut uf = UnionFind::new();
    for tx in txs {
        uf.add_group(tx.addresses.iter().map(String::as_str));
    }
    uf.build()
}

/// Groups addresses that share a stake key; keyless addresses stay singletons.
pub fn build_stake_key_clusters(pairs: &[StakeKeyRecord]) -> ClusterMap {
    let mut uf = UnionFind::new();
    let mut by_key: HashMap<&str, usize> = HashMap::new();
    for p in pairs {
        let i = uf.insert(&p.address);
        if let Some(k) = &p.stake_key {
            match by_key.get(k.as_str()) {
                Some(&j) => {
                    uf.union(i, j);
                }
                None => {
                    by_key.insert(k, i);
                }
            }
        }
    }
    uf.build()
}

/// Combines both heuristics into one partition.
pub fn build_clusters(txs: &[TxInputs], stake_keys: &[StakeKeyRecord]) -> ClusterMap {
    let mut uf = UnionFind::new();
    for tx in txs {
        uf.add_group(tx.addresses.iter().map(String::as_str));
    }
    let mut by_key: HashMap<&str, &str> = HashMap::new();
    for p in stake_keys {
        uf.insert(&p.address);
        if let Some(k) = &p.stake_key {
            if let Some(first) = by_key.get(k.as_str()) {
                uf.add_group([*first, p.address.as_str()]);
            } else {
                by_key.insert(k, &p.address);
            }
        }
    }
    uf.build()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Dated {
    entity: String,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
}

impl Dated {
    fn active_on(&self, date: NaiveDate) -> bool {
        self.from.is_none_or(|f| f <= date) && self.to.is_none_or(|t| date <= t)
    }
}

/// Acquisition: `child` is absorbed into `parent` from `effective_from` on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merge {
    pub child: String,
    pub parent: String,
    pub effective_from: Option<NaiveDate>,
    pub effective_to: Option<NaiveDate>,
}

/// Tag and acquisition knowledge used to name entities.
#[derive(Debug, Default, Clone)]
pub struct EntityMap {
    address_to_entity: HashMap<String, Vec<Dated>>,
    tag_to_entity: HashMap<String, Vec<Dated>>,
    merges: Vec<Merge>,
}

impl EntityMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds the map from attribution records, rejecting cyclic acquisition chains.
    pub fn from_records(records: &[AttributionRecord]) -> Result<Self, ClusterError> {
        let mut map = Self::default();
        for r in records {
            let dated = Dated {
                entity: r.entity_id.clone(),
                from: r.effective_from,
                to: r.effective_to,
            };
            match r.kind {
                AttributionKind::AddressTag => {
                    map.address_to_entity.entry(r.key.clone()).or_default().push(dated)
                }
                AttributionKind::BlockTag => {
                    map.tag_to_entity.entry(r.key.clone()).or_default().push(dated)
                }
                AttributionKind::LegalLink => map.merges.push(Merge {
                    child: r.key.clone(),
                    parent: r.entity_id.clone(),
                    effective_from: r.effective_from,
                    effective_to: r.effective_to,
                }),
            }
        }
        map.check_acyclic()?;
        Ok(map)
    }

    fn check_acyclic(&self) -> Result<(), ClusterError> {
        let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for m in &self.merges {
            edges.entry(m.child.as_str()).or_default().push(m.parent.as_str());
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<&str, u8> = HashMap::new();
        fn visit<'a>(
            node: &'a str,
            edges: &BTreeMap<&'a str, Vec<&'a str>>,
            state: &mut HashMap<&'a str, u8>,
        ) -> Result<(), ClusterError> {
            match state.get(node) {
                Some(1) => return Err(ClusterError::MergeCycle(node.to_string())),
                Some(2) => return Ok(()),
                _ => {}
            }
            state.insert(node, 1);
            for next in edges.get(node).into_iter().flatten() {
                visit(next, edges, state)?;
            }
            state.insert(node, 2);
            Ok(())
        }
        for node in edges.keys() {
            visit(node, &edges, &mut state)?;
        }
        Ok(())
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn is_empty(&self) -> bool {
        self.address_to_entity.is_empty() && self.tag_to_entity.is_empty() && self.merges.is_empty()
    }

    fn lookup<'a>(table: &'a HashMap<String, Vec<Dated>>, key: &str, as_of: NaiveDate) -> Vec<&'a str> {
        let mut hits: Vec<&'a str> = table
            .get(key)
            .into_iter()
            .flatten()
            .filter(|d| d.active_on(as_of))
            .map(|d| d.entity.as_str())
            .collect();
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    /// Follows acquisition links active on `as_of` until a fixed point.
    ///
    /// When a child has several active parents, the most recent link wins
    /// (ties by smallest parent id).
    pub fn apply_merges(&self, entity: &str, as_of: NaiveDate) -> String {
        let mut current = entity.to_string();
        // acyclic by construction, so at most merges.len() hops
        for _ in 0..=self.merges.len() {
            let next = self
                .merges
                .iter()
                .filter(|m| {
                    m.child == current
                        && m.effective_from.is_none_or(|f| f <= as_of)
                        && m.effective_to.is_none_or(|t| as_of <= t)
                })
                .max_by(|a, b| {
                    a.effective_from
                        .cmp(&b.effective_from)
                        .then_with(|| b.parent.cmp(&a.parent))
                });
            match next {
                Some(m) => current = m.parent.clone(),
                None => break,
            }
        }
        current
    }
}

/// Outcome of resolving one address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub entity_id: String,
    /// Whether the entity came from a tag (directly or via the cluster) rather than the fallback.
    pub known: bool,
    /// Distinct entities tagged inside the cluster when more than one applied.
    pub conflict: Option<Vec<String>>,
}

/// Read-only view combining a cluster partition with entity knowledge.
///
/// Safe to share across threads once built.
#[derive(Debug, Clone)]
pub struct Resolver<'a> {
    clusters: &'a ClusterMap,
    entities: &'a EntityMap,
    tagged_members: HashMap<&'a str, Vec<&'a str>>,
}

impl<'a> Resolver<'a> {
    pub fn new(clusters: &'a ClusterMap, entities: &'a EntityMap) -> Self {
        let mut tagged_members: HashMap<&'a str, Vec<&'a str>> = HashMap::new();
        for address in entities.address_to_entity.keys() {
            let rep = clusters.find(address);
            tagged_members.entry(rep).or_default().push(address.as_str());
        }
        for v in tagged_members.values_mut() {
            v.sort_unstable();
        }
        Self {
            clusters,
            entities,
            tagged_members,
        }
    }

    pub fn clusters(&self) -> &ClusterMap {
        self.clusters
    }

    pub fn entities(&self) -> &EntityMap {
        self.entities
    }

    /// Resolves an address: direct tag, then any tagged cluster member, then
    /// `cluster:<representative>`; acquisition merges are applied last.
    pub fn resolve_entity(&self, address: &str, as_of: NaiveDate) -> Resolution {
        let direct = EntityMap::lookup(&self.entities.address_to_entity, address, as_of);
        let (base, known, conflict) = if !direct.is_empty() {
            let conflict = (direct.len() > 1).then(|| direct.iter().map(|s| s.to_string()).collect());
            (direct[0].to_string(), true, conflict)
        } else {
            let rep = self.clusters.find(address);
            let mut hits: Vec<&str> = self
                .tagged_members
                .get(rep)
                .into_iter()
                .flatten()
                .flat_map(|m| EntityMap::lookup(&self.entities.address_to_entity, m, as_of))
                .collect();
            hits.sort_unstable();
            hits.dedup();
            if hits.is_empty() {
                (format!("{CLUSTER_PREFIX}{rep}"), false, None)
            } else {
                let conflict = (hits.len() > 1).then(|| hits.iter().map(|s| s.to_string()).collect());
                (hits[0].to_string(), true, conflict)
            }
        };
        if let Some(c) = &conflict {
            warn!("address {address}: cluster tagged to several entities {c:?}; using {base}");
        }
        Resolution {
            entity_id: self.entities.apply_merges(&base, as_of),
            known,
            conflict,
        }
    }

    /// Resolves the producer of a block: coinbase tag, then the first reward
    /// address that resolves to a known entity, then a synthetic id over the
    /// sorted reward-address clusters.
    pub fn resolve_block_creator(&self, block: &BlockRecord, as_of: NaiveDate) -> String {
        if let Some(tag) = &block.creator_tag {
            let hits = EntityMap::lookup(&self.entities.tag_to_entity, tag, as_of);
            if let Some(first) = hits.first() {
                if hits.len() > 1 {
                    warn!("block {}: tag {tag} maps to several entities {hits:?}; using {first}", block.height);
                }
                return self.entities.apply_merges(first, as_of);
            }
        }
        for address in &block.reward_addresses {
            let r = self.resolve_entity(address, as_of);
            if r.known {
                return r.entity_id;
            }
        }
        let reps: BTreeSet<&str> = block
            .reward_addresses
            .iter()
            .map(|a| self.clusters.find(a))
            .collect();
        let joined: Vec<&str> = reps.into_iter().collect();
        let synthetic = format!("{CLUSTER_PREFIX}{}", joined.join("|"));
        self.entities.apply_merges(&synthetic, as_of)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn tx(id: &str, addrs: &[&str]) -> TxInputs {
        TxInputs {
            tx_id: id.into(),
            addresses: addrs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn rec(kind: AttributionKind, key: &str, entity: &str, from: Option<&str>) -> AttributionRecord {
        AttributionRecord {
            kind,
            key: key.into(),
            entity_id: entity.into(),
            effective_from: from.map(date),
            effective_to: None,
            source: String::new(),
        }
    }

    fn block(addrs: &[&str], tag: Option<&str>) -> BlockRecord {
        BlockRecord::new(
            1,
            Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
            addrs.iter().map(|s| s.to_string()).collect(),
            tag.map(str::to_string),
        )
        .unwrap()
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new();
        let a = uf.insert("a");
        let b = uf.insert("b");
        let c = uf.insert("c");
        uf.union(a, b);
        assert_eq!(uf.find(a), uf.find(b));
        assert_ne!(uf.find(a), uf.find(c));
        let r = uf.find(a);
        assert_eq!(uf.find(r), r);
    }

    #[test]
    fn multi_input_chains_connect() {
        let m = build_multi_input_clusters(&[tx("t1", &["a", "b"]), tx("t2", &["b", "c"]), tx("t3", &["d"])]);
        let expected: BTreeSet<Vec<String>> = [vec!["a", "b", "c"], vec!["d"]]
            .into_iter()
            .map(|v| v.into_iter().map(String::from).collect())
            .collect();
        assert_eq!(m.partition(), expected);
        assert_eq!(m.find("c"), "a");
    }

    #[test]
    fn multi_input_trivial_cases() {
        let single = build_multi_input_clusters(&[tx("t1", &["a"])]);
        assert_eq!(single.members("a").unwrap(), &["a".to_string()]);
        assert!(build_multi_input_clusters(&[]).is_empty());
    }

    #[test]
    fn stake_key_grouping() {
        let pairs = |v: &[(&str, Option<&str>)]| -> Vec<StakeKeyRecord> {
            v.iter()
                .map(|(a, k)| StakeKeyRecord {
                    address: a.to_string(),
                    stake_key: k.map(str::to_string),
                })
                .collect()
        };
        let m = build_stake_key_clusters(&pairs(&[("a", Some("k1")), ("b", Some("k1")), ("c", Some("k2"))]));
        assert_eq!(m.find("b"), "a");
        assert_eq!(m.find("c"), "c");
        let m = build_stake_key_clusters(&pairs(&[("a", None), ("b", None)]));
        assert_eq!(m.clusters().len(), 2);
        assert!(build_stake_key_clusters(&[]).is_empty());
    }

    #[test]
    fn resolve_through_tagged_cluster_member() {
        let clusters = build_multi_input_clusters(&[tx("t", &["a", "b"])]);
        let entities = EntityMap::from_records(&[rec(AttributionKind::AddressTag, "a", "Exchange1", None)]).unwrap();
        let r = Resolver::new(&clusters, &entities);
        let res = r.resolve_entity("b", date("2021-01-01"));
        assert_eq!(res.entity_id, "Exchange1");
        assert!(res.known);
        assert_eq!(r.resolve_entity("x", date("2021-01-01")).entity_id, "cluster:x");
    }

    #[test]
    fn acquisition_applies_after_effective_date() {
        let clusters = ClusterMap::empty();
        let entities = EntityMap::from_records(&[
            rec(AttributionKind::AddressTag, "addr", "BTC.COM", None),
            rec(AttributionKind::LegalLink, "BTC.COM", "BITMining", Some("2021-04-01")),
        ])
        .unwrap();
        let r = Resolver::new(&clusters, &entities);
        assert_eq!(r.resolve_entity("addr", date("2021-05-01")).entity_id, "BITMining");
        assert_eq!(r.resolve_entity("addr", date("2021-03-31")).entity_id, "BTC.COM");
    }

    #[test]
    fn conflicting_tags_pick_smallest() {
        let clusters = build_multi_input_clusters(&[tx("t", &["a", "b", "c"])]);
        let entities = EntityMap::from_records(&[
            rec(AttributionKind::AddressTag, "a", "Zeta", None),
            rec(AttributionKind::AddressTag, "b", "Alpha", None),
        ])
        .unwrap();
        let r = Resolver::new(&clusters, &entities);
        let res = r.resolve_entity("c", date("2021-01-01"));
        assert_eq!(res.entity_id, "Alpha");
        assert_eq!(res.conflict, Some(vec!["Alpha".to_string(), "Zeta".to_string()]));
    }

    #[test]
    fn merge_cycles_rejected() {
        let err = EntityMap::from_records(&[
            rec(AttributionKind::LegalLink, "A", "B", None),
            rec(AttributionKind::LegalLink, "B", "A", None),
        ]);
        assert!(matches!(err, Err(ClusterError::MergeCycle(_))));
    }

    #[test]
    fn block_creator_precedence() {
        let clusters = ClusterMap::empty();
        let entities = EntityMap::from_records(&[
            rec(AttributionKind::BlockTag, "AntPool", "AntPool_entity", None),
            rec(AttributionKind::AddressTag, "f2addr", "F2Pool", None),
        ])
        .unwrap();
        let r = Resolver::new(&clusters, &entities);
        let d = date("2021-01-01");
        assert_eq!(r.resolve_block_creator(&block(&["x"], Some("AntPool")), d), "AntPool_entity");
        assert_eq!(r.resolve_block_creator(&block(&["u", "f2addr"], None), d), "F2Pool");
        assert_eq!(r.resolve_block_creator(&block(&["z", "y"], None), d), "cluster:y|z");
        // unknown tag falls through to addresses
        assert_eq!(r.resolve_block_creator(&block(&["f2addr"], Some("??")), d), "F2Pool");
    }

    proptest! {
        #[test]
        fn fallback_is_injective(sets in prop::collection::vec(
            prop::collection::btree_set("[a-e]{1,2}", 1..4), 1..12)
        ) {
            let clusters = ClusterMap::empty();
            let entities = EntityMap::empty();
            let r = Resolver::new(&clusters, &entities);
            let d = date("2021-01-01");
            let mut by_id: HashMap<String, BTreeSet<String>> = HashMap::new();
            for s in &sets {
                let addrs: Vec<&str> = s.iter().map(String::as_str).collect();
                let id = r.resolve_block_creator(&block(&addrs, None), d);
                if let Some(prev) = by_id.insert(id, s.clone()) {
                    prop_assert_eq!(&prev, s);
                }
            }
        }

        #[test]
        fn find_is_idempotent(groups in prop::collection::vec(prop::collection::vec(0u8..30, 1..5), 0..20)) {
            let txs: Vec<TxInputs> = groups
                .iter()
                .enumerate()
                .map(|(i, g)| TxInputs {
                    tx_id: format!("t{i}"),
                    addresses: g.iter().map(|a| format!("a{a}")).collect(),
                })
                .collect();
            let m = build_multi_input_clusters(&txs);
            for g in &groups {
                for a in g {
                    let addr = format!("a{a}");
                    let rep = m.find(&addr);
                    prop_assert_eq!(m.find(rep), rep);
                    let first = format!("a{}", g[0]);
                    prop_assert_eq!(m.find(&first), rep);
                }
            }
        }
    }
}
