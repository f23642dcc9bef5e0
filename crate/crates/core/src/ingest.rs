//! Canonical CSV (and JSON, for attribution) input formats.
//!
//! Every parser returns the valid records together with a [`ValidationReport`].
//! Row-level problems are collected in the report; only schema-level problems
//! (bad header, duplicate keys, negative balances, invalid merges) abort the parse.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BalanceRecord, BlockRecord};

pub const BLOCKS_HEADER: &[&str] = &["height", "timestamp", "reward_addresses", "creator_tag"];
pub const BALANCES_HEADER: &[&str] = &["address", "balance", "snapshot_date"];
pub const ATTRIBUTION_HEADER: &[&str] =
    &["kind", "key", "entity_id", "effective_from", "effective_to", "source"];
pub const TX_INPUTS_HEADER: &[&str] = &["tx_id", "input_addresses"];
pub const STAKE_KEYS_HEADER: &[&str] = &["address", "stake_key"];

/// Separator for multi-valued address cells.
pub const LIST_SEPARATOR: char = '|';

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("input has no data rows")]
    EmptyInput,
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("duplicate block height {height}")]
    DuplicateHeight { height: u64 },
    #[error("line {line}: negative balance for {address}")]
    NegativeBalance { line: u64, address: String },
    #[error("address {address} appears twice in snapshot {date}")]
    DuplicateAddressInSnapshot { address: String, date: NaiveDate },
    #[error("line {line}: legal link merges entity {entity} into itself")]
    SelfMerge { line: u64, entity: String },
    #[error("line {line}: effective_from {from} is after effective_to {to}")]
    InvertedDateRange { line: u64, from: NaiveDate, to: NaiveDate },
}

/// A non-fatal problem with a single input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowErrorKind {
    ParseError,
    EmptyInputList,
}

/// Machine-readable summary of one parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_dropped: usize,
    pub zero_balance_dropped: usize,
    pub row_errors: Vec<RowError>,
}

impl ValidationReport {
    fn reject(&mut self, line: u64, kind: RowErrorKind, message: impl Into<String>) {
        self.rows_dropped += 1;
        self.row_errors.push(RowError {
            line,
            kind,
            message: message.into(),
        });
    }
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionKind {
    AddressTag,
    BlockTag,
    LegalLink,
}

impl AttributionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionKind::AddressTag => "address_tag",
            AttributionKind::BlockTag => "block_tag",
            AttributionKind::LegalLink => "legal_link",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "address_tag" => Some(Self::AddressTag),
            "block_tag" => Some(Self::BlockTag),
            "legal_link" => Some(Self::LegalLink),
            _ => None,
        }
    }
}

/// Links an address, a coinbase tag, or a child entity to an entity.
///
/// For `legal_link`, `key` is the acquired (child) entity and `entity_id` the acquirer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub kind: AttributionKind,
    pub key: String,
    pub entity_id: String,
    #[serde(default)]
    pub effective_from: Option<NaiveDate>,
    #[serde(default)]
    pub effective_to: Option<NaiveDate>,
    #[serde(default)]
    pub source: String,
}

impl AttributionRecord {
    fn validate(&self, line: u64) -> Result<(), IngestError> {
        if let (Some(from), Some(to)) = (self.effective_from, self.effective_to) {
            if from > to {
                return Err(IngestError::InvertedDateRange { line, from, to });
            }
        }
        if self.kind == AttributionKind::LegalLink && self.key == self.entity_id {
            return Err(IngestError::SelfMerge {
                line,
                entity: self.key.clone(),
            });
        }
        Ok(())
    }

    /// Whether the record applies on `date`.
    pub fn active_on(&self, date: NaiveDate) -> bool {
        self.effective_from.is_none_or(|f| f <= date) && self.effective_to.is_none_or(|t| date <= t)
    }
}

/// Input addresses spent together by one transaction, deduplicated in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInputs {
    pub tx_id: String,
    pub addresses: Vec<String>,
}

/// Address with its (optional) delegation stake key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StakeKeyRecord {
    pub address: String,
    pub stake_key: Option<String>,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::EmptyInput);
    }
    let found: Vec<&str> = headers
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}'))
        .collect();
    if found != expected {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

/// 1-based file line of the `index`-th data row; the header is line 1.
fn line_of(index: usize) -> u64 {
    index as u64 + 2
}

/// Parses an ISO-8601 UTC timestamp, truncating to whole seconds.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s).ok()?;
    DateTime::<Utc>::from_timestamp(t.timestamp(), 0)
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn split_list(cell: &str) -> Option<Vec<String>> {
    let parts: Vec<String> = cell
        .split(LIST_SEPARATOR)
        .map(|p| p.trim().to_string())
        .collect();
    if parts.iter().any(|p| p.is_empty()) {
        None
    } else {
        Some(parts)
    }
}

fn optional(cell: &str) -> Option<String> {
    (!cell.is_empty()).then(|| cell.to_string())
}

/// Parses a blocks file (`height,timestamp,reward_addresses,creator_tag`).
pub fn parse_blocks<R: Read>(input: R) -> Result<Parsed<BlockRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, BLOCKS_HEADER)?;
    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row?;
        report.rows_read += 1;
        let line = line_of(index);
        if row.len() != BLOCKS_HEADER.len() {
            report.reject(line, RowErrorKind::ParseError, format!("expected 4 fields, found {}", row.len()));
            continue;
        }
        let Ok(height) = row[0].parse::<u64>() else {
            report.reject(line, RowErrorKind::ParseError, format!("invalid height `{}`", &row[0]));
            continue;
        };
        let Some(timestamp) = parse_timestamp(&row[1]) else {
            report.reject(line, RowErrorKind::ParseError, format!("invalid timestamp `{}`", &row[1]));
            continue;
        };
        let Some(addresses) = split_list(&row[2]) else {
            report.reject(line, RowErrorKind::ParseError, "empty reward address");
            continue;
        };
        match BlockRecord::new(height, timestamp, addresses, optional(&row[3])) {
            Ok(b) => records.push(b),
            Err(e) => report.reject(line, RowErrorKind::ParseError, e.to_string()),
        }
    }
    if report.rows_read == 0 {
        return Err(IngestError::EmptyInput);
    }
    records.sort_by_key(|b: &BlockRecord| b.height);
    if let Some(w) = records.windows(2).find(|w| w[0].height == w[1].height) {
        return Err(IngestError::DuplicateHeight { height: w[0].height });
    }
    report.rows_accepted = records.len();
    Ok(Parsed { records, report })
}

/// Parses a balances file (`address,balance,snapshot_date`). Zero balances are dropped and counted.
pub fn parse_balances<R: Read>(input: R) -> Result<Parsed<BalanceRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, BALANCES_HEADER)?;
    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    let mut seen: BTreeSet<(NaiveDate, String)> = BTreeSet::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row?;
        report.rows_read += 1;
        let line = line_of(index);
        if row.len() != BALANCES_HEADER.len() {
            report.reject(line, RowErrorKind::ParseError, format!("expected 3 fields, found {}", row.len()));
            continue;
        }
        let address = row[0].to_string();
        if address.is_empty() {
            report.reject(line, RowErrorKind::ParseError, "empty address");
            continue;
        }
        let raw = &row[1];
        if raw.starts_with('-') && raw.len() > 1 && raw[1..].bytes().all(|b| b.is_ascii_digit())
            && raw[1..].bytes().any(|b| b != b'0') {
                return Err(IngestError::NegativeBalance { line, address });
            }
        let Ok(balance) = raw.trim_start_matches('-').parse::<u64>() else {
            report.reject(line, RowErrorKind::ParseError, format!("invalid balance `{raw}`"));
            continue;
        };
        let Some(snapshot_date) = parse_date(&row[2]) else {
            report.reject(line, RowErrorKind::ParseError, format!("invalid date `{}`", &row[2]));
            continue;
        };
        if !seen.insert((snapshot_date, address.clone())) {
            return Err(IngestError::DuplicateAddressInSnapshot {
                address,
                date: snapshot_date,
            });
        }
        if balance == 0 {
            report.zero_balance_dropped += 1;
            report.rows_dropped += 1;
            continue;
        }
        records.push(BalanceRecord {
            address,
            balance,
            snapshot_date,
        });
    }
    if report.rows_read == 0 {
        return Err(IngestError::EmptyInput);
    }
    report.rows_accepted = records.len();
    Ok(Parsed { records, report })
}

/// Parses an attribution CSV (`kind,key,entity_id,effective_from,effective_to,source`).
pub fn parse_attribution<R: Read>(input: R) -> Result<Parsed<AttributionRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, ATTRIBUTION_HEADER)?;
    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row?;
        report.rows_read += 1;
        let line = line_of(index);
        if row.len() != ATTRIBUTION_HEADER.len() {
            report.reject(line, RowErrorKind::ParseError, format!("expected 6 fields, found {}", row.len()));
            continue;
        }
        let Some(kind) = AttributionKind::parse(&row[0]) else {
            report.reject(line, RowErrorKind::ParseError, format!("unknown kind `{}`", &row[0]));
            continue;
        };
        if row[1].is_empty() || row[2].is_empty() {
            report.reject(line, RowErrorKind::ParseError, "key and entity_id are required");
            continue;
        }
        let mut dates = [None, None];
        let mut bad_date = None;
        for (slot, cell) in dates.iter_mut().zip([&row[3], &row[4]]) {
            if !cell.is_empty() {
                match parse_date(cell) {
                    Some(d) => *slot = Some(d),
                    None => bad_date = Some(cell.to_string()),
                }
            }
        }
        if let Some(cell) = bad_date {
            report.reject(line, RowErrorKind::ParseError, format!("invalid date `{cell}`"));
            continue;
        }
        let record = AttributionRecord {
            kind,
            key: row[1].to_string(),
            entity_id: row[2].to_string(),
            effective_from: dates[0],
            effective_to: dates[1],
            source: row[5].to_string(),
        };
        record.validate(line)?;
        records.push(record);
    }
    if report.rows_read == 0 {
        return Err(IngestError::EmptyInput);
    }
    report.rows_accepted = records.len();
    Ok(Parsed { records, report })
}

/// Parses attribution records from a JSON array using the CSV field names.
pub fn parse_attribution_json<R: Read>(input: R) -> Result<Parsed<AttributionRecord>, IngestError> {
    let records: Vec<AttributionRecord> = serde_json::from_reader(input)?;
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    for (i, r) in records.iter().enumerate() {
        r.validate(i as u64 + 1)?;
    }
    let report = ValidationReport {
        rows_read: records.len(),
        rows_accepted: records.len(),
        ..Default::default()
    };
    Ok(Parsed { records, report })
}

/// Parses co-spend inputs (`tx_id,input_addresses`). Rows without inputs are skipped.
pub fn parse_tx_inputs<R: Read>(input: R) -> Result<Parsed<TxInputs>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, TX_INPUTS_HEADER)?;
    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row?;
        report.rows_read += 1;
        let line = line_of(index);
        if row.len() != TX_INPUTS_HEADER.len() || row[0].is_empty() {
            report.reject(line, RowErrorKind::ParseError, "expected `tx_id,input_addresses`");
            continue;
        }
        let mut seen = BTreeSet::new();
        let addresses: Vec<String> = row[1]
            .split(LIST_SEPARATOR)
            .map(str::trim)
            .filter(|a| !a.is_empty() && seen.insert(*a))
            .map(str::to_string)
            .collect();
        if addresses.is_empty() {
            report.reject(line, RowErrorKind::EmptyInputList, format!("transaction {} has no inputs", &row[0]));
            continue;
        }
        records.push(TxInputs {
            tx_id: row[0].to_string(),
            addresses,
        });
    }
    if report.rows_read == 0 {
        return Err(IngestError::EmptyInput);
    }
    report.rows_accepted = records.len();
    Ok(Parsed { records, report })
}

/// Parses `address,stake_key`; an empty stake key means the address has none.
pub fn parse_stake_keys<R: Read>(input: R) -> Result<Parsed<StakeKeyRecord>, IngestError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, STAKE_KEYS_HEADER)?;
    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    for (index, row) in rdr.records().enumerate() {
        let row = row?;
        report.rows_read += 1;
        let line = line_of(index);
        if row.len() != STAKE_KEYS_HEADER.len() || row[0].is_empty() {
            report.reject(line, RowErrorKind::ParseError, "expected `address,stake_key`");
            continue;
        }
        records.push(StakeKeyRecord {
            address: row[0].to_string(),
            stake_key: optional(&row[1]),
        });
    }
    if report.rows_read == 0 {
        return Err(IngestError::EmptyInput);
    }
    report.rows_accepted = records.len();
    Ok(Parsed { records, report })
}

pub fn write_blocks<W: Write>(output: W, blocks: &[BlockRecord]) -> Result<(), IngestError> {
    let mut w = writer(output);
    w.write_record(BLOCKS_HEADER)?;
    for b in blocks {
        w.write_record([
            b.height.to_string(),
            format_timestamp(b.timestamp),
            b.reward_addresses.join("|"),
            b.creator_tag.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes balances grouped by date, addresses in ascending order.
pub fn write_balances<W: Write>(output: W, balances: &[BalanceRecord]) -> Result<(), IngestError> {
    let mut sorted: BTreeMap<(NaiveDate, &str), u64> = BTreeMap::new();
    for b in balances {
        sorted.insert((b.snapshot_date, b.address.as_str()), b.balance);
    }
    let mut w = writer(output);
    w.write_record(BALANCES_HEADER)?;
    for ((date, address), balance) in sorted {
        w.write_record([address.to_string(), balance.to_string(), date.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_attribution<W: Write>(output: W, records: &[AttributionRecord]) -> Result<(), IngestError> {
    let mut w = writer(output);
    w.write_record(ATTRIBUTION_HEADER)?;
    let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.kind.as_str().to_string(),
            r.key.clone(),
            r.entity_id.clone(),
            date(r.effective_from),
            date(r.effective_to),
            r.source.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tx_inputs<W: Write>(output: W, txs: &[TxInputs]) -> Result<(), IngestError> {
    let mut w = writer(output);
    w.write_record(TX_INPUTS_HEADER)?;
    for t in txs {
        w.write_record([t.tx_id.clone(), t.addresses.join("|")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stake_keys<W: Write>(output: W, records: &[StakeKeyRecord]) -> Result<(), IngestError> {
    let mut w = writer(output);
    w.write_record(STAKE_KEYS_HEADER)?;
    for r in records {
        w.write_record([r.address.clone(), r.stake_key.clone().unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn block_row_maps_fields() {
        let csv = "height,timestamp,reward_addresses,creator_tag\n1,2018-01-01T00:00:00Z,addrA|addrB,AntPool\n";
        let p = parse_blocks(csv.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        let b = &p.records[0];
        assert_eq!(b.height, 1);
        assert_eq!(b.reward_addresses, vec!["addrA", "addrB"]);
        assert_eq!(b.creator_tag.as_deref(), Some("AntPool"));
        assert_eq!(format_timestamp(b.timestamp), "2018-01-01T00:00:00Z");
    }

    #[test]
    fn duplicate_height_is_fatal() {
        let csv = "height,timestamp,reward_addresses,creator_tag\n5,2018-01-01T00:00:00Z,a,\n5,2018-01-01T00:10:00Z,b,\n";
        assert!(matches!(
            parse_blocks(csv.as_bytes()),
            Err(IngestError::DuplicateHeight { height: 5 })
        ));
    }

    #[test]
    fn bad_timestamp_is_row_level() {
        let csv = "height,timestamp,reward_addresses,creator_tag\r\n1,not-a-date,a,\r\n2,2018-01-01T00:10:00Z,b,\r\n";
        let p = parse_blocks(csv.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.report.rows_dropped, 1);
        assert_eq!(p.report.row_errors[0].line, 2);
        assert_eq!(p.report.row_errors[0].kind, RowErrorKind::ParseError);
    }

    #[test]
    fn blocks_sorted_and_subsecond_truncated() {
        let csv = "height,timestamp,reward_addresses,creator_tag\n3,2018-01-01T00:00:05.900Z,a,\n1,2018-01-01T01:00:00+01:00,b,\n";
        let p = parse_blocks(csv.as_bytes()).unwrap();
        assert_eq!(p.records[0].height, 1);
        assert_eq!(format_timestamp(p.records[0].timestamp), "2018-01-01T00:00:00Z");
        assert_eq!(format_timestamp(p.records[1].timestamp), "2018-01-01T00:00:05Z");
    }

    #[test]
    fn empty_and_headerless_inputs() {
        assert!(matches!(parse_blocks("".as_bytes()), Err(IngestError::EmptyInput)));
        assert!(matches!(
            parse_blocks("height,timestamp,reward_addresses,creator_tag\n".as_bytes()),
            Err(IngestError::EmptyInput)
        ));
        assert!(matches!(
            parse_blocks("a,b\n1,2\n".as_bytes()),
            Err(IngestError::BadHeader { .. })
        ));
    }

    #[test]
    fn balances_drop_zero_and_reject_negative() {
        let ok = parse_balances("address,balance,snapshot_date\naddrX,1000,2020-06-01\naddrY,0,2020-06-01\n".as_bytes()).unwrap();
        assert_eq!(ok.records.len(), 1);
        assert_eq!(ok.records[0].balance, 1000);
        assert_eq!(ok.report.zero_balance_dropped, 1);
        let neg = parse_balances("address,balance,snapshot_date\naddrX,-5,2020-06-01\n".as_bytes());
        assert!(matches!(neg, Err(IngestError::NegativeBalance { .. })));
        let dup = parse_balances("address,balance,snapshot_date\na,1,2020-06-01\na,2,2020-06-01\n".as_bytes());
        assert!(matches!(dup, Err(IngestError::DuplicateAddressInSnapshot { .. })));
    }

    #[test]
    fn balances_above_f64_mantissa_parse_exactly() {
        let p = parse_balances("address,balance,snapshot_date\na,18446744073709551615,2020-06-01\n".as_bytes()).unwrap();
        assert_eq!(p.records[0].balance, u64::MAX);
    }

    #[test]
    fn attribution_rows() {
        let csv = "kind,key,entity_id,effective_from,effective_to,source\n\
                   block_tag,AntPool,AntPool_entity,,,explorer\n\
                   legal_link,BTC.COM,BITMining,2021-04-01,,\n";
        let p = parse_attribution(csv.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].kind, AttributionKind::BlockTag);
        assert_eq!(p.records[1].effective_from, parse_date("2021-04-01"));
        assert_eq!(p.records[1].effective_to, None);

        let self_merge = "kind,key,entity_id,effective_from,effective_to,source\nlegal_link,X,X,,,\n";
        assert!(matches!(parse_attribution(self_merge.as_bytes()), Err(IngestError::SelfMerge { .. })));
        let inverted = "kind,key,entity_id,effective_from,effective_to,source\naddress_tag,a,E,2021-02-01,2021-01-01,\n";
        assert!(matches!(
            parse_attribution(inverted.as_bytes()),
            Err(IngestError::InvertedDateRange { .. })
        ));
    }

    #[test]
    fn attribution_json_matches_csv() {
        let json = r#"[{"kind":"legal_link","key":"BTC.COM","entity_id":"BITMining","effective_from":"2021-04-01","effective_to":null,"source":""}]"#;
        let p = parse_attribution_json(json.as_bytes()).unwrap();
        let csv = "kind,key,entity_id,effective_from,effective_to,source\nlegal_link,BTC.COM,BITMining,2021-04-01,,\n";
        assert_eq!(p.records, parse_attribution(csv.as_bytes()).unwrap().records);
    }

    #[test]
    fn tx_inputs_dedup_and_skip() {
        let csv = "tx_id,input_addresses\ntx1,a|b|c\ntx2,a|a\ntx3,\n";
        let p = parse_tx_inputs(csv.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].addresses, vec!["a", "b", "c"]);
        assert_eq!(p.records[1].addresses, vec!["a"]);
        assert_eq!(p.report.row_errors[0].kind, RowErrorKind::EmptyInputList);
    }

    #[test]
    fn stake_keys_optional() {
        let p = parse_stake_keys("address,stake_key\na,k1\nb,\n".as_bytes()).unwrap();
        assert_eq!(p.records[0].stake_key.as_deref(), Some("k1"));
        assert_eq!(p.records[1].stake_key, None);
    }

    fn arb_block_list() -> impl Strategy<Value = Vec<BlockRecord>> {
        prop::collection::vec(
            (
                0u64..1_000_000,
                1_500_000_000i64..1_700_000_000,
                prop::collection::vec("[a-z0-9]{1,8}", 1..4),
                prop::option::of("[A-Za-z]{1,6}"),
            ),
            1..20,
        )
        .prop_map(|rows| {
            let mut seen = BTreeSet::new();
            let mut out: Vec<BlockRecord> = rows
                .into_iter()
                .filter(|r| seen.insert(r.0))
                .map(|(h, t, a, tag)| {
                    BlockRecord::new(h, DateTime::from_timestamp(t, 0).unwrap(), a, tag).unwrap()
                })
                .collect();
            out.sort_by_key(|b| b.height);
            out
        })
    }

    proptest! {
        #[test]
        fn blocks_round_trip(blocks in arb_block_list()) {
            let mut buf = Vec::new();
            write_blocks(&mut buf, &blocks).unwrap();
            let back = parse_blocks(buf.as_slice()).unwrap();
            prop_assert_eq!(back.records, blocks);
        }

        #[test]
        fn attribution_round_trip(rows in prop::collection::vec(
            (0usize..3, "[a-z]{1,6}", "[A-Z]{1,6}", prop::option::of(0i64..1000)), 1..15)
        ) {
            let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
            let records: Vec<AttributionRecord> = rows
                .into_iter()
                .map(|(k, key, ent, off)| AttributionRecord {
                    kind: [AttributionKind::AddressTag, AttributionKind::BlockTag, AttributionKind::LegalLink][k],
                    key,
                    entity_id: ent,
                    effective_from: off.map(|d| base + chrono::Duration::days(d)),
                    effective_to: None,
                    source: "s".into(),
                })
                .collect();
            let mut buf = Vec::new();
            write_attribution(&mut buf, &records).unwrap();
            prop_assert_eq!(parse_attribution(buf.as_slice()).unwrap().records, records);
        }
    }
}
