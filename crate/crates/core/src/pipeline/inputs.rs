use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::format::{ensure_dir, json_bytes, read_file, sha256_hex, write_output};
use super::{PipelineError, RunConfig};
use crate::cluster::EntityMap;
use crate::ingest::{
    parse_attribution, parse_attribution_json, parse_balances, parse_blocks, parse_stake_keys,
    parse_tx_inputs, AttributionRecord, IngestError, Parsed, StakeKeyRecord, TxInputs,
    ValidationReport,
};
use crate::model::{BalanceRecord, BlockRecord};

/// Parsed input files. Absent inputs stay `None`.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub blocks: Option<Parsed<BlockRecord>>,
    pub balances: Option<Parsed<BalanceRecord>>,
    pub attribution: Option<Parsed<AttributionRecord>>,
    pub tx_inputs: Option<Parsed<TxInputs>>,
    pub stake_keys: Option<Parsed<StakeKeyRecord>>,
    /// SHA-256 of each input file, keyed by config key.
    pub digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn reports(&self) -> BTreeMap<String, &ValidationReport> {
        let mut out = BTreeMap::new();
        if let Some(p) = &self.blocks {
            out.insert("blocks".to_string(), &p.report);
        }
        if let Some(p) = &self.balances {
            out.insert("balances".to_string(), &p.report);
        }
        if let Some(p) = &self.attribution {
            out.insert("attribution".to_string(), &p.report);
        }
        if let Some(p) = &self.tx_inputs {
            out.insert("tx-inputs".to_string(), &p.report);
        }
        if let Some(p) = &self.stake_keys {
            out.insert("stake-keys".to_string(), &p.report);
        }
        out
    }

    pub fn attribution_records(&self) -> &[AttributionRecord] {
        self.attribution.as_ref().map_or(&[], |p| &p.records)
    }

    pub fn tx_input_records(&self) -> &[TxInputs] {
        self.tx_inputs.as_ref().map_or(&[], |p| &p.records)
    }

    pub fn stake_key_records(&self) -> &[StakeKeyRecord] {
        self.stake_keys.as_ref().map_or(&[], |p| &p.records)
    }
}

fn load<T>(
    key: &str,
    path: &Option<PathBuf>,
    digests: &mut BTreeMap<String, String>,
    parse: impl FnOnce(&Path, &[u8]) -> Result<Parsed<T>, IngestError>,
) -> Result<Option<Parsed<T>>, PipelineError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let bytes = read_file(path)?;
    digests.insert(key.to_string(), sha256_hex(&bytes));
    parse(path, &bytes)
        .map(Some)
        .map_err(|source| PipelineError::Ingest {
            path: path.clone(),
            source,
        })
}

/// Reads and parses every input named in the config.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, PipelineError> {
    let mut digests = BTreeMap::new();
    let blocks = load("blocks", &cfg.blocks, &mut digests, |_, b| parse_blocks(b))?;
    let balances = load("balances", &cfg.balances, &mut digests, |_, b| parse_balances(b))?;
    let attribution = load("attribution", &cfg.attribution, &mut digests, |p, b| {
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            parse_attribution_json(b)
        } else {
            parse_attribution(b)
        }
    })?;
    let tx_inputs = load("tx-inputs", &cfg.tx_inputs, &mut digests, |_, b| parse_tx_inputs(b))?;
    let stake_keys = load("stake-keys", &cfg.stake_keys, &mut digests, |_, b| parse_stake_keys(b))?;
    Ok(Inputs {
        blocks,
        balances,
        attribution,
        tx_inputs,
        stake_keys,
        digests,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub chain_id: String,
    pub files: BTreeMap<String, ValidationReport>,
    pub rows_dropped: usize,
    pub warnings: Vec<String>,
}

/// Parses all inputs and writes `validation_report.json`.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary, PipelineError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    if inputs.digests.is_empty() {
        return Err(PipelineError::Config("no input files configured".into()));
    }
    EntityMap::from_records(inputs.attribution_records())?;
    let files: BTreeMap<String, ValidationReport> = inputs
        .reports()
        .into_iter()
        .map(|(k, r)| (k, r.clone()))
        .collect();
    let mut warnings = Vec::new();
    for (key, report) in &files {
        if report.rows_dropped > 0 {
            warnings.push(format!("{key}: {} malformed rows dropped", report.rows_dropped));
        }
        if report.zero_balance_dropped > 0 {
            warnings.push(format!(
                "{key}: {} zero-balance rows dropped",
                report.zero_balance_dropped
            ));
        }
    }
    let summary = IngestSummary {
        chain_id: cfg.chain_id.clone(),
        rows_dropped: files
            .values()
            .map(|r| r.rows_dropped + r.zero_balance_dropped)
            .sum(),
        files,
        warnings,
    };
    ensure_dir(&cfg.output)?;
    write_output(&cfg.output, "validation_report.json", &json_bytes(&summary))?;
    Ok(summary)
}
