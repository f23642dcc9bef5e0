use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::format::read_file;
use super::PipelineError;
use crate::ingest::parse_timestamp;
use crate::model::MetricSeries;

fn series_error(path: &Path, reason: impl Into<String>) -> PipelineError {
    PipelineError::Series {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_file(path: &Path) -> Result<Vec<MetricSeries>, PipelineError> {
    let bytes = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| series_error(path, e.to_string()))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect();
    if header.first().map(String::as_str) != Some("snapshot") || header.len() < 2 {
        return Err(series_error(
            path,
            "expected a `snapshot,value,n` series or a wide table starting with `snapshot`",
        ));
    }
    let single = header == ["snapshot", "value", "n"];
    let names: Vec<String> = if single {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| series_error(path, "file name is not valid UTF-8"))?;
        vec![stem.strip_prefix("series_").unwrap_or(stem).to_string()]
    } else {
        header[1..].to_vec()
    };
    let mut series: Vec<MetricSeries> = names.iter().map(|n| MetricSeries::new(n.clone(), "")).collect();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| series_error(path, e.to_string()))?;
        let t = parse_timestamp(&row[0])
            .ok_or_else(|| series_error(path, format!("line {line}: invalid snapshot `{}`", &row[0])))?;
        for (j, s) in series.iter_mut().enumerate() {
            let cell = row.get(j + 1).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| series_error(path, format!("line {line}: invalid value `{cell}`")))?;
            s.push(t, v)
                .map_err(|e| series_error(path, format!("line {line}: {e}")))?;
        }
    }
    Ok(series)
}

/// Reads single-series files (`snapshot,value,n`, named after the file) and wide
/// tables (`snapshot,<name>,...`).
pub fn read_series_files(paths: &[PathBuf]) -> Result<Vec<MetricSeries>, PipelineError> {
    let mut out: Vec<MetricSeries> = Vec::new();
    let mut seen = BTreeSet::new();
    for path in paths {
        for s in parse_file(path)? {
            if !seen.insert(s.metric_name.clone()) {
                return Err(series_error(path, format!("series `{}` given twice", s.metric_name)));
            }
            out.push(s);
        }
    }
    Ok(out)
}
