use std::path::PathBuf;

use super::format::{csv_line, ensure_dir, g12, write_output};
use super::{parse_duration, PipelineError};
use crate::ingest::{format_timestamp, write_blocks};
use crate::stats::Matrix;
use crate::synthlab::{
    generate_block_stream, generate_factor_dataset, window_confidence_experiment, Intermittent,
    ShareModel, SynthSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthArgs {
    /// Defaults to the number of explicit shares, or 10.
    pub entities: Option<usize>,
    pub shares: Option<Vec<f64>>,
    pub zipf: Option<f64>,
    pub blocks_per_day: f64,
    pub days: u32,
    pub seed: u64,
    pub intermittent: Option<Intermittent>,
    pub window_experiment: Option<Vec<u32>>,
    pub repetitions: usize,
    pub factor_loadings: Option<Matrix<f64>>,
    pub factor_rows: usize,
    pub noise_sd: f64,
    pub output: PathBuf,
}

impl Default for SynthArgs {
    fn default() -> Self {
        Self {
            entities: None,
            shares: None,
            zipf: None,
            blocks_per_day: 144.0,
            days: 70,
            seed: 0,
            intermittent: None,
            window_experiment: None,
            repetitions: 100,
            factor_loadings: None,
            factor_rows: 500,
            noise_sd: 0.6,
            output: PathBuf::from("synth"),
        }
    }
}

impl SynthArgs {
    pub fn spec(&self) -> Result<SynthSpec, PipelineError> {
        let (n, model) = match (&self.shares, self.zipf) {
            (Some(_), Some(_)) => {
                return Err(PipelineError::Config("give either shares or zipf, not both".into()))
            }
            (Some(v), None) => (self.entities.unwrap_or(v.len()), ShareModel::Explicit(v.clone())),
            (None, Some(s)) => (self.entities.unwrap_or(10), ShareModel::Zipf(s)),
            (None, None) => (self.entities.unwrap_or(10), ShareModel::Uniform),
        };
        let mut spec = SynthSpec::new(n, model, self.blocks_per_day, self.days, self.seed);
        spec.intermittent = self.intermittent;
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a comma-separated list of whole-day durations such as `1d,7d,14d`.
pub fn parse_day_list(s: &str) -> Result<Vec<u32>, PipelineError> {
    s.split(',')
        .map(str::trim)
        .map(|part| {
            let d = parse_duration(part).map_err(PipelineError::Config)?;
            let secs = d.num_seconds();
            if secs <= 0 || secs % 86_400 != 0 {
                return Err(PipelineError::Config(format!(
                    "window lengths must be whole days, got {part:?}"
                )));
            }
            u32::try_from(secs / 86_400)
                .map_err(|_| PipelineError::Config(format!("window {part:?} is too long")))
        })
        .collect()
}

/// Parses a loading matrix written row by row: `0.8,0;0.8,0;0,0.8`.
pub fn parse_loadings(s: &str) -> Result<Matrix<f64>, PipelineError> {
    let rows = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| PipelineError::Config(format!("invalid loading {v:?}")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(PipelineError::Config(
            "loading rows must all have the same, nonzero length".into(),
        ));
    }
    Ok(Matrix::from_rows(&rows))
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub blocks: usize,
    pub files: Vec<PathBuf>,
}

/// Writes `blocks.csv`, plus `window_confidence.csv` and `factor_data.csv` on request.
pub fn cmd_synth(args: &SynthArgs) -> Result<SynthSummary, PipelineError> {
    let spec = args.spec()?;
    if let Some(w) = &args.window_experiment {
        if w.len() < 2 {
            return Err(PipelineError::Config("window experiment needs at least two lengths".into()));
        }
    }
    let ledger = generate_block_stream(&spec)?;
    ensure_dir(&args.output)?;
    let mut buf = Vec::new();
    write_blocks(&mut buf, ledger.blocks()).map_err(|source| PipelineError::Ingest {
        path: args.output.join("blocks.csv"),
        source,
    })?;
    let mut files = vec![write_output(&args.output, "blocks.csv", &buf)?];

    if let Some(windows) = &args.window_experiment {
        let rows = window_confidence_experiment(&spec, windows, args.repetitions)?;
        let mut text = csv_line(&["window_days", "repetitions", "nc_mean", "nc_sd"].map(String::from));
        for r in rows {
            text.push_str(&csv_line(&[
                r.window_days.to_string(),
                r.repetitions.to_string(),
                g12(r.nc_mean),
                g12(r.nc_sd),
            ]));
        }
        files.push(write_output(&args.output, "window_confidence.csv", text.as_bytes())?);
    }

    if let Some(l) = &args.factor_loadings {
        let m = generate_factor_dataset(args.factor_rows, l, args.noise_sd, args.seed)?;
        let mut text = csv_line(
            &std::iter::once("snapshot".to_string())
                .chain(m.columns().iter().cloned())
                .collect::<Vec<_>>(),
        );
        for (i, t) in m.rows().iter().enumerate() {
            let mut row = vec![format_timestamp(*t)];
            row.extend(m.values().row(i).iter().map(|v| g12(*v)));
            text.push_str(&csv_line(&row));
        }
        files.push(write_output(&args.output, "factor_data.csv", text.as_bytes())?);
    }

    Ok(SynthSummary {
        blocks: ledger.blocks().len(),
        files,
    })
}
