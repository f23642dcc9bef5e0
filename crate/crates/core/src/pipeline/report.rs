use std::path::{Path, PathBuf};

use super::format::{csv_line, ensure_dir, g12, write_output};
use super::series::read_series_files;
use super::PipelineError;
use crate::ingest::format_timestamp;
use crate::model::MetricSeries;

#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub series: usize,
    pub files: Vec<PathBuf>,
}

fn gnuplot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn script(series: &[MetricSeries]) -> String {
    let mut out = String::new();
    out.push_str("# Generated by decentra report. Render with: gnuplot report.gp\n");
    out.push_str("set terminal pngcairo size 1200,600\n");
    out.push_str("set output \"report.png\"\n");
    out.push_str("set datafile separator \",\"\n");
    out.push_str("set xdata time\n");
    out.push_str("set timefmt \"%Y-%m-%dT%H:%M:%SZ\"\n");
    out.push_str("set format x \"%Y-%m-%d\"\n");
    out.push_str("set key outside right top\n");
    out.push_str("set grid\n");
    for (i, s) in series.iter().enumerate() {
        out.push_str(&format!("$s{i} << EOD\n"));
        for (t, v) in s.points() {
            out.push_str(&format!("{},{}\n", format_timestamp(*t), g12(*v)));
        }
        out.push_str("EOD\n");
    }
    let plots: Vec<String> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "$s{i} using 1:2 with linespoints title {}",
                gnuplot_quote(&s.metric_name)
            )
        })
        .collect();
    out.push_str("plot ");
    out.push_str(&plots.join(", \\\n     "));
    out.push('\n');
    out
}

/// Writes a tidy `report.csv` and a self-contained gnuplot script `report.gp`
/// drawing one line per series.
pub fn cmd_report(files: &[PathBuf], output: &Path) -> Result<ReportSummary, PipelineError> {
    let series = read_series_files(files)?;
    if series.is_empty() {
        log::warn!("no series given; nothing to report");
        return Ok(ReportSummary::default());
    }
    let mut tidy = csv_line(&["series", "snapshot", "value"].map(String::from));
    for s in &series {
        for (t, v) in s.points() {
            tidy.push_str(&csv_line(&[s.metric_name.clone(), format_timestamp(*t), g12(*v)]));
        }
    }
    ensure_dir(output)?;
    let files = vec![
        write_output(output, "report.csv", tidy.as_bytes())?,
        write_output(output, "report.gp", script(&series).as_bytes())?,
    ];
    Ok(ReportSummary {
        series: series.len(),
        files,
    })
}
