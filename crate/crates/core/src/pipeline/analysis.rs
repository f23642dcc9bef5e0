use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::Transform;
use super::format::{csv_line, ensure_dir, g12, json_bytes, write_output};
use super::series::read_series_files;
use super::{PipelineError, RunConfig};
use crate::stats::{
    box_cox, detect_outliers, efa_from_correlation, eigen_symmetric, kaiser_count,
    kmo_from_correlation, spearman_matrix, winsorize, CorrelationStrength, DataMatrix,
    EfaOptions, FactorModel, Kmo, Matrix, OutlierTreatment, Rotation, StatsError,
};

/// Rounds to 12 significant digits so JSON output matches the CSV files.
fn r12(x: f64) -> f64 {
    g12(x).parse().unwrap_or(x)
}

fn matrix_csv(names: &[String], m: &Matrix<f64>, corner: &str, col_names: &[String]) -> String {
    let mut out = csv_line(
        &std::iter::once(corner.to_string())
            .chain(col_names.iter().cloned())
            .collect::<Vec<_>>(),
    );
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(m.row(i).iter().map(|v| g12(*v)));
        out.push_str(&csv_line(&row));
    }
    out
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|v| *v == col[0])
}

/// Splits off constant columns, which have no defined correlation.
fn drop_constant(m: &DataMatrix<f64>) -> Result<(DataMatrix<f64>, Vec<String>), PipelineError> {
    let mut keep = Vec::new();
    let mut excluded = Vec::new();
    for (j, name) in m.columns().iter().enumerate() {
        if is_constant(&m.column(j)) {
            excluded.push(name.clone());
        } else {
            keep.push(name.clone());
        }
    }
    Ok((m.select(&keep)?, excluded))
}

fn aligned(files: &[PathBuf]) -> Result<DataMatrix<f64>, PipelineError> {
    let series = read_series_files(files)?;
    if series.len() < 2 {
        return Err(PipelineError::Config(format!(
            "need at least two series, got {}",
            series.len()
        )));
    }
    let m = DataMatrix::from_series(&series);
    m.check_shape()?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct CorrelateSummary {
    pub variables: Vec<String>,
    pub excluded: Vec<String>,
    pub matrix: Matrix<f64>,
    pub files: Vec<PathBuf>,
}

/// Spearman matrix over the aligned series, with strength labels.
pub fn cmd_correlate(cfg: &RunConfig, files: &[PathBuf]) -> Result<CorrelateSummary, PipelineError> {
    let m = aligned(files)?;
    let (m, excluded) = drop_constant(&m)?;
    for name in &excluded {
        log::warn!("{name} is constant over the aligned snapshots; excluded from the correlation matrix");
    }
    if m.n_cols() < 2 {
        return Err(PipelineError::Stats(StatsError::ConstantSeries));
    }
    let cols: Vec<Vec<f64>> = (0..m.n_cols()).map(|j| m.column(j)).collect();
    let r = spearman_matrix(&cols)?;
    let names = m.columns().to_vec();

    let mut pairs = csv_line(&["variable_a", "variable_b", "rho", "strength"].map(String::from));
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            pairs.push_str(&csv_line(&[
                names[i].clone(),
                names[j].clone(),
                g12(r[(i, j)]),
                CorrelationStrength::classify(r[(i, j)]).to_string(),
            ]));
        }
    }
    let meta = json!({
        "method": "spearman",
        "snapshots": m.n_rows(),
        "variables": names,
        "excluded": excluded.iter().map(|n| json!({"variable": n, "reason": "constant series"})).collect::<Vec<_>>(),
    });
    ensure_dir(&cfg.output)?;
    let files = vec![
        write_output(&cfg.output, "correlation.csv", matrix_csv(&names, &r, "variable", &names).as_bytes())?,
        write_output(&cfg.output, "correlation_pairs.csv", pairs.as_bytes())?,
        write_output(&cfg.output, "correlation.json", &json_bytes(&meta))?,
    ];
    Ok(CorrelateSummary {
        variables: names,
        excluded,
        matrix: r,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct EfaSummary {
    pub model: FactorModel<f64>,
    pub kmo: Kmo<f64>,
    pub kaiser_count: usize,
    pub log: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn overlapping_source(path: &Path) -> bool {
    let manifest = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("manifest.json");
    std::fs::read(&manifest)
        .ok()
        .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
        .and_then(|v| v.get("overlapping").and_then(serde_json::Value::as_bool))
        .unwrap_or(false)
}

#[derive(Serialize)]
struct TransformRecord {
    variable: String,
    lambda: f64,
    shift: f64,
}

fn treat_outliers(
    m: DataMatrix<f64>,
    treatment: OutlierTreatment,
    log: &mut Vec<String>,
) -> Result<(DataMatrix<f64>, usize), PipelineError> {
    let mut flagged = BTreeSet::new();
    for j in 0..m.n_cols() {
        let idx = detect_outliers(&m.column(j))?;
        log.push(format!("outliers: {} has {} values beyond 3 sd", m.columns()[j], idx.len()));
        flagged.extend(idx);
    }
    match treatment {
        OutlierTreatment::TransformOnly => {
            log.push("outliers: transform-only, no rows changed".into());
            Ok((m, 0))
        }
        OutlierTreatment::Drop => {
            log.push(format!("outliers: dropped {} snapshots", flagged.len()));
            let dropped = m.drop_rows(&flagged);
            dropped.check_shape()?;
            Ok((dropped, flagged.len()))
        }
        OutlierTreatment::Winsorize => {
            let mut w = m.clone();
            for j in 0..w.n_cols() {
                let col = winsorize(&w.column(j));
                w.set_column(j, &col);
            }
            log.push("outliers: winsorized every column at mean ± 3 sd".into());
            Ok((w, 0))
        }
    }
}

/// Exploratory factor analysis: outlier treatment, transformation, KMO check, Kaiser
/// factor count, principal-axis extraction and rotation.
pub fn cmd_efa(cfg: &RunConfig, files: &[PathBuf]) -> Result<EfaSummary, PipelineError> {
    cfg.validate()?;
    let rotation = cfg.rotation()?;
    let treatment = cfg.outlier_treatment()?;
    let transform = cfg.transform()?;
    if !cfg.force {
        if let Some(p) = files.iter().find(|p| overlapping_source(p)) {
            return Err(PipelineError::OverlappingWindows { path: p.clone() });
        }
    }
    ensure_dir(&cfg.output)?;
    let mut log = Vec::new();
    let result = run_efa(cfg, files, rotation, treatment, transform, &mut log);
    let mut text = log.join("\n");
    text.push('\n');
    write_output(&cfg.output, "efa_log.txt", text.as_bytes())?;
    let (model, kmo, kaiser, mut written) = result?;
    written.push(cfg.output.join("efa_log.txt"));
    Ok(EfaSummary {
        model,
        kmo,
        kaiser_count: kaiser,
        log,
        files: written,
    })
}

type EfaRun = (FactorModel<f64>, Kmo<f64>, usize, Vec<PathBuf>);

fn run_efa(
    cfg: &RunConfig,
    files: &[PathBuf],
    rotation: Rotation,
    treatment: OutlierTreatment,
    transform: Transform,
    log: &mut Vec<String>,
) -> Result<EfaRun, PipelineError> {
    let m = aligned(files)?;
    log.push(format!("input: {} variables over {} aligned snapshots", m.n_cols(), m.n_rows()));
    let (m, excluded) = drop_constant(&m)?;
    for name in &excluded {
        log.push(format!("excluded: {name} is constant"));
    }
    if m.n_cols() < 3 {
        return Err(PipelineError::Config(format!(
            "factor analysis needs at least three non-constant series, got {}",
            m.n_cols()
        )));
    }

    let (mut m, dropped_rows) = treat_outliers(m, treatment, log)?;

    let mut transforms = Vec::new();
    if transform == Transform::BoxCox {
        for j in 0..m.n_cols() {
            let name = m.columns()[j].clone();
            let bc = box_cox(&m.column(j), None, cfg.box_cox_shift)?;
            log.push(format!(
                "transform: {name} box-cox lambda {} shift {}",
                g12(bc.lambda),
                g12(bc.shift)
            ));
            m.set_column(j, &bc.values);
            transforms.push(TransformRecord {
                variable: name,
                lambda: r12(bc.lambda),
                shift: r12(bc.shift),
            });
        }
    } else {
        log.push("transform: none".into());
    }

    let r = m.correlation()?;
    let kmo = kmo_from_correlation(&r)?;
    log.push(format!(
        "adequacy: KMO {}{}",
        g12(kmo.overall),
        if kmo.ridge_applied { " (ridge applied)" } else { "" }
    ));
    if kmo.overall <= 0.5 {
        if cfg.force {
            log.push("adequacy: KMO not above 0.5, continuing because force is set".into());
        } else {
            log.push("adequacy: KMO not above 0.5, stopping".into());
            return Err(PipelineError::AdequacyFailed { kmo: kmo.overall });
        }
    }

    let eigenvalues = eigen_symmetric(&r)?.values;
    let kaiser = kaiser_count(&eigenvalues);
    log.push(format!("retention: {kaiser} eigenvalues above 1"));
    let p = m.n_cols();
    let n_factors = match cfg.n_factors {
        Some(n) => {
            log.push(format!("retention: using configured n-factors {n}"));
            n
        }
        None if kaiser == 0 => {
            log.push("retention: no eigenvalue above 1, extracting one factor".into());
            1
        }
        None if kaiser > p - 1 => {
            log.push(format!("retention: capping at {} factors", p - 1));
            p - 1
        }
        None => kaiser,
    };

    let opts = EfaOptions {
        rotation,
        promax_power: cfg.promax_power,
        ..EfaOptions::default()
    };
    let model = efa_from_correlation(&r, m.columns(), n_factors, &opts)?;
    log.push(format!(
        "extraction: principal-axis factoring converged in {} iterations",
        model.iterations
    ));
    for h in &model.heywood {
        log.push(format!("extraction: Heywood case for {h}, communality clamped"));
    }
    log.push(format!("rotation: {rotation}"));

    let factor_names: Vec<String> = (1..=n_factors).map(|k| format!("F{k}")).collect();
    let mut eig = csv_line(&["index".to_string(), "eigenvalue".to_string()]);
    for (i, v) in eigenvalues.iter().enumerate() {
        eig.push_str(&csv_line(&[(i + 1).to_string(), g12(*v)]));
    }
    let mut written = vec![
        write_output(&cfg.output, "eigenvalues.csv", eig.as_bytes())?,
        write_output(
            &cfg.output,
            "loadings.csv",
            matrix_csv(m.columns(), &model.loadings, "variable", &factor_names).as_bytes(),
        )?,
    ];
    if let Some(phi) = &model.factor_correlations {
        written.push(write_output(
            &cfg.output,
            "factor_correlations.csv",
            matrix_csv(&factor_names, phi, "factor", &factor_names).as_bytes(),
        )?);
    }
    let by_name = |values: &[f64]| -> BTreeMap<String, f64> {
        m.columns()
            .iter()
            .cloned()
            .zip(values.iter().map(|v| r12(*v)))
            .collect()
    };
    let summary = json!({
        "variables": m.columns(),
        "excluded": excluded,
        "observations": m.n_rows(),
        "outlier_treatment": treatment.to_string(),
        "dropped_rows": dropped_rows,
        "transforms": transforms,
        "kmo": {
            "overall": r12(kmo.overall),
            "per_variable": by_name(&kmo.per_variable),
            "ridge_applied": kmo.ridge_applied,
        },
        "eigenvalues": eigenvalues.iter().map(|v| r12(*v)).collect::<Vec<_>>(),
        "kaiser_count": kaiser,
        "n_factors": n_factors,
        "extraction": "principal-axis",
        "rotation": rotation.to_string(),
        "promax_power": (rotation == Rotation::Promax).then_some(cfg.promax_power),
        "communalities": by_name(&model.communalities),
        "explained_variance": model.explained_variance.iter().map(|v| r12(*v)).collect::<Vec<_>>(),
        "heywood": model.heywood,
        "iterations": model.iterations,
        "forced": cfg.force,
    });
    written.push(write_output(&cfg.output, "efa_model.json", &json_bytes(&summary))?);
    Ok((model, kmo, kaiser, written))
}
