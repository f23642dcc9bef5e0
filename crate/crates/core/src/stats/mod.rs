//! Correlation, transformation, adequacy testing and exploratory factor analysis
//! over aligned metric series.

mod correlation;
mod eigen;
mod factor;
mod matrix;
mod transform;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::model::MetricSeries;
use crate::scalar::Scalar;

pub use correlation::{
    correlation_matrix, fractional_ranks, pearson, spearman, spearman_matrix, CorrelationStrength,
};
pub use eigen::{eigen_symmetric, kaiser_count, Eigen, JACOBI_MAX_SWEEPS};
pub use factor::{
    efa, efa_from_correlation, kmo, kmo_from_correlation, promax, tucker_congruence, varimax,
    EfaOptions, FactorModel, Kmo, Rotation, KMO_RIDGE,
};
pub use matrix::Matrix;
pub use transform::{
    box_cox, box_cox_log_likelihood, box_cox_transform, detect_outliers, winsorize, BoxCox,
    OutlierTreatment,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series is constant; correlation is undefined")]
    ConstantSeries,
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("series has values <= 0 and shifting is disabled")]
    NonPositiveData,
    #[error("correlation matrix is singular: {0}")]
    SingularCorrelation(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("n_factors must be between 1 and {max}, got {requested}")]
    InvalidFactorCount { requested: usize, max: usize },
    #[error("data matrix needs at least 3 rows and 2 columns, got {rows}x{cols}")]
    InsufficientData { rows: usize, cols: usize },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

/// Metric values aligned on a shared snapshot index.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    columns: Vec<String>,
    rows: Vec<DateTime<Utc>>,
    values: Matrix<T>,
}

impl<T: Scalar> DataMatrix<T> {
    /// # Panics
    /// If the dimensions of `values` disagree with the labels.
    pub fn new(columns: Vec<String>, rows: Vec<DateTime<Utc>>, values: Matrix<T>) -> Self {
        assert_eq!(values.cols(), columns.len(), "column label count");
        assert_eq!(values.rows(), rows.len(), "row label count");
        Self {
            columns,
            rows,
            values,
        }
    }

    /// Inner join of the series on snapshot time. Columns keep the input order.
    pub fn from_series(series: &[MetricSeries]) -> Self {
        let mut index: BTreeMap<DateTime<Utc>, Vec<Option<f64>>> = BTreeMap::new();
        for (j, s) in series.iter().enumerate() {
            for &(t, v) in s.points() {
                index.entry(t).or_insert_with(|| vec![None; series.len()])[j] = Some(v);
            }
        }
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for (t, cells) in index {
            if cells.iter().all(Option::is_some) {
                rows.push(t);
                data.push(cells.into_iter().map(|c| T::c(c.unwrap_or_default())).collect());
            }
        }
        let values = if data.is_empty() {
            Matrix::zeros(0, series.len())
        } else {
            Matrix::from_rows(&data)
        };
        Self::new(
            series.iter().map(|s| s.metric_name.clone()).collect(),
            rows,
            values,
        )
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[DateTime<Utc>] {
        &self.rows
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.values.column(j)
    }

    pub fn column_index(&self, name: &str) -> Result<usize, StatsError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        assert_eq!(values.len(), self.n_rows());
        self.values.set_column(j, values);
    }

    /// Keeps the named columns in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self, StatsError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(
            names.to_vec(),
            self.rows.clone(),
            self.values.select_columns(&idx),
        ))
    }

    /// Removes the listed row indices.
    pub fn drop_rows(&self, drop: &std::collections::BTreeSet<usize>) -> Self {
        let keep: Vec<usize> = (0..self.n_rows()).filter(|i| !drop.contains(i)).collect();
        let values = Matrix::from_fn(keep.len(), self.n_cols(), |i, j| self.values[(keep[i], j)]);
        Self::new(
            self.columns.clone(),
            keep.iter().map(|&i| self.rows[i]).collect(),
            values,
        )
    }

    pub fn check_shape(&self) -> Result<(), StatsError> {
        if self.n_rows() < 3 || self.n_cols() < 2 {
            return Err(StatsError::InsufficientData {
                rows: self.n_rows(),
                cols: self.n_cols(),
            });
        }
        Ok(())
    }

    /// Pearson correlation matrix of the columns.
    pub fn correlation(&self) -> Result<Matrix<T>, StatsError> {
        self.check_shape()?;
        let cols: Vec<Vec<T>> = (0..self.n_cols()).map(|j| self.column(j)).collect();
        correlation_matrix(&cols, pearson)
    }
}
