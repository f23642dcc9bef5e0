//! Decentralization metrics over a resource distribution.
//!
//! Every metric takes the amounts of the full population, zero-amount members
//! included, in any order. Metrics never filter internally: thresholds and
//! population estimation happen upstream.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ResourceDistribution;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("total resource is zero")]
    ZeroTotal,
    #[error("amounts must be finite and nonnegative")]
    InvalidAmount,
    #[error("tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("concentration ratio needs m >= 1")]
    InvalidM,
    #[error("entropy base must be positive and not 1, got {0}")]
    InvalidBase(f64),
}

fn total<T: Scalar>(amounts: &[T]) -> Result<T, MetricError> {
    if amounts.iter().any(|a| !a.is_finite() || *a < T::zero()) {
        return Err(MetricError::InvalidAmount);
    }
    let sum: T = amounts.iter().copied().sum();
    if sum <= T::zero() {
        return Err(MetricError::ZeroTotal);
    }
    Ok(sum)
}

fn sorted_desc<T: Scalar>(amounts: &[T]) -> Vec<T> {
    let mut v = amounts.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    v
}

/// Shannon entropy `-Σ p log p` in the given base; zero shares contribute nothing.
pub fn entropy<T: Scalar>(amounts: &[T], base: T) -> Result<T, MetricError> {
    if !(base > T::zero() && base != T::one() && base.is_finite()) {
        return Err(MetricError::InvalidBase(base.to_f64_lossy()));
    }
    let sum = total(amounts)?;
    let h: T = amounts
        .iter()
        .filter(|a| **a > T::zero())
        .map(|&a| {
            let p = a / sum;
            -p * p.ln()
        })
        .sum();
    Ok((h / base.ln()).max(T::zero()))
}

/// Gini coefficient via the sorted-rank form
/// `G = 2 Σ i·x_(i) / (n Σ x) − (n + 1) / n`, amounts sorted ascending.
pub fn gini<T: Scalar>(amounts: &[T]) -> Result<T, MetricError> {
    let sum = total(amounts)?;
    let mut v = amounts.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = T::from_count(v.len());
    let weighted: T = v
        .iter()
        .enumerate()
        .map(|(i, &x)| T::from_count(i + 1) * x)
        .sum();
    let two = T::c(2.0);
    let g = two * weighted / (n * sum) - (n + T::one()) / n;
    Ok(g.max(T::zero()))
}

/// Smallest `k` such that the `k` largest amounts hold strictly more than `tau` of the total.
pub fn tau_index<T: Scalar>(amounts: &[T], tau: T) -> Result<usize, MetricError> {
    if !(tau > T::zero() && tau < T::one()) {
        return Err(MetricError::InvalidTau(tau.to_f64_lossy()));
    }
    let sum = total(amounts)?;
    // rounding in the running sum must not turn an exact tie into a strict excess
    let slack = sum * T::epsilon() * T::from_count(4 * amounts.len());
    let target = tau * sum + slack;
    let mut acc = T::zero();
    let sorted = sorted_desc(amounts);
    for (k, a) in sorted.iter().enumerate() {
        acc = acc + *a;
        if acc > target {
            return Ok(k + 1);
        }
    }
    Ok(sorted.iter().filter(|a| **a > T::zero()).count())
}

/// Minimum number of entities that together control a strict majority.
pub fn nakamoto<T: Scalar>(amounts: &[T]) -> Result<usize, MetricError> {
    tau_index(amounts, T::c(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRatio<T> {
    pub value: T,
    /// Set when `m` exceeds the population size.
    pub truncated: bool,
}

/// Combined share of the `m` largest entities.
pub fn concentration_ratio<T: Scalar>(amounts: &[T], m: usize) -> Result<ConcentrationRatio<T>, MetricError> {
    if m == 0 {
        return Err(MetricError::InvalidM);
    }
    let sum = total(amounts)?;
    if m >= amounts.len() {
        return Ok(ConcentrationRatio {
            value: T::one(),
            truncated: m > amounts.len(),
        });
    }
    let top: T = sorted_desc(amounts).into_iter().take(m).sum();
    Ok(ConcentrationRatio {
        value: (top / sum).min(T::one()),
        truncated: false,
    })
}

/// Antitrust concentration bands of the HHI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HhiBand {
    /// Below 1,500.
    Unconcentrated,
    /// 1,500 to 2,500 inclusive.
    Moderate,
    /// Above 2,500.
    High,
}

impl HhiBand {
    pub fn classify(value: f64) -> Self {
        if value < 1500.0 {
            HhiBand::Unconcentrated
        } else if value <= 2500.0 {
            HhiBand::Moderate
        } else {
            HhiBand::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hhi<T> {
    pub value: T,
    pub band: HhiBand,
}

/// Herfindahl-Hirschman index on the 0..=10,000 scale (percentage shares squared).
pub fn hhi<T: Scalar>(amounts: &[T]) -> Result<Hhi<T>, MetricError> {
    let sum = total(amounts)?;
    let hundred = T::c(100.0);
    let value: T = amounts
        .iter()
        .map(|&a| {
            let pct = hundred * a / sum;
            pct * pct
        })
        .sum();
    Ok(Hhi {
        value,
        band: HhiBand::classify(value.to_f64_lossy()),
    })
}

/// Number of entities holding a positive amount.
pub fn num_parties<T: Scalar>(amounts: &[T]) -> usize {
    amounts.iter().filter(|a| **a > T::zero()).count()
}

/// Theil T index with the mean taken over the full population.
pub fn theil<T: Scalar>(amounts: &[T]) -> Result<T, MetricError> {
    let sum = total(amounts)?;
    let n = T::from_count(amounts.len());
    let mean = sum / n;
    let t: T = amounts
        .iter()
        .filter(|a| **a > T::zero())
        .map(|&a| {
            let r = a / mean;
            r * r.ln()
        })
        .sum();
    Ok((t / n).max(T::zero()))
}

/// A configured metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    Entropy { base: f64 },
    Gini,
    Nakamoto,
    Tau(f64),
    Cr(usize),
    Hhi,
    Parties,
    Theil,
}

impl MetricSpec {
    /// Column name used in reports, e.g. `tau_0.33` or `cr_3`.
    pub fn name(&self) -> String {
        match self {
            MetricSpec::Entropy { .. } => "entropy".into(),
            MetricSpec::Gini => "gini".into(),
            MetricSpec::Nakamoto => "nakamoto".into(),
            MetricSpec::Tau(t) => format!("tau_{t}"),
            MetricSpec::Cr(m) => format!("cr_{m}"),
            MetricSpec::Hhi => "hhi".into(),
            MetricSpec::Parties => "parties".into(),
            MetricSpec::Theil => "theil".into(),
        }
    }

    /// The seven-metric suite with the usual parameters (Theil is opt-in).
    pub fn default_suite() -> Vec<MetricSpec> {
        vec![
            MetricSpec::Entropy { base: 2.0 },
            MetricSpec::Gini,
            MetricSpec::Nakamoto,
            MetricSpec::Tau(0.33),
            MetricSpec::Cr(1),
            MetricSpec::Cr(3),
            MetricSpec::Cr(4),
            MetricSpec::Cr(5),
            MetricSpec::Hhi,
            MetricSpec::Parties,
        ]
    }

    pub fn compute<T: Scalar>(&self, amounts: &[T]) -> Result<T, MetricError> {
        let count = |n: usize| T::from_count(n);
        match *self {
            MetricSpec::Entropy { base } => entropy(amounts, T::c(base)),
            MetricSpec::Gini => gini(amounts),
            MetricSpec::Nakamoto => nakamoto(amounts).map(count),
            MetricSpec::Tau(t) => tau_index(amounts, T::c(t)).map(count),
            MetricSpec::Cr(m) => concentration_ratio(amounts, m).map(|c| c.value),
            MetricSpec::Hhi => hhi(amounts).map(|h| h.value),
            MetricSpec::Parties => Ok(count(num_parties(amounts))),
            MetricSpec::Theil => theil(amounts),
        }
    }

    /// Evaluates the metric on a distribution.
    pub fn evaluate<T: Scalar>(&self, d: &ResourceDistribution) -> Result<MetricValue<T>, MetricError> {
        let amounts = d.amounts::<T>();
        Ok(MetricValue {
            name: self.name(),
            value: self.compute(&amounts)?,
            n: d.n(),
            snapshot: d.snapshot(),
        })
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Entropy { base } if *base != 2.0 => write!(f, "entropy:{base}"),
            MetricSpec::Tau(t) => write!(f, "tau:{t}"),
            MetricSpec::Cr(m) => write!(f, "cr:{m}"),
            other => f.write_str(&other.name()),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64, String> {
            a.ok_or_else(|| format!("metric `{head}` needs a parameter"))?
                .parse::<f64>()
                .map_err(|_| format!("invalid parameter in `{s}`"))
        };
        match head {
            "entropy" => Ok(MetricSpec::Entropy {
                base: arg.map(|a| num(Some(a))).transpose()?.unwrap_or(2.0),
            }),
            "gini" => Ok(MetricSpec::Gini),
            "nakamoto" => Ok(MetricSpec::Nakamoto),
            "tau" => {
                let t = num(arg)?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(format!("tau must lie in (0, 1), got {t}"));
                }
                Ok(MetricSpec::Tau(t))
            }
            "cr" => arg
                .ok_or_else(|| "metric `cr` needs a parameter".to_string())?
                .parse::<usize>()
                .ok()
                .filter(|m| *m > 0)
                .map(MetricSpec::Cr)
                .ok_or_else(|| format!("invalid concentration ratio `{s}`")),
            "hhi" => Ok(MetricSpec::Hhi),
            "parties" => Ok(MetricSpec::Parties),
            "theil" => Ok(MetricSpec::Theil),
            _ => Err(format!("unknown metric `{s}`")),
        }
    }
}

/// One metric evaluated at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue<T> {
    pub name: String,
    pub value: T,
    /// Population size the value was computed over.
    pub n: usize,
    pub snapshot: DateTime<Utc>,
}
