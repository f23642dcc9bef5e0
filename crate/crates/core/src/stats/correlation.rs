use std::fmt;

use rayon::prelude::*;

use super::{Matrix, StatsError};
use crate::scalar::Scalar;

/// Average-of-tied ranks, starting at 1.
pub fn fractional_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j share the rank ((i+1)+(j+1))/2
        let rank = T::from_count(i + j + 2) / T::c(2.0);
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    check_pair(x, y)?;
    let n = T::from_count(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (*a - mx, *b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ConstantSeries);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Spearman rank correlation.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Pairwise correlation grid with unit diagonal.
pub fn correlation_matrix<T: Scalar>(
    columns: &[Vec<T>],
    f: fn(&[T], &[T]) -> Result<T, StatsError>,
) -> Result<Matrix<T>, StatsError> {
    let p = columns.len();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| f(&columns[i], &columns[j]))
        .collect::<Result<Vec<T>, _>>()?;
    let mut r = Matrix::identity(p);
    for (&(i, j), v) in pairs.iter().zip(values) {
        r[(i, j)] = v;
        r[(j, i)] = v;
    }
    Ok(r)
}

pub fn spearman_matrix<T: Scalar>(columns: &[Vec<T>]) -> Result<Matrix<T>, StatsError> {
    correlation_matrix(columns, spearman)
}

/// Qualitative label for |r|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CorrelationStrength {
    Negligible,
    Low,
    Moderate,
    High,
    VeryHigh,
}

impl CorrelationStrength {
    pub fn classify(r: f64) -> Self {
        let a = r.abs();
        if a >= 0.9 {
            Self::VeryHigh
        } else if a >= 0.7 {
            Self::High
        } else if a >= 0.5 {
            Self::Moderate
        } else if a >= 0.3 {
            Self::Low
        } else {
            Self::Negligible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negligible => "negligible",
            Self::Low => "low",
            Self::Moderate => "moderate",
            Self::High => "high",
            Self::VeryHigh => "very high",
        }
    }
}

impl fmt::Display for CorrelationStrength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_rank(x: &[f64], i: usize) -> f64 {
        let less = x.iter().filter(|v| **v < x[i]).count() as f64;
        let equal = x.iter().filter(|v| **v == x[i]).count() as f64;
        less + (equal + 1.0) / 2.0
    }

    #[test]
    fn monotone_extremes() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn constant_is_an_error() {
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ConstantSeries)
        );
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooShort { .. })
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            fractional_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
    }

    #[test]
    fn strength_cut_points() {
        assert_eq!(CorrelationStrength::classify(0.29), CorrelationStrength::Negligible);
        assert_eq!(CorrelationStrength::classify(-0.3), CorrelationStrength::Low);
        assert_eq!(CorrelationStrength::classify(0.5), CorrelationStrength::Moderate);
        assert_eq!(CorrelationStrength::classify(0.7), CorrelationStrength::High);
        assert_eq!(CorrelationStrength::classify(-0.95), CorrelationStrength::VeryHigh);
    }

    proptest! {
        #[test]
        fn ranks_match_brute_force(x in prop::collection::vec(0u8..6, 3..30)) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let r = fractional_ranks(&x);
            for i in 0..x.len() {
                prop_assert_eq!(r[i], brute_rank(&x, i));
            }
        }

        #[test]
        fn symmetric_and_monotone_invariant(
            pairs in prop::collection::vec((0u8..10, 0u8..10), 4..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&y, &x)) {
                prop_assert_eq!(a, b);
                let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 7.0).collect();
                prop_assert_eq!(spearman(&tx, &y).unwrap(), a);
                prop_assert_eq!(spearman(&x, &x).unwrap(), 1.0);
            }
        }
    }
}
