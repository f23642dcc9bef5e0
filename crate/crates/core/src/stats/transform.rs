use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::scalar::Scalar;

const LAMBDA_RANGE: (f64, f64) = (-5.0, 5.0);
const LAMBDA_TOL: f64 = 1e-4;

fn mean_sd<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::from_count(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Indices farther than three population standard deviations from the mean.
pub fn detect_outliers<T: Scalar>(x: &[T]) -> Result<Vec<usize>, StatsError> {
    if x.len() < 3 {
        return Err(StatsError::TooShort {
            needed: 3,
            got: x.len(),
        });
    }
    let (mean, sd) = mean_sd(x);
    let limit = T::c(3.0) * sd;
    Ok((0..x.len())
        .filter(|&i| (x[i] - mean).abs() > limit)
        .collect())
}

/// Clamps values to mean ± 3 sd.
pub fn winsorize<T: Scalar>(x: &[T]) -> Vec<T> {
    if x.is_empty() {
        return Vec::new();
    }
    let (mean, sd) = mean_sd(x);
    let limit = T::c(3.0) * sd;
    x.iter()
        .map(|v| v.max(mean - limit).min(mean + limit))
        .collect()
}

/// How outliers are handled before factor analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierTreatment {
    /// Remove rows holding an outlier in any column.
    Drop,
    Winsorize,
    /// Leave values alone and rely on the Box-Cox transform.
    #[default]
    TransformOnly,
}

impl fmt::Display for OutlierTreatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Drop => "drop",
            Self::Winsorize => "winsorize",
            Self::TransformOnly => "transform-only",
        })
    }
}

impl FromStr for OutlierTreatment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "drop" => Ok(Self::Drop),
            "winsorize" => Ok(Self::Winsorize),
            "transform-only" => Ok(Self::TransformOnly),
            other => Err(format!(
                "unknown outlier treatment {other:?} (expected drop, winsorize or transform-only)"
            )),
        }
    }
}

pub fn box_cox_transform<T: Scalar>(x: T, lambda: T) -> T {
    if lambda == T::zero() {
        x.ln()
    } else {
        (lambda * x.ln()).exp_m1() / lambda
    }
}

/// Profile log-likelihood of λ for strictly positive data.
pub fn box_cox_log_likelihood<T: Scalar>(x: &[T], lambda: T) -> T {
    let y: Vec<T> = x.iter().map(|v| box_cox_transform(*v, lambda)).collect();
    let (_, sd) = mean_sd(&y);
    let var = sd * sd;
    if !(var > T::zero()) || !var.is_finite() {
        return T::neg_infinity();
    }
    let n = T::from_count(x.len());
    let log_sum = x.iter().map(|v| v.ln()).sum::<T>();
    -n / T::c(2.0) * var.ln() + (lambda - T::one()) * log_sum
}

fn golden_max<T: Scalar>(f: impl Fn(T) -> T, lo: T, hi: T, tol: T) -> T {
    let inv_phi = T::c((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / T::c(2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxCox<T> {
    pub values: Vec<T>,
    pub lambda: T,
    /// Amount added before transforming; zero when no shift was needed.
    pub shift: T,
}

/// Box-Cox transform with a given λ, or the maximum-likelihood λ on [-5, 5].
pub fn box_cox<T: Scalar>(
    x: &[T],
    lambda: Option<T>,
    allow_shift: bool,
) -> Result<BoxCox<T>, StatsError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let min = x.iter().copied().fold(T::infinity(), T::min);
    let shift = if x.is_empty() || min > T::zero() {
        T::zero()
    } else if allow_shift {
        T::one() - min
    } else {
        return Err(StatsError::NonPositiveData);
    };
    let shifted: Vec<T> = x.iter().map(|v| *v + shift).collect();
    let lambda = match lambda {
        Some(l) => l,
        None => {
            if shifted.len() < 3 {
                return Err(StatsError::TooShort {
                    needed: 3,
                    got: shifted.len(),
                });
            }
            if shifted.iter().all(|v| *v == shifted[0]) {
                return Err(StatsError::ConstantSeries);
            }
            golden_max(
                |l| box_cox_log_likelihood(&shifted, l),
                T::c(LAMBDA_RANGE.0),
                T::c(LAMBDA_RANGE.1),
                T::c(LAMBDA_TOL),
            )
        }
    };
    Ok(BoxCox {
        values: shifted
            .iter()
            .map(|v| box_cox_transform(*v, lambda))
            .collect(),
        lambda,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, LogNormal};

    #[test]
    fn outlier_examples() {
        assert!(detect_outliers(&[0.0, 0.0, 0.0, 100.0]).unwrap().is_empty());
        assert!(detect_outliers(&[5.0; 10]).unwrap().is_empty());

        let mut x: Vec<f64> = (0..50).map(|i| f64::from(i % 5)).collect();
        let (m, sd) = mean_sd(&x);
        x.push(m + 10.0 * sd);
        assert_eq!(detect_outliers(&x).unwrap(), vec![50]);
    }

    #[test]
    fn winsorize_clamps_only_extremes() {
        let mut x: Vec<f64> = (0..50).map(|i| f64::from(i % 5)).collect();
        x.push(1000.0);
        let w = winsorize(&x);
        assert_eq!(&w[..50], &x[..50]);
        assert!(w[50] < 1000.0);
    }

    #[test]
    fn fixed_lambda() {
        let x = [0.5f64, 2.0, 7.0];
        let one = box_cox(&x, Some(1.0), false).unwrap();
        for (a, b) in one.values.iter().zip(&x) {
            assert!((a - (b - 1.0)).abs() < 1e-13);
        }
        let zero = box_cox(&x, Some(0.0), false).unwrap();
        for (a, b) in zero.values.iter().zip(&x) {
            assert_eq!(*a, b.ln());
        }
    }

    #[test]
    fn nonpositive_needs_shift() {
        let x = [0.0, 1.0, 2.0];
        assert_eq!(box_cox(&x, Some(1.0), false), Err(StatsError::NonPositiveData));
        let r = box_cox(&x, Some(1.0), true).unwrap();
        assert_eq!(r.shift, 1.0);
        assert_eq!(r.values, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn lognormal_mle_near_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let dist = LogNormal::new(0.0, 0.5).unwrap();
        let x: Vec<f64> = (0..400).map(|_| dist.sample(&mut rng)).collect();
        let fit = box_cox(&x, None, false).unwrap();
        // grid search oracle
        let grid_best = (0..=1000)
            .map(|i| -5.0 + f64::from(i) * 0.01)
            .max_by(|a, b| {
                box_cox_log_likelihood(&x, *a)
                    .partial_cmp(&box_cox_log_likelihood(&x, *b))
                    .unwrap()
            })
            .unwrap();
        assert!((fit.lambda - grid_best).abs() < 0.011, "{} vs {grid_best}", fit.lambda);
        assert!(fit.lambda.abs() < 0.15, "lambda {}", fit.lambda);
    }

    #[test]
    fn lambda_one_keeps_argmax() {
        let x = [3.0, 9.0, 1.0, 4.0];
        let y = box_cox(&x, Some(1.0), false).unwrap().values;
        let arg = |v: &[f64]| {
            (0..v.len())
                .max_by(|a, b| v[*a].partial_cmp(&v[*b]).unwrap())
                .unwrap()
        };
        assert_eq!(arg(&x), arg(&y));
    }

    #[test]
    fn treatment_round_trip() {
        for t in [
            OutlierTreatment::Drop,
            OutlierTreatment::Winsorize,
            OutlierTreatment::TransformOnly,
        ] {
            assert_eq!(t.to_string().parse::<OutlierTreatment>().unwrap(), t);
        }
    }
}
