use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{eigen_symmetric, DataMatrix, Matrix, StatsError};
use crate::scalar::Scalar;

/// Diagonal ridge added when a correlation matrix cannot be inverted.
pub const KMO_RIDGE: f64 = 1e-8;
const PIVOT_TOL: f64 = 1e-12;
const HEYWOOD_CEILING: f64 = 1.0 - 1e-6;
const PERFECT_CORRELATION: f64 = 1.0 - 1e-10;

fn pivot_tol<T: Scalar>() -> T {
    T::c(PIVOT_TOL).max(T::epsilon() * T::c(16.0))
}

fn ridge<T: Scalar>() -> T {
    T::c(KMO_RIDGE).max(T::epsilon() * T::c(64.0))
}

/// Inverts `r`, retrying once with a small diagonal ridge.
fn invert_with_ridge<T: Scalar>(r: &Matrix<T>) -> Result<(Matrix<T>, bool), StatsError> {
    if let Some(inv) = r.inverse(pivot_tol()) {
        return Ok((inv, false));
    }
    let mut ridged = r.clone();
    for i in 0..r.rows() {
        ridged[(i, i)] = ridged[(i, i)] + ridge();
    }
    ridged
        .inverse(pivot_tol())
        .map(|inv| (inv, true))
        .ok_or_else(|| {
            StatsError::SingularCorrelation("inversion failed even after adding a ridge".into())
        })
}

/// Kaiser-Meyer-Olkin measure of sampling adequacy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kmo<T> {
    pub overall: T,
    pub per_variable: Vec<T>,
    /// True when the correlation matrix needed a ridge to be inverted.
    pub ridge_applied: bool,
}

pub fn kmo_from_correlation<T: Scalar>(r: &Matrix<T>) -> Result<Kmo<T>, StatsError> {
    let (p_inv, ridge_applied) = invert_with_ridge(r)?;
    let n = r.rows();
    let ratio = |a: T, b: T| {
        if a + b > T::zero() {
            a / (a + b)
        } else {
            T::zero()
        }
    };
    let (mut r_all, mut u_all) = (T::zero(), T::zero());
    let mut per_variable = Vec::with_capacity(n);
    for i in 0..n {
        let (mut r_i, mut u_i) = (T::zero(), T::zero());
        for j in 0..n {
            if i == j {
                continue;
            }
            let u = -p_inv[(i, j)] / (p_inv[(i, i)] * p_inv[(j, j)]).sqrt();
            r_i = r_i + r[(i, j)] * r[(i, j)];
            u_i = u_i + u * u;
        }
        per_variable.push(ratio(r_i, u_i));
        r_all = r_all + r_i;
        u_all = u_all + u_i;
    }
    Ok(Kmo {
        overall: ratio(r_all, u_all),
        per_variable,
        ridge_applied,
    })
}

pub fn kmo<T: Scalar>(m: &DataMatrix<T>) -> Result<Kmo<T>, StatsError> {
    kmo_from_correlation(&m.correlation()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    None,
    Varimax,
    #[default]
    Promax,
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Varimax => "varimax",
            Self::Promax => "promax",
        })
    }
}

impl FromStr for Rotation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "varimax" => Ok(Self::Varimax),
            "promax" => Ok(Self::Promax),
            other => Err(format!(
                "unknown rotation {other:?} (expected none, varimax or promax)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfaOptions {
    pub rotation: Rotation,
    pub promax_power: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub rotation_tolerance: f64,
    pub rotation_max_iterations: usize,
}

impl Default for EfaOptions {
    fn default() -> Self {
        Self {
            rotation: Rotation::Promax,
            promax_power: 4.0,
            max_iterations: 200,
            tolerance: 1e-6,
            rotation_tolerance: 1e-6,
            rotation_max_iterations: 1000,
        }
    }
}

impl EfaOptions {
    pub fn with_rotation(rotation: Rotation) -> Self {
        Self {
            rotation,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<T> {
    pub variables: Vec<String>,
    pub correlation: Matrix<T>,
    /// Eigenvalues of the unreduced correlation matrix, descending.
    pub eigenvalues: Vec<T>,
    pub n_factors: usize,
    /// Variables × factors. Pattern loadings for promax.
    pub loadings: Matrix<T>,
    pub unrotated: Matrix<T>,
    pub communalities: Vec<T>,
    pub rotation: Rotation,
    /// Present for promax only.
    pub factor_correlations: Option<Matrix<T>>,
    /// Column sums of squared loadings.
    pub explained_variance: Vec<T>,
    /// Variables whose communality exceeded one and was clamped.
    pub heywood: Vec<String>,
    pub iterations: usize,
}

/// Tucker's congruence coefficient between two loading vectors.
pub fn tucker_congruence<T: Scalar>(x: &[T], y: &[T]) -> T {
    let xy = x.iter().zip(y).map(|(a, b)| *a * *b).sum::<T>();
    let xx = x.iter().map(|a| *a * *a).sum::<T>();
    let yy = y.iter().map(|b| *b * *b).sum::<T>();
    xy / (xx * yy).sqrt()
}

fn row_norms<T: Scalar>(l: &Matrix<T>) -> Vec<T> {
    (0..l.rows())
        .map(|i| l.row(i).iter().map(|v| *v * *v).sum::<T>().sqrt())
        .collect()
}

/// Kaiser-normalized varimax. Returns the rotated loadings and the rotation matrix.
pub fn varimax<T: Scalar>(
    l: &Matrix<T>,
    tolerance: T,
    max_iterations: usize,
) -> Result<(Matrix<T>, Matrix<T>), StatsError> {
    let (p, k) = (l.rows(), l.cols());
    let h = row_norms(l);
    let mut a = Matrix::from_fn(p, k, |i, j| {
        if h[i] > T::zero() {
            l[(i, j)] / h[i]
        } else {
            l[(i, j)]
        }
    });
    let mut rot: Matrix<T> = Matrix::identity(k);
    let pn = T::from_count(p);
    let two = T::c(2.0);
    let mut converged = k < 2;
    let mut iterations = 0;
    while !converged {
        if iterations == max_iterations {
            return Err(StatsError::NoConvergence {
                what: "varimax rotation",
                iterations,
            });
        }
        iterations += 1;
        let mut largest = T::zero();
        for i in 0..k {
            for j in i + 1..k {
                let (mut sa, mut sb, mut sc, mut sd) = (T::zero(), T::zero(), T::zero(), T::zero());
                for r in 0..p {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    let u = x * x - y * y;
                    let v = two * x * y;
                    sa = sa + u;
                    sb = sb + v;
                    sc = sc + u * u - v * v;
                    sd = sd + u * v;
                }
                sd = two * sd;
                let num = sd - two * sa * sb / pn;
                let den = sc - (sa * sa - sb * sb) / pn;
                let phi = num.atan2(den) / T::c(4.0);
                largest = largest.max(phi.abs());
                let (s, c) = phi.sin_cos();
                for r in 0..p {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    a[(r, i)] = x * c + y * s;
                    a[(r, j)] = -x * s + y * c;
                }
                for r in 0..k {
                    let (x, y) = (rot[(r, i)], rot[(r, j)]);
                    rot[(r, i)] = x * c + y * s;
                    rot[(r, j)] = -x * s + y * c;
                }
            }
        }
        converged = largest < tolerance;
    }
    let rotated = Matrix::from_fn(p, k, |i, j| {
        if h[i] > T::zero() {
            a[(i, j)] * h[i]
        } else {
            a[(i, j)]
        }
    });
    Ok((rotated, rot))
}

/// Promax rotation of varimax loadings. Returns the pattern matrix and factor correlations.
pub fn promax<T: Scalar>(
    varimax_loadings: &Matrix<T>,
    power: T,
) -> Result<(Matrix<T>, Matrix<T>), StatsError> {
    let x = varimax_loadings;
    let singular = || StatsError::SingularCorrelation("promax target could not be solved".into());
    let q = x.map(|v| v * v.abs().powf(power - T::one()));
    let xt = x.transpose();
    let xtx_inv = (&xt * x).inverse(pivot_tol()).ok_or_else(singular)?;
    let mut u = &(&xtx_inv * &xt) * &q;
    let d = (&u.transpose() * &u)
        .inverse(pivot_tol())
        .ok_or_else(singular)?
        .diagonal();
    for j in 0..u.cols() {
        let s = d[j].sqrt();
        for i in 0..u.rows() {
            u[(i, j)] = u[(i, j)] * s;
        }
    }
    let pattern = x * &u;
    let phi = (&u.transpose() * &u)
        .inverse(pivot_tol())
        .ok_or_else(singular)?;
    Ok((pattern, phi))
}

/// Flips each column so its largest-magnitude entry is positive, then orders columns by
/// explained variance. Factor correlations follow the same permutation and signs.
fn normalize_columns<T: Scalar>(
    loadings: &Matrix<T>,
    phi: Option<&Matrix<T>>,
) -> (Matrix<T>, Option<Matrix<T>>, Vec<T>) {
    let k = loadings.cols();
    let mut signs = vec![T::one(); k];
    let mut ss = vec![T::zero(); k];
    for j in 0..k {
        let col = loadings.column(j);
        let lead = col
            .iter()
            .copied()
            .fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < T::zero() {
            signs[j] = -T::one();
        }
        ss[j] = col.iter().map(|v| *v * *v).sum();
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        ss[b]
            .partial_cmp(&ss[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let out = Matrix::from_fn(loadings.rows(), k, |i, j| {
        loadings[(i, order[j])] * signs[order[j]]
    });
    let phi = phi.map(|m| {
        Matrix::from_fn(k, k, |i, j| {
            m[(order[i], order[j])] * signs[order[i]] * signs[order[j]]
        })
    });
    (out, phi, order.iter().map(|&j| ss[j]).collect())
}

fn check_not_degenerate<T: Scalar>(r: &Matrix<T>, names: &[String]) -> Result<(), StatsError> {
    let limit = T::c(PERFECT_CORRELATION).min(T::one() - T::epsilon() * T::c(16.0));
    for i in 0..r.rows() {
        for j in i + 1..r.cols() {
            if r[(i, j)].abs() >= limit {
                return Err(StatsError::SingularCorrelation(format!(
                    "columns {:?} and {:?} are perfectly correlated (r = {}); drop one of them",
                    names[i], names[j], r[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Principal-axis factoring on a correlation matrix, followed by the requested rotation.
pub fn efa_from_correlation<T: Scalar>(
    r: &Matrix<T>,
    names: &[String],
    n_factors: usize,
    opts: &EfaOptions,
) -> Result<FactorModel<T>, StatsError> {
    let p = r.rows();
    assert_eq!(names.len(), p, "one name per variable");
    if n_factors < 1 || n_factors + 1 > p {
        return Err(StatsError::InvalidFactorCount {
            requested: n_factors,
            max: p.saturating_sub(1),
        });
    }
    check_not_degenerate(r, names)?;
    let eigenvalues = eigen_symmetric(r)?.values;

    let (p_inv, _) = invert_with_ridge(r)?;
    let ceiling = T::c(HEYWOOD_CEILING);
    let mut h: Vec<T> = (0..p)
        .map(|i| (T::one() - T::one() / p_inv[(i, i)]).max(T::zero()).min(ceiling))
        .collect();
    let tol = T::c(opts.tolerance);
    let mut heywood = Vec::new();
    let mut iterations = 0;
    let unrotated = loop {
        if iterations == opts.max_iterations {
            return Err(StatsError::NoConvergence {
                what: "principal-axis factoring",
                iterations,
            });
        }
        iterations += 1;
        let mut reduced = r.clone();
        for i in 0..p {
            reduced[(i, i)] = h[i];
        }
        let e = eigen_symmetric(&reduced)?;
        let l = Matrix::from_fn(p, n_factors, |i, j| {
            e.vectors[(i, j)] * e.values[j].max(T::zero()).sqrt()
        });
        heywood.clear();
        let mut change = T::zero();
        for (i, hi) in h.iter_mut().enumerate() {
            let mut next = l.row(i).iter().map(|v| *v * *v).sum::<T>();
            if next > T::one() {
                next = ceiling;
                heywood.push(names[i].clone());
            }
            change = change.max((next - *hi).abs());
            *hi = next;
        }
        if change < tol {
            break l;
        }
    };
    for name in &heywood {
        log::warn!("Heywood case: communality of {name} exceeded 1 and was clamped");
    }

    let (loadings, factor_correlations, explained_variance) = match opts.rotation {
        Rotation::None => {
            let ss = (0..n_factors)
                .map(|j| unrotated.column(j).iter().map(|v| *v * *v).sum())
                .collect();
            (unrotated.clone(), None, ss)
        }
        Rotation::Varimax => {
            let (rotated, _) = varimax(
                &unrotated,
                T::c(opts.rotation_tolerance),
                opts.rotation_max_iterations,
            )?;
            normalize_columns(&rotated, None)
        }
        Rotation::Promax => {
            let (rotated, _) = varimax(
                &unrotated,
                T::c(opts.rotation_tolerance),
                opts.rotation_max_iterations,
            )?;
            if n_factors == 1 {
                let (l, _, ss) = normalize_columns(&rotated, None);
                (l, Some(Matrix::identity(1)), ss)
            } else {
                let (pattern, phi) = promax(&rotated, T::c(opts.promax_power))?;
                normalize_columns(&pattern, Some(&phi))
            }
        }
    };
    Ok(FactorModel {
        variables: names.to_vec(),
        correlation: r.clone(),
        eigenvalues,
        n_factors,
        loadings,
        unrotated,
        communalities: h,
        rotation: opts.rotation,
        factor_correlations,
        explained_variance,
        heywood,
        iterations,
    })
}

pub fn efa<T: Scalar>(
    m: &DataMatrix<T>,
    n_factors: usize,
    opts: &EfaOptions,
) -> Result<FactorModel<T>, StatsError> {
    efa_from_correlation(&m.correlation()?, m.columns(), n_factors, opts)
}
