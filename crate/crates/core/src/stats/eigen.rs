use super::{Matrix, StatsError};
use crate::scalar::Scalar;

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
///
/// `values` are in descending order and column `j` of `vectors` pairs with `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

fn off_diagonal_max<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut m = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Cyclic Jacobi eigen-decomposition.
///
/// Each eigenvector is signed so that its largest-magnitude component is positive.
pub fn eigen_symmetric<T: Scalar>(r: &Matrix<T>) -> Result<Eigen<T>, StatsError> {
    let scale = r.max_abs().max(T::one());
    let eps = T::epsilon();
    if !r.is_symmetric(T::c(1e-10).max(eps * T::c(64.0)) * scale) {
        return Err(StatsError::NotSymmetric);
    }
    let n = r.rows();
    let tol = T::c(1e-12).max(eps * T::c(8.0)) * scale;
    let mut a = r.clone();
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;
    while off_diagonal_max(&a) >= tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(StatsError::NoConvergence {
                what: "Jacobi eigen-decomposition",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                a[(p, p)] = a[(p, p)] - t * apq;
                a[(q, q)] = a[(q, q)] + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    if k != p && k != q {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        a[(k, p)] = np;
                        a[(p, k)] = np;
                        a[(k, q)] = nq;
                        a[(q, k)] = nq;
                    }
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let diag = a.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        diag[j]
            .partial_cmp(&diag[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut vectors = v.select_columns(&order);
    for j in 0..n {
        let col = vectors.column(j);
        let lead = col
            .iter()
            .copied()
            .fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < T::zero() {
            let flipped: Vec<T> = col.iter().map(|x| -*x).collect();
            vectors.set_column(j, &flipped);
        }
    }
    Ok(Eigen {
        values: order.iter().map(|&i| diag[i]).collect(),
        vectors,
        sweeps,
    })
}

/// Number of eigenvalues strictly greater than one.
pub fn kaiser_count<T: Scalar>(eigenvalues: &[T]) -> usize {
    eigenvalues.iter().filter(|v| **v > T::one()).count()
}
