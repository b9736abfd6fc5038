//! Dense symmetric factorisations used for permissibility checks, log
//! determinants and Gaussian sampling. Matrices are row-major `n × n`.

use crate::scalar::Scalar;

/// Outcome of an `LDLᵀ` factorisation without pivoting.
#[derive(Clone, Debug)]
pub struct LdlOutcome<T> {
    /// Pivots `D_ii` computed before the first non-positive one (all of them
    /// on success).
    pub pivots: Vec<T>,
    /// Index of the first non-positive pivot, if any.
    pub failed_at: Option<usize>,
}

impl<T: Scalar> LdlOutcome<T> {
    pub fn positive_definite(&self) -> bool {
        self.failed_at.is_none()
    }

    pub fn min_pivot(&self) -> T {
        self.pivots.iter().copied().fold(T::infinity(), T::min)
    }

    /// `ln det A = Σ ln D_ii`; only meaningful when positive definite.
    pub fn log_det(&self) -> Option<T> {
        self.positive_definite()
            .then(|| self.pivots.iter().map(|d| d.ln()).sum())
    }
}

/// `A = L D Lᵀ` with unit lower `L`. Stops at the first pivot that is not
/// strictly positive. `a` is consumed as workspace.
pub fn ldl_factor<T: Scalar>(mut a: Vec<T>, n: usize) -> LdlOutcome<T> {
    assert_eq!(a.len(), n * n);
    let mut pivots = Vec::with_capacity(n);
    // Column j of L is stored below the diagonal; a[j*n+j] holds D_jj.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            let l = a[j * n + k];
            d = d - l * l * pivots[k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            pivots.push(d);
            return LdlOutcome {
                pivots,
                failed_at: Some(j),
            };
        }
        pivots.push(d);
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k] * pivots[k];
            }
            a[i * n + j] = s / d;
        }
    }
    LdlOutcome {
        pivots,
        failed_at: None,
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`, or the failing column.
pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>, usize> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(l)
}

/// `y = L z` for a lower-triangular row-major `L`.
pub fn lower_mul<T: Scalar>(l: &[T], n: usize, z: &[T]) -> Vec<T> {
    (0..n)
        .map(|i| (0..=i).fold(T::zero(), |s, k| s + l[i * n + k] * z[k]))
        .collect()
}
