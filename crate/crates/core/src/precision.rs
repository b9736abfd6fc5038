//! Normalised kernel weights, network matrices and the SLI precision matrix.
//!
//! For each interaction term `q` the weights `u_{i,j}(h_{q;i})` are kernel
//! values rooted at `s_i`, normalised by the double sum over *all* ordered
//! pairs `i, j = 1..N` (self pairs included, each contributing `K(0) = 1`).
//! Term 1 is the gradient term with bandwidths `h_1`; terms 2–4 are the
//! curvature terms with bandwidths `h_2`, `√2·h_2` and `2·h_2`.
//!
//! The precision matrix is
//!
//! ```text
//! J = (1/λ) { I/N + α1·c1·J_1 + α2·[c21·J_2 − c22·J_3 − c23·J_4] }
//! ```
//!
//! with `c1 = 1` and `(c21, c22, c23) = (4d(d+2), 2d(d−1), d)`.

use rayon::prelude::*;

use crate::error::{Result, SliError};
use crate::geometry::{build_neighbor_table, compute_bandwidths, euclidean, BandwidthSet, PointSet};
use crate::kernels::KernelSpec;
use crate::linalg::ldl_factor;
use crate::scalar::Scalar;
use crate::sparse::SymCsr;

/// Number of interaction terms (one gradient, three curvature).
pub const TERMS: usize = 4;

/// Multiplier of the base bandwidth for each term.
pub fn bandwidth_factors<T: Scalar>() -> [T; TERMS] {
    [T::one(), T::one(), T::of(2.0).sqrt(), T::of(2.0)]
}

/// Gradient coefficient `c1`. It only ever appears as `α1·c1`, so its value
/// is absorbed by the fitted `α1`.
pub fn gradient_coefficient<T: Scalar>() -> T {
    T::one()
}

/// Curvature coefficients `(4d(d+2), 2d(d−1), d)`.
pub fn curvature_coefficients<T: Scalar>(d: usize) -> [T; 3] {
    let d = d as f64;
    [
        T::of(4.0 * d * (d + 2.0)),
        T::of(2.0 * d * (d - 1.0)),
        T::of(d),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliParams<T> {
    pub m_x: T,
    pub alpha1: T,
    pub alpha2: T,
    pub lambda: T,
    pub mu: T,
    pub k: usize,
    pub kernel: KernelSpec,
}

impl<T: Scalar> SliParams<T> {
    /// Checks `α1, α2 ≥ 0`, `λ > 0`, `μ > 0`, `k ≥ 1` and a finite mean.
    ///
    /// Zero `α` values are accepted so the pure-fluctuation matrix can be
    /// built; positive values are the sufficient permissibility condition.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: T| {
            Err(SliError::InvalidParameter(format!("{what} = {v} is out of range")))
        };
        if !self.m_x.is_finite() {
            return bad("m_x", self.m_x);
        }
        if !(self.alpha1 >= T::zero()) || !self.alpha1.is_finite() {
            return bad("alpha1", self.alpha1);
        }
        if !(self.alpha2 >= T::zero()) || !self.alpha2.is_finite() {
            return bad("alpha2", self.alpha2);
        }
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return bad("lambda", self.lambda);
        }
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return bad("mu", self.mu);
        }
        if self.k < 1 {
            return Err(SliError::InvalidParameter("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Coefficients multiplying `J_1..J_4` inside the braces:
    /// `[α1·c1, α2·c21, −α2·c22, −α2·c23]`.
    pub fn network_coefficients(&self, d: usize) -> [T; TERMS] {
        let c2 = curvature_coefficients::<T>(d);
        [
            self.alpha1 * gradient_coefficient::<T>(),
            self.alpha2 * c2[0],
            -(self.alpha2 * c2[1]),
            -(self.alpha2 * c2[2]),
        ]
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Row-compressed off-diagonal weights of one term.
#[derive(Clone, Debug)]
struct WeightRows<T> {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

/// Normalised weights `u_{i,j}(h_{q;i})` for the four terms together with
/// their bandwidths and raw normalisers `Z_q = Σ_i Σ_j K(|s_i − s_j| / h_{q;i})`.
#[derive(Clone, Debug)]
pub struct WeightTable<T> {
    n: usize,
    kernel: KernelSpec,
    bandwidths: [Vec<T>; TERMS],
    z: [T; TERMS],
    rows: [WeightRows<T>; TERMS],
}

fn term_index(q: usize) -> usize {
    assert!((1..=TERMS).contains(&q), "term index q = {q} outside 1..=4");
    q - 1
}

impl<T: Scalar> WeightTable<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    /// Bandwidths `h_{q;i}` of term `q ∈ 1..=4`.
    pub fn bandwidths(&self, q: usize) -> &[T] {
        &self.bandwidths[term_index(q)]
    }

    /// Raw normaliser `Z_q` (self pairs included).
    pub fn normalizer(&self, q: usize) -> T {
        self.z[term_index(q)]
    }

    /// Normalised self weight `K(0)/Z_q`.
    pub fn self_weight(&self, q: usize) -> T {
        T::one() / self.normalizer(q)
    }

    /// `u_{i,j}(h_{q;i})` for `i != j`; zero outside the kernel support.
    pub fn weight(&self, q: usize, i: usize, j: usize) -> T {
        if i == j {
            return self.self_weight(q);
        }
        let r = &self.rows[term_index(q)];
        let range = r.row_ptr[i]..r.row_ptr[i + 1];
        match r.cols[range.clone()].binary_search(&j) {
            Ok(p) => r.vals[range.start + p],
            Err(_) => T::zero(),
        }
    }

    /// Stored off-diagonal `(i, j, u_ij)` triples of term `q`, row by row.
    pub fn entries(&self, q: usize) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let r = &self.rows[term_index(q)];
        (0..self.n).flat_map(move |i| {
            (r.row_ptr[i]..r.row_ptr[i + 1]).map(move |p| (i, r.cols[p], r.vals[p]))
        })
    }

    pub fn stored_pairs(&self, q: usize) -> usize {
        self.rows[term_index(q)].vals.len()
    }
}

/// Builds the four weight tables. `b1` sets the gradient bandwidths, `b2` the
/// curvature ones (`h_3 = √2·h_2`, `h_4 = 2·h_2`).
pub fn build_weight_table<T: Scalar>(
    points: &PointSet<T>,
    b1: &BandwidthSet<T>,
    b2: &BandwidthSet<T>,
    kernel: KernelSpec,
) -> Result<WeightTable<T>> {
    let n = points.len();
    if b1.h.len() != n || b2.h.len() != n {
        return Err(SliError::DimensionMismatch {
            expected: n,
            found: if b1.h.len() != n { b1.h.len() } else { b2.h.len() },
        });
    }
    for (i, &h) in b1.h.iter().chain(b2.h.iter()).enumerate() {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(SliError::DegenerateBandwidth { index: i % n.max(1) });
        }
    }
    let f = bandwidth_factors::<T>();
    let bandwidths: [Vec<T>; TERMS] = [
        b1.h.clone(),
        b2.h.clone(),
        b2.scaled(f[2]),
        b2.scaled(f[3]),
    ];

    // Per row: for each term, (kernel-weighted entries, row sum incl. self).
    type Row<T> = [(Vec<(usize, T)>, T); TERMS];
    let per_row: Vec<Row<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.point(i);
            let mut out: Row<T> = std::array::from_fn(|_| (Vec::new(), T::zero()));
            for j in 0..n {
                if j == i {
                    for slot in out.iter_mut() {
                        slot.1 = slot.1 + T::one();
                    }
                    continue;
                }
                let d = euclidean(pi, points.point(j));
                for (q, slot) in out.iter_mut().enumerate() {
                    let w = kernel.weight(d, bandwidths[q][i]);
                    if w > T::zero() {
                        slot.0.push((j, w));
                        slot.1 = slot.1 + w;
                    }
                }
            }
            out
        })
        .collect();

    let mut z = [T::zero(); TERMS];
    for row in &per_row {
        for q in 0..TERMS {
            z[q] = z[q] + row[q].1;
        }
    }
    if z.iter().any(|&v| !(v > T::zero())) {
        return Err(SliError::Internal("non-positive weight normaliser".into()));
    }

    let rows: [WeightRows<T>; TERMS] = std::array::from_fn(|q| {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in &per_row {
            for &(j, w) in &row[q].0 {
                cols.push(j);
                vals.push(w / z[q]);
            }
            row_ptr.push(cols.len());
        }
        WeightRows {
            row_ptr,
            cols,
            vals,
        }
    });

    Ok(WeightTable {
        n,
        kernel,
        bandwidths,
        z,
        rows,
    })
}

/// Neighbour table, bandwidths and weight table for a parameter vector, with
/// `h_1 = h_2 = μ·D_{i,[k]}`.
pub fn weight_table_for_params<T: Scalar>(
    points: &PointSet<T>,
    params: &SliParams<T>,
) -> Result<WeightTable<T>> {
    params.validate()?;
    let table = build_neighbor_table(points, params.k)?;
    let b = compute_bandwidths(&table, params.mu, params.k)?;
    build_weight_table(points, &b, &b, params.kernel)
}

/// Network matrix `J_q`: off-diagonals `−u_ij − u_ji`, diagonal
/// `Σ_{l≠i} (u_il + u_li)`. Rows sum to zero.
#[derive(Clone, Debug)]
pub struct NetworkMatrix<T> {
    pub q: usize,
    pub matrix: SymCsr<T>,
}

impl<T: Scalar> NetworkMatrix<T> {
    /// `|J_ii| ≥ Σ_{j≠i} |J_ij|` up to a relative tolerance.
    pub fn is_diagonally_dominant(&self, rel_tol: T) -> bool {
        let off = self.matrix.offdiag_abs_sums();
        (0..self.matrix.n()).all(|i| {
            let d = self.matrix.diag(i).abs();
            d + rel_tol * d.max(off[i]) >= off[i]
        })
    }
}

pub fn build_network_matrix<T: Scalar>(w: &WeightTable<T>, q: usize) -> NetworkMatrix<T> {
    let n = w.len();
    let mut trip = Vec::with_capacity(3 * w.stored_pairs(q));
    for (i, j, u) in w.entries(q) {
        trip.push((i, j, -u));
        trip.push((i, i, u));
        trip.push((j, j, u));
    }
    NetworkMatrix {
        q,
        matrix: SymCsr::from_triplets(n, trip),
    }
}

pub fn build_network_matrices<T: Scalar>(w: &WeightTable<T>) -> [NetworkMatrix<T>; TERMS] {
    std::array::from_fn(|q| build_network_matrix(w, q + 1))
}

#[derive(Clone, Debug)]
pub struct PrecisionMatrix<T> {
    pub matrix: SymCsr<T>,
    pub params: SliParams<T>,
    pub c1: T,
    pub c2: [T; 3],
}

impl<T: Scalar> PrecisionMatrix<T> {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.matrix.row_sums()
    }

    /// Fraction of off-diagonal pairs that are structurally zero.
    pub fn sparsity(&self) -> T {
        sparsity(self)
    }
}

pub fn assemble_precision<T: Scalar>(
    nm: &[NetworkMatrix<T>; TERMS],
    params: &SliParams<T>,
    d: usize,
) -> Result<PrecisionMatrix<T>> {
    params.validate()?;
    let n = nm[0].matrix.n();
    if nm.iter().any(|m| m.matrix.n() != n) {
        return Err(SliError::InvalidInput("network matrices differ in size".into()));
    }
    let coef = params.network_coefficients(d);
    let terms: Vec<(T, &SymCsr<T>)> = coef.iter().copied().zip(nm.iter().map(|m| &m.matrix)).collect();
    let inner = SymCsr::linear_combination(n, &terms, T::one() / T::of_usize(n));
    let lambda = params.lambda;
    let mut trip: Vec<(usize, usize, T)> = inner.iter().map(|(i, j, v)| (i, j, v / lambda)).collect();
    trip.shrink_to_fit();
    Ok(PrecisionMatrix {
        matrix: SymCsr::from_triplets(n, trip),
        params: *params,
        c1: gradient_coefficient(),
        c2: curvature_coefficients(d),
    })
}

/// Convenience: weight table → network matrices → precision matrix.
pub fn precision_from_weights<T: Scalar>(
    w: &WeightTable<T>,
    params: &SliParams<T>,
    d: usize,
) -> Result<PrecisionMatrix<T>> {
    assemble_precision(&build_network_matrices(w), params, d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PermissibilityReport<T> {
    pub positive_definite: bool,
    pub min_pivot: T,
    pub failed_at: Option<usize>,
    pub log_det: Option<T>,
}

/// Dense `LDLᵀ` factorisation of a copy of `J`.
pub fn permissibility_check<T: Scalar>(j: &PrecisionMatrix<T>) -> PermissibilityReport<T> {
    let ldl = ldl_factor(j.matrix.to_dense(), j.n());
    PermissibilityReport {
        positive_definite: ldl.positive_definite(),
        min_pivot: ldl.min_pivot(),
        failed_at: ldl.failed_at,
        log_det: ldl.log_det(),
    }
}

pub fn sparsity<T: Scalar>(j: &PrecisionMatrix<T>) -> T {
    let n = j.n();
    if n < 2 {
        return T::one();
    }
    let pairs = n * (n - 1) / 2;
    T::one() - T::of_usize(j.matrix.nnz_upper()) / T::of_usize(pairs)
}
