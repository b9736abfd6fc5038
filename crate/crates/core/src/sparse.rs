//! Symmetric sparse matrix stored once: diagonal plus upper triangle, row
//! compressed.
//!
//! Assembly goes through a triplet list. Triplets are stably sorted by
//! `(row, col)` and duplicates summed in insertion order, so the result does
//! not depend on thread scheduling upstream as long as the triplet order is
//! fixed.

use std::io::Write;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SymCsr<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SymCsr<T> {
    /// Builds from `(i, j, v)` triplets in either triangle. Entries that sum
    /// to exactly zero are dropped, so structural and numerical zeros agree.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        for t in triplets.iter_mut() {
            if t.0 > t.1 {
                std::mem::swap(&mut t.0, &mut t.1);
            }
            debug_assert!(t.1 < n);
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut rows_of = Vec::with_capacity(triplets.len());
        let mut iter = triplets.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v = v + v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != T::zero() {
                rows_of.push(i);
                cols.push(j);
                vals.push(v);
            }
        }
        for &i in &rows_of {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymCsr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity_scaled(n: usize, value: T) -> Self {
        SymCsr::from_triplets(n, (0..n).map(|i| (i, i, value)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries (diagonal plus upper triangle).
    pub fn nnz_stored(&self) -> usize {
        self.vals.len()
    }

    /// Number of stored strictly-upper entries.
    pub fn nnz_upper(&self) -> usize {
        self.iter().filter(|(i, j, _)| i != j).count()
    }

    /// Stored entries `(i, j, v)` with `i <= j`, in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.cols[p], self.vals[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(p) => self.vals[range.start + p],
            Err(_) => T::zero(),
        }
    }

    pub fn diag(&self, i: usize) -> T {
        self.get(i, i)
    }

    /// Full symmetric row sums.
    pub fn row_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.n];
        for (i, j, v) in self.iter() {
            s[i] = s[i] + v;
            if i != j {
                s[j] = s[j] + v;
            }
        }
        s
    }

    /// Per row, the sum of absolute off-diagonal entries.
    pub fn offdiag_abs_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.n];
        for (i, j, v) in self.iter() {
            if i != j {
                s[i] = s[i] + v.abs();
                s[j] = s[j] + v.abs();
            }
        }
        s
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (i, j, v) in self.iter() {
            y[i] = y[i] + v * x[j];
            if i != j {
                y[j] = y[j] + v * x[i];
            }
        }
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        let two = T::of(2.0);
        let mut s = T::zero();
        for (i, j, v) in self.iter() {
            if i == j {
                s = s + v * x[i] * x[i];
            } else {
                s = s + two * v * x[i] * x[j];
            }
        }
        s
    }

    /// `Σ_k c_k A_k + diag·I`, assembled through one triplet pass.
    pub fn linear_combination(n: usize, terms: &[(T, &SymCsr<T>)], diag: T) -> Self {
        let mut trip = Vec::with_capacity(n + terms.iter().map(|t| t.1.nnz_stored()).sum::<usize>());
        for i in 0..n {
            trip.push((i, i, diag));
        }
        for (c, m) in terms {
            debug_assert_eq!(m.n, n);
            if *c == T::zero() {
                continue;
            }
            trip.extend(m.iter().map(|(i, j, v)| (i, j, *c * v)));
        }
        SymCsr::from_triplets(n, trip)
    }

    pub fn scaled(&self, factor: T) -> Self {
        SymCsr {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.iter().map(|&v| v * factor).collect(),
        }
    }

    /// Row-major dense copy with both triangles filled.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.n;
        let mut a = vec![T::zero(); n * n];
        for (i, j, v) in self.iter() {
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
        a
    }

    /// Writes stored entries as `i j value` lines, 0-based, 17 significant
    /// digits.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, v) in self.iter() {
            writeln!(out, "{i} {j} {:.16e}", v)?;
        }
        Ok(())
    }
}
