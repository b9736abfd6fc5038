//! Validation measures: mean error, mean absolute error, mean absolute
//! relative error, root mean square error, Pearson and Spearman correlation.
//!
//! All means use `1/N`. Quantities that are undefined for the input (MARE
//! with a zero observation, correlations with a constant vector) are `None`.

use std::fmt;

use crate::error::{Result, SliError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport<T> {
    pub me: T,
    pub mae: T,
    pub mare: Option<T>,
    pub rmse: T,
    pub pearson: Option<T>,
    pub spearman: Option<T>,
    pub n: usize,
}

pub fn compute_metrics<T: Scalar>(predicted: &[T], observed: &[T]) -> Result<MetricReport<T>> {
    if predicted.len() != observed.len() {
        return Err(SliError::DimensionMismatch {
            expected: observed.len(),
            found: predicted.len(),
        });
    }
    let n = observed.len();
    if n < 2 {
        return Err(SliError::InsufficientData { needed: 2, got: n });
    }
    if predicted.iter().chain(observed).any(|v| !v.is_finite()) {
        return Err(SliError::InvalidInput("metrics need finite values".into()));
    }
    let nf = T::of_usize(n);
    let mut se = T::zero();
    let mut sa = T::zero();
    let mut sq = T::zero();
    let mut sr = T::zero();
    let mut rel_ok = true;
    for (&p, &o) in predicted.iter().zip(observed) {
        let e = p - o;
        se = se + e;
        sa = sa + e.abs();
        sq = sq + e * e;
        if o == T::zero() {
            rel_ok = false;
        } else {
            sr = sr + e.abs() / o.abs();
        }
    }
    Ok(MetricReport {
        me: se / nf,
        mae: sa / nf,
        mare: rel_ok.then(|| sr / nf),
        rmse: (sq / nf).sqrt(),
        pearson: pearson(predicted, observed),
        spearman: spearman(predicted, observed),
        n,
    })
}

/// Pearson correlation, `None` when either vector has zero variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let n = T::of_usize(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return None;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let r = T::of_usize(start + 1 + end) / T::of(2.0);
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    pearson(&average_ranks(a), &average_ranks(b))
}

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.16e}"))
}

impl<T: Scalar> MetricReport<T> {
    pub const CSV_HEADER: &'static str = "n,me,mae,mare,rmse,pearson,spearman";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{},{:.16e},{},{}",
            self.n,
            self.me,
            self.mae,
            opt(self.mare),
            self.rmse,
            opt(self.pearson),
            opt(self.spearman)
        )
    }
}

impl<T: Scalar> fmt::Display for MetricReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<T>| v.map_or_else(|| "undefined".to_string(), |x| format!("{:.6}", x.to_f64_lossy()));
        writeln!(f, "n         {}", self.n)?;
        writeln!(f, "ME        {:.6}", self.me.to_f64_lossy())?;
        writeln!(f, "MAE       {:.6}", self.mae.to_f64_lossy())?;
        writeln!(f, "MARE      {}", show(self.mare))?;
        writeln!(f, "RMSE      {:.6}", self.rmse.to_f64_lossy())?;
        writeln!(f, "pearson   {}", show(self.pearson))?;
        write!(f, "spearman  {}", show(self.spearman))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let p = [1.0f64, 2.0, 4.0];
        let o = [2.0, 2.0, 2.0 + 1.0];
        let m = compute_metrics(&p, &o).unwrap();
        assert!((m.me - 0.0).abs() < 1e-15);
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.mare.unwrap() - (0.5 + 0.0 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction() {
        let v = [1.0f64, 3.0, 2.0, 5.0];
        let m = compute_metrics(&v, &v).unwrap();
        assert_eq!((m.me, m.mae, m.rmse), (0.0, 0.0, 0.0));
        assert_eq!(m.mare, Some(0.0));
        assert!((m.pearson.unwrap() - 1.0).abs() < 1e-15);
        assert!((m.spearman.unwrap() - 1.0).abs() < 1e-15);
        let c = [2.0; 4];
        let mc = compute_metrics(&c, &c).unwrap();
        assert_eq!(mc.pearson, None);
        assert_eq!(mc.spearman, None);
    }

    #[test]
    fn zero_observation_leaves_mare_undefined() {
        let m = compute_metrics(&[1.0, 2.0], &[0.0, 2.0]).unwrap();
        assert_eq!(m.mare, None);
        assert!(m.csv_row().contains("NaN"));
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(compute_metrics(&[1.0], &[1.0]).is_err());
        assert!(compute_metrics(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn bounds_hold(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..40)) {
            let (p, o): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &o).unwrap();
            prop_assert!(m.mae >= m.me.abs() - 1e-12);
            prop_assert!(m.rmse * m.rmse >= m.me * m.me - 1e-9);
            prop_assert!(m.rmse >= m.mae - 1e-12);
            for r in [m.pearson, m.spearman].into_iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn spearman_monotone_invariant(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let t: Vec<f64> = a.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(spearman(&a, &b), spearman(&t, &b));
        }
    }
}
