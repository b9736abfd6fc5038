//! Energy functional, `λ*` and the profile negative log-likelihood.
//!
//! The energy is evaluated here directly from kernel averages of squared
//! increments. The precision module gives the same number as the quadratic
//! form `½ (x − m)ᵀ J (x − m)`; keeping both routes lets each check the other.

use crate::error::{Result, SliError};
use crate::precision::{
    curvature_coefficients, gradient_coefficient, precision_from_weights, PrecisionMatrix,
    SliParams, WeightTable,
};
use crate::linalg::ldl_factor;
use crate::scalar::Scalar;

/// Default size guard for the dense log-determinant.
pub const DEFAULT_NLL_MAX_N: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown<T> {
    /// Mean square fluctuation about `m_x`.
    pub s0: T,
    /// Gradient term `c1·⟨(x_i − x_j)²⟩_{h1}`.
    pub s1: T,
    /// Curvature term `c21⟨·⟩_{h2} − c22⟨·⟩_{h3} − c23⟨·⟩_{h4}`.
    pub s2: T,
    pub h_total: T,
    /// `λ·H`, the λ-independent part.
    pub h_tilde: T,
}

/// Kernel-weighted average `Σ K_ij Φ(x_i, x_j) / Σ K_ij` over all ordered
/// pairs of term `q`, self pairs included.
pub fn kernel_average<T, F>(values: &[T], w: &WeightTable<T>, q: usize, pair_fn: F) -> T
where
    T: Scalar,
    F: Fn(T, T) -> T,
{
    assert_eq!(values.len(), w.len(), "value vector length differs from N");
    let mut s = T::zero();
    for (i, j, u) in w.entries(q) {
        s = s + u * pair_fn(values[i], values[j]);
    }
    let self_w = w.self_weight(q);
    for &x in values {
        s = s + self_w * pair_fn(x, x);
    }
    s
}

fn mean_square_increment<T: Scalar>(x: &[T], w: &WeightTable<T>, q: usize) -> T {
    kernel_average(x, w, q, |a, b| (a - b) * (a - b))
}

pub fn energy<T: Scalar>(
    x: &[T],
    params: &SliParams<T>,
    w: &WeightTable<T>,
    d: usize,
) -> Result<EnergyBreakdown<T>> {
    params.validate()?;
    if x.len() != w.len() {
        return Err(SliError::DimensionMismatch {
            expected: w.len(),
            found: x.len(),
        });
    }
    let n = T::of_usize(x.len());
    let s0 = x
        .iter()
        .map(|&v| (v - params.m_x) * (v - params.m_x))
        .fold(T::zero(), |a, b| a + b)
        / n;
    let s1 = gradient_coefficient::<T>() * mean_square_increment(x, w, 1);
    let c2 = curvature_coefficients::<T>(d);
    let s2 = c2[0] * mean_square_increment(x, w, 2)
        - c2[1] * mean_square_increment(x, w, 3)
        - c2[2] * mean_square_increment(x, w, 4);
    let h_tilde = (s0 + params.alpha1 * s1 + params.alpha2 * s2) / T::of(2.0);
    Ok(EnergyBreakdown {
        s0,
        s1,
        s2,
        h_total: h_tilde / params.lambda,
        h_tilde,
    })
}

/// `½ (x − m)ᵀ J (x − m)` from an assembled precision matrix.
pub fn quadratic_form_energy<T: Scalar>(x: &[T], j: &PrecisionMatrix<T>) -> T {
    let m = j.params.m_x;
    let r: Vec<T> = x.iter().map(|&v| v - m).collect();
    j.matrix.quadratic_form(&r) / T::of(2.0)
}

/// `λ* = 2 H̃ / N`, the stationary point of the likelihood in `λ`.
pub fn lambda_star<T: Scalar>(h_tilde: T, n: usize) -> Result<T> {
    if n == 0 {
        return Err(SliError::InvalidInput("N must be positive".into()));
    }
    if !(h_tilde > T::zero()) || !h_tilde.is_finite() {
        return Err(SliError::DegenerateData(format!(
            "lambda-free energy is {h_tilde}; lambda* needs a positive value (constant field?)"
        )));
    }
    Ok(T::of(2.0) * h_tilde / T::of_usize(n))
}

/// The λ-free pieces of the likelihood: `H̃` and `ln det J̃` with `J̃ = λJ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LikelihoodTerms<T> {
    pub n: usize,
    pub h_tilde: T,
    pub log_det: T,
}

impl<T: Scalar> LikelihoodTerms<T> {
    pub fn new(
        x: &[T],
        params: &SliParams<T>,
        w: &WeightTable<T>,
        d: usize,
        max_n: usize,
    ) -> Result<Self> {
        let n = x.len();
        if n > max_n {
            return Err(SliError::SizeLimit { n, limit: max_n });
        }
        let unit = params.with_lambda(T::one());
        let e = energy(x, &unit, w, d)?;
        let jt = precision_from_weights(w, &unit, d)?;
        let ldl = ldl_factor(jt.matrix.to_dense(), n);
        let log_det = match ldl.log_det() {
            Some(v) => v,
            None => {
                let k = ldl.failed_at.unwrap_or(0);
                return Err(SliError::NotPermissible {
                    pivot_index: k,
                    pivot: ldl.pivots.get(k).map_or(f64::NAN, |p| p.to_f64_lossy()),
                });
            }
        };
        Ok(LikelihoodTerms {
            n,
            h_tilde: e.h_tilde,
            log_det,
        })
    }

    /// `H̃/λ + (N/2) ln λ + (N/2) ln 2π − ½ ln det J̃`.
    pub fn nll_at(&self, lambda: T) -> T {
        let half_n = T::of_usize(self.n) / T::of(2.0);
        self.h_tilde / lambda + half_n * lambda.ln() + half_n * T::of(2.0 * std::f64::consts::PI).ln()
            - self.log_det / T::of(2.0)
    }

    /// Profile NLL with `λ` concentrated out:
    /// `(N/2) ln(2H̃/N) + (N/2) ln 2π − ½ ln det J̃`.
    ///
    /// This omits the constant `N/2` that `nll_at(λ*)` carries.
    pub fn profiled(&self) -> Result<T> {
        let ls = lambda_star(self.h_tilde, self.n)?;
        let half_n = T::of_usize(self.n) / T::of(2.0);
        Ok(half_n * ls.ln() + half_n * T::of(2.0 * std::f64::consts::PI).ln()
            - self.log_det / T::of(2.0))
    }
}

/// Profile negative log-likelihood of the data for `θ` without `λ`.
/// The `λ` field of `params` is ignored.
pub fn negative_log_likelihood<T: Scalar>(
    x: &[T],
    params: &SliParams<T>,
    w: &WeightTable<T>,
    d: usize,
) -> Result<T> {
    LikelihoodTerms::new(x, params, w, d, DEFAULT_NLL_MAX_N)?.profiled()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BandwidthSet, PointSet};
    use crate::kernels::KernelSpec;
    use crate::precision::{build_weight_table, weight_table_for_params};

    fn params(m_x: f64) -> SliParams<f64> {
        SliParams {
            m_x,
            alpha1: 2.0,
            alpha2: 0.5,
            lambda: 1.5,
            mu: 1.8,
            k: 2,
            kernel: KernelSpec::default(),
        }
    }

    fn sample() -> (PointSet<f64>, Vec<f64>) {
        let p = PointSet::from_rows(&[
            vec![0.0, 0.0],
            vec![0.3, 0.1],
            vec![1.0, 0.7],
            vec![0.2, 0.9],
            vec![0.6, 0.5],
            vec![0.9, 0.1],
            vec![0.4, 0.4],
        ])
        .unwrap();
        let x = vec![1.0, 1.4, 0.2, -0.5, 0.8, 2.0, 1.1];
        (p, x)
    }

    #[test]
    fn unit_average() {
        let (p, x) = sample();
        let w = weight_table_for_params(&p, &params(0.0)).unwrap();
        for q in 1..=4 {
            let a = kernel_average(&x, &w, q, |_, _| 1.0);
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_average_by_hand() {
        let p = PointSet::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let b = BandwidthSet {
            h: vec![2.0, 2.0],
            mu: 2.0,
            k: 1,
        };
        let w = build_weight_table(&p, &b, &b, KernelSpec::default()).unwrap();
        let x = [1.0f64, 3.0];
        let a = kernel_average(&x, &w, 1, |a, b| (a - b) * (a - b));
        assert!((a - 2.0 * 0.75 * 4.0 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn constant_field() {
        let (p, _) = sample();
        let w = weight_table_for_params(&p, &params(0.0)).unwrap();
        let x = vec![3.0; 7];
        let e = energy(&x, &params(3.0), &w, 2).unwrap();
        assert_eq!(e.h_total, 0.0);
        let e = energy(&x, &params(0.0), &w, 2).unwrap();
        assert_eq!(e.s0, 9.0);
        assert_eq!(e.s1, 0.0);
        assert_eq!(e.s2, 0.0);
        assert!(matches!(
            lambda_star(0.0_f64, 7),
            Err(SliError::DegenerateData(_))
        ));
    }

    #[test]
    fn lambda_star_values() {
        assert_eq!(lambda_star(5.0_f64, 10).unwrap(), 1.0);
        assert_eq!(lambda_star(300.0_f64, 100).unwrap(), 6.0);
    }

    #[test]
    fn shift_and_mean_properties() {
        let (p, x) = sample();
        let par = params(0.7);
        let w = weight_table_for_params(&p, &par).unwrap();
        let e = energy(&x, &par, &w, 2).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.25).collect();
        let es = energy(&shifted, &par, &w, 2).unwrap();
        assert!((e.s1 - es.s1).abs() <= 1e-14 * e.s1.abs());
        assert!((e.s2 - es.s2).abs() <= 1e-13 * e.s2.abs().max(1e-3));

        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let at = |m: f64| energy(&x, &params(m), &w, 2).unwrap().h_total;
        assert!(at(mean) < at(mean + 1e-3));
        assert!(at(mean) < at(mean - 1e-3));

        let e1 = energy(&x, &par.with_lambda(1.0), &w, 2).unwrap();
        let e4 = energy(&x, &par.with_lambda(4.0), &w, 2).unwrap();
        assert_eq!(e4.h_total, e1.h_total / 4.0);
    }

    #[test]
    fn energy_matches_quadratic_form() {
        let (p, x) = sample();
        let par = params(0.4);
        let w = weight_table_for_params(&p, &par).unwrap();
        let e = energy(&x, &par, &w, 2).unwrap();
        let j = precision_from_weights(&w, &par, 2).unwrap();
        let qf = quadratic_form_energy(&x, &j);
        assert!((e.h_total - qf).abs() <= 1e-12 * qf.abs());
    }

    #[test]
    fn diagonal_case_closed_form() {
        let (p, x) = sample();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let mut par = params(mean);
        par.alpha1 = 0.0;
        par.alpha2 = 0.0;
        let w = weight_table_for_params(&p, &par).unwrap();
        let terms = LikelihoodTerms::new(&x, &par, &w, 2, 100).unwrap();
        assert!((terms.log_det + n * n.ln()).abs() < 1e-12);
        let h_tilde = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n / 2.0;
        let expect = n / 2.0 * (2.0 * h_tilde / n).ln()
            + n / 2.0 * (2.0 * std::f64::consts::PI).ln()
            + n / 2.0 * n.ln();
        let got = negative_log_likelihood(&x, &par, &w, 2).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn nll_guard() {
        let (p, x) = sample();
        let par = params(0.0);
        let w = weight_table_for_params(&p, &par).unwrap();
        assert!(matches!(
            LikelihoodTerms::new(&x, &par, &w, 2, 3),
            Err(SliError::SizeLimit { n: 7, limit: 3 })
        ));
    }

    #[test]
    fn nll_depends_on_lambda_free_terms_only() {
        let (p, x) = sample();
        let a = params(0.3);
        let b = a.with_lambda(123.0);
        let w = weight_table_for_params(&p, &a).unwrap();
        assert_eq!(
            negative_log_likelihood(&x, &a, &w, 2).unwrap(),
            negative_log_likelihood(&x, &b, &w, 2).unwrap()
        );
    }
}
