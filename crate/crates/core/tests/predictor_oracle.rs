//! Mode predictor against direct minimisation of the extended energy.
//!
//! The oracle recomputes everything from the definitions: brute-force
//! neighbour distances, kernel profiles, the extended denominators, and the
//! query-dependent part of the energy,
//! `E(y) = Σ_q c_q Σ_i [K(d_ip/h_{q;i}) + K(d_ip/h_{q;p})] (x_i − y)² / D_q`,
//! which it minimises by golden-section search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sli_core::geometry::PointSet;
use sli_core::precision::{weight_table_for_params, SliParams};
use sli_core::predictor::{predict_one, QuerySet};
use sli_core::{KernelFamily, KernelSpec, SliError};

fn profile(f: KernelFamily, u: f64) -> f64 {
    match f {
        KernelFamily::Triangular => (1.0 - u).max(0.0),
        KernelFamily::Tricube => {
            if u < 1.0 {
                (1.0 - u.powi(3)).powi(3)
            } else {
                0.0
            }
        }
        KernelFamily::Quadratic => (1.0 - u * u).max(0.0),
        KernelFamily::Gaussian => (-u * u).exp(),
        KernelFamily::Exponential => (-u).exp(),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn kth(mut ds: Vec<f64>, k: usize) -> f64 {
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ds[k - 1]
}

/// Per-sample weights `W_i = Σ_q c_q (a_qi + b_qi) / D_q`.
fn oracle_weights(
    s: &[Vec<f64>],
    z: &[f64],
    fam: KernelFamily,
    a1: f64,
    a2: f64,
    mu: f64,
    k: usize,
) -> Vec<f64> {
    let n = s.len();
    let d = z.len() as f64;
    let coef = [a1, a2 * 4.0 * d * (d + 2.0), -a2 * 2.0 * d * (d - 1.0), -a2 * d];
    let factor = [1.0, 1.0, 2f64.sqrt(), 2.0];
    let dk: Vec<f64> = (0..n)
        .map(|i| kth((0..n).filter(|&j| j != i).map(|j| dist(&s[i], &s[j])).collect(), k))
        .collect();
    let dp = kth(s.iter().map(|si| dist(si, z)).collect(), k);
    let mut w = vec![0.0; n];
    for q in 0..4 {
        let h: Vec<f64> = dk.iter().map(|v| factor[q] * mu * v).collect();
        let hp = factor[q] * mu * dp;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                den += profile(fam, dist(&s[i], &s[j]) / h[i]);
            }
        }
        let pair: Vec<f64> = (0..n)
            .map(|i| {
                let r = dist(&s[i], z);
                profile(fam, r / h[i]) + profile(fam, r / hp)
            })
            .collect();
        den += pair.iter().sum::<f64>();
        for i in 0..n {
            w[i] += coef[q] * pair[i] / den;
        }
    }
    w
}

fn golden<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Argmin of the quadratic energy in `y`, in two stages; the second works on
/// the increment `E(c + t) − E(c)` written termwise to avoid cancellation.
fn oracle_argmin(w: &[f64], x: &[f64]) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1.0);
    let energy = |y: f64| w.iter().zip(x).map(|(wi, xi)| wi * (xi - y) * (xi - y)).sum::<f64>();
    let c = golden(energy, lo - 2.0 * span, hi + 2.0 * span, 80);
    let inc = |t: f64| {
        w.iter()
            .zip(x)
            .map(|(wi, xi)| wi * t * (t + 2.0 * (c - xi)))
            .sum::<f64>()
    };
    let r = 1e-4 * span;
    c + golden(inc, -r, r, 120)
}

#[test]
fn predict_one_matches_energy_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for inst in 0..50 {
        let fam = KernelFamily::ALL[inst % 5];
        let dim = 1 + (inst / 5) % 4;
        let n = rng.random_range(6..=30);
        let k = rng.random_range(1..=3);
        let (a1, a2, mu) = (
            rng.random_range(0.5..40.0),
            rng.random_range(0.5..40.0),
            rng.random_range(1.0..4.0),
        );
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let x: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().sum::<f64>().cos() * 3.0 + rng.random::<f64>())
            .collect();
        let m_x = x.iter().sum::<f64>() / n as f64;
        let samples = PointSet::from_rows(&rows).unwrap();
        let params = SliParams {
            m_x,
            alpha1: a1,
            alpha2: a2,
            lambda: 0.7,
            mu,
            k,
            kernel: KernelSpec::new(fam),
        };
        let wt = weight_table_for_params(&samples, &params).unwrap();
        let queries: Vec<Vec<f64>> = (0..4)
            .map(|j| {
                if j == 0 {
                    rows[0].iter().map(|v| v + 0.01).collect()
                } else {
                    (0..dim).map(|_| rng.random_range(-0.1..1.1)).collect()
                }
            })
            .collect();
        let qs = QuerySet::new(PointSet::from_rows(&queries).unwrap(), &samples, mu, k).unwrap();
        for (p, z) in queries.iter().enumerate() {
            let w = oracle_weights(&rows, z, fam, a1, a2, mu, k);
            let jpp: f64 = w.iter().sum();
            let got = predict_one(&x, &params, &samples, &wt, &qs, p, dim);
            if w.iter().all(|&v| v == 0.0) {
                assert!(matches!(got, Err(SliError::IsolatedQuery { .. })));
                continue;
            }
            if jpp <= 1e-12 * w.iter().map(|v| v.abs()).sum::<f64>() {
                continue;
            }
            let got = got.unwrap();
            assert!((got.j_pp - jpp).abs() <= 1e-12 * jpp.abs().max(1e-3), "{} vs {}", got.j_pp, jpp);
            let want = oracle_argmin(&w, &x);
            let err = (got.value - want).abs();
            worst = worst.max(err);
            assert!(err <= 1e-8, "instance {inst} query {p}: {} vs {want}", got.value);
            compared += 1;
        }
    }
    assert!(compared >= 150, "only {compared} comparisons");
    eprintln!("predictor oracle: {compared} queries, worst |error| = {worst:e}");
}
