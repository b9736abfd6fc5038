//! Synthetic data: a stationary Gaussian series with Matérn covariance on the
//! grid `t = 1..n`, and the 4-D test function
//! `x(s) = A e^{−2‖s − a‖} Π s_i (1 − s_i)` sampled at uniform random points.
//!
//! Random numbers come from `ChaCha8Rng` seeded with the given 64-bit seed;
//! normal variates use the `rand_distr` ziggurat sampler. Runs are
//! reproducible within this crate, not across implementations.
//!
//! This module is `f64` only.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SliError};
use crate::geometry::PointSet;
use crate::linalg::{cholesky, lower_mul};

/// Diagonal jitter added to the covariance matrix, relative to `σ²`.
pub const COVARIANCE_JITTER: f64 = 1e-10;

pub const GENERATOR_NAME: &str = "ChaCha8Rng";
pub const NORMAL_SAMPLER_NAME: &str = "rand_distr::StandardNormal (ziggurat)";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaternSpec {
    pub sigma: f64,
    pub nu: f64,
    pub xi: f64,
    pub n: usize,
    pub seed: u64,
}

impl MaternSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("nu", self.nu), ("xi", self.xi)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SliError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n == 0 {
            return Err(SliError::InvalidParameter("series length must be positive".into()));
        }
        half_integer_order(self.nu)?;
        Ok(())
    }
}

/// `p` with `ν = p + 1/2`, or an error for other orders.
fn half_integer_order(nu: f64) -> Result<usize> {
    let p = nu - 0.5;
    let r = p.round();
    if r < 0.0 || (p - r).abs() > 1e-12 || r > 200.0 {
        return Err(SliError::Unsupported(format!(
            "Matérn smoothness nu = {nu}: only half-integer orders 0.5, 1.5, 2.5, ... are supported"
        )));
    }
    Ok(r as usize)
}

/// Modified Bessel function of the second kind `K_ν(u)` for half-integer `ν`.
pub fn bessel_k_half_integer(nu: f64, u: f64) -> Result<f64> {
    let p = half_integer_order(nu)?;
    if !(u > 0.0) {
        return Err(SliError::InvalidInput(format!("K_nu needs u > 0, got {u}")));
    }
    let k_half = (std::f64::consts::PI / (2.0 * u)).sqrt() * (-u).exp();
    if p == 0 {
        return Ok(k_half);
    }
    let mut prev = k_half;
    let mut cur = k_half * (1.0 + 1.0 / u);
    let mut order = 1.5;
    for _ in 1..p {
        let next = prev + 2.0 * order / u * cur;
        prev = cur;
        cur = next;
        order += 1.0;
    }
    Ok(cur)
}

/// `Γ(ν)` for half-integer `ν`.
pub fn gamma_half_integer(nu: f64) -> Result<f64> {
    let p = half_integer_order(nu)?;
    let mut g = std::f64::consts::PI.sqrt();
    let mut v = 0.5;
    for _ in 0..p {
        g *= v;
        v += 1.0;
    }
    Ok(g)
}

/// `C(τ) = σ² 2^{1−ν} (τ/ξ)^ν K_ν(τ/ξ) / Γ(ν)`, with `C(0) = σ²`.
pub fn matern_cov(spec: &MaternSpec, tau: f64) -> Result<f64> {
    spec.validate()?;
    if !(tau >= 0.0) {
        return Err(SliError::InvalidInput(format!("lag must be non-negative, got {tau}")));
    }
    let s2 = spec.sigma * spec.sigma;
    if tau == 0.0 {
        return Ok(s2);
    }
    let u = tau / spec.xi;
    let k = bessel_k_half_integer(spec.nu, u)?;
    if k == 0.0 {
        return Ok(0.0);
    }
    let g = gamma_half_integer(spec.nu)?;
    Ok(s2 * (1.0 - spec.nu).exp2() * u.powf(spec.nu) * k / g)
}

/// One realisation at `t = 1..n`.
pub fn sample_matern_series(spec: &MaternSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n;
    let lags: Vec<f64> = (0..n)
        .map(|l| matern_cov(spec, l as f64))
        .collect::<Result<_>>()?;
    let jitter = COVARIANCE_JITTER * spec.sigma * spec.sigma;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = lags[i.abs_diff(j)];
        }
        c[i * n + i] += jitter;
    }
    let l = cholesky(&c, n).map_err(|col| {
        SliError::IllConditioned(format!(
            "covariance factorisation failed at column {col} despite jitter {jitter:e}"
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(lower_mul(&l, n, &z))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFunctionSpec {
    pub amplitude: f64,
    pub center: Vec<f64>,
}

impl Default for TestFunctionSpec {
    fn default() -> Self {
        TestFunctionSpec {
            amplitude: 500.0,
            center: vec![0.3; 4],
        }
    }
}

impl TestFunctionSpec {
    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

pub fn eval_test_function(spec: &TestFunctionSpec, s: &[f64]) -> f64 {
    assert_eq!(s.len(), spec.center.len(), "point dimension differs from the centre");
    let r = s
        .iter()
        .zip(&spec.center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let prod: f64 = s.iter().map(|&v| v * (1.0 - v)).product();
    spec.amplitude * (-2.0 * r).exp() * prod
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetKind {
    Matern(MaternSpec),
    TestFunction(TestFunctionSpec),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampling {
    pub n_train: usize,
    pub n_valid: usize,
    pub seed: u64,
}

/// Gaussian noise on training values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    None,
    /// Fixed standard deviation.
    Absolute(f64),
    /// Standard deviation as a fraction of the largest absolute clean
    /// training value.
    RelativeToMax(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub points: PointSet<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: SampleSet,
    pub valid: SampleSet,
    /// Training values before noise.
    pub clean_train: Vec<f64>,
    pub noise_std: f64,
    /// Generator settings as `key = value` pairs for a sidecar file.
    pub metadata: Vec<(String, String)>,
}

/// Builds a train/validation pair.
///
/// Matérn: the series of length `n = n_train + n_valid` is split by a random
/// permutation into disjoint index sets, each kept in time order. Test
/// function: `n_train + n_valid` uniform points in the unit cube, training
/// first. Noise, if any, is added to training values only. Selection and
/// noise draw from one stream seeded with `sampling.seed`; the Matérn series
/// itself uses the spec's seed.
pub fn make_dataset(kind: &DatasetKind, sampling: &Sampling, noise: Noise) -> Result<Dataset> {
    if sampling.n_train == 0 {
        return Err(SliError::InvalidInput("training set must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut meta: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| meta.push((k.to_string(), v));
    let (train_pts, clean, valid_pts, valid_vals) = match kind {
        DatasetKind::Matern(spec) => {
            if sampling.n_train + sampling.n_valid != spec.n {
                return Err(SliError::InvalidInput(format!(
                    "train + validation counts ({} + {}) must equal the series length {}",
                    sampling.n_train, sampling.n_valid, spec.n
                )));
            }
            let series = sample_matern_series(spec)?;
            let mut idx: Vec<usize> = (0..spec.n).collect();
            idx.shuffle(&mut rng);
            let mut tr = idx[..sampling.n_train].to_vec();
            let mut va = idx[sampling.n_train..].to_vec();
            tr.sort_unstable();
            va.sort_unstable();
            let coords = |ix: &[usize]| ix.iter().map(|&i| (i + 1) as f64).collect::<Vec<_>>();
            put("kind", "matern".into());
            put("sigma", format!("{:.16e}", spec.sigma));
            put("nu", format!("{:.16e}", spec.nu));
            put("xi", format!("{:.16e}", spec.xi));
            put("n", spec.n.to_string());
            put("series_seed", spec.seed.to_string());
            put("jitter", format!("{:.16e}", COVARIANCE_JITTER * spec.sigma * spec.sigma));
            (
                PointSet::new(1, coords(&tr))?,
                tr.iter().map(|&i| series[i]).collect::<Vec<_>>(),
                PointSet::new(1, coords(&va))?,
                va.iter().map(|&i| series[i]).collect::<Vec<_>>(),
            )
        }
        DatasetKind::TestFunction(spec) => {
            let d = spec.dim();
            if d == 0 {
                return Err(SliError::InvalidInput("test function needs a non-empty centre".into()));
            }
            let total = sampling.n_train + sampling.n_valid;
            let coords: Vec<f64> = (0..total * d).map(|_| rng.random::<f64>()).collect();
            let all = PointSet::new(d, coords)?;
            let values: Vec<f64> = all.iter().map(|s| eval_test_function(spec, s)).collect();
            let tr: Vec<usize> = (0..sampling.n_train).collect();
            let va: Vec<usize> = (sampling.n_train..total).collect();
            put("kind", "testfn".into());
            put("amplitude", format!("{:.16e}", spec.amplitude));
            put(
                "center",
                spec.center.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>().join(" "),
            );
            (
                all.select(&tr),
                values[..sampling.n_train].to_vec(),
                all.select(&va),
                values[sampling.n_train..].to_vec(),
            )
        }
    };
    let noise_std = match noise {
        Noise::None => 0.0,
        Noise::Absolute(s) => s,
        Noise::RelativeToMax(r) => r * clean.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(SliError::InvalidParameter(format!(
            "noise standard deviation must be non-negative, got {noise_std}"
        )));
    }
    let noisy: Vec<f64> = if noise_std > 0.0 {
        clean
            .iter()
            .map(|&v| v + noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        clean.clone()
    };
    put("n_train", sampling.n_train.to_string());
    put("n_valid", sampling.n_valid.to_string());
    put("seed", sampling.seed.to_string());
    put("noise_std", format!("{noise_std:.16e}"));
    put("generator", GENERATOR_NAME.into());
    put("normal_sampler", NORMAL_SAMPLER_NAME.into());
    Ok(Dataset {
        train: SampleSet {
            points: train_pts,
            values: noisy,
        },
        valid: SampleSet {
            points: valid_pts,
            values: valid_vals,
        },
        clean_train: clean,
        noise_std,
        metadata: meta,
    })
}
