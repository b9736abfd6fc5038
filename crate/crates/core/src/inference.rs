//! Parameter inference by leave-one-out cross validation.
//!
//! The cost of a candidate `(α1, α2, μ)` is `Φ = Σ_i |x̂_i − x_i|`, where
//! `x̂_i` predicts sample `i` from the other `N − 1` samples with every
//! bandwidth recomputed for the reduced set. `λ` plays no part in the
//! predictions; it is fixed afterwards at `λ* = 2H̃/N`.
//!
//! [`LooEngine`] makes one cost evaluation `O(N²)`. Per candidate it
//! tabulates, for every sample `a`, the row sums `R_a = Σ_b K(d_ab/h_a)`,
//! the column sums `C_a = Σ_b K(d_ab/h_b)`, their value-weighted versions,
//! and the row sums `R'_a` at the bandwidth `a` would get if one of its `k`
//! nearest neighbours were removed. Removing `i` then changes only row `i`,
//! column `i` and the rows whose `k`-NN list contained `i`, so the reduced
//! normaliser and the query sums follow from those tables in `O(k)` per
//! term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{energy, lambda_star};
use crate::error::{Result, SliError};
use crate::geometry::{PairCache, PointSet};
use crate::kernels::KernelSpec;
use crate::metrics::{compute_metrics, MetricReport};
use crate::precision::{
    bandwidth_factors, curvature_coefficients, gradient_coefficient, weight_table_for_params,
    SliParams, TERMS,
};
use crate::predictor::combine;
use crate::scalar::Scalar;

/// Default size guard for [`stability_scan`].
pub const DEFAULT_STABILITY_MAX_N: usize = 1000;

/// The λ-free parameters searched by cross validation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate<T> {
    pub alpha1: T,
    pub alpha2: T,
    pub mu: T,
}

impl<T: Scalar> Candidate<T> {
    pub fn new(alpha1: T, alpha2: T, mu: T) -> Self {
        Candidate { alpha1, alpha2, mu }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.alpha1, self.alpha2, self.mu]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Candidate::new(a[0], a[1], a[2])
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v >= T::zero();
        if !ok(self.alpha1) || !ok(self.alpha2) {
            return Err(SliError::InvalidParameter(format!(
                "alpha1, alpha2 must be finite and non-negative, got {}, {}",
                self.alpha1, self.alpha2
            )));
        }
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return Err(SliError::InvalidParameter(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// Full parameter set with the given mean and `λ`.
    pub fn params(&self, m_x: T, lambda: T, kernel: KernelSpec, k: usize) -> SliParams<T> {
        SliParams {
            m_x,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            lambda,
            mu: self.mu,
            k,
            kernel,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig<T> {
    /// Lower bounds of `(α1, α2, μ)`.
    pub lower: [T; 3],
    pub upper: [T; 3],
    pub init: [T; 3],
    pub max_iters: usize,
    pub rel_tol: T,
    /// Number of random starts added to `init`; 0 runs `init` alone.
    pub multistart: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        OptimizerConfig {
            lower: [T::of(0.5); 3],
            upper: [T::of(300.0), T::of(300.0), T::of(15.0)],
            init: [T::of(10.0), T::of(25.0), T::of(3.0)],
            max_iters: 200,
            rel_tol: T::of(1e-6),
            multistart: 16,
            seed: 0,
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        const NAMES: [&str; 3] = ["alpha1", "alpha2", "mu"];
        for j in 0..3 {
            let (lo, hi, x0) = (self.lower[j], self.upper[j], self.init[j]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SliError::InvalidParameter(format!(
                    "{}: bounds [{lo}, {hi}] must be finite with lower < upper",
                    NAMES[j]
                )));
            }
            if !(lo <= x0 && x0 <= hi) {
                return Err(SliError::InvalidParameter(format!(
                    "{}: initial value {x0} outside [{lo}, {hi}]",
                    NAMES[j]
                )));
            }
        }
        if self.lower[0] < T::zero() || self.lower[1] < T::zero() || !(self.lower[2] > T::zero()) {
            return Err(SliError::InvalidParameter(
                "bounds must keep alpha1, alpha2 >= 0 and mu > 0".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(SliError::InvalidParameter("max_iters must be positive".into()));
        }
        if !(self.rel_tol >= T::zero()) {
            return Err(SliError::InvalidParameter("rel_tol must be non-negative".into()));
        }
        Ok(())
    }

    fn project(&self, mut p: [T; 3]) -> [T; 3] {
        for j in 0..3 {
            p[j] = p[j].max(self.lower[j]).min(self.upper[j]);
        }
        p
    }

    /// Start points: `init` first, then `multistart` uniform draws over the box.
    pub fn start_points(&self) -> Vec<[T; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = vec![self.init];
        for _ in 0..self.multistart {
            out.push(std::array::from_fn(|j| {
                let u: f64 = rng.random();
                self.lower[j] + (self.upper[j] - self.lower[j]) * T::of(u)
            }));
        }
        out
    }
}

/// Leave-one-out predictions for one candidate.
#[derive(Debug)]
pub struct LooOutcome<T> {
    pub predictions: Vec<T>,
    /// Held-out points that could not be predicted; they carry `m_x`.
    pub flagged: Vec<(usize, SliError)>,
    /// `λH` of the full sample at this candidate.
    pub h_tilde: T,
}

impl<T: Scalar> LooOutcome<T> {
    pub fn cost(&self, x: &[T]) -> T {
        absolute_error_sum(&self.predictions, x)
    }
}

fn absolute_error_sum<T: Scalar>(pred: &[T], x: &[T]) -> T {
    pred.iter()
        .zip(x)
        .fold(T::zero(), |s, (&p, &v)| s + (p - v).abs())
}

/// Per-candidate tables, indexed by sample.
struct Tables<T> {
    h: Vec<[T; TERMS]>,
    h_alt: Vec<[T; TERMS]>,
    row: Vec<[T; TERMS]>,
    row_x: Vec<[T; TERMS]>,
    row_alt: Vec<[T; TERMS]>,
    col: Vec<[T; TERMS]>,
    col_x: Vec<[T; TERMS]>,
    /// Non-zero entries of the widest term, per row and per column.
    row_nnz: Vec<usize>,
    col_nnz: Vec<usize>,
    z: [T; TERMS],
    /// `Σ_a Σ_b K(d_ab/h_a)(x_a − x_b)²` per term.
    sq: [T; TERMS],
}

struct RowPass<T> {
    row: [T; TERMS],
    row_x: [T; TERMS],
    row_alt: [T; TERMS],
    row_sq: [T; TERMS],
    entries: Vec<(u32, [T; TERMS])>,
}

/// Exact fast leave-one-out predictions on a fixed training set.
#[derive(Clone, Debug)]
pub struct LooEngine<T> {
    cache: PairCache<T>,
    x: Vec<T>,
    m_x: T,
    kernel: KernelSpec,
    k: usize,
    d: usize,
    /// `D_{a,[k]}` and `D_{a,[k+1]}`.
    dk: Vec<T>,
    dk_next: Vec<T>,
    /// For each `i`, the samples whose `k` nearest neighbours include `i`.
    changed_by: Vec<Vec<u32>>,
    /// Samples with `D_{a,[k]} = 0`.
    zero_dk: Vec<usize>,
}

impl<T: Scalar> LooEngine<T> {
    pub fn new(points: &PointSet<T>, x: &[T], kernel: KernelSpec, k: usize) -> Result<Self> {
        let n = points.len();
        if x.len() != n {
            return Err(SliError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if k < 1 {
            return Err(SliError::InvalidParameter("k must be at least 1".into()));
        }
        if n < k + 2 {
            return Err(SliError::InsufficientData { needed: k + 2, got: n });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SliError::InvalidInput("sample values must be finite".into()));
        }
        let cache = PairCache::new(points);
        let m_x = x.iter().copied().fold(T::zero(), |a, b| a + b) / T::of_usize(n);
        let mut dk = Vec::with_capacity(n);
        let mut dk_next = Vec::with_capacity(n);
        let mut changed_by = vec![Vec::new(); n];
        for a in 0..n {
            let nb = cache.neighbors(a);
            dk.push(nb[k - 1].0);
            dk_next.push(nb[k].0);
            for &(_, i) in &nb[..k] {
                changed_by[i as usize].push(a as u32);
            }
        }
        let zero_dk = (0..n).filter(|&a| !(dk[a] > T::zero())).collect();
        Ok(LooEngine {
            cache,
            x: x.to_vec(),
            m_x,
            kernel,
            k,
            d: points.dim(),
            dk,
            dk_next,
            changed_by,
            zero_dk,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Full-sample mean used as `m_x` for every held-out prediction.
    pub fn mean(&self) -> T {
        self.m_x
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn tables(&self, c: &Candidate<T>) -> Tables<T> {
        let n = self.len();
        let f = bandwidth_factors::<T>();
        let h: Vec<[T; TERMS]> = self
            .dk
            .iter()
            .map(|&d| std::array::from_fn(|q| f[q] * c.mu * d))
            .collect();
        let h_alt: Vec<[T; TERMS]> = self
            .dk_next
            .iter()
            .map(|&d| std::array::from_fn(|q| f[q] * c.mu * d))
            .collect();
        let compact = self.kernel.compact_support();
        let kernel = self.kernel;
        let passes: Vec<RowPass<T>> = (0..n)
            .into_par_iter()
            .map(|a| {
                let live = h[a][0] > T::zero();
                let alt_ok = h_alt[a][0] > T::zero();
                let mut p = RowPass {
                    row: [if live { T::one() } else { T::zero() }; TERMS],
                    row_x: [T::zero(); TERMS],
                    row_alt: [T::one(); TERMS],
                    row_sq: [T::zero(); TERMS],
                    entries: Vec::new(),
                };
                let reach = h_alt[a][TERMS - 1];
                for &(d, b) in self.cache.neighbors(a) {
                    if compact && d >= reach {
                        break;
                    }
                    if alt_ok {
                        for q in 0..TERMS {
                            p.row_alt[q] = p.row_alt[q] + kernel.weight(d, h_alt[a][q]);
                        }
                    }
                    if live {
                        let kh: [T; TERMS] = std::array::from_fn(|q| kernel.weight(d, h[a][q]));
                        if kh.iter().any(|&v| v > T::zero()) {
                            let r = self.x[b as usize] - self.m_x;
                            let inc = self.x[b as usize] - self.x[a];
                            for q in 0..TERMS {
                                p.row[q] = p.row[q] + kh[q];
                                p.row_x[q] = p.row_x[q] + kh[q] * r;
                                p.row_sq[q] = p.row_sq[q] + kh[q] * inc * inc;
                            }
                            p.entries.push((b, kh));
                        }
                    }
                }
                p
            })
            .collect();

        let mut col = vec![[T::zero(); TERMS]; n];
        let mut col_x = vec![[T::zero(); TERMS]; n];
        let mut col_nnz = vec![0usize; n];
        let mut row_nnz = Vec::with_capacity(n);
        let mut z = [T::zero(); TERMS];
        let mut sq = [T::zero(); TERMS];
        for (a, p) in passes.iter().enumerate() {
            let r = self.x[a] - self.m_x;
            let mut nnz = 0;
            for &(b, kh) in &p.entries {
                let b = b as usize;
                for q in 0..TERMS {
                    col[b][q] = col[b][q] + kh[q];
                    col_x[b][q] = col_x[b][q] + kh[q] * r;
                }
                if kh[TERMS - 1] > T::zero() {
                    col_nnz[b] += 1;
                    nnz += 1;
                }
            }
            row_nnz.push(nnz);
            for q in 0..TERMS {
                z[q] = z[q] + p.row[q];
                sq[q] = sq[q] + p.row_sq[q];
            }
        }
        let mut row = Vec::with_capacity(n);
        let mut row_x = Vec::with_capacity(n);
        let mut row_alt = Vec::with_capacity(n);
        for p in passes {
            row.push(p.row);
            row_x.push(p.row_x);
            row_alt.push(p.row_alt);
        }
        Tables {
            h,
            h_alt,
            row,
            row_x,
            row_alt,
            col,
            col_x,
            row_nnz,
            col_nnz,
            z,
            sq,
        }
    }

    /// `H̃ = λH` of the full sample, `(S0 + α1 S1 + α2 S2) / 2`.
    fn h_tilde(&self, t: &Tables<T>, coef: &[T; TERMS]) -> T {
        let n = T::of_usize(self.len());
        let s0 = self
            .x
            .iter()
            .fold(T::zero(), |s, &v| s + (v - self.m_x) * (v - self.m_x))
            / n;
        let mut h = s0;
        for q in 0..TERMS {
            h = h + coef[q] * t.sq[q] / t.z[q];
        }
        h / T::of(2.0)
    }

    fn predict_held_out(&self, t: &Tables<T>, coef: &[T; TERMS], i: usize) -> Result<T> {
        if !(self.dk[i] > T::zero()) {
            return Err(SliError::DegenerateQueryBandwidth { index: i });
        }
        let changed = &self.changed_by[i];
        for &a in &self.zero_dk {
            if a != i && !changed.contains(&(a as u32)) {
                return Err(SliError::DegenerateBandwidth { index: a });
            }
        }
        let kernel = self.kernel;
        let mut zr = t.z;
        let mut sa = t.col[i];
        let mut sxa = t.col_x[i];
        let mut nnz = t.row_nnz[i] + t.col_nnz[i];
        for q in 0..TERMS {
            zr[q] = zr[q] - t.row[i][q] - t.col[i][q];
        }
        for &a in changed {
            let a = a as usize;
            if !(self.dk_next[a] > T::zero()) {
                return Err(SliError::DegenerateBandwidth { index: a });
            }
            let d = self.cache.dist(a, i);
            let r = self.x[a] - self.m_x;
            let live = t.h[a][0] > T::zero();
            for q in 0..TERMS {
                let kh = if live { kernel.weight(d, t.h[a][q]) } else { T::zero() };
                let kp = kernel.weight(d, t.h_alt[a][q]);
                zr[q] = zr[q] + kh - t.row[a][q] + t.row_alt[a][q] - kp;
                sa[q] = sa[q] + kp - kh;
                sxa[q] = sxa[q] + (kp - kh) * r;
                if q == TERMS - 1 {
                    nnz = nnz + usize::from(kp > T::zero()) - usize::from(kh > T::zero());
                }
            }
        }
        if nnz == 0 {
            return Err(SliError::IsolatedQuery { index: i });
        }
        let mut sw = [T::zero(); TERMS];
        let mut sx = [T::zero(); TERMS];
        let mut den = [T::zero(); TERMS];
        for q in 0..TERMS {
            let sb = t.row[i][q] - T::one();
            sw[q] = sa[q] + sb;
            sx[q] = sxa[q] + t.row_x[i][q];
            den[q] = zr[q] + sw[q];
        }
        combine(coef, self.m_x, &sw, &sx, &den, i).map(|(v, _)| v)
    }

    fn coefficients(&self, c: &Candidate<T>) -> [T; TERMS] {
        let c2 = curvature_coefficients::<T>(self.d);
        [
            c.alpha1 * gradient_coefficient::<T>(),
            c.alpha2 * c2[0],
            -c.alpha2 * c2[1],
            -c.alpha2 * c2[2],
        ]
    }

    /// Leave-one-out predictions for every sample.
    pub fn predictions(&self, c: &Candidate<T>) -> Result<LooOutcome<T>> {
        c.validate()?;
        let t = self.tables(c);
        let coef = self.coefficients(c);
        let h_tilde = self.h_tilde(&t, &coef);
        let raw: Vec<Result<T>> = (0..self.len())
            .into_par_iter()
            .map(|i| self.predict_held_out(&t, &coef, i))
            .collect();
        let mut predictions = Vec::with_capacity(raw.len());
        let mut flagged = Vec::new();
        for (i, r) in raw.into_iter().enumerate() {
            match r {
                Ok(v) => predictions.push(v),
                Err(e) => {
                    predictions.push(self.m_x);
                    flagged.push((i, e));
                }
            }
        }
        Ok(LooOutcome {
            predictions,
            flagged,
            h_tilde,
        })
    }

    /// `Φ = Σ_i |x̂_i − x_i|`.
    pub fn cost(&self, c: &Candidate<T>) -> Result<T> {
        Ok(self.predictions(c)?.cost(&self.x))
    }

    /// The search objective: `Φ`, or `+∞` where the sample energy is not
    /// positive and `λ*` would be undefined.
    pub fn objective(&self, c: &Candidate<T>) -> T {
        match self.predictions(c) {
            Ok(o) if o.h_tilde > T::zero() => o.cost(&self.x),
            _ => T::infinity(),
        }
    }
}

pub fn loo_predict_all<T: Scalar>(
    x: &[T],
    points: &PointSet<T>,
    candidate: &Candidate<T>,
    kernel: KernelSpec,
    k: usize,
) -> Result<LooOutcome<T>> {
    LooEngine::new(points, x, kernel, k)?.predictions(candidate)
}

pub fn cv_cost<T: Scalar>(
    x: &[T],
    points: &PointSet<T>,
    candidate: &Candidate<T>,
    kernel: KernelSpec,
    k: usize,
) -> Result<T> {
    LooEngine::new(points, x, kernel, k)?.cost(candidate)
}

// ---------------------------------------------------------------------------
// Bounded simplex search.

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult<T> {
    pub best: [T; 3],
    pub cost: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead on the box of `cfg`; trial points are projected onto the box.
/// Stops when the cost spread over the simplex falls to `rel_tol·|f_best|` or
/// the simplex collapses to a point.
pub fn nelder_mead<T: Scalar, F: Fn(&[T; 3]) -> T>(
    f: F,
    start: [T; 3],
    cfg: &OptimizerConfig<T>,
) -> SearchResult<T> {
    let mut evaluations = 0usize;
    let mut eval = |p: &[T; 3]| {
        evaluations += 1;
        let v = f(p);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };
    let half = T::of(0.5);
    let two = T::of(2.0);
    let v0 = cfg.project(start);
    let mut simplex: Vec<([T; 3], T)> = Vec::with_capacity(4);
    simplex.push((v0, eval(&v0)));
    for j in 0..3 {
        let width = cfg.upper[j] - cfg.lower[j];
        let mut step = T::of(0.1) * v0[j].abs();
        if step == T::zero() {
            step = T::of(0.05) * width;
        }
        let mut v = v0;
        v[j] = v0[j] + step;
        if v[j] > cfg.upper[j] {
            v[j] = v0[j] - step;
        }
        let v = cfg.project(v);
        simplex.push((v, eval(&v)));
    }

    let sort = |s: &mut Vec<([T; 3], T)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    let done = |s: &[([T; 3], T)]| {
        let fb = s[0].1;
        let fw = s[3].1;
        if fw - fb <= cfg.rel_tol * fb.abs() {
            return true;
        }
        s[1..].iter().all(|(v, _)| {
            (0..3).all(|j| (v[j] - s[0].0[j]).abs() <= T::of(1e-10) * (cfg.upper[j] - cfg.lower[j]))
        })
    };
    let lerp = |a: &[T; 3], b: &[T; 3], t: T| -> [T; 3] {
        cfg.project(std::array::from_fn(|j| a[j] + t * (b[j] - a[j])))
    };

    let mut iterations = 0;
    let mut converged = false;
    sort(&mut simplex);
    while iterations < cfg.max_iters {
        if done(&simplex) {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: [T; 3] =
            std::array::from_fn(|j| (simplex[0].0[j] + simplex[1].0[j] + simplex[2].0[j]) / T::of(3.0));
        let worst = simplex[3];
        let xr = lerp(&centroid, &worst.0, -T::one());
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst.0, -two);
            let fe = eval(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc, accept) = if fr < worst.1 {
                let xc = lerp(&centroid, &xr, half);
                let fc = eval(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = lerp(&centroid, &worst.0, half);
                let fc = eval(&xc);
                (xc, fc, fc < worst.1)
            };
            if accept {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let p = lerp(&best, &v.0, half);
                    *v = (p, eval(&p));
                }
            }
        }
        sort(&mut simplex);
    }
    if !converged && done(&simplex) {
        converged = true;
    }
    SearchResult {
        best: simplex[0].0,
        cost: simplex[0].1,
        iterations,
        evaluations,
        converged,
    }
}

// ---------------------------------------------------------------------------
// Fitting.

#[derive(Debug)]
pub struct CvReport<T> {
    pub loo_predictions: Vec<T>,
    pub cost: T,
    pub metrics: MetricReport<T>,
    pub params_star: SliParams<T>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Held-out points predicted by the `m_x` fallback at the optimum.
    pub flagged: Vec<usize>,
    /// Outcome of every start, `init` first.
    pub starts: Vec<SearchResult<T>>,
}

impl<T: Scalar> CvReport<T> {
    pub fn candidate(&self) -> Candidate<T> {
        Candidate::new(self.params_star.alpha1, self.params_star.alpha2, self.params_star.mu)
    }
}

/// Fits `(α1, α2, μ)` by minimising the LOO cost from every start point,
/// then sets `m_x` to the sample mean and `λ` to `λ*`.
pub fn fit<T: Scalar>(
    x: &[T],
    points: &PointSet<T>,
    kernel: KernelSpec,
    k: usize,
    cfg: &OptimizerConfig<T>,
) -> Result<CvReport<T>> {
    cfg.validate()?;
    let engine = LooEngine::new(points, x, kernel, k)?;
    if x.iter().all(|&v| v == x[0]) {
        return Err(SliError::DegenerateData(
            "all sample values are equal; lambda* = 2H/N is undefined".into(),
        ));
    }
    fit_with_engine(&engine, points, cfg)
}

pub fn fit_with_engine<T: Scalar>(
    engine: &LooEngine<T>,
    points: &PointSet<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<CvReport<T>> {
    cfg.validate()?;
    let objective = |p: &[T; 3]| engine.objective(&Candidate::from_array(*p));
    let starts: Vec<SearchResult<T>> = cfg
        .start_points()
        .into_par_iter()
        .map(|s| nelder_mead(objective, s, cfg))
        .collect();
    // Lowest cost wins; ties go to the earliest start.
    let mut best = 0;
    for (s, r) in starts.iter().enumerate() {
        if r.cost < starts[best].cost {
            best = s;
        }
    }
    let win = &starts[best];
    if !win.cost.is_finite() {
        return Err(SliError::DegenerateData(
            "no start point reached a candidate with positive energy".into(),
        ));
    }
    let cand = Candidate::from_array(win.best);
    let loo = engine.predictions(&cand)?;
    let cost = loo.cost(&engine.x);
    let metrics = compute_metrics(&loo.predictions, &engine.x)?;
    let unit = cand.params(engine.m_x, T::one(), engine.kernel, engine.k);
    let w = weight_table_for_params(points, &unit)?;
    let e = energy(&engine.x, &unit, &w, points.dim())?;
    let lambda = lambda_star(e.h_tilde, engine.len())?;
    Ok(CvReport {
        loo_predictions: loo.predictions,
        cost,
        metrics,
        params_star: unit.with_lambda(lambda),
        converged: win.converged,
        iterations: win.iterations,
        evaluations: starts.iter().map(|s| s.evaluations).sum(),
        flagged: loo.flagged.into_iter().map(|(i, _)| i).collect(),
        starts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityRow<T> {
    pub removed: usize,
    pub alpha1: T,
    pub alpha2: T,
    pub mu: T,
    pub lambda: T,
    pub cost: T,
    pub converged: bool,
}

impl<T: Scalar> StabilityRow<T> {
    pub const CSV_HEADER: &'static str = "removed,alpha1,alpha2,mu,lambda,cost,converged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.removed, self.alpha1, self.alpha2, self.mu, self.lambda, self.cost, self.converged
        )
    }
}

/// Refits with each sample removed in turn. Every refit starts from the
/// full-data optimum, or from `cfg`'s start points if no finite cost is
/// reachable from there.
pub fn stability_scan<T: Scalar>(
    x: &[T],
    points: &PointSet<T>,
    kernel: KernelSpec,
    k: usize,
    cfg: &OptimizerConfig<T>,
    max_n: usize,
) -> Result<Vec<StabilityRow<T>>> {
    let n = points.len();
    if n > max_n {
        return Err(SliError::SizeLimit { n, limit: max_n });
    }
    let full = fit(x, points, kernel, k, cfg)?;
    let mut sub = cfg.clone();
    sub.init = cfg.project(full.candidate().to_array());
    sub.multistart = 0;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let p = points.select(&keep);
            let xv: Vec<T> = keep.iter().map(|&j| x[j]).collect();
            // The full-data optimum can lie where the reduced set has no
            // positive energy; fall back to the caller's start points.
            let r = match fit(&xv, &p, kernel, k, &sub) {
                Err(SliError::DegenerateData(_)) => fit(&xv, &p, kernel, k, cfg)?,
                other => other?,
            };
            Ok(StabilityRow {
                removed: i,
                alpha1: r.params_star.alpha1,
                alpha2: r.params_star.alpha2,
                mu: r.params_star.mu,
                lambda: r.params_star.lambda,
                cost: r.cost,
                converged: r.converged,
            })
        })
        .collect()
}
