//! Mode predictor.
//!
//! A query point `z_p` is inserted alone into the sampling network. Its
//! interactions with sample `s_i` come in two flavours: rooted at the sample
//! (`u_{i,p}`, bandwidth `h_{q;i}`) and rooted at the query (`u_{p,i}`,
//! bandwidth `h_{q;p}`). Both share the denominator
//!
//! ```text
//! D_q = Z_q + Σ_i K(|s_i − z_p| / h_{q;i}) + Σ_i K(|s_i − z_p| / h_{q;p})
//! ```
//!
//! where `Z_q` is the sampling-pair normaliser computed once per training
//! set, so each query costs `O(N)`. With `J_{p,i} = −Σ_q c_q (u_{i,p} + u_{p,i})`
//! and `J_{p,p} = Σ_q c_q Σ_i (u_{i,p} + u_{p,i})` the prediction is
//! `x̂_p = m − Σ_i J_{p,i}(x_i − m) / J_{p,p}`.
//!
//! `J_{p,p}` carries no fluctuation (`I/N`) term, so `Σ_i J_{p,i} = −J_{p,p}`
//! and constants are reproduced for any `m`. The prefactor `1/λ` cancels in
//! the ratio; it only enters the conditional standard deviation
//! `σ_p = √(λ / (2 J_{p,p}))`.

use rayon::prelude::*;

use crate::error::{Result, SliError};
use crate::geometry::{euclidean, NeighborSearch, PointSet};
use crate::precision::{bandwidth_factors, weight_table_for_params, SliParams, WeightTable, TERMS};
use crate::scalar::Scalar;

/// Prediction locations with bandwidths `h_p = μ·D_{p,[k]}`, where the k-th
/// neighbour distance is measured to the sampling points.
#[derive(Clone, Debug)]
pub struct QuerySet<T> {
    pub points: PointSet<T>,
    pub knn_dist: Vec<T>,
    pub bandwidths: Vec<T>,
}

impl<T: Scalar> QuerySet<T> {
    pub fn new(points: PointSet<T>, samples: &PointSet<T>, mu: T, k: usize) -> Result<Self> {
        if points.dim() != samples.dim() {
            return Err(SliError::DimensionMismatch {
                expected: samples.dim(),
                found: points.dim(),
            });
        }
        if k < 1 {
            return Err(SliError::InvalidParameter("k must be at least 1".into()));
        }
        if samples.len() < k {
            return Err(SliError::InsufficientData {
                needed: k - 1,
                got: samples.len(),
            });
        }
        let search = NeighborSearch::new(samples);
        let knn_dist: Vec<T> = (0..points.len())
            .into_par_iter()
            .map(|p| search.kth_distance(points.point(p), k).unwrap_or(T::nan()))
            .collect();
        let bandwidths = knn_dist.iter().map(|&d| mu * d).collect();
        Ok(QuerySet {
            points,
            knn_dist,
            bandwidths,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Extended weights of one term for one query.
#[derive(Clone, Debug)]
pub struct ExtendedWeights<T> {
    /// `u_{i,p}(h_{q;i})`, rooted at the samples.
    pub to_query: Vec<T>,
    /// `u_{p,i}(h_{q;p})`, rooted at the query.
    pub from_query: Vec<T>,
    pub denominator: T,
}

pub fn extended_weights<T: Scalar>(
    samples: &PointSet<T>,
    w: &WeightTable<T>,
    query: &QuerySet<T>,
    p: usize,
    q: usize,
) -> Result<ExtendedWeights<T>> {
    let hp = query_bandwidth(query, p)? * bandwidth_factors::<T>()[q - 1];
    let z = query.points.point(p);
    let kernel = w.kernel();
    let hs = w.bandwidths(q);
    let mut to_query = Vec::with_capacity(samples.len());
    let mut from_query = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let d = euclidean(s, z);
        to_query.push(kernel.weight(d, hs[i]));
        from_query.push(kernel.weight(d, hp));
    }
    let denominator = w.normalizer(q)
        + to_query.iter().copied().fold(T::zero(), |a, b| a + b)
        + from_query.iter().copied().fold(T::zero(), |a, b| a + b);
    for v in to_query.iter_mut().chain(from_query.iter_mut()) {
        *v = *v / denominator;
    }
    Ok(ExtendedWeights {
        to_query,
        from_query,
        denominator,
    })
}

fn query_bandwidth<T: Scalar>(query: &QuerySet<T>, p: usize) -> Result<T> {
    let h = query.bandwidths[p];
    if !(h > T::zero()) || !h.is_finite() {
        return Err(SliError::DegenerateQueryBandwidth { index: p });
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointPrediction<T> {
    pub value: T,
    pub conditional_std: T,
    /// `J_{p,p}` without the `1/λ` prefactor.
    pub j_pp: T,
}

struct QueryAccum<T> {
    sum_w: [T; TERMS],
    sum_wx: [T; TERMS],
    denom: [T; TERMS],
}

fn accumulate<T: Scalar>(
    x: &[T],
    m: T,
    samples: &PointSet<T>,
    w: &WeightTable<T>,
    z: &[T],
    hp: T,
) -> QueryAccum<T> {
    let f = bandwidth_factors::<T>();
    let kernel = w.kernel();
    let hq: [T; TERMS] = std::array::from_fn(|q| hp * f[q]);
    let hs: [&[T]; TERMS] = std::array::from_fn(|q| w.bandwidths(q + 1));
    let mut sa = [T::zero(); TERMS];
    let mut sb = [T::zero(); TERMS];
    let mut sx = [T::zero(); TERMS];
    for (i, s) in samples.iter().enumerate() {
        let d = euclidean(s, z);
        let r = x[i] - m;
        for q in 0..TERMS {
            let a = kernel.weight(d, hs[q][i]);
            let b = kernel.weight(d, hq[q]);
            sa[q] = sa[q] + a;
            sb[q] = sb[q] + b;
            sx[q] = sx[q] + (a + b) * r;
        }
    }
    QueryAccum {
        sum_w: std::array::from_fn(|q| sa[q] + sb[q]),
        sum_wx: sx,
        denom: std::array::from_fn(|q| w.normalizer(q + 1) + sa[q] + sb[q]),
    }
}

/// Combines per-term sums into `(x̂, J_pp)` given the term coefficients.
/// Shared with the leave-one-out engine.
pub(crate) fn combine<T: Scalar>(
    coef: &[T; TERMS],
    m: T,
    sum_w: &[T; TERMS],
    sum_wx: &[T; TERMS],
    denom: &[T; TERMS],
    index: usize,
) -> Result<(T, T)> {
    if sum_w.iter().all(|&s| s == T::zero()) {
        return Err(SliError::IsolatedQuery { index });
    }
    let mut j_pp = T::zero();
    let mut num = T::zero();
    for q in 0..TERMS {
        j_pp = j_pp + coef[q] * sum_w[q] / denom[q];
        num = num + coef[q] * sum_wx[q] / denom[q];
    }
    if !(j_pp > T::zero()) || !j_pp.is_finite() {
        return Err(SliError::NonPositiveQueryPrecision {
            index,
            value: j_pp.to_f64_lossy(),
        });
    }
    Ok((m + num / j_pp, j_pp))
}

/// Predicts query `p` from the samples `x`.
pub fn predict_one<T: Scalar>(
    x: &[T],
    params: &SliParams<T>,
    samples: &PointSet<T>,
    w: &WeightTable<T>,
    query: &QuerySet<T>,
    p: usize,
    d: usize,
) -> Result<PointPrediction<T>> {
    if x.len() != samples.len() || w.len() != samples.len() {
        return Err(SliError::DimensionMismatch {
            expected: samples.len(),
            found: if x.len() != samples.len() { x.len() } else { w.len() },
        });
    }
    let hp = query_bandwidth(query, p)?;
    let acc = accumulate(x, params.m_x, samples, w, query.points.point(p), hp);
    let coef = params.network_coefficients(d);
    let (value, j_pp) = combine(&coef, params.m_x, &acc.sum_w, &acc.sum_wx, &acc.denom, p)?;
    Ok(PointPrediction {
        value,
        conditional_std: (params.lambda / (T::of(2.0) * j_pp)).sqrt(),
        j_pp,
    })
}

/// Row `p` of the transfer matrix, `J_{p,i} / J_{p,p}`, as `(i, value)` for
/// every sample with a non-zero interaction.
pub fn transfer_row<T: Scalar>(
    params: &SliParams<T>,
    samples: &PointSet<T>,
    w: &WeightTable<T>,
    query: &QuerySet<T>,
    p: usize,
    d: usize,
) -> Result<Vec<(usize, T)>> {
    let coef = params.network_coefficients(d);
    let ext: Vec<ExtendedWeights<T>> = (1..=TERMS)
        .map(|q| extended_weights(samples, w, query, p, q))
        .collect::<Result<_>>()?;
    let mut row = Vec::new();
    let mut j_pp = T::zero();
    for i in 0..samples.len() {
        let mut j_pi = T::zero();
        for q in 0..TERMS {
            j_pi = j_pi - coef[q] * (ext[q].to_query[i] + ext[q].from_query[i]);
        }
        j_pp = j_pp - j_pi;
        if j_pi != T::zero() {
            row.push((i, j_pi));
        }
    }
    if row.is_empty() {
        return Err(SliError::IsolatedQuery { index: p });
    }
    if !(j_pp > T::zero()) {
        return Err(SliError::NonPositiveQueryPrecision {
            index: p,
            value: j_pp.to_f64_lossy(),
        });
    }
    for e in row.iter_mut() {
        e.1 = e.1 / j_pp;
    }
    Ok(row)
}

#[derive(Debug)]
pub struct PredictionResult<T> {
    pub predictions: Vec<T>,
    /// `None` where the query could not be predicted.
    pub conditional_std: Vec<Option<T>>,
    pub j_pp: Vec<T>,
    pub row_weights: Option<Vec<Vec<(usize, T)>>>,
    /// Queries that fell back to `m_x`, with the reason.
    pub failures: Vec<(usize, SliError)>,
}

impl<T: Scalar> PredictionResult<T> {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

/// Predicts every query independently. Per-query failures are collected
/// rather than returned; those queries get `m_x` and no standard deviation.
pub fn predict_many<T: Scalar>(
    x: &[T],
    params: &SliParams<T>,
    samples: &PointSet<T>,
    w: &WeightTable<T>,
    query: &QuerySet<T>,
    d: usize,
    keep_rows: bool,
) -> Result<PredictionResult<T>> {
    if x.len() != samples.len() {
        return Err(SliError::DimensionMismatch {
            expected: samples.len(),
            found: x.len(),
        });
    }
    if query.points.dim() != samples.dim() {
        return Err(SliError::DimensionMismatch {
            expected: samples.dim(),
            found: query.points.dim(),
        });
    }
    let outcomes: Vec<Result<PointPrediction<T>>> = (0..query.len())
        .into_par_iter()
        .map(|p| predict_one(x, params, samples, w, query, p, d))
        .collect();
    let row_weights = if keep_rows {
        Some(
            (0..query.len())
                .into_par_iter()
                .map(|p| transfer_row(params, samples, w, query, p, d).unwrap_or_default())
                .collect(),
        )
    } else {
        None
    };
    let mut res = PredictionResult {
        predictions: Vec::with_capacity(query.len()),
        conditional_std: Vec::with_capacity(query.len()),
        j_pp: Vec::with_capacity(query.len()),
        row_weights,
        failures: Vec::new(),
    };
    for (p, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(pp) => {
                res.predictions.push(pp.value);
                res.conditional_std.push(Some(pp.conditional_std));
                res.j_pp.push(pp.j_pp);
            }
            Err(e) => {
                let jpp = match &e {
                    SliError::NonPositiveQueryPrecision { value, .. } => T::of(*value),
                    SliError::IsolatedQuery { .. } => T::zero(),
                    _ => T::nan(),
                };
                res.predictions.push(params.m_x);
                res.conditional_std.push(None);
                res.j_pp.push(jpp);
                res.failures.push((p, e));
            }
        }
    }
    Ok(res)
}

/// Axis-aligned lattice with `nodes` points per side.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T> {
    pub mins: Vec<T>,
    pub maxs: Vec<T>,
    pub nodes: usize,
}

/// Maximum dimension for lattice output.
pub const GRID_MAX_DIM: usize = 4;

impl<T: Scalar> GridSpec<T> {
    /// Lattice nodes in row-major order: the last coordinate varies fastest.
    pub fn lattice(&self) -> Result<PointSet<T>> {
        let d = self.mins.len();
        if d == 0 || self.maxs.len() != d {
            return Err(SliError::InvalidInput("grid bounds must have equal positive length".into()));
        }
        if d > GRID_MAX_DIM {
            return Err(SliError::Unsupported(format!(
                "grid output limited to {GRID_MAX_DIM} dimensions, got {d}"
            )));
        }
        if self.nodes < 2 {
            return Err(SliError::InvalidInput("grid needs at least 2 nodes per side".into()));
        }
        if self.mins.iter().zip(&self.maxs).any(|(a, b)| !(a < b)) {
            return Err(SliError::InvalidInput("empty grid box: each min must be below its max".into()));
        }
        let total = self
            .nodes
            .checked_pow(d as u32)
            .ok_or_else(|| SliError::InvalidInput("grid too large".into()))?;
        let step: Vec<T> = (0..d)
            .map(|a| (self.maxs[a] - self.mins[a]) / T::of_usize(self.nodes - 1))
            .collect();
        let mut coords = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for a in 0..d {
                let c = if idx[a] == self.nodes - 1 {
                    self.maxs[a]
                } else {
                    self.mins[a] + step[a] * T::of_usize(idx[a])
                };
                coords.push(c);
            }
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < self.nodes {
                    break;
                }
                idx[a] = 0;
            }
        }
        PointSet::new(d, coords)
    }

    /// Grid spanning the bounding box of `points`.
    pub fn bounding(points: &PointSet<T>, nodes: usize) -> Result<Self> {
        let (mins, maxs) = points
            .bounding_box()
            .ok_or_else(|| SliError::InvalidInput("no points to bound".into()))?;
        Ok(GridSpec { mins, maxs, nodes })
    }
}

pub fn predict_grid<T: Scalar>(
    x: &[T],
    params: &SliParams<T>,
    samples: &PointSet<T>,
    w: &WeightTable<T>,
    grid: &GridSpec<T>,
    d: usize,
) -> Result<(PointSet<T>, PredictionResult<T>)> {
    if grid.mins.len() != samples.dim() {
        return Err(SliError::DimensionMismatch {
            expected: samples.dim(),
            found: grid.mins.len(),
        });
    }
    let nodes = grid.lattice()?;
    let query = QuerySet::new(nodes.clone(), samples, params.mu, params.k)?;
    let res = predict_many(x, params, samples, w, &query, d, false)?;
    Ok((nodes, res))
}

/// A training set with fixed parameters and its precomputed weight table.
#[derive(Clone, Debug)]
pub struct SliModel<T> {
    pub samples: PointSet<T>,
    pub values: Vec<T>,
    pub params: SliParams<T>,
    pub weights: WeightTable<T>,
}

impl<T: Scalar> SliModel<T> {
    pub fn new(samples: PointSet<T>, values: Vec<T>, params: SliParams<T>) -> Result<Self> {
        if values.len() != samples.len() {
            return Err(SliError::DimensionMismatch {
                expected: samples.len(),
                found: values.len(),
            });
        }
        let weights = weight_table_for_params(&samples, &params)?;
        Ok(SliModel {
            samples,
            values,
            params,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn query_set(&self, points: PointSet<T>) -> Result<QuerySet<T>> {
        QuerySet::new(points, &self.samples, self.params.mu, self.params.k)
    }

    pub fn predict(&self, points: PointSet<T>) -> Result<PredictionResult<T>> {
        let q = self.query_set(points)?;
        predict_many(&self.values, &self.params, &self.samples, &self.weights, &q, self.dim(), false)
    }

    pub fn predict_grid(&self, grid: &GridSpec<T>) -> Result<(PointSet<T>, PredictionResult<T>)> {
        predict_grid(&self.values, &self.params, &self.samples, &self.weights, grid, self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, KernelSpec};

    fn params(m_x: f64) -> SliParams<f64> {
        SliParams {
            m_x,
            alpha1: 3.0,
            alpha2: 1.0,
            lambda: 2.0,
            mu: 1.5,
            k: 2,
            kernel: KernelSpec::new(KernelFamily::Quadratic),
        }
    }

    fn line() -> (PointSet<f64>, Vec<f64>) {
        let p = PointSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.5], vec![6.0]])
            .unwrap();
        (p, vec![1.0, 2.0, 0.5, -1.0, 0.3, 0.9])
    }

    fn model(m_x: f64) -> SliModel<f64> {
        let (p, x) = line();
        SliModel::new(p, x, params(m_x)).unwrap()
    }

    #[test]
    fn constant_data_reproduced() {
        let (p, _) = line();
        for m in [0.0, 4.0, -7.0] {
            let mdl = SliModel::new(p.clone(), vec![2.5; 6], params(m)).unwrap();
            let q = PointSet::from_rows(&[vec![0.4], vec![2.2], vec![5.1]]).unwrap();
            let r = mdl.predict(q).unwrap();
            for v in r.predictions {
                assert!((v - 2.5).abs() <= 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn symmetric_pair_gives_midpoint() {
        let p = PointSet::from_rows(&[vec![-1.0], vec![1.0], vec![-3.0], vec![3.0]]).unwrap();
        let mdl = SliModel::new(p, vec![2.0, 6.0, 0.0, 0.0], params(1.0)).unwrap();
        let mut par = mdl.params;
        par.k = 1;
        let mdl = SliModel::new(mdl.samples.clone(), vec![2.0, 6.0, 2.0, 6.0], par).unwrap();
        let r = mdl.predict(PointSet::from_rows(&[vec![0.0]]).unwrap()).unwrap();
        assert!((r.predictions[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_does_not_change_predictions() {
        let a = model(0.5);
        let mut par = a.params;
        par.lambda *= 10.0;
        let b = SliModel::new(a.samples.clone(), a.values.clone(), par).unwrap();
        let q = PointSet::from_rows(&[vec![0.5], vec![2.7], vec![5.0]]).unwrap();
        let ra = a.predict(q.clone()).unwrap();
        let rb = b.predict(q).unwrap();
        assert_eq!(ra.predictions, rb.predictions);
        let sa = ra.conditional_std[0].unwrap();
        let sb = rb.conditional_std[0].unwrap();
        assert!((sb / sa - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_query_matches_batch() {
        let m = model(0.5);
        let q = m.query_set(PointSet::from_rows(&[vec![1.7]]).unwrap()).unwrap();
        let one = predict_one(&m.values, &m.params, &m.samples, &m.weights, &q, 0, 1).unwrap();
        let many = predict_many(&m.values, &m.params, &m.samples, &m.weights, &q, 1, true).unwrap();
        assert_eq!(one.value, many.predictions[0]);
        assert_eq!(Some(one.conditional_std), many.conditional_std[0]);
        let row = &many.row_weights.unwrap()[0];
        let s: f64 = row.iter().map(|e| e.1).sum();
        assert!((s + 1.0).abs() < 1e-10);
        let via_row = m.params.m_x - row.iter().map(|&(i, t)| t * (m.values[i] - m.params.m_x)).sum::<f64>();
        assert!((via_row - one.value).abs() < 1e-12);
    }

    #[test]
    fn isolated_query_falls_back_to_mean() {
        let m = model(0.25);
        let q = PointSet::from_rows(&[vec![100.0], vec![1.0]]).unwrap();
        // Query bandwidth from the far point is large, so force isolation with
        // a small explicit bandwidth.
        let mut qs = m.query_set(q).unwrap();
        qs.bandwidths[0] = 0.1;
        let r = predict_many(&m.values, &m.params, &m.samples, &m.weights, &qs, 1, false).unwrap();
        assert_eq!(r.predictions[0], 0.25);
        assert!(r.conditional_std[0].is_none());
        assert!(matches!(r.failures[0], (0, SliError::IsolatedQuery { index: 0 })));
        assert_eq!(r.failures.len(), 1);
    }

    #[test]
    fn coincident_query_weights() {
        let m = model(0.0);
        let q = m.query_set(PointSet::from_rows(&[vec![2.0]]).unwrap()).unwrap();
        for qi in 1..=4 {
            let e = extended_weights(&m.samples, &m.weights, &q, 0, qi).unwrap();
            // Sample 2 sits on the query: both weights are K(0)/D.
            assert_eq!(e.to_query[2], 1.0 / e.denominator);
            assert_eq!(e.from_query[2], 1.0 / e.denominator);
        }
    }

    #[test]
    fn two_sample_denominator_by_hand() {
        let p = PointSet::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let mut par = params(0.0);
        par.k = 1;
        par.mu = 2.0;
        let m = SliModel::new(p, vec![0.0, 1.0], par).unwrap();
        let q = m.query_set(PointSet::from_rows(&[vec![0.5]]).unwrap()).unwrap();
        // h_i = 2 for both samples, h_p = 2·0.5 = 1.
        let e = extended_weights(&m.samples, &m.weights, &q, 0, 1).unwrap();
        let expect = 3.5 + 2.0 * (1.0 - 0.0625) + 2.0 * (1.0 - 0.25);
        assert!((e.denominator - expect).abs() < 1e-15);
    }

    #[test]
    fn degenerate_query_bandwidth() {
        let m = model(0.0);
        let mut par = m.params;
        par.k = 1;
        let m = SliModel::new(m.samples.clone(), m.values.clone(), par).unwrap();
        let q = m.query_set(PointSet::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        assert!(matches!(
            predict_one(&m.values, &m.params, &m.samples, &m.weights, &q, 0, 1),
            Err(SliError::DegenerateQueryBandwidth { index: 0 })
        ));
    }

    #[test]
    fn lattice_layout() {
        let g = GridSpec {
            mins: vec![0.0],
            maxs: vec![1.0],
            nodes: 3,
        };
        assert_eq!(g.lattice().unwrap().coords(), &[0.0, 0.5, 1.0]);
        let g2 = GridSpec {
            mins: vec![0.0, 10.0],
            maxs: vec![1.0, 20.0],
            nodes: 2,
        };
        assert_eq!(
            g2.lattice().unwrap().coords(),
            &[0.0, 10.0, 0.0, 20.0, 1.0, 10.0, 1.0, 20.0]
        );
        let bad = GridSpec {
            mins: vec![1.0],
            maxs: vec![1.0],
            nodes: 3,
        };
        assert!(bad.lattice().is_err());
    }

    #[test]
    fn f32_model_runs() {
        let p = PointSet::from_rows(&[vec![0.0f32], vec![1.0], vec![2.0], vec![3.5]]).unwrap();
        let par = SliParams {
            m_x: 1.0f32,
            alpha1: 2.0,
            alpha2: 1.0,
            lambda: 1.0,
            mu: 1.5,
            k: 2,
            kernel: KernelSpec::default(),
        };
        let m = SliModel::new(p, vec![1.0f32; 4], par).unwrap();
        let r = m.predict(PointSet::from_rows(&[vec![1.2f32]]).unwrap()).unwrap();
        assert!((r.predictions[0] - 1.0).abs() < 1e-5);
    }
}
