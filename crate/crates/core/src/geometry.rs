//! Point sets, exact k-nearest-neighbour tables and adaptive bandwidths.
//!
//! Neighbour searches are exact. Ties in distance are broken by ascending
//! point index so every table is a deterministic function of the input.

use rayon::prelude::*;

use crate::error::{Result, SliError};
use crate::scalar::Scalar;

/// Above this dimension k-NN queries scan all points instead of using the tree.
pub const KD_TREE_MAX_DIM: usize = 8;

/// `N` points in `dim`-dimensional space, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(SliError::InvalidInput("dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(SliError::InvalidInput(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(SliError::InvalidInput("non-finite coordinate".into()));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| SliError::InvalidInput("empty point list".into()))?;
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(SliError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        PointSet::new(dim, coords)
    }

    /// An empty set of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        PointSet::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// The points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet {
            dim: self.dim,
            coords,
        }
    }

    /// The set with point `i` removed.
    pub fn without(&self, i: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        self.select(&keep)
    }

    /// Per-axis `(min, max)`; `None` for an empty set.
    pub fn bounding_box(&self) -> Option<(Vec<T>, Vec<T>)> {
        let first = self.iter().next()?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in self.iter() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }
}

/// Euclidean distance. Both slices must have the same length.
#[inline]
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        s = s + d * d;
    }
    s.sqrt()
}

/// Distance between two coordinate vectors, checking their dimensions.
pub fn distance_between<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(SliError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(euclidean(a, b))
}

pub fn pairwise_distance<T: Scalar>(points: &PointSet<T>, i: usize, j: usize) -> Result<T> {
    let n = points.len();
    if i >= n || j >= n {
        return Err(SliError::InvalidInput(format!(
            "point index out of range: ({i}, {j}) with N = {n}"
        )));
    }
    Ok(euclidean(points.point(i), points.point(j)))
}

/// `knn_dist[i][k]` is the distance from point `i` to its `k`-th nearest
/// neighbour within the set; column 0 is the point itself at distance 0.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborTable<T> {
    k_max: usize,
    dist: Vec<T>,
    index: Vec<usize>,
}

impl<T: Scalar> NeighborTable<T> {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.dist.len() / (self.k_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    #[inline]
    pub fn dist(&self, i: usize, k: usize) -> T {
        self.dist[i * (self.k_max + 1) + k]
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize) -> usize {
        self.index[i * (self.k_max + 1) + k]
    }

    pub fn dist_row(&self, i: usize) -> &[T] {
        &self.dist[i * (self.k_max + 1)..(i + 1) * (self.k_max + 1)]
    }

    pub fn index_row(&self, i: usize) -> &[usize] {
        &self.index[i * (self.k_max + 1)..(i + 1) * (self.k_max + 1)]
    }

    fn from_rows(k_max: usize, rows: Vec<Vec<(T, usize)>>) -> Self {
        let mut dist = Vec::with_capacity(rows.len() * (k_max + 1));
        let mut index = Vec::with_capacity(rows.len() * (k_max + 1));
        for row in rows {
            debug_assert_eq!(row.len(), k_max + 1);
            for (d, j) in row {
                dist.push(d);
                index.push(j);
            }
        }
        NeighborTable { k_max, dist, index }
    }
}

/// Builds the exact `k_max`-nearest-neighbour table of a point set.
pub fn build_neighbor_table<T: Scalar>(
    points: &PointSet<T>,
    k_max: usize,
) -> Result<NeighborTable<T>> {
    if k_max < 1 {
        return Err(SliError::InvalidParameter("k_max must be at least 1".into()));
    }
    let n = points.len();
    if n <= k_max {
        return Err(SliError::InsufficientData {
            needed: k_max,
            got: n,
        });
    }
    let search = NeighborSearch::new(points);
    let rows: Vec<Vec<(T, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(k_max + 1);
            row.push((T::zero(), i));
            row.extend(search.knn(points.point(i), k_max, Some(i)));
            row
        })
        .collect();
    Ok(NeighborTable::from_rows(k_max, rows))
}

/// Locally adaptive bandwidths `h_i = μ·D_{i,[k]}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthSet<T> {
    pub h: Vec<T>,
    pub mu: T,
    pub k: usize,
}

impl<T: Scalar> BandwidthSet<T> {
    /// The same bandwidths multiplied by `factor` (e.g. `√2` or `2` for the
    /// wider curvature terms).
    pub fn scaled(&self, factor: T) -> Vec<T> {
        self.h.iter().map(|&h| h * factor).collect()
    }
}

pub fn compute_bandwidths<T: Scalar>(
    table: &NeighborTable<T>,
    mu: T,
    k: usize,
) -> Result<BandwidthSet<T>> {
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(SliError::InvalidParameter(format!(
            "bandwidth scale mu must be positive, got {mu}"
        )));
    }
    if k < 1 || k > table.k_max() {
        return Err(SliError::InvalidParameter(format!(
            "neighbour order k = {k} outside 1..={}",
            table.k_max()
        )));
    }
    let mut h = Vec::with_capacity(table.len());
    for i in 0..table.len() {
        let d = table.dist(i, k);
        if !(d > T::zero()) {
            return Err(SliError::DegenerateBandwidth { index: i });
        }
        h.push(mu * d);
    }
    Ok(BandwidthSet { h, mu, k })
}

// ---------------------------------------------------------------------------
// Exact k-NN search.

#[derive(Debug)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// Exact k-NN search over a fixed point set: a k-d tree for moderate
/// dimension, a linear scan above [`KD_TREE_MAX_DIM`].
pub struct NeighborSearch<'a, T> {
    points: &'a PointSet<T>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

const LEAF_SIZE: usize = 12;

impl<'a, T: Scalar> NeighborSearch<'a, T> {
    pub fn new(points: &'a PointSet<T>) -> Self {
        let mut s = NeighborSearch {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if points.dim() <= KD_TREE_MAX_DIM && !points.is_empty() {
            s.build(0, points.len());
        }
        s
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.points.dim();
        let mut best_axis = 0;
        let mut best_spread = T::neg_infinity();
        for axis in 0..dim {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for &i in &self.order[start..end] {
                let c = self.points.point(i)[axis];
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if !(best_spread > T::zero()) {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts.point(a)[best_axis]
                .partial_cmp(&pts.point(b)[best_axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let value = pts.point(self.order[mid])[best_axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis: best_axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `query`, sorted by `(distance, index)`,
    /// skipping `exclude`. Returns fewer than `k` only if the set is too small.
    pub fn knn(&self, query: &[T], k: usize, exclude: Option<usize>) -> Vec<(T, usize)> {
        let mut best = Candidates::new(k);
        if k == 0 {
            return Vec::new();
        }
        if self.nodes.is_empty() {
            for i in 0..self.points.len() {
                if Some(i) != exclude {
                    best.offer(euclidean(query, self.points.point(i)), i);
                }
            }
        } else {
            self.search(0, query, exclude, &mut best);
        }
        best.items
    }

    /// Distance to the `k`-th nearest point of the set (1-based `k`).
    pub fn kth_distance(&self, query: &[T], k: usize) -> Option<T> {
        self.knn(query, k, None).get(k.checked_sub(1)?).map(|c| c.0)
    }

    fn search(&self, node: usize, query: &[T], exclude: Option<usize>, best: &mut Candidates<T>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) != exclude {
                        best.offer(euclidean(query, self.points.point(i)), i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, exclude, best);
                // Equal distances still have to be visited for index tie-breaks.
                let slack = T::epsilon() * T::of(4.0) * best.worst();
                if !best.is_full() || diff.abs() <= best.worst() + slack {
                    self.search(far, query, exclude, best);
                }
            }
        }
    }
}

struct Candidates<T> {
    cap: usize,
    items: Vec<(T, usize)>,
}

impl<T: Scalar> Candidates<T> {
    fn new(cap: usize) -> Self {
        Candidates {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    fn is_full(&self) -> bool {
        self.items.len() >= self.cap
    }

    fn worst(&self) -> T {
        self.items.last().map(|c| c.0).unwrap_or(T::infinity())
    }

    fn offer(&mut self, d: T, i: usize) {
        let less = |a: &(T, usize)| a.0 < d || (a.0 == d && a.1 < i);
        if self.is_full() {
            let w = self.items[self.cap - 1];
            if !(d < w.0 || (d == w.0 && i < w.1)) {
                return;
            }
        }
        let pos = self.items.partition_point(less);
        self.items.insert(pos, (d, i));
        self.items.truncate(self.cap);
    }
}

// ---------------------------------------------------------------------------
// Dense pair cache used by the cross-validation engine.

/// All pairwise distances plus, for every point, the other points sorted by
/// `(distance, index)`. Memory is `O(N²)`; intended for repeated cost
/// evaluations on one training set.
#[derive(Clone, Debug)]
pub struct PairCache<T> {
    n: usize,
    dist: Vec<T>,
    sorted: Vec<(T, u32)>,
}

impl<T: Scalar> PairCache<T> {
    pub fn new(points: &PointSet<T>) -> Self {
        let n = points.len();
        let rows: Vec<(Vec<T>, Vec<(T, u32)>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let pi = points.point(i);
                let row: Vec<T> = (0..n).map(|j| euclidean(pi, points.point(j))).collect();
                let mut sorted: Vec<(T, u32)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (row[j], j as u32))
                    .collect();
                sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                (row, sorted)
            })
            .collect();
        let mut dist = Vec::with_capacity(n * n);
        let mut sorted = Vec::with_capacity(n * n.saturating_sub(1));
        for (r, s) in rows {
            dist.extend(r);
            sorted.extend(s);
        }
        PairCache { n, dist, sorted }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> T {
        self.dist[i * self.n + j]
    }

    #[inline]
    pub fn dist_row(&self, i: usize) -> &[T] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    /// Other points ordered by distance from `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(T, u32)] {
        let w = self.n - 1;
        &self.sorted[i * w..(i + 1) * w]
    }

    /// Neighbour table read off the sorted lists (brute force, exact).
    pub fn neighbor_table(&self, k_max: usize) -> Result<NeighborTable<T>> {
        if k_max < 1 {
            return Err(SliError::InvalidParameter("k_max must be at least 1".into()));
        }
        if self.n <= k_max {
            return Err(SliError::InsufficientData {
                needed: k_max,
                got: self.n,
            });
        }
        let rows = (0..self.n)
            .map(|i| {
                let mut row = Vec::with_capacity(k_max + 1);
                row.push((T::zero(), i));
                row.extend(
                    self.neighbors(i)[..k_max]
                        .iter()
                        .map(|&(d, j)| (d, j as usize)),
                );
                row
            })
            .collect();
        Ok(NeighborTable::from_rows(k_max, rows))
    }
}
