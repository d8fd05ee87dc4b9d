//! K-means on the rows of a spectral embedding, plus the [`Partition`] type
//! shared by the statistical tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

pub const DEFAULT_RESTARTS: usize = 20;
pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum KMeansError {
    #[error("cannot form {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("restarts must be at least 1")]
    ZeroRestarts,
    #[error("all {n} points are identical; cannot form {k} distinct clusters")]
    Degenerate { k: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k x d, row per cluster.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
    pub iterations: usize,
    /// Index of the restart that produced the result.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major copy of the points for cache-friendly distance loops.
struct Rows {
    data: Vec<f64>,
    dim: usize,
}

impl Rows {
    fn from_matrix(points: &DMatrix<f64>) -> Self {
        let (n, dim) = points.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            for j in 0..dim {
                data.push(points[(i, j)]);
            }
        }
        Rows { data, dim }
    }

    fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    objective: f64,
    iterations: usize,
    /// Objective after each iteration.
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

/// Distance-weighted seeding: first center uniform, later centers drawn with
/// probability proportional to squared distance from the nearest center.
fn seed_centers(rows: &Rows, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rows.len();
    let dim = rows.dim;
    let mut chosen = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(rows.row(i), rows.row(first))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            // rounding can run past the end; take the last candidate
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a center: lowest unused index
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(rows.row(i), rows.row(next)));
        }
    }
    let mut centroids = Vec::with_capacity(k * dim);
    for &c in &chosen {
        centroids.extend_from_slice(rows.row(c));
    }
    centroids
}

fn assign(rows: &Rows, centroids: &[f64], k: usize, labels: &mut [usize]) -> bool {
    let dim = rows.dim;
    let mut changed = false;
    for (i, label) in labels.iter_mut().enumerate() {
        let p = rows.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = sq_dist(p, &centroids[c * dim..(c + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
    }
    changed
}

fn update_centroids(rows: &Rows, labels: &[usize], k: usize, centroids: &mut [f64]) -> Vec<usize> {
    let dim = rows.dim;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * dim];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(rows.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..dim {
                centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
            }
        }
    }
    counts
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(rows: &Rows, labels: &mut [usize], k: usize, centroids: &mut [f64], counts: &mut [usize]) -> bool {
    let dim = rows.dim;
    let mut repaired = false;
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = sq_dist(rows.row(i), &centroids[l * dim..(l + 1) * dim]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(rows.row(i));
        repaired = true;
    }
    if repaired {
        update_centroids(rows, labels, k, centroids);
    }
    repaired
}

fn objective(rows: &Rows, labels: &[usize], centroids: &[f64]) -> f64 {
    let dim = rows.dim;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(rows.row(i), &centroids[l * dim..(l + 1) * dim]))
        .sum()
}

fn lloyd(rows: &Rows, k: usize, rng: &mut ChaCha8Rng) -> Run {
    let n = rows.len();
    let mut centroids = seed_centers(rows, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut history = Vec::new();
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let changed = assign(rows, &centroids, k, &mut labels);
        let mut counts = update_centroids(rows, &labels, k, &mut centroids);
        let repaired = repair_empty(rows, &mut labels, k, &mut centroids, &mut counts);
        history.push(objective(rows, &labels, &centroids));
        if !changed && !repaired {
            break;
        }
    }
    let objective = objective(rows, &labels, &centroids);
    Run {
        labels,
        centroids,
        objective,
        iterations,
        history,
    }
}

/// Best of `restarts` seeded Lloyd runs on the rows of `points` (n x d).
///
/// Restart `r` draws from ChaCha8 stream `r` of `seed`, so the result does not
/// depend on how restarts are scheduled across threads.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult, KMeansError> {
    let n = points.nrows();
    if k == 0 {
        return Err(KMeansError::ZeroClusters);
    }
    if k > n {
        return Err(KMeansError::TooManyClusters { k, n });
    }
    if restarts == 0 {
        return Err(KMeansError::ZeroRestarts);
    }
    let rows = Rows::from_matrix(points);
    if k > 1 && (1..n).all(|i| rows.row(i) == rows.row(0)) {
        return Err(KMeansError::Degenerate { k, n });
    }
    if k == 1 || rows.dim == 0 {
        let labels = vec![0; n];
        let mut centroids = vec![0.0; rows.dim];
        update_centroids(&rows, &labels, 1, &mut centroids);
        let objective = objective(&rows, &labels, &centroids);
        return Ok(KMeansResult {
            labels,
            centroids: DMatrix::from_row_slice(1, rows.dim, &centroids),
            objective,
            iterations: 0,
            restart: 0,
        });
    }

    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(&rows, k, &mut rng)
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)))
        .unwrap();
    Ok(KMeansResult {
        labels: best.labels,
        centroids: DMatrix::from_row_slice(k, rows.dim, &best.centroids),
        objective: best.objective,
        iterations: best.iterations,
        restart,
    })
}

/// Renumbers labels in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("label vector has length {labels}, graph has {nodes} nodes")]
    LengthMismatch { labels: usize, nodes: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("empty label vector")]
    Empty,
}

/// Hard clustering of a graph's nodes with per-cluster counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Nodes per cluster.
    pub sizes: Vec<usize>,
    /// Within-cluster edge count per cluster.
    pub within_edges: Vec<usize>,
    /// Within-cluster edge weight per cluster.
    pub within_weight: Vec<f64>,
}

impl Partition {
    /// Labels must cover `0..k` with every cluster nonempty.
    pub fn new(g: &Graph, labels: Vec<usize>) -> Result<Self, PartitionError> {
        if labels.len() != g.node_count() {
            return Err(PartitionError::LengthMismatch {
                labels: labels.len(),
                nodes: g.node_count(),
            });
        }
        let k = labels.iter().max().map(|m| m + 1).ok_or(PartitionError::Empty)?;
        let mut sizes = vec![0; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(PartitionError::EmptyCluster(c));
        }
        let mut within_edges = vec![0; k];
        let mut within_weight = vec![0.0; k];
        for (u, v, w) in g.edges() {
            if labels[u] == labels[v] {
                within_edges[labels[u]] += 1;
                within_weight[labels[u]] += w;
            }
        }
        Ok(Partition {
            labels,
            k,
            sizes,
            within_edges,
            within_weight,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    /// Member nodes of each cluster in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (u, &l) in self.labels.iter().enumerate() {
            out[l].push(u);
        }
        out
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn min_size(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    pub fn total_within_edges(&self) -> usize {
        self.within_edges.iter().sum()
    }
}
