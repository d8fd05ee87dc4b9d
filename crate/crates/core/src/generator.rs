//! Random interconnection model (RIM) graphs with planted clusters.
//!
//! Each cluster gets a connected internal graph; every cross-cluster node pair
//! is linked independently with its pair's probability, and cross edges carry
//! weights drawn from a distribution with the pair's mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{is_connected, Graph, GraphError};

/// Rejection-sampling budget for random internal graphs.
pub const MAX_CONNECTIVITY_ATTEMPTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid RIM spec: {0}")]
    InvalidSpec(String),
    #[error("cluster {cluster}: no connected internal graph after {attempts} attempts")]
    ConnectivityExhausted { cluster: usize, attempts: usize },
    #[error("cluster {0}: internal graph is not connected")]
    Disconnected(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Recipe for the edges inside one cluster (unit weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InternalGraph {
    Complete,
    ErdosRenyi {
        p: f64,
    },
    Path,
    /// Local node indices `0..n_k`.
    Custom {
        edges: Vec<(usize, usize)>,
    },
}

/// One value shared by every cluster, or one value per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCluster<T> {
    Each(Vec<T>),
    All(T),
}

impl<T> PerCluster<T> {
    fn get(&self, k: usize) -> &T {
        match self {
            PerCluster::All(v) => v,
            PerCluster::Each(v) => &v[k],
        }
    }
}

/// A per-pair parameter: one value for all pairs, or a symmetric K x K matrix
/// whose diagonal is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairParam {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

impl PairParam {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            PairParam::Uniform(v) => *v,
            PairParam::Matrix(m) => m[i][j],
        }
    }

    /// The shared value, if every off-diagonal entry is the same.
    pub fn uniform_value(&self, k: usize) -> Option<f64> {
        match self {
            PairParam::Uniform(v) => Some(*v),
            PairParam::Matrix(m) => {
                let first = if k > 1 { m[0][1] } else { return None };
                let same = (0..k).all(|i| (0..k).all(|j| i == j || m[i][j] == first));
                same.then_some(first)
            }
        }
    }

    fn validate(&self, k: usize, name: &str) -> Result<(), GenerateError> {
        if let PairParam::Matrix(m) = self {
            if m.len() != k || m.iter().any(|r| r.len() != k) {
                return Err(GenerateError::InvalidSpec(format!("{name} must be a {k}x{k} matrix")));
            }
            for (i, row) in m.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if i != j && x != m[j][i] {
                        return Err(GenerateError::InvalidSpec(format!(
                            "{name} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDistribution {
    /// Every cross edge carries exactly the pair mean.
    #[default]
    Constant,
    Exponential,
}

fn default_weight_mean() -> PairParam {
    PairParam::Uniform(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RimSpec {
    pub sizes: Vec<usize>,
    pub internal: PerCluster<InternalGraph>,
    pub cross_p: PairParam,
    #[serde(default = "default_weight_mean")]
    pub weight_mean: PairParam,
    #[serde(default)]
    pub weight_distribution: WeightDistribution,
    #[serde(default)]
    pub seed: u64,
}

impl RimSpec {
    /// Homogeneous RIM: one internal recipe, one probability, unit weights.
    pub fn homogeneous(sizes: Vec<usize>, internal: InternalGraph, p: f64, seed: u64) -> Self {
        RimSpec {
            sizes,
            internal: PerCluster::All(internal),
            cross_p: PairParam::Uniform(p),
            weight_mean: PairParam::Uniform(1.0),
            weight_distribution: WeightDistribution::Constant,
            seed,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let k = self.sizes.len();
        let bad = |m: String| Err(GenerateError::InvalidSpec(m));
        if k == 0 {
            return bad("no clusters".into());
        }
        if let Some(c) = self.sizes.iter().position(|&s| s == 0) {
            return bad(format!("cluster {c} has size 0"));
        }
        if let PerCluster::Each(v) = &self.internal {
            if v.len() != k {
                return bad(format!("{} internal recipes for {k} clusters", v.len()));
            }
        }
        for c in 0..k {
            match self.internal.get(c) {
                InternalGraph::ErdosRenyi { p } if !(0.0..=1.0).contains(p) => {
                    return bad(format!("cluster {c}: p_in {p} outside [0, 1]"));
                }
                InternalGraph::Custom { edges } => {
                    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= self.sizes[c] || v >= self.sizes[c]) {
                        return bad(format!("cluster {c}: custom edge ({u}, {v}) out of range"));
                    }
                }
                _ => {}
            }
        }
        self.cross_p.validate(k, "cross_p")?;
        self.weight_mean.validate(k, "weight_mean")?;
        for i in 0..k {
            for j in i + 1..k {
                let p = self.cross_p.get(i, j);
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("cross_p[{i}][{j}] = {p} outside [0, 1]"));
                }
                let w = self.weight_mean.get(i, j);
                if !(w.is_finite() && w >= 0.0) {
                    return bad(format!("weight_mean[{i}][{j}] = {w} must be nonnegative"));
                }
                if p > 0.0 && w == 0.0 {
                    return bad(format!("pair ({i}, {j}) has edges but zero mean weight"));
                }
            }
        }
        Ok(())
    }
}

/// A generated graph with its planted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RimGraph {
    pub graph: Graph,
    /// Cluster id per node; cluster `k` occupies a contiguous index range.
    pub labels: Vec<usize>,
}

fn internal_edges(
    recipe: &InternalGraph,
    size: usize,
    cluster: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>, GenerateError> {
    let connected = |edges: &[(usize, usize)]| -> Result<bool, GenerateError> {
        Ok(size == 1 || is_connected(&Graph::from_unweighted(size, edges.iter().copied())?))
    };
    match recipe {
        InternalGraph::Complete => Ok((0..size).flat_map(|u| (u + 1..size).map(move |v| (u, v))).collect()),
        InternalGraph::Path => Ok((1..size).map(|v| (v - 1, v)).collect()),
        InternalGraph::Custom { edges } => {
            if connected(edges)? {
                Ok(edges.clone())
            } else {
                Err(GenerateError::Disconnected(cluster))
            }
        }
        InternalGraph::ErdosRenyi { p } => {
            for _ in 0..MAX_CONNECTIVITY_ATTEMPTS {
                let mut edges = Vec::new();
                for u in 0..size {
                    for v in u + 1..size {
                        if rng.random::<f64>() < *p {
                            edges.push((u, v));
                        }
                    }
                }
                if connected(&edges)? {
                    return Ok(edges);
                }
            }
            Err(GenerateError::ConnectivityExhausted {
                cluster,
                attempts: MAX_CONNECTIVITY_ATTEMPTS,
            })
        }
    }
}

/// Samples a RIM graph. Deterministic given `spec.seed`.
pub fn generate_rim(spec: &RimSpec) -> Result<RimGraph, GenerateError> {
    spec.validate()?;
    let k = spec.sizes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offsets: Vec<usize> = spec
        .sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let n: usize = spec.sizes.iter().sum();

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut labels = vec![0; n];
    for c in 0..k {
        let off = offsets[c];
        labels[off..off + spec.sizes[c]].fill(c);
        for (u, v) in internal_edges(spec.internal.get(c), spec.sizes[c], c, &mut rng)? {
            edges.push((off + u, off + v, 1.0));
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            let p = spec.cross_p.get(i, j);
            if p == 0.0 {
                continue;
            }
            let mean = spec.weight_mean.get(i, j);
            let exp = Exp::new(1.0 / mean).map_err(|e| GenerateError::InvalidSpec(e.to_string()))?;
            for u in offsets[i]..offsets[i] + spec.sizes[i] {
                for v in offsets[j]..offsets[j] + spec.sizes[j] {
                    if rng.random::<f64>() < p {
                        let w = match spec.weight_distribution {
                            WeightDistribution::Constant => mean,
                            WeightDistribution::Exponential => loop {
                                let w = exp.sample(&mut rng);
                                if w > 0.0 {
                                    break w;
                                }
                            },
                        };
                        edges.push((u, v, w));
                    }
                }
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?;
    Ok(RimGraph { graph, labels })
}

/// Realized cross-edge density times realized mean cross-edge weight, which
/// reduces to total cross weight over the number of cross node pairs.
pub fn empirical_t(g: &Graph, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let n = labels.len() as f64;
    let pairs = (n * n - sizes.iter().map(|&s| (s as f64).powi(2)).sum::<f64>()) / 2.0;
    if pairs == 0.0 {
        return 0.0;
    }
    let cross: f64 = g
        .edges()
        .filter(|&(u, v, _)| labels[u] != labels[v])
        .map(|(_, _, w)| w)
        .sum();
    cross / pairs
}
