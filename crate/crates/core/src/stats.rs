//! Reliability tests for a clustering under the random interconnection model.
//!
//! * [`v_test_pvalue`]: homogeneity of the row sums of one inter-cluster block.
//! * [`glrt_homogeneity_test`]: one shared interconnection probability versus
//!   a probability per cluster pair, via Wilks' chi-square approximation.
//! * [`inhomogeneous_pt_test`]: whether every pair's interconnectivity stays
//!   below the estimated phase-transition lower bound, using Anscombe-stabilized
//!   normal approximations of the pairwise MLEs.
//!
//! Everything here works on counts: edge weights enter only through the mean
//! cross-edge weights `w_bar`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};
use thiserror::Error;

use crate::graph::{subgraph, Graph, NodeSet};
use crate::kmeans::Partition;
use crate::spectral::{graph_partial_eigen_sum, EigenSolver, SpectralError};

/// Anscombe offset c'.
pub const ANSCOMBE_C: f64 = 3.0 / 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("V-test undefined for a {rows}x{cols} block (needs rows >= 1, cols >= 2)")]
    DegenerateVTest { rows: usize, cols: usize },
    #[error("likelihood-ratio test needs at least 3 clusters ({pairs} cluster pairs given)")]
    GlrtNotApplicable { pairs: usize },
    #[error("cluster {cluster} has {size} nodes, fewer than K = {k}; partial eigenvalue sum undefined")]
    ClusterTooSmall { cluster: usize, size: usize, k: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper `upper_alpha` quantile of the chi-square distribution with `q`
/// degrees of freedom, i.e. the ξ with P(χ²_q ≥ ξ) = upper_alpha.
pub fn chi_square_quantile(q: usize, upper_alpha: f64) -> Result<f64, StatsError> {
    if q == 0 {
        return Err(StatsError::InvalidArgument("degrees of freedom must be >= 1".into()));
    }
    if !(upper_alpha > 0.0 && upper_alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "upper_alpha {upper_alpha} not in (0, 1)"
        )));
    }
    let a = q as f64 / 2.0;
    let survival = |x: f64| gamma_ur(a, x / 2.0);
    let log_norm = ln_gamma(a) + a * std::f64::consts::LN_2;
    let density = |x: f64| ((a - 1.0) * x.ln() - x / 2.0 - log_norm).exp();

    let mut lo = 0.0;
    let mut hi = q as f64;
    while survival(hi) > upper_alpha {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let f = survival(x) - upper_alpha;
        if f == 0.0 {
            return Ok(x);
        }
        // survival is decreasing in x
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x + f / density(x);
        if !(next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// V-test statistic and two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VTest {
    pub z: f64,
    pub p_value: f64,
}

/// V-test from the row sums of an `n_i x n_j` binary block.
pub fn v_test_from_row_counts(row_counts: &[usize], n_j: usize) -> Result<VTest, StatsError> {
    let n_i = row_counts.len();
    if n_i < 1 || n_j < 2 {
        return Err(StatsError::DegenerateVTest { rows: n_i, cols: n_j });
    }
    // x^T x - x^T 1 and y^T y - y^T 1 are sums of x(x-1), exact in integers
    let mut xs: u128 = 0;
    let mut ys: u128 = 0;
    for &x in row_counts {
        if x > n_j {
            return Err(StatsError::InvalidArgument(format!(
                "row count {x} exceeds {n_j} columns"
            )));
        }
        let y = n_j - x;
        xs += (x as u128) * (x.saturating_sub(1) as u128);
        ys += (y as u128) * (y.saturating_sub(1) as u128);
    }
    let n = (n_i as f64) * (n_j as f64) * ((n_j - 1) as f64);
    // expanded so that an all-zero or all-one block gives V = N exactly
    let (xf, yf) = (xs as f64, ys as f64);
    let v = xf + yf + 2.0 * (xf * yf).sqrt();
    let z = (v - n) / (2.0 * n).sqrt();
    let p_value = (2.0 * normal_cdf(z).min(normal_cdf(-z))).clamp(0.0, 1.0);
    Ok(VTest { z, p_value })
}

/// p-value of the V-test for homogeneity of the row sums of `c`.
pub fn v_test_pvalue(c: &DMatrix<u8>) -> Result<f64, StatsError> {
    v_test(c).map(|t| t.p_value)
}

pub fn v_test(c: &DMatrix<u8>) -> Result<VTest, StatsError> {
    let counts: Vec<usize> = c.row_iter().map(|r| r.iter().filter(|&&b| b != 0).count()).collect();
    v_test_from_row_counts(&counts, c.ncols())
}

/// Which orientations of each inter-cluster block get a V-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VTestOrientation {
    /// Rows are the lower-indexed cluster.
    #[default]
    LowerRows,
    /// Additionally test the transposed block (diagnostic only).
    Both,
}

/// Estimates and V-test outcome for one unordered cluster pair `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub i: usize,
    pub j: usize,
    pub n_i: usize,
    pub n_j: usize,
    /// Inter-cluster edge count.
    pub m_ij: usize,
    pub p_hat: f64,
    /// Mean cross-edge weight; 1 when there are no cross edges.
    pub w_bar: f64,
    /// False when the pair has no cross edges and `w_bar` is a placeholder.
    pub has_cross_edges: bool,
    pub t_hat: f64,
    pub z: Option<f64>,
    pub p_value: f64,
    /// Block too small for the V-test; `p_value` is 1 by convention.
    pub v_test_degenerate: bool,
    /// p-value with the block transposed, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value_transposed: Option<f64>,
}

fn pair_v_test(row_counts: &[usize], n_j: usize) -> (Option<f64>, f64, bool) {
    match v_test_from_row_counts(row_counts, n_j) {
        Ok(t) => (Some(t.z), t.p_value, false),
        Err(_) => (None, 1.0, true),
    }
}

/// Per-pair estimates in lexicographic `(i, j)` order.
pub fn pair_estimates(g: &Graph, part: &Partition) -> Vec<PairStats> {
    pair_estimates_with(g, part, VTestOrientation::LowerRows)
}

pub fn pair_estimates_with(g: &Graph, part: &Partition, orientation: VTestOrientation) -> Vec<PairStats> {
    let k = part.k;
    let n = g.node_count();
    let labels = &part.labels;
    // neighbor counts per (node, cluster)
    let mut nbr = vec![0usize; n * k];
    let mut cross_count = vec![0usize; k * k];
    let mut cross_weight = vec![0.0f64; k * k];
    for u in 0..n {
        for &(v, _) in g.neighbors(u) {
            nbr[u * k + labels[v]] += 1;
        }
    }
    for (u, v, w) in g.edges() {
        let (a, b) = (labels[u].min(labels[v]), labels[u].max(labels[v]));
        if a != b {
            cross_count[a * k + b] += 1;
            cross_weight[a * k + b] += w;
        }
    }
    let members = part.members();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    pairs
        .into_par_iter()
        .map(|(i, j)| {
            let n_i = part.sizes[i];
            let n_j = part.sizes[j];
            let m_ij = cross_count[i * k + j];
            let p_hat = m_ij as f64 / (n_i as f64 * n_j as f64);
            let has_cross_edges = m_ij > 0;
            let w_bar = if has_cross_edges {
                cross_weight[i * k + j] / m_ij as f64
            } else {
                1.0
            };
            let t_hat = if has_cross_edges { p_hat * w_bar } else { 0.0 };
            let rows: Vec<usize> = members[i].iter().map(|&u| nbr[u * k + j]).collect();
            let (z, p_value, v_test_degenerate) = pair_v_test(&rows, n_j);
            let p_value_transposed = match orientation {
                VTestOrientation::LowerRows => None,
                VTestOrientation::Both => {
                    let rows_t: Vec<usize> = members[j].iter().map(|&u| nbr[u * k + i]).collect();
                    Some(pair_v_test(&rows_t, n_i).1)
                }
            };
            PairStats {
                i,
                j,
                n_i,
                n_j,
                m_ij,
                p_hat,
                w_bar,
                has_cross_edges,
                t_hat,
                z,
                p_value,
                v_test_degenerate,
                p_value_transposed,
            }
        })
        .collect()
}

/// Pooled estimates under the homogeneous model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousStats {
    /// 2(m - Σ m_k) / (n² - Σ n_k²).
    pub p_hat: f64,
    /// Mean weight over all cross edges; 1 when there are none.
    pub w_bar: f64,
    pub has_cross_edges: bool,
    pub t_hat: f64,
    /// Phase-transition lower bound; `None` when some cluster has fewer than K nodes.
    pub t_lb: Option<f64>,
    /// Matching upper bound, using the smallest cluster size.
    pub t_ub: Option<f64>,
    /// Largest pairwise t̂_ij.
    pub t_max: f64,
    /// m - Σ m_k.
    pub cross_edges: usize,
}

/// Both phase-transition bounds `(t_lb, t_ub)` from the cluster subgraph Laplacians.
pub fn phase_transition_bounds(g: &Graph, part: &Partition, solver: EigenSolver) -> Result<(f64, f64), StatsError> {
    let k = part.k;
    if k < 2 {
        return Err(StatsError::InvalidArgument("need at least 2 clusters".into()));
    }
    if let Some(c) = part.sizes.iter().position(|&s| s < k) {
        return Err(StatsError::ClusterTooSmall {
            cluster: c,
            size: part.sizes[c],
            k,
        });
    }
    let sums: Vec<f64> = part
        .members()
        .into_par_iter()
        .map(|nodes| -> Result<f64, StatsError> {
            let n = g.node_count();
            let set = NodeSet::new(nodes, n).map_err(|e| StatsError::InvalidArgument(e.to_string()))?;
            let sub = subgraph(g, &set).map_err(|e| StatsError::InvalidArgument(e.to_string()))?;
            Ok(graph_partial_eigen_sum(&sub, k, solver)?)
        })
        .collect::<Result<_, _>>()?;
    let min_sum = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let denom = (k - 1) as f64;
    Ok((
        min_sum / (denom * part.max_size() as f64),
        min_sum / (denom * part.min_size() as f64),
    ))
}

/// min_k S_{2:K}(L_k) / ((K-1) n_max) over the cluster subgraphs.
pub fn t_lb_estimate(g: &Graph, part: &Partition) -> Result<f64, StatsError> {
    phase_transition_bounds(g, part, EigenSolver::Auto).map(|b| b.0)
}

pub fn homogeneous_estimates(g: &Graph, part: &Partition, pairs: &[PairStats]) -> Result<HomogeneousStats, StatsError> {
    homogeneous_estimates_with(g, part, pairs, EigenSolver::Auto)
}

pub fn homogeneous_estimates_with(
    g: &Graph,
    part: &Partition,
    pairs: &[PairStats],
    solver: EigenSolver,
) -> Result<HomogeneousStats, StatsError> {
    let n = part.node_count() as f64;
    let cross_edges = g.edge_count() - part.total_within_edges();
    let sq_sizes: f64 = part.sizes.iter().map(|&s| (s as f64).powi(2)).sum();
    let possible = n * n - sq_sizes;
    let p_hat = if possible > 0.0 {
        2.0 * cross_edges as f64 / possible
    } else {
        0.0
    };
    let cross_weight: f64 = pairs
        .iter()
        .filter(|p| p.has_cross_edges)
        .map(|p| p.w_bar * p.m_ij as f64)
        .sum();
    let has_cross_edges = cross_edges > 0;
    let w_bar = if has_cross_edges {
        cross_weight / cross_edges as f64
    } else {
        1.0
    };
    let (t_lb, t_ub) = match phase_transition_bounds(g, part, solver) {
        Ok((lb, ub)) => (Some(lb), Some(ub)),
        Err(StatsError::ClusterTooSmall { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(HomogeneousStats {
        p_hat,
        w_bar,
        has_cross_edges,
        t_hat: p_hat * w_bar,
        t_lb,
        t_ub,
        t_max: pairs.iter().map(|p| p.t_hat).fold(0.0, f64::max),
        cross_edges,
    })
}

/// `count * ln(p)` with 0·ln 0 = 0.
fn xlogy(count: f64, p: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        count * p.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrtOutcome {
    pub pass: bool,
    pub statistic: f64,
    /// ξ_{q, 1-α/2}.
    pub lower: f64,
    /// ξ_{q, α/2}.
    pub upper: f64,
    pub dof: usize,
    /// Failed because the statistic fell below the lower quantile.
    pub low_side_failure: bool,
}

/// Two-sided likelihood-ratio test of a single shared interconnection
/// probability. `pairs` must hold every unordered pair for K ≥ 3 clusters.
pub fn glrt_homogeneity_test(
    pairs: &[PairStats],
    hom: &HomogeneousStats,
    alpha: f64,
) -> Result<GlrtOutcome, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
    }
    if pairs.len() < 3 {
        return Err(StatsError::GlrtNotApplicable { pairs: pairs.len() });
    }
    let dof = pairs.len() - 1;
    let mut pairwise = 0.0;
    for p in pairs {
        if p.p_hat > 0.0 && p.p_hat < 1.0 {
            let total = (p.n_i * p.n_j) as f64;
            let m = p.m_ij as f64;
            pairwise += m * p.p_hat.ln() + (total - m) * (1.0 - p.p_hat).ln();
        }
    }
    let cross = pairs.iter().map(|p| p.m_ij).sum::<usize>() as f64;
    // n² - Σ n_k² = 2 Σ_{i<j} n_i n_j
    let possible = 2.0 * pairs.iter().map(|p| (p.n_i * p.n_j) as f64).sum::<f64>();
    let statistic = 2.0 * pairwise - xlogy(2.0 * cross, hom.p_hat) - xlogy(possible - 2.0 * cross, 1.0 - hom.p_hat);
    let statistic = if statistic.is_nan() { f64::INFINITY } else { statistic };
    let lower = chi_square_quantile(dof, 1.0 - alpha / 2.0)?;
    let upper = chi_square_quantile(dof, alpha / 2.0)?;
    let pass = lower <= statistic && statistic <= upper;
    Ok(GlrtOutcome {
        pass,
        statistic,
        lower,
        upper,
        dof,
        low_side_failure: statistic < lower,
    })
}

/// Variance-stabilizing arcsine transform of a proportion from an
/// `n_i x n_j` block.
pub fn anscombe(x: f64, n_i: usize, n_j: usize) -> f64 {
    let cells = (n_i as f64) * (n_j as f64);
    let arg = (x + ANSCOMBE_C / cells) / (1.0 + 2.0 * ANSCOMBE_C / cells);
    arg.clamp(0.0, 1.0).sqrt().asin()
}

/// F_ij(x, p̂_ij): approximate probability that the pair's interconnection
/// probability lies below `x`.
pub fn f_ij(x: f64, pair: &PairStats) -> f64 {
    let p = pair.p_hat;
    if p > 0.0 && p < 1.0 {
        let scale = (4.0 * (pair.n_i as f64) * (pair.n_j as f64) + 2.0).sqrt();
        normal_cdf(scale * (anscombe(x, pair.n_i, pair.n_j) - anscombe(p, pair.n_i, pair.n_j)))
    } else if p < x {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousOutcome {
    pub pass: bool,
    pub product: f64,
}

/// Passes when Π_{i<j} F_ij(t_lb / w̄_ij, p̂_ij) ≥ 1 - α'. The product is
/// accumulated in the order of `pairs`.
pub fn inhomogeneous_pt_test(
    pairs: &[PairStats],
    t_lb: f64,
    alpha_prime: f64,
) -> Result<InhomogeneousOutcome, StatsError> {
    if !(alpha_prime > 0.0 && alpha_prime < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "alpha' {alpha_prime} not in (0, 1)"
        )));
    }
    if t_lb < 0.0 {
        return Err(StatsError::InvalidArgument(format!("t_lb {t_lb} is negative")));
    }
    let product = pairs.iter().map(|p| f_ij(t_lb / p.w_bar, p)).product::<f64>();
    Ok(InhomogeneousOutcome {
        pass: product >= 1.0 - alpha_prime,
        product,
    })
}
