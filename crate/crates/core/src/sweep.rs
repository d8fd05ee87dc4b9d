//! Phase-transition sweeps over the interconnectivity t = p * W on homogeneous
//! RIM graphs, with the subspace-perturbation check against an independent
//! reference draw.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{generate_rim, GenerateError, PairParam, RimSpec, WeightDistribution};
use crate::graph::Graph;
use crate::kmeans::{kmeans, KMeansError, Partition, PartitionError};
use crate::metrics::{nmi, MetricsError};
use crate::spectral::{embedding_with, sin_theta_distance, EigenSolver, SpectralError};
use crate::stats::{phase_transition_bounds, StatsError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("t = {t}, trial {trial}: {source}")]
    Trial {
        t: f64,
        trial: usize,
        #[source]
        source: Box<SweepError>,
    },
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Homogeneous RIM template. Its cross probability is kept; the weight
    /// mean is set to t / p at every grid point.
    pub spec: RimSpec,
    /// Strictly increasing, positive.
    pub t_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub restarts: usize,
}

/// One (t, trial) sample. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub trial: usize,
    pub seed: u64,
    /// Realized cross density times mean cross weight.
    pub t_empirical: f64,
    pub nmi: f64,
    pub sin_theta: f64,
    /// Frobenius norm of the Laplacian difference to the reference graph.
    pub l_diff_fro: f64,
    pub delta_t: f64,
    /// ‖L - L̃‖_F / (n δ_t).
    pub bound: f64,
    pub t_lb: f64,
    pub t_ub: f64,
    pub lambda_next_over_n: f64,
    /// t below the estimated lower bound, where the perturbation bound applies.
    pub sub_threshold: bool,
    pub violation: bool,
}

pub const CSV_HEADER: &str = "t,trial,seed,t_empirical,nmi,sin_theta,l_diff_fro,delta_t,bound,t_lb,t_ub,lambda_next_over_n,sub_threshold,violation";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.trial,
            self.seed,
            self.t_empirical,
            self.nmi,
            self.sin_theta,
            self.l_diff_fro,
            self.delta_t,
            self.bound,
            self.t_lb,
            self.t_ub,
            self.lambda_next_over_n,
            self.sub_threshold,
            self.violation
        )
    }
}

/// Per-grid-point averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: f64,
    pub mean_nmi: f64,
    pub mean_t_lb: f64,
    pub mean_t_ub: f64,
    pub violations: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of trial `trial` at grid index `point`.
pub fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    splitmix(splitmix(base ^ splitmix(point as u64)).wrapping_add(trial as u64))
}

/// ‖L(a) - L(b)‖_F for graphs on the same node set.
pub fn laplacian_diff_frobenius(a: &Graph, b: &Graph) -> f64 {
    let mut sum = 0.0;
    for u in 0..a.node_count() {
        let d = a.degree(u) - b.degree(u);
        sum += d * d;
        let (na, nb) = (a.neighbors(u), b.neighbors(u));
        let (mut i, mut j) = (0, 0);
        // adjacency lists are sorted by neighbor
        while i < na.len() || j < nb.len() {
            let (diff, adv_a, adv_b) = match (na.get(i), nb.get(j)) {
                (Some(&(va, wa)), Some(&(vb, wb))) => match va.cmp(&vb) {
                    std::cmp::Ordering::Equal => (wa - wb, 1, 1),
                    std::cmp::Ordering::Less => (wa, 1, 0),
                    std::cmp::Ordering::Greater => (wb, 0, 1),
                },
                (Some(&(_, wa)), None) => (wa, 1, 0),
                (None, Some(&(_, wb))) => (wb, 0, 1),
                (None, None) => unreachable!(),
            };
            sum += diff * diff;
            i += adv_a;
            j += adv_b;
        }
    }
    sum.sqrt()
}

impl SweepConfig {
    fn validate(&self) -> Result<f64, SweepError> {
        let bad = |m: &str| Err(SweepError::Invalid(m.to_string()));
        if self.t_grid.is_empty() {
            return bad("empty t grid");
        }
        if self.t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("t values must be positive and finite");
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("t grid must be strictly increasing");
        }
        if self.trials == 0 {
            return bad("at least one trial per grid point");
        }
        if self.restarts == 0 {
            return bad("at least one K-means restart");
        }
        let k = self.spec.cluster_count();
        if k < 2 {
            return bad("need at least 2 clusters");
        }
        match self.spec.cross_p.uniform_value(k) {
            Some(p) if p > 0.0 && p <= 1.0 => Ok(p),
            Some(_) => bad("cross probability must be in (0, 1]"),
            None => bad("sweep needs a homogeneous cross probability"),
        }
    }
}

fn run_trial(cfg: &SweepConfig, p: f64, point: usize, t: f64, trial: usize) -> Result<SweepRow, SweepError> {
    let seed = trial_seed(cfg.seed, point, trial);
    let k = cfg.spec.cluster_count();
    let spec = RimSpec {
        cross_p: PairParam::Uniform(p),
        weight_mean: PairParam::Uniform(t / p),
        seed,
        ..cfg.spec.clone()
    };
    let rim = generate_rim(&spec)?;
    let reference = generate_rim(&RimSpec {
        seed: splitmix(seed ^ 0x5246),
        ..spec.clone()
    })?;
    let g = &rim.graph;
    let n = g.node_count() as f64;

    let emb = embedding_with(g, k, EigenSolver::Auto)?;
    let emb_ref = embedding_with(&reference.graph, k, EigenSolver::Auto)?;
    let km = kmeans(&emb.y, k, cfg.restarts, seed)?;
    let score = nmi(&km.labels, &rim.labels)?;

    let part = Partition::new(g, rim.labels.clone())?;
    let (t_lb, t_ub) = phase_transition_bounds(g, &part, EigenSolver::Auto)?;

    let sin_theta = sin_theta_distance(&emb.y, &emb_ref.y)?;
    let l_diff_fro = laplacian_diff_frobenius(g, &reference.graph);
    let lambda_next_over_n = emb.lambda_next / n;
    let delta_t = t.min((lambda_next_over_n - t).abs());
    let bound = if delta_t > 0.0 {
        l_diff_fro / (n * delta_t)
    } else {
        f64::INFINITY
    };
    let sub_threshold = t < t_lb;
    Ok(SweepRow {
        t,
        trial,
        seed,
        t_empirical: crate::generator::empirical_t(g, &rim.labels),
        nmi: score,
        sin_theta,
        l_diff_fro,
        delta_t,
        bound,
        t_lb,
        t_ub,
        lambda_next_over_n,
        sub_threshold,
        violation: sub_threshold && sin_theta > bound,
    })
}

/// Runs every (t, trial) pair; rows come back in grid-then-trial order
/// regardless of thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, SweepError> {
    let p = cfg.validate()?;
    let jobs: Vec<(usize, f64, usize)> = cfg
        .t_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| (0..cfg.trials).map(move |r| (i, t, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, t, trial)| {
            run_trial(cfg, p, i, t, trial).map_err(|e| SweepError::Trial {
                t,
                trial,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Averages rows per grid value, in grid order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepPoint> {
    let mut out: Vec<(SweepPoint, usize)> = Vec::new();
    for r in rows {
        if out.last().is_none_or(|(p, _)| p.t != r.t) {
            out.push((
                SweepPoint {
                    t: r.t,
                    mean_nmi: 0.0,
                    mean_t_lb: 0.0,
                    mean_t_ub: 0.0,
                    violations: 0,
                },
                0,
            ));
        }
        let (p, count) = out.last_mut().expect("pushed above");
        p.mean_nmi += r.nmi;
        p.mean_t_lb += r.t_lb;
        p.mean_t_ub += r.t_ub;
        p.violations += r.violation as usize;
        *count += 1;
    }
    out.into_iter()
        .map(|(mut p, c)| {
            let c = c as f64;
            p.mean_nmi /= c;
            p.mean_t_lb /= c;
            p.mean_t_ub /= c;
            p
        })
        .collect()
}

/// Template with complete internal graphs and constant cross weights.
pub fn complete_cluster_template(sizes: Vec<usize>, p: f64) -> RimSpec {
    RimSpec {
        weight_distribution: WeightDistribution::Constant,
        ..RimSpec::homogeneous(sizes, crate::generator::InternalGraph::Complete, p, 0)
    }
}
