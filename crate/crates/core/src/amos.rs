//! The AMOS loop: cluster at K = 2, 3, ... and stop at the first K whose
//! clusters pass the RIM reliability tests.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{connected_components, degree_normalize, Graph, GraphError};
use crate::kmeans::{canonical_labels, kmeans, KMeansError, Partition, PartitionError, DEFAULT_RESTARTS};
use crate::spectral::{laplacian_eigenpairs, EigenSolver, Eigenpairs, SpectralError};
use crate::stats::{
    glrt_homogeneity_test, homogeneous_estimates_with, inhomogeneous_pt_test, pair_estimates_with, GlrtOutcome,
    HomogeneousStats, InhomogeneousOutcome, PairStats, StatsError, VTestOrientation,
};

/// Hard cap on the default K range.
pub const DEFAULT_K_CAP: usize = 200;

#[derive(Debug, Error)]
pub enum AmosError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("graph has {0} nodes; AMOS needs at least 3")]
    TooSmall(usize),
    #[error("graph has {0} connected components; run AMOS on each component")]
    Disconnected(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmosConfig {
    /// V-test significance level.
    pub eta: f64,
    /// GLRT significance level.
    pub alpha: f64,
    /// Inhomogeneous phase-transition test confidence.
    pub alpha_prime: f64,
    /// Largest K tried; `None` means min(n - 1, 200).
    pub k_max: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    /// Cluster the degree-normalized graph.
    pub normalize: bool,
    pub v_test_orientation: VTestOrientation,
    #[serde(skip)]
    pub solver: EigenSolver,
}

impl Default for AmosConfig {
    fn default() -> Self {
        AmosConfig {
            eta: 1e-5,
            alpha: 0.05,
            alpha_prime: 0.05,
            k_max: None,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            normalize: true,
            v_test_orientation: VTestOrientation::LowerRows,
            solver: EigenSolver::Auto,
        }
    }
}

impl AmosConfig {
    pub fn validate(&self) -> Result<(), AmosError> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        let bad = |m: String| Err(AmosError::InvalidConfig(m));
        if !open_unit(self.eta) {
            return bad(format!("eta {} not in (0, 1)", self.eta));
        }
        if !open_unit(self.alpha) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if !open_unit(self.alpha_prime) {
            return bad(format!("alpha' {} not in (0, 1)", self.alpha_prime));
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.k_max.is_some_and(|k| k < 2) {
            return bad("k_max must be at least 2".into());
        }
        Ok(())
    }

    /// The K range upper end for an `n`-node graph.
    pub fn effective_k_max(&self, n: usize) -> Result<usize, AmosError> {
        match self.k_max {
            None => Ok((n - 1).min(DEFAULT_K_CAP)),
            Some(k) if k < n => Ok(k),
            Some(k) => Err(AmosError::InvalidConfig(format!("k_max {k} exceeds n - 1 = {}", n - 1))),
        }
    }
}

/// The test that rejected an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RimTest,
    /// A GLRT rejection only reroutes to the inhomogeneous test, so this is
    /// never the final verdict of an iteration.
    Glrt,
    HomogeneousPt,
    InhomogeneousPt,
    None,
}

/// Which phase-transition test an iteration used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Homogeneous,
    Inhomogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub within_edges: Vec<usize>,
    pub kmeans_objective: f64,
    /// λ_2..λ_{K+1} of the clustered Laplacian.
    pub eigenvalues: Vec<f64>,
    pub failing_stage: Stage,
    /// First pair (lexicographic) whose V-test p-value was at most eta.
    pub first_failing_pair: Option<(usize, usize)>,
    /// Every cluster pair, in lexicographic order.
    pub pairs: Vec<PairStats>,
    pub estimates: Option<HomogeneousStats>,
    pub route: Option<Route>,
    pub glrt: Option<GlrtOutcome>,
    pub inhomogeneous: Option<InhomogeneousOutcome>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Reliable,
    KMaxExhausted,
}

/// Wall-clock seconds per stage, summed over iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub spectral: f64,
    pub kmeans: f64,
    pub rim_test: f64,
    pub estimation: f64,
    pub tests: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmosReport {
    /// Selected cluster count; the last K tried when the range ran out.
    pub k: usize,
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    pub termination: Termination,
    pub node_count: usize,
    pub edge_count: usize,
    pub config: AmosConfig,
    pub iterations: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

/// Laplacian eigenpairs, recomputed only when a larger K needs more of them.
struct Spectrum<'a> {
    graph: &'a Graph,
    solver: EigenSolver,
    k_max: usize,
    pairs: Option<Eigenpairs>,
}

impl Spectrum<'_> {
    fn ensure(&mut self, k: usize) -> Result<&Eigenpairs, SpectralError> {
        let n = self.graph.node_count();
        let need = k + 1;
        let have = self.pairs.as_ref().map_or(0, |p| p.len());
        if have < need {
            let count = match self.solver {
                EigenSolver::Dense => self.k_max + 1,
                EigenSolver::Auto if n <= crate::spectral::DENSE_LIMIT => self.k_max + 1,
                _ => need.max(2 * have).max(8),
            }
            .min(n);
            self.pairs = Some(laplacian_eigenpairs(self.graph, count, self.solver)?);
        }
        Ok(self.pairs.as_ref().expect("computed above"))
    }
}

fn elapsed(start: Instant, acc: &mut f64) {
    *acc += Duration::as_secs_f64(&start.elapsed());
}

/// Runs AMOS on a connected graph with at least three nodes.
pub fn run_amos(g: &Graph, cfg: &AmosConfig) -> Result<AmosReport, AmosError> {
    cfg.validate()?;
    let n = g.node_count();
    if n < 3 {
        return Err(AmosError::TooSmall(n));
    }
    let comps = connected_components(g).count;
    if comps > 1 {
        return Err(AmosError::Disconnected(comps));
    }
    let k_max = cfg.effective_k_max(n)?;
    let working = if cfg.normalize { degree_normalize(g)? } else { g.clone() };
    let mut spectrum = Spectrum {
        graph: &working,
        solver: cfg.solver,
        k_max,
        pairs: None,
    };
    let mut timings = StageTimings::default();
    let mut iterations = Vec::new();
    let mut last: Option<Partition> = None;

    for k in 2..=k_max {
        let t0 = Instant::now();
        let emb = spectrum.ensure(k)?.embedding(k)?;
        elapsed(t0, &mut timings.spectral);

        let t0 = Instant::now();
        let km = kmeans(&emb.y, k, cfg.restarts, cfg.seed.wrapping_add(k as u64))?;
        let part = Partition::new(&working, canonical_labels(&km.labels))?;
        elapsed(t0, &mut timings.kmeans);

        let mut eigenvalues = emb.eigenvalues.clone();
        eigenvalues.push(emb.lambda_next);
        let mut rec = IterationRecord {
            k,
            sizes: part.sizes.clone(),
            within_edges: part.within_edges.clone(),
            kmeans_objective: km.objective,
            eigenvalues,
            failing_stage: Stage::None,
            first_failing_pair: None,
            pairs: Vec::new(),
            estimates: None,
            route: None,
            glrt: None,
            inhomogeneous: None,
            diagnostics: Vec::new(),
        };
        if part.k < k {
            rec.diagnostics
                .push(format!("K-means produced only {} clusters", part.k));
        }

        let t0 = Instant::now();
        rec.pairs = pair_estimates_with(&working, &part, cfg.v_test_orientation);
        elapsed(t0, &mut timings.rim_test);
        if let Some(p) = rec.pairs.iter().find(|p| p.p_value <= cfg.eta) {
            rec.first_failing_pair = Some((p.i, p.j));
            rec.failing_stage = Stage::RimTest;
            log::debug!(
                "K = {k}: V-test rejected pair ({}, {}) with p = {}",
                p.i,
                p.j,
                p.p_value
            );
            iterations.push(rec);
            last = Some(part);
            continue;
        }

        let t0 = Instant::now();
        let hom = homogeneous_estimates_with(&working, &part, &rec.pairs, cfg.solver)?;
        elapsed(t0, &mut timings.estimation);

        let t0 = Instant::now();
        let route = if k == 2 {
            Route::Homogeneous
        } else {
            let glrt = glrt_homogeneity_test(&rec.pairs, &hom, cfg.alpha)?;
            let pass = glrt.pass;
            rec.glrt = Some(glrt);
            if pass {
                Route::Homogeneous
            } else {
                Route::Inhomogeneous
            }
        };
        rec.route = Some(route);
        match hom.t_lb {
            None => {
                rec.diagnostics
                    .push(format!("smallest cluster has {} nodes, fewer than K", part.min_size()));
                rec.failing_stage = match route {
                    Route::Homogeneous => Stage::HomogeneousPt,
                    Route::Inhomogeneous => Stage::InhomogeneousPt,
                };
            }
            Some(t_lb) => match route {
                Route::Homogeneous => {
                    if hom.t_hat >= t_lb {
                        rec.failing_stage = Stage::HomogeneousPt;
                    }
                }
                Route::Inhomogeneous => {
                    let out = inhomogeneous_pt_test(&rec.pairs, t_lb, cfg.alpha_prime)?;
                    if !out.pass {
                        rec.failing_stage = Stage::InhomogeneousPt;
                    }
                    rec.inhomogeneous = Some(out);
                }
            },
        }
        rec.estimates = Some(hom);
        elapsed(t0, &mut timings.tests);

        let reliable = rec.failing_stage == Stage::None;
        iterations.push(rec);
        if reliable {
            return Ok(report(part, Termination::Reliable, g, cfg, iterations, timings));
        }
        last = Some(part);
    }

    let part = last.expect("k_max >= 2 runs at least one iteration");
    log::warn!("no reliable clustering up to K = {k_max}");
    Ok(report(part, Termination::KMaxExhausted, g, cfg, iterations, timings))
}

fn report(
    part: Partition,
    termination: Termination,
    g: &Graph,
    cfg: &AmosConfig,
    iterations: Vec<IterationRecord>,
    timings: StageTimings,
) -> AmosReport {
    AmosReport {
        k: part.k,
        labels: part.labels,
        sizes: part.sizes,
        termination,
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        config: cfg.clone(),
        iterations,
        timings: Some(timings),
    }
}
