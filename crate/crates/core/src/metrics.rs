//! Clustering quality: agreement with ground truth (NMI, Rand index,
//! pairwise F-measure) and internal cut quality (conductance, normalized cut).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("labels length {labels} does not match graph with {nodes} nodes")]
    GraphMismatch { labels: usize, nodes: usize },
    #[error("no labels")]
    Empty,
    #[error("cluster {0} has zero volume")]
    ZeroVolume(usize),
}

/// Counts of nodes per (label in `a`, label in `b`). Labels are renumbered
/// densely by first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self, MetricsError> {
        if a.len() != b.len() {
            return Err(MetricsError::LengthMismatch(a.len(), b.len()));
        }
        if a.is_empty() {
            return Err(MetricsError::Empty);
        }
        let (da, ka) = dense(a);
        let (db, kb) = dense(b);
        let mut counts = vec![vec![0; kb]; ka];
        for (&i, &j) in da.iter().zip(&db) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            row_sums,
            col_sums,
            n: a.len(),
        })
    }

    fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.iter().flatten().copied()
    }
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Mutual information normalized by the arithmetic mean of the entropies.
/// Two single-cluster labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    let t = ContingencyTable::new(a, b)?;
    let n = t.n as f64;
    let ha = entropy(&t.row_sums, n);
    let hb = entropy(&t.col_sums, n);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Fraction of node pairs on which the two labelings agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    let t = ContingencyTable::new(a, b)?;
    let total = pairs(t.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let same_both: f64 = t.cells().map(pairs).sum();
    let same_a: f64 = t.row_sums.iter().map(|&s| pairs(s)).sum();
    let same_b: f64 = t.col_sums.iter().map(|&s| pairs(s)).sum();
    Ok((total + 2.0 * same_both - same_a - same_b) / total)
}

/// Pairwise F-measure of `predicted` against `truth`. Scores 0 when either
/// labeling has no same-cluster pairs.
pub fn f_measure(predicted: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    let t = ContingencyTable::new(predicted, truth)?;
    let tp: f64 = t.cells().map(pairs).sum();
    let pred_pairs: f64 = t.row_sums.iter().map(|&s| pairs(s)).sum();
    let true_pairs: f64 = t.col_sums.iter().map(|&s| pairs(s)).sum();
    if pred_pairs == 0.0 || true_pairs == 0.0 {
        log::warn!("F-measure undefined without same-cluster pairs; reporting 0");
        return Ok(0.0);
    }
    let precision = tp / pred_pairs;
    let recall = tp / true_pairs;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSummary {
    pub per_cluster: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

impl CutSummary {
    fn from_values(per_cluster: Vec<f64>) -> Self {
        let mean = per_cluster.iter().sum::<f64>() / per_cluster.len() as f64;
        let max = per_cluster.iter().copied().fold(0.0, f64::max);
        CutSummary { per_cluster, mean, max }
    }
}

/// Weighted cut and volume of every cluster.
fn cuts_and_volumes(g: &Graph, labels: &[usize]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if labels.len() != g.node_count() {
        return Err(MetricsError::GraphMismatch {
            labels: labels.len(),
            nodes: g.node_count(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (labels, k) = dense(labels);
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for u in 0..g.node_count() {
        vol[labels[u]] += g.degree(u);
        for &(v, w) in g.neighbors(u) {
            if labels[v] != labels[u] {
                cut[labels[u]] += w;
            }
        }
    }
    Ok((cut, vol))
}

/// cut(C) / min(vol(C), vol(V \ C)) per cluster.
pub fn conductance(g: &Graph, labels: &[usize]) -> Result<CutSummary, MetricsError> {
    let (cut, vol) = cuts_and_volumes(g, labels)?;
    let total: f64 = vol.iter().sum();
    let values = cut
        .iter()
        .zip(&vol)
        .enumerate()
        .map(|(c, (&x, &v))| {
            let denom = v.min(total - v);
            if denom > 0.0 {
                Ok(x / denom)
            } else {
                Err(MetricsError::ZeroVolume(c))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(CutSummary::from_values(values))
}

/// cut(C) / vol(C) per cluster; the mean is the usual normalized cut over K.
pub fn normalized_cut(g: &Graph, labels: &[usize]) -> Result<CutSummary, MetricsError> {
    let (cut, vol) = cuts_and_volumes(g, labels)?;
    let values = cut
        .iter()
        .zip(&vol)
        .enumerate()
        .map(|(c, (&x, &v))| {
            if v > 0.0 {
                Ok(x / v)
            } else {
                Err(MetricsError::ZeroVolume(c))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(CutSummary::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nmi_identical_up_to_renaming() {
        assert_abs_diff_eq!(nmi(&[0, 0, 1, 1, 2], &[7, 7, 3, 3, 9]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_worked_example() {
        // two halves against three pairs
        let got = nmi(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        let mi = 2.0 / 3.0 * 2f64.ln();
        let expected = mi / ((2f64.ln() + 3f64.ln()) / 2.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn nmi_independent_is_zero() {
        assert_abs_diff_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // disagreements: (0,2) (1,2) (2,3) out of 6 pairs
        assert_abs_diff_eq!(rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn f_measure_examples() {
        assert_abs_diff_eq!(f_measure(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(f_measure(&[0, 0, 1, 1], &[5, 5, 6, 6]).unwrap(), 1.0);
        assert_eq!(f_measure(&[0, 1, 2], &[0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(nmi(&[0, 1], &[0]), Err(MetricsError::LengthMismatch(2, 1)));
        assert_eq!(rand_index(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn cuts_of_disjoint_cliques() {
        let g = Graph::from_unweighted(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let l = [0, 0, 0, 1, 1, 1];
        assert_eq!(conductance(&g, &l).unwrap().max, 0.0);
        assert_eq!(normalized_cut(&g, &l).unwrap().mean, 0.0);
    }

    #[test]
    fn k4_split_in_half() {
        let g = Graph::from_unweighted(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let l = [0, 0, 1, 1];
        // each side: cut 4, volume 6
        let nc = normalized_cut(&g, &l).unwrap();
        assert_abs_diff_eq!(nc.mean, 2.0 / 3.0, epsilon = 1e-15);
        let c = conductance(&g, &l).unwrap();
        assert_eq!(c.per_cluster, vec![4.0 / 6.0; 2]);
    }

    #[test]
    fn conductance_uses_smaller_side() {
        let g = Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0)]).unwrap();
        let c = conductance(&g, &[0, 1, 1, 1]).unwrap();
        // cluster 0: cut 1, vol 1 ; cluster 1: cut 1, vol 7, complement 1
        assert_eq!(c.per_cluster, vec![1.0, 1.0]);
        let nc = normalized_cut(&g, &[0, 1, 1, 1]).unwrap();
        assert_eq!(nc.per_cluster, vec![1.0, 1.0 / 7.0]);
    }

    #[test]
    fn single_cluster_conductance_undefined() {
        let g = Graph::from_unweighted(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(conductance(&g, &[0, 0, 0]), Err(MetricsError::ZeroVolume(0)));
    }
}
