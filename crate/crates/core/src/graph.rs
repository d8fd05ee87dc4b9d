//! Undirected weighted graphs: construction, file ingestion, Laplacians and
//! the cluster-level views (induced subgraphs, interconnection blocks) that
//! the statistical tests read from.

use std::io::BufRead;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({u}, {v}) has non-positive or non-finite weight {w}")]
    BadWeight { u: usize, v: usize, w: f64 },
    #[error("edge ({u}, {v}) listed twice with conflicting weights {w1} and {w2}")]
    ConflictingDuplicate { u: usize, v: usize, w1: f64, w2: f64 },
    #[error("node index {index} out of range for graph with {n} nodes")]
    OutOfRange { index: usize, n: usize },
    #[error("node {0} appears more than once in node set")]
    DuplicateNode(usize),
    #[error("node {0} has zero degree")]
    IsolatedNode(usize),
    #[error("node sets overlap at node {0}")]
    OverlappingSets(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GraphError {
    fn from(e: std::io::Error) -> Self {
        GraphError::Io(e.to_string())
    }
}

/// Input file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    EdgeList,
    MatrixMarket,
}

/// Node numbering used by an edge-list file. MatrixMarket is always one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indexing {
    ZeroBased,
    OneBased,
}

/// Immutable undirected graph with strictly positive edge weights.
///
/// Adjacency lists are sorted by neighbor index and every edge is stored in
/// both endpoint lists, so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph on `n` nodes. Repeated edges with identical weight
    /// collapse into one; repeated edges with different weights are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut list: Vec<(usize, usize, f64)> = Vec::new();
        for (u, v, w) in edges {
            if u >= n {
                return Err(GraphError::OutOfRange { index: u, n });
            }
            if v >= n {
                return Err(GraphError::OutOfRange { index: v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWeight { u, v, w });
            }
            list.push((u.min(v), u.max(v), w));
        }
        list.sort_by_key(|e| (e.0, e.1));

        let mut adj = vec![Vec::new(); n];
        let mut edge_count = 0;
        let mut prev: Option<(usize, usize, f64)> = None;
        for (u, v, w) in list {
            if let Some((pu, pv, pw)) = prev {
                if pu == u && pv == v {
                    if pw != w {
                        return Err(GraphError::ConflictingDuplicate { u, v, w1: pw, w2: w });
                    }
                    continue;
                }
            }
            adj[u].push((v, w));
            adj[v].push((u, w));
            edge_count += 1;
            prev = Some((u, v, w));
        }
        for row in &mut adj {
            row.sort_by_key(|&(v, _)| v);
        }
        let degrees = adj.iter().map(|row| row.iter().map(|&(_, w)| w).sum()).collect();
        Ok(Graph {
            adj,
            degrees,
            edge_count,
        })
    }

    /// Unweighted graph from an edge list.
    pub fn from_unweighted<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::from_edges(n, edges.into_iter().map(|(u, v)| (u, v, 1.0)))
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Number of undirected edges `m`.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adj[u]
    }

    /// Weight of edge (u, v), or 0 when absent.
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        match self.adj[u].binary_search_by_key(&v, |&(x, _)| x) {
            Ok(i) => self.adj[u][i].1,
            Err(_) => 0.0,
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search_by_key(&v, |&(x, _)| x).is_ok()
    }

    /// Weighted degree of `u` (row sum of W).
    pub fn degree(&self, u: usize) -> f64 {
        self.degrees[u]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().filter(move |&&(v, _)| v > u).map(move |&(v, w)| (u, v, w)))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    pub fn is_unweighted(&self) -> bool {
        self.edges().all(|(_, _, w)| w == 1.0)
    }

    /// Same topology with every weight set to 1.
    pub fn binarized(&self) -> Graph {
        let adj: Vec<Vec<(usize, f64)>> = self
            .adj
            .iter()
            .map(|row| row.iter().map(|&(v, _)| (v, 1.0)).collect())
            .collect();
        let degrees = adj.iter().map(|row| row.len() as f64).collect();
        Graph {
            adj,
            degrees,
            edge_count: self.edge_count,
        }
    }

    /// y = L x for the Laplacian L = S - W, without materializing L.
    pub fn laplacian_apply(&self, x: &[f64], y: &mut [f64]) {
        for (u, row) in self.adj.iter().enumerate() {
            let mut acc = self.degrees[u] * x[u];
            for &(v, w) in row {
                acc -= w * x[v];
            }
            y[u] = acc;
        }
    }
}

/// Ordered list of distinct node indices of some graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(nodes: Vec<usize>, n: usize) -> Result<Self, GraphError> {
        let mut seen = vec![false; n];
        for &u in &nodes {
            if u >= n {
                return Err(GraphError::OutOfRange { index: u, n });
            }
            if seen[u] {
                return Err(GraphError::DuplicateNode(u));
            }
            seen[u] = true;
        }
        Ok(NodeSet(nodes))
    }

    pub fn all(n: usize) -> Self {
        NodeSet((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reads an edge-list or MatrixMarket graph.
///
/// Edge lists infer the node count from the largest index seen. `indexing`
/// only applies to edge lists.
pub fn load_graph<R: BufRead>(reader: R, format: Format, indexing: Indexing) -> Result<Graph, GraphError> {
    match format {
        Format::EdgeList => load_edge_list(reader, indexing),
        Format::MatrixMarket => load_matrix_market(reader),
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse { line, msg: msg.into() }
}

fn parse_index(tok: &str, line: usize, one_based: bool) -> Result<usize, GraphError> {
    let raw: usize = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid node index {tok:?}")))?;
    if one_based {
        raw.checked_sub(1)
            .ok_or_else(|| parse_err(line, "node index 0 in one-based input"))
    } else {
        Ok(raw)
    }
}

fn parse_weight(tok: &str, line: usize) -> Result<f64, GraphError> {
    let w: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid weight {tok:?}")))?;
    if !(w.is_finite() && w > 0.0) {
        return Err(parse_err(line, format!("weight must be positive, got {w}")));
    }
    Ok(w)
}

fn check_edge(u: usize, v: usize, line: usize) -> Result<(), GraphError> {
    if u == v {
        Err(parse_err(line, format!("self-loop on node {u}")))
    } else {
        Ok(())
    }
}

fn load_edge_list<R: BufRead>(reader: R, indexing: Indexing) -> Result<Graph, GraphError> {
    let one_based = indexing == Indexing::OneBased;
    let mut edges = Vec::new();
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 2 or 3 fields, found {}", toks.len()),
            ));
        }
        let u = parse_index(toks[0], lineno, one_based)?;
        let v = parse_index(toks[1], lineno, one_based)?;
        let w = match toks.get(2) {
            Some(t) => parse_weight(t, lineno)?,
            None => 1.0,
        };
        check_edge(u, v, lineno)?;
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    Graph::from_edges(n, edges)
}

fn load_matrix_market<R: BufRead>(reader: R) -> Result<Graph, GraphError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(parse_err(1, "empty MatrixMarket file")),
    };
    let head: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if head.len() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if head[2] != "coordinate" {
        return Err(parse_err(
            1,
            format!("unsupported layout {:?}, expected coordinate", head[2]),
        ));
    }
    let pattern = match head[3].as_str() {
        "pattern" => true,
        "real" | "integer" => false,
        other => return Err(parse_err(1, format!("unsupported field {other:?}"))),
    };
    if head[4] != "symmetric" {
        return Err(parse_err(
            1,
            format!("unsupported symmetry {:?}, expected symmetric", head[4]),
        ));
    }

    let mut size: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(parse_err(lineno, "expected size line 'rows cols nnz'"));
                }
                let dims: Vec<usize> = toks
                    .iter()
                    .map(|t| {
                        t.parse()
                            .map_err(|_| parse_err(lineno, format!("invalid size field {t:?}")))
                    })
                    .collect::<Result<_, _>>()?;
                if dims[0] != dims[1] {
                    return Err(parse_err(lineno, "adjacency matrix must be square"));
                }
                size = Some((dims[0], dims[2]));
            }
            Some((n, _)) => {
                let expected = if pattern { 2 } else { 3 };
                if toks.len() != expected {
                    return Err(parse_err(
                        lineno,
                        format!("expected {expected} fields, found {}", toks.len()),
                    ));
                }
                let u = parse_index(toks[0], lineno, true)?;
                let v = parse_index(toks[1], lineno, true)?;
                if u >= n || v >= n {
                    return Err(parse_err(
                        lineno,
                        format!("entry ({}, {}) outside {n}x{n} matrix", u + 1, v + 1),
                    ));
                }
                let w = if pattern { 1.0 } else { parse_weight(toks[2], lineno)? };
                check_edge(u, v, lineno)?;
                edges.push((u, v, w));
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if edges.len() != nnz {
        return Err(parse_err(
            0,
            format!("header declares {nnz} entries, found {}", edges.len()),
        ));
    }
    Graph::from_edges(n, edges)
}

/// Writes `u v` (or `u v w` for weighted graphs) lines, zero-based.
pub fn write_edge_list<W: std::io::Write>(g: &Graph, mut out: W) -> std::io::Result<()> {
    let weighted = !g.is_unweighted();
    writeln!(out, "# nodes {} edges {}", g.node_count(), g.edge_count())?;
    for (u, v, w) in g.edges() {
        if weighted {
            writeln!(out, "{u} {v} {w}")?;
        } else {
            writeln!(out, "{u} {v}")?;
        }
    }
    Ok(())
}

/// Symmetric degree normalization W' = S^{-1/2} W S^{-1/2}.
pub fn degree_normalize(g: &Graph) -> Result<Graph, GraphError> {
    if let Some(u) = g.degrees.iter().position(|&d| d <= 0.0) {
        return Err(GraphError::IsolatedNode(u));
    }
    let inv_sqrt: Vec<f64> = g.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let edges = g.edges().map(|(u, v, w)| (u, v, w * inv_sqrt[u] * inv_sqrt[v]));
    Graph::from_edges(g.node_count(), edges)
}

/// Dense Laplacian L = S - W.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for u in 0..n {
        l[(u, u)] = g.degree(u);
        for &(v, w) in g.neighbors(u) {
            l[(u, v)] = -w;
        }
    }
    l
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub count: usize,
    pub labels: Vec<usize>,
}

impl Components {
    /// Member nodes of each component, in ascending node order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.count];
        for (u, &c) in self.labels.iter().enumerate() {
            groups[c].push(u);
        }
        groups
    }
}

/// Connected components, labelled in order of their smallest node.
pub fn connected_components(g: &Graph) -> Components {
    let n = g.node_count();
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &(v, _) in g.neighbors(u) {
                if labels[v] == usize::MAX {
                    labels[v] = count;
                    stack.push(v);
                }
            }
        }
        count += 1;
    }
    Components { count, labels }
}

pub fn is_connected(g: &Graph) -> bool {
    connected_components(g).count <= 1
}

/// Induced subgraph, nodes renumbered by their position in `nodes`.
pub fn subgraph(g: &Graph, nodes: &NodeSet) -> Result<Graph, GraphError> {
    let n = g.node_count();
    let mut local = vec![usize::MAX; n];
    for (i, &u) in nodes.as_slice().iter().enumerate() {
        if u >= n {
            return Err(GraphError::OutOfRange { index: u, n });
        }
        local[u] = i;
    }
    let mut edges = Vec::new();
    for (i, &u) in nodes.as_slice().iter().enumerate() {
        for &(v, w) in g.neighbors(u) {
            let j = local[v];
            if j != usize::MAX && i < j {
                edges.push((i, j, w));
            }
        }
    }
    Graph::from_edges(nodes.len(), edges)
}

/// Inter-cluster block between two disjoint node sets, rows indexed by `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub binary: DMatrix<u8>,
    pub weights: DMatrix<f64>,
}

pub fn interconnection_matrix(g: &Graph, a: &NodeSet, b: &NodeSet) -> Result<Interconnection, GraphError> {
    let n = g.node_count();
    let mut col = vec![usize::MAX; n];
    for (j, &v) in b.as_slice().iter().enumerate() {
        if v >= n {
            return Err(GraphError::OutOfRange { index: v, n });
        }
        col[v] = j;
    }
    for &u in a.as_slice() {
        if u >= n {
            return Err(GraphError::OutOfRange { index: u, n });
        }
        if col[u] != usize::MAX {
            return Err(GraphError::OverlappingSets(u));
        }
    }
    let mut binary = DMatrix::zeros(a.len(), b.len());
    let mut weights = DMatrix::zeros(a.len(), b.len());
    for (i, &u) in a.as_slice().iter().enumerate() {
        for &(v, w) in g.neighbors(u) {
            let j = col[v];
            if j != usize::MAX {
                binary[(i, j)] = 1;
                weights[(i, j)] = w;
            }
        }
    }
    Ok(Interconnection { binary, weights })
}
