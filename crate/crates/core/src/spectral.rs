//! Smallest eigenpairs of graph Laplacians, spectral embeddings, partial
//! eigenvalue sums and principal-angle subspace distance.
//!
//! Small problems are solved by dense symmetric diagonalization. Larger
//! graphs go through a thick-restart Lanczos iteration on the shifted
//! operator `c I - L`, whose largest eigenpairs are the smallest of `L`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{connected_components, laplacian, Graph};

/// Graphs up to this many nodes use the dense solver under [`EigenSolver::Auto`].
pub const DENSE_LIMIT: usize = 2000;

/// Ties `λ_{K+1} - λ_K` below this trigger a degenerate-gap warning.
pub const TIE_WARNING_GAP: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("requested {count} eigenpairs of a {n}x{n} matrix")]
    CountOutOfRange { count: usize, n: usize },
    #[error("cluster count {k} out of range for graph with {n} nodes")]
    KOutOfRange { k: usize, n: usize },
    #[error("graph is disconnected ({0} components)")]
    Disconnected(usize),
    #[error(
        "Lanczos did not converge after {restarts} restarts: {converged}/{requested} pairs converged, \
         worst residual {max_residual:e}"
    )]
    NonConvergence {
        restarts: usize,
        converged: usize,
        requested: usize,
        max_residual: f64,
    },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("column {column} is not unit norm (norm {norm})")]
    NotOrthonormal { column: usize, norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    /// Converged when `|B u - θ u| <= tol * ||B||`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; `None` picks a size from the requested count.
    pub krylov_dim: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            max_restarts: 1000,
            krylov_dim: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EigenSolver {
    /// Dense up to [`DENSE_LIMIT`] nodes, Lanczos beyond.
    #[default]
    Auto,
    Dense,
    Lanczos(LanczosOptions),
}

impl EigenSolver {
    fn use_dense(&self, n: usize) -> bool {
        match self {
            EigenSolver::Auto => n <= DENSE_LIMIT,
            EigenSolver::Dense => true,
            EigenSolver::Lanczos(_) => false,
        }
    }

    fn lanczos_options(&self) -> LanczosOptions {
        match self {
            EigenSolver::Lanczos(o) => *o,
            _ => LanczosOptions::default(),
        }
    }
}

/// A symmetric linear operator that can be applied to vectors.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Upper bound on the spectral radius.
    fn norm_bound(&self) -> f64;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        // column-major: accumulate column by column
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = self.column(j);
            for i in 0..n {
                y[i] += col[i] * xj;
            }
        }
    }

    fn norm_bound(&self) -> f64 {
        self.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Matrix-free Laplacian of a graph.
pub struct LaplacianOperator<'a>(pub &'a Graph);

impl SymmetricOperator for LaplacianOperator<'_> {
    fn dim(&self) -> usize {
        self.0.node_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.laplacian_apply(x, y)
    }

    fn norm_bound(&self) -> f64 {
        2.0 * self.0.max_degree()
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Embedding for `k` clusters; needs at least `k + 1` pairs.
    pub fn embedding(&self, k: usize) -> Result<SpectralEmbedding, SpectralError> {
        let n = self.vectors.nrows();
        if k < 2 || k + 1 > self.len() {
            return Err(SpectralError::KOutOfRange { k, n });
        }
        let eigenvalues = self.values[1..k].to_vec();
        let y = self.vectors.columns(1, k - 1).into_owned();
        let lambda_next = self.values[k];
        if lambda_next - self.values[k - 1] < TIE_WARNING_GAP {
            log::warn!(
                "near-degenerate eigengap at K = {k}: lambda_K = {}, lambda_K+1 = {lambda_next}",
                self.values[k - 1]
            );
        }
        Ok(SpectralEmbedding {
            k,
            eigenvalues,
            y,
            lambda_next,
        })
    }
}

/// Columns `u_2..u_K` of the Laplacian eigenvector matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub k: usize,
    /// `λ_2..λ_K`, ascending.
    pub eigenvalues: Vec<f64>,
    /// n x (K-1).
    pub y: DMatrix<f64>,
    /// `λ_{K+1}`.
    pub lambda_next: f64,
}

fn check_symmetric(l: &DMatrix<f64>) -> Result<(), SpectralError> {
    let (r, c) = l.shape();
    if r != c {
        return Err(SpectralError::NotSquare(r, c));
    }
    let scale = l.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for j in 0..c {
        for i in 0..j {
            worst = worst.max((l[(i, j)] - l[(j, i)]).abs());
        }
    }
    if worst > 1e-12 * scale {
        return Err(SpectralError::NotSymmetric(worst));
    }
    Ok(())
}

/// Flips each column so its largest-magnitude entry is positive.
fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best + 1e-12 {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

fn dense_smallest(l: &DMatrix<f64>, count: usize) -> Eigenpairs {
    let eig = SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    order.truncate(count);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(l.nrows(), count);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    fix_signs(&mut vectors);
    Eigenpairs { values, vectors }
}

/// `count` smallest eigenpairs of a dense symmetric matrix.
pub fn smallest_eigenpairs(l: &DMatrix<f64>, count: usize) -> Result<Eigenpairs, SpectralError> {
    smallest_eigenpairs_with(l, count, EigenSolver::Auto)
}

pub fn smallest_eigenpairs_with(
    l: &DMatrix<f64>,
    count: usize,
    solver: EigenSolver,
) -> Result<Eigenpairs, SpectralError> {
    check_symmetric(l)?;
    let n = l.nrows();
    if count > n {
        return Err(SpectralError::CountOutOfRange { count, n });
    }
    if solver.use_dense(n) {
        Ok(dense_smallest(l, count))
    } else {
        lanczos_smallest(l, count, &solver.lanczos_options())
    }
}

/// `count` smallest eigenpairs of a graph Laplacian.
pub fn laplacian_eigenpairs(g: &Graph, count: usize, solver: EigenSolver) -> Result<Eigenpairs, SpectralError> {
    let n = g.node_count();
    if count > n {
        return Err(SpectralError::CountOutOfRange { count, n });
    }
    if solver.use_dense(n) {
        Ok(dense_smallest(&laplacian(g), count))
    } else {
        lanczos_smallest(&LaplacianOperator(g), count, &solver.lanczos_options())
    }
}

/// Removes from `w` its components along the leading `used` columns of `basis`
/// and along every column of `locked`, in two passes. Returns the
/// coefficients against `basis`.
fn orthogonalize(w: &mut DVector<f64>, locked: &DMatrix<f64>, basis: &DMatrix<f64>, used: usize) -> Vec<f64> {
    let mut coeffs = vec![0.0; used];
    for _ in 0..2 {
        for col in locked.column_iter() {
            let p = col.dot(w);
            w.axpy(-p, &col, 1.0);
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            let p = basis.column(i).dot(w);
            w.axpy(-p, &basis.column(i), 1.0);
            *c += p;
        }
    }
    coeffs
}

fn random_unit_orthogonal(
    rng: &mut ChaCha8Rng,
    locked: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    used: usize,
) -> DVector<f64> {
    let n = basis.nrows();
    loop {
        let mut w = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        orthogonalize(&mut w, locked, basis, used);
        let norm = w.norm();
        if norm > 1e-8 {
            return w / norm;
        }
    }
}

/// Thick-restart Lanczos with full reorthogonalization.
///
/// A single Krylov sequence sees only one copy of a repeated eigenvalue, so
/// converged pairs are locked and the search is repeated on their orthogonal
/// complement until it turns up nothing below the largest locked value.
pub fn lanczos_smallest<O: SymmetricOperator + ?Sized>(
    op: &O,
    count: usize,
    opts: &LanczosOptions,
) -> Result<Eigenpairs, SpectralError> {
    let n = op.dim();
    if count > n {
        return Err(SpectralError::CountOutOfRange { count, n });
    }
    let shift = op.norm_bound().max(f64::MIN_POSITIVE) * 1.01;
    let tol = opts.tol * shift;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut values: Vec<f64> = Vec::new();
    let mut vectors = DMatrix::<f64>::zeros(n, 0);

    while count > 0 && vectors.ncols() < n {
        let want = count.min(n - vectors.ncols());
        let found = lanczos_deflated(op, want, opts, shift, &vectors, &mut rng)?;
        if values.len() == count {
            let largest = values[count - 1];
            if found.values[0] >= largest - tol {
                break;
            }
        }
        let mut pool: Vec<(f64, DVector<f64>)> = values
            .iter()
            .zip(vectors.column_iter())
            .map(|(&v, c)| (v, c.into_owned()))
            .chain(
                found
                    .values
                    .iter()
                    .zip(found.vectors.column_iter())
                    .map(|(&v, c)| (v, c.into_owned())),
            )
            .collect();
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        pool.truncate(count);
        values = pool.iter().map(|p| p.0).collect();
        vectors = DMatrix::from_columns(&pool.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    }
    if vectors.ncols() == 0 {
        vectors = DMatrix::zeros(n, 0);
    }
    fix_signs(&mut vectors);
    Ok(Eigenpairs { values, vectors })
}

/// Smallest `count` eigenpairs of L restricted to the complement of `locked`.
fn lanczos_deflated<O: SymmetricOperator + ?Sized>(
    op: &O,
    count: usize,
    opts: &LanczosOptions,
    shift: f64,
    locked: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Eigenpairs, SpectralError> {
    let n = op.dim();
    let room = n - locked.ncols();
    let m = opts.krylov_dim.unwrap_or(2 * count + 20).max(count + 1).min(room);
    let keep = (count + (m - count) / 2).min(m - 1);

    let mut basis = DMatrix::<f64>::zeros(n, m + 1);
    let mut h = DMatrix::<f64>::zeros(m, m);
    let v0 = random_unit_orthogonal(rng, locked, &basis, 0);
    basis.set_column(0, &v0);
    let mut used = 1;

    let mut xbuf = vec![0.0; n];
    let mut ybuf = vec![0.0; n];
    let breakdown = 1e-12 * shift;
    let tol = opts.tol * shift;

    for restart in 0..=opts.max_restarts {
        // expand from the last basis vector up to m vectors
        let beta_last;
        let mut residual = DVector::<f64>::zeros(n);
        let mut j = used - 1;
        loop {
            xbuf.copy_from_slice(basis.column(j).as_slice());
            op.apply(&xbuf, &mut ybuf);
            // B v = shift v - L v
            let mut w = DVector::from_fn(n, |i, _| shift * xbuf[i] - ybuf[i]);
            let coeffs = orthogonalize(&mut w, locked, &basis, j + 1);
            // column j of the projected matrix; the retained Ritz block is never revisited
            for (i, &c) in coeffs.iter().enumerate() {
                h[(i, j)] = c;
                h[(j, i)] = c;
            }
            let beta = w.norm();
            if j + 1 == m {
                beta_last = beta;
                if beta > breakdown {
                    residual = w / beta;
                }
                break;
            }
            let next = if beta > breakdown {
                w / beta
            } else {
                random_unit_orthogonal(rng, locked, &basis, j + 1)
            };
            basis.set_column(j + 1, &next);
            j += 1;
        }

        let hs = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(hs);
        let mut order: Vec<usize> = (0..m).collect();
        // ascending in L means descending in B
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let residuals: Vec<f64> = order[..count]
            .iter()
            .map(|&i| beta_last * eig.eigenvectors[(m - 1, i)].abs())
            .collect();
        let converged = residuals.iter().filter(|&&r| r <= tol).count();
        if converged == count || m == room {
            let v = basis.columns(0, m);
            let mut vectors = DMatrix::zeros(n, count);
            let mut values = Vec::with_capacity(count);
            for (c, &i) in order[..count].iter().enumerate() {
                let u = v * eig.eigenvectors.column(i);
                vectors.set_column(c, &u.normalize());
                values.push(shift - eig.eigenvalues[i]);
            }
            return Ok(Eigenpairs { values, vectors });
        }
        if restart == opts.max_restarts {
            return Err(SpectralError::NonConvergence {
                restarts: restart,
                converged,
                requested: count,
                max_residual: residuals.iter().copied().fold(0.0, f64::max) / shift,
            });
        }

        // thick restart: keep the leading Ritz vectors plus the residual direction
        let v = basis.columns(0, m).into_owned();
        h.fill(0.0);
        for (c, &i) in order[..keep].iter().enumerate() {
            let u = &v * eig.eigenvectors.column(i);
            basis.set_column(c, &u);
            h[(c, c)] = eig.eigenvalues[i];
        }
        for c in keep..=m {
            basis.column_mut(c).fill(0.0);
        }
        let mut r = residual;
        orthogonalize(&mut r, locked, &basis, keep);
        let norm = r.norm();
        let next = if beta_last > breakdown && norm > 1e-8 {
            r / norm
        } else {
            random_unit_orthogonal(rng, locked, &basis, keep)
        };
        basis.set_column(keep, &next);
        used = keep + 1;
    }
    unreachable!("loop returns on the final restart")
}

/// Spectral embedding for `k` clusters of a connected graph.
pub fn embedding(g: &Graph, k: usize) -> Result<SpectralEmbedding, SpectralError> {
    embedding_with(g, k, EigenSolver::Auto)
}

pub fn embedding_with(g: &Graph, k: usize, solver: EigenSolver) -> Result<SpectralEmbedding, SpectralError> {
    let n = g.node_count();
    if k < 2 || k + 1 > n {
        return Err(SpectralError::KOutOfRange { k, n });
    }
    let comps = connected_components(g).count;
    if comps > 1 {
        return Err(SpectralError::Disconnected(comps));
    }
    laplacian_eigenpairs(g, k + 1, solver)?.embedding(k)
}

/// Sum of the 2nd through K-th smallest eigenvalues.
pub fn partial_eigen_sum(l: &DMatrix<f64>, k: usize) -> Result<f64, SpectralError> {
    let n = l.nrows();
    if k < 2 || k > n {
        return Err(SpectralError::KOutOfRange { k, n });
    }
    let pairs = smallest_eigenpairs(l, k)?;
    Ok(pairs.values[1..k].iter().sum())
}

/// [`partial_eigen_sum`] of a graph's Laplacian.
pub fn graph_partial_eigen_sum(g: &Graph, k: usize, solver: EigenSolver) -> Result<f64, SpectralError> {
    let n = g.node_count();
    if k < 2 || k > n {
        return Err(SpectralError::KOutOfRange { k, n });
    }
    let pairs = laplacian_eigenpairs(g, k, solver)?;
    Ok(pairs.values[1..k].iter().sum())
}

fn check_unit_columns(y: &DMatrix<f64>) -> Result<(), SpectralError> {
    for (column, col) in y.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(SpectralError::NotOrthonormal { column, norm });
        }
    }
    Ok(())
}

/// Frobenius norm of the sines of the principal angles between the column
/// spaces of `y` and `yt`.
pub fn sin_theta_distance(y: &DMatrix<f64>, yt: &DMatrix<f64>) -> Result<f64, SpectralError> {
    if y.shape() != yt.shape() {
        return Err(SpectralError::ShapeMismatch(y.shape(), yt.shape()));
    }
    check_unit_columns(y)?;
    check_unit_columns(yt)?;
    let m = y.transpose() * yt;
    let sv = m.singular_values();
    let s: f64 = sv.iter().map(|&s| 1.0 - s.clamp(0.0, 1.0).powi(2)).sum();
    Ok(s.max(0.0).sqrt())
}
