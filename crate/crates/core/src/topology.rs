//! Mixing matrices and their spectral quantities.
//!
//! A valid mixing matrix is symmetric, doubly stochastic, nonnegative, and
//! its positive off-diagonal pattern is a connected graph. Eigenvalues come
//! from a cyclic Jacobi sweep; desk-scale networks have at most a few dozen
//! nodes.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance used by [`validate`].
pub const VALIDATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub n: usize,
    /// Row-major `n x n` weights.
    pub weights: Vec<Vec<f64>>,
    /// Second-largest eigenvalue magnitude.
    pub lambda2_abs: f64,
    /// Spectral gap `1 - |lambda_2|`.
    pub delta: f64,
    /// Undirected edges `(i, j)` with `i < j`.
    pub edges: BTreeSet<(usize, usize)>,
    pub name: String,
}

impl Topology {
    /// Validate `weights` and compute its spectrum.
    pub fn from_matrix(weights: Vec<Vec<f64>>, name: impl Into<String>) -> Result<Topology> {
        let violations = validate(&weights);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Topology(list.join("; ")));
        }
        let eig = symmetric_eigenvalues(&weights);
        let lambda2_abs = second_magnitude(&eig);
        Ok(Self::assemble(weights, lambda2_abs, name.into()))
    }

    fn assemble(weights: Vec<Vec<f64>>, lambda2_abs: f64, name: String) -> Topology {
        let n = weights.len();
        let mut edges = BTreeSet::new();
        for (i, row) in weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate().skip(i + 1) {
                if w > 0.0 {
                    edges.insert((i, j));
                }
            }
        }
        Topology {
            n,
            weights,
            lambda2_abs,
            delta: 1.0 - lambda2_abs,
            edges,
            name,
        }
    }

    /// Neighbors of `i` in ascending order, excluding `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&j| j != i && self.weights[i][j] > 0.0)
            .collect()
    }

    /// Number of directed links, i.e. twice the undirected edge count.
    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn load_csv(path: &Path) -> Result<Topology> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_owned(),
                        line,
                        reason: format!("not a number: {cell:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let name = path
            .file_stem()
            .map_or_else(|| "custom".to_owned(), |s| s.to_string_lossy().into_owned());
        Topology::from_matrix(rows, name)
    }
}

/// The 10-node ring-like network: five hubs on a cycle, each consecutive
/// pair of hubs bridged by a relay node. Hubs weight themselves and their
/// four neighbors at 1/5; relays keep 3/5 and give 1/5 to each hub.
fn ring10_weights() -> Vec<Vec<f64>> {
    const A: f64 = 1.0 / 5.0;
    const B: f64 = 3.0 / 5.0;
    #[rustfmt::skip]
    let w = vec![
        vec![A, A, A, 0., 0., 0., 0., 0., A, A],
        vec![A, B, A, 0., 0., 0., 0., 0., 0., 0.],
        vec![A, A, A, A, A, 0., 0., 0., 0., 0.],
        vec![0., 0., A, B, A, 0., 0., 0., 0., 0.],
        vec![0., 0., A, A, A, A, A, 0., 0., 0.],
        vec![0., 0., 0., 0., A, B, A, 0., 0., 0.],
        vec![0., 0., 0., 0., A, A, A, A, A, 0.],
        vec![0., 0., 0., 0., 0., 0., A, B, A, 0.],
        vec![A, 0., 0., 0., 0., 0., A, A, A, A],
        vec![A, 0., 0., 0., 0., 0., 0., 0., A, B],
    ];
    w
}

/// Ring topology. `n = 10` gives the ring-like matrix above; any other even
/// `n >= 6` gives a plain cycle with self-weight 1/2 and 1/4 per neighbor.
pub fn build_ring(n: usize) -> Result<Topology> {
    if n == 10 {
        return Topology::from_matrix(ring10_weights(), "ring10");
    }
    if n < 6 || !n.is_multiple_of(2) {
        return Err(Error::Topology(format!(
            "ring needs n = 10 or an even n >= 6, got {n}"
        )));
    }
    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in w.iter_mut().enumerate() {
        row[i] = 0.5;
        row[(i + 1) % n] = 0.25;
        row[(i + n - 1) % n] = 0.25;
    }
    Topology::from_matrix(w, format!("cycle{n}"))
}

/// `W = 11^T / n`. Its spectrum is `{1, 0, ..., 0}`, so `|lambda_2| = 0`.
pub fn build_fully_connected(n: usize) -> Result<Topology> {
    if n < 2 {
        return Err(Error::Topology(format!(
            "fully connected network needs n >= 2, got {n}"
        )));
    }
    let w = vec![vec![1.0 / n as f64; n]; n];
    let violations = validate(&w);
    if !violations.is_empty() {
        return Err(Error::Topology(format!("{violations:?}")));
    }
    Ok(Topology::assemble(w, 0.0, "complete".to_owned()))
}

/// A failed mixing-matrix condition.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NotSquare,
    Asymmetric { i: usize, j: usize },
    Negative { i: usize, j: usize },
    RowSum { row: usize, sum: f64 },
    ColumnSum { col: usize, sum: f64 },
    Disconnected,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSquare => write!(f, "matrix is not square"),
            Violation::Asymmetric { i, j } => write!(f, "asymmetric at ({i}, {j})"),
            Violation::Negative { i, j } => write!(f, "negative entry at ({i}, {j})"),
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::ColumnSum { col, sum } => write!(f, "column {col} sums to {sum}"),
            Violation::Disconnected => write!(f, "graph is disconnected"),
        }
    }
}

/// Check every mixing-matrix condition; an empty result means valid.
pub fn validate(w: &[Vec<f64>]) -> Vec<Violation> {
    let n = w.len();
    if n == 0 || w.iter().any(|row| row.len() != n) {
        return vec![Violation::NotSquare];
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if (w[i][j] - w[j][i]).abs() > VALIDATION_TOL {
                out.push(Violation::Asymmetric { i, j });
            }
        }
    }
    for (i, row) in w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                out.push(Violation::Negative { i, j });
            }
        }
    }
    for (row, r) in w.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > VALIDATION_TOL {
            out.push(Violation::RowSum { row, sum });
        }
    }
    for col in 0..n {
        let sum: f64 = w.iter().map(|r| r[col]).sum();
        if (sum - 1.0).abs() > VALIDATION_TOL {
            out.push(Violation::ColumnSum { col, sum });
        }
    }
    if !is_connected(w) {
        out.push(Violation::Disconnected);
    }
    out
}

fn is_connected(w: &[Vec<f64>]) -> bool {
    let n = w.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && (w[i][j] > 0.0 || w[j][i] > 0.0) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted by
/// descending magnitude.
pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
    eig
}

fn second_magnitude(eig: &[f64]) -> f64 {
    eig.get(1).map_or(0.0, |v| v.abs())
}

/// Spectral norm of a symmetric matrix.
pub fn symmetric_spectral_norm(m: &[Vec<f64>]) -> f64 {
    symmetric_eigenvalues(m).first().map_or(0.0, |v| v.abs())
}

/// Linear consensus rate `delta^2 / (82 tau)`.
pub fn consensus_omega(delta: f64, tau: f64) -> f64 {
    delta * delta / (82.0 * tau)
}

/// Constants that appear in the consensus and convergence bounds. They are
/// diagnostics only; nothing in the simulator depends on them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryParams {
    pub omega: f64,
    pub tau: f64,
    pub gamma: f64,
    pub grad_bound_g: f64,
    pub variance_sigma2: f64,
    pub smoothness_k: f64,
}

impl TheoryParams {
    /// Steady-state bound on `sum_i E|x_i - x_bar|^2`:
    /// `24 / omega^2 (2 G^2 + 2 sigma^2 + mu^2 d) n eta^2`.
    pub fn consensus_bound(&self, n: usize, eta: f64, mu: f64, dim: usize) -> f64 {
        let g2 = self.grad_bound_g * self.grad_bound_g;
        24.0 / (self.omega * self.omega)
            * (2.0 * g2 + 2.0 * self.variance_sigma2 + mu * mu * dim as f64)
            * n as f64
            * eta
            * eta
    }
}
