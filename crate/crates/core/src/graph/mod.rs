//! Undirected communication topology.
//!
//! Besides the graph itself this module owns the Laplacian, the spectral
//! helpers built on it, and the stepsize conditions that decide whether a
//! choice of `(H, β)` is admissible for a given objective.

mod spectral;

pub use spectral::{max_eigenvalue, min_eigenvalue, symmetric_eigen, Eigen, DENSE_FALLBACK_MAX_N};

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// Attempts made by [`generate_random_graph`] before giving up on connectivity.
pub const MAX_GRAPH_ATTEMPTS: u64 = 1000;

/// Simple undirected graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Canonical edge list: `i < j`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Self-loops, duplicates (in either
    /// orientation) and out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Config(format!("edge ({a},{b}) out of range for n={n}")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "duplicate edge ({},{})",
                w[0].0, w[0].1
            )));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &canon {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Graph {
            n,
            edges: canon,
            neighbors,
        })
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is simple")
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
            .expect("complete graph is simple")
    }

    pub fn ring(n: usize) -> Self {
        match n {
            0 | 1 => Self::new(n, []).expect("empty"),
            2 => Self::path(2),
            _ => Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("ring is simple"),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Breadth-first search from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.n
    }

    /// `L = D − A`, assembled in integers before the cast so rows sum to zero exactly.
    pub fn laplacian(&self) -> SymmetricMatrix {
        let mut ints = vec![vec![0i64; self.n]; self.n];
        for &(a, b) in &self.edges {
            ints[a][b] -= 1;
            ints[b][a] -= 1;
            ints[a][a] += 1;
            ints[b][b] += 1;
        }
        let rows: Vec<Vec<f64>> = ints
            .into_iter()
            .map(|r| r.into_iter().map(|v| v as f64).collect())
            .collect();
        SymmetricMatrix::from_rows(&rows).expect("laplacian is symmetric")
    }

    /// Edge-list text: `"n m"` then one `"i j"` line per edge, 0-based.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for (a, b) in &self.edges {
            writeln!(s, "{a} {b}").expect("write to string");
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("line 1", "missing header"))?;
        let nums = parse_pair(header, 1)?;
        let (n, m) = nums;
        let mut edges = Vec::with_capacity(m);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            edges.push(parse_pair(line, idx + 1)?);
        }
        if edges.len() != m {
            return Err(Error::parse(
                "header",
                format!("declared {m} edges, found {}", edges.len()),
            ));
        }
        Self::new(n, edges)
    }
}

fn parse_pair(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let mut next = |what: &str| -> Result<usize> {
        let tok = it
            .next()
            .ok_or_else(|| Error::parse(format!("line {lineno}"), format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| Error::parse(format!("line {lineno}"), format!("bad integer '{tok}'")))
    };
    let a = next("first field")?;
    let b = next("second field")?;
    if it.next().is_some() {
        return Err(Error::parse(format!("line {lineno}"), "trailing fields"));
    }
    Ok((a, b))
}

/// Number of edges a graph on `n` nodes with connectivity ratio `r` carries.
pub fn target_edge_count(n: usize, r: f64) -> usize {
    let possible = (n * n.saturating_sub(1) / 2) as f64;
    (r * possible).round() as usize
}

/// Uniformly samples `round(r·n(n−1)/2)` distinct edges, resampling with the
/// next sub-stream of the seed until the graph is connected.
pub fn generate_random_graph(n: usize, r: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Config(format!("random graph needs n >= 2, got {n}")));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Config(format!("connectivity ratio {r} outside (0, 1]")));
    }
    let m = target_edge_count(n, r);
    if m < n - 1 {
        return Err(Error::Config(format!(
            "{m} edges cannot connect {n} nodes (need at least {})",
            n - 1
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    for attempt in 0..MAX_GRAPH_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let picked = index::sample(&mut rng, pairs.len(), m);
        let g = Graph::new(n, picked.iter().map(|k| pairs[k]))?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Config(format!(
        "no connected graph with n={n}, r={r} after {MAX_GRAPH_ATTEMPTS} attempts"
    )))
}

/// Outcome of a definiteness test: `holds` iff `margin > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepsizeCheck {
    pub holds: bool,
    /// Smallest eigenvalue of the tested matrix.
    pub margin: f64,
}

const MARGIN_TOL: f64 = 1e-12;

fn check_dims(eta: &[f64], laplacian: &SymmetricMatrix, other: &[f64], beta: f64) -> Result<()> {
    if eta.len() != laplacian.n() || other.len() != laplacian.n() {
        return Err(Error::Config(format!(
            "dimension mismatch: {} agents in Laplacian, {} stepsizes, {} curvature entries",
            laplacian.n(),
            eta.len(),
            other.len()
        )));
    }
    if let Some(e) = eta.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Config(format!("stepsize weight eta={e} must be positive")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("beta={beta} must be nonnegative")));
    }
    Ok(())
}

/// `P = H − βL`.
pub fn primal_weight(eta: &[f64], beta: f64, laplacian: &SymmetricMatrix) -> SymmetricMatrix {
    SymmetricMatrix::from_diagonal(eta).sub(&laplacian.scaled(beta))
}

/// Composite-regime condition `H − βL − L_f ≻ 0`.
pub fn check_stepsize_composite(
    eta: &[f64],
    beta: f64,
    laplacian: &SymmetricMatrix,
    lipschitz: &[f64],
) -> Result<StepsizeCheck> {
    check_dims(eta, laplacian, lipschitz, beta)?;
    let m = primal_weight(eta, beta, laplacian).sub(&SymmetricMatrix::from_diagonal(lipschitz));
    let margin = min_eigenvalue(&m, MARGIN_TOL)?;
    Ok(StepsizeCheck {
        holds: margin > 0.0,
        margin,
    })
}

/// Strongly convex regime: `H − βL − L_f²/k1 ≻ 0` with `0 < k1 < 2·min μ`.
///
/// Also materializes `Q = 2M − k1·I` and requires it to be positive definite.
pub fn check_stepsize_strongly_convex(
    eta: &[f64],
    beta: f64,
    laplacian: &SymmetricMatrix,
    lipschitz: &[f64],
    strong_convexity: &[f64],
    k1: f64,
) -> Result<StepsizeCheck> {
    check_dims(eta, laplacian, lipschitz, beta)?;
    check_dims(eta, laplacian, strong_convexity, beta)?;
    let mu_min = strong_convexity.iter().copied().fold(f64::INFINITY, f64::min);
    if !(k1 > 0.0 && k1 < 2.0 * mu_min) {
        return Err(Error::Config(format!(
            "k1={k1} outside the open interval (0, {})",
            2.0 * mu_min
        )));
    }
    let q: Vec<f64> = strong_convexity.iter().map(|mu| 2.0 * mu - k1).collect();
    let q_min = min_eigenvalue(&SymmetricMatrix::from_diagonal(&q), MARGIN_TOL)?;
    if q_min <= 0.0 {
        return Err(Error::Config(format!("Q = 2M - k1 I is not positive definite ({q_min})")));
    }
    let lf2: Vec<f64> = lipschitz.iter().map(|l| l * l / k1).collect();
    let m = primal_weight(eta, beta, laplacian).sub(&SymmetricMatrix::from_diagonal(&lf2));
    let margin = min_eigenvalue(&m, MARGIN_TOL)?;
    Ok(StepsizeCheck {
        holds: margin > 0.0,
        margin,
    })
}

/// Second-smallest Laplacian eigenvalue via deflation of the all-ones
/// direction: `λ₂(L) = λ_min(L + c·11ᵀ/n)` for `c > λ_max(L)`.
///
/// Limited to `n <= 64`.
pub fn algebraic_connectivity(g: &Graph) -> Result<f64> {
    if g.n() > 64 {
        return Err(Error::Unsupported(format!(
            "algebraic connectivity by deflation is limited to n <= 64, got {}",
            g.n()
        )));
    }
    if g.n() < 2 {
        return Err(Error::Contract("need at least two nodes".into()));
    }
    let lap = g.laplacian();
    let c = max_eigenvalue(&lap, 1e-12)? + 1.0;
    let n = g.n();
    let mut deflated = lap.clone();
    for i in 0..n {
        for j in 0..=i {
            deflated.set(i, j, lap.get(i, j) + c / n as f64);
        }
    }
    min_eigenvalue(&deflated, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::complete(3)
    }

    #[test]
    fn path_laplacian() {
        let l = Graph::path(3).laplacian();
        assert_eq!(
            l.to_rows(),
            vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]
        );
    }

    #[test]
    fn triangle_laplacian() {
        let l = triangle().laplacian();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn single_node_laplacian() {
        let g = Graph::new(1, []).unwrap();
        assert_eq!(g.laplacian().to_rows(), vec![vec![0.0]]);
        assert!(g.is_connected());
    }

    #[test]
    fn connectivity() {
        assert!(Graph::path(5).is_connected());
        let two_edges = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!two_edges.is_connected());
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
    }

    #[test]
    fn random_graph_sizes() {
        let g = generate_random_graph(100, 0.4, 1).unwrap();
        assert_eq!(g.edge_count(), 1980);
        assert!(g.is_connected());
        let g = generate_random_graph(3, 1.0, 9).unwrap();
        assert_eq!(g, Graph::complete(3));
        let g = generate_random_graph(2, 1.0, 0).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn random_graph_rejects_infeasible_edge_count() {
        // round(0.1 * 45) = 4 < 9
        assert!(matches!(generate_random_graph(10, 0.1, 0), Err(Error::Config(_))));
        assert!(generate_random_graph(1, 1.0, 0).is_err());
    }

    #[test]
    fn random_graph_is_deterministic() {
        let a = generate_random_graph(30, 0.2, 42).unwrap();
        let b = generate_random_graph(30, 0.2, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_random_graph(30, 0.2, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn laplacian_extreme_eigenvalues() {
        // triangle: eigenvalues {0, 3, 3}; path-3: {0, 1, 3}
        let lt = triangle().laplacian();
        assert!((max_eigenvalue(&lt, 1e-12).unwrap() - 3.0).abs() < 1e-9);
        let lp = Graph::path(3).laplacian();
        assert!((max_eigenvalue(&lp, 1e-12).unwrap() - 3.0).abs() < 1e-9);
        assert!(min_eigenvalue(&lp, 1e-12).unwrap().abs() < 1e-9);
    }

    #[test]
    fn composite_stepsize_examples() {
        let l = triangle().laplacian();
        let ok = check_stepsize_composite(&[1.5; 3], 0.1, &l, &[1.0; 3]).unwrap();
        assert!(ok.holds);
        assert!((ok.margin - 0.2).abs() < 1e-9);
        let bad = check_stepsize_composite(&[1.0; 3], 0.1, &l, &[1.0; 3]).unwrap();
        assert!(!bad.holds);
        assert!((bad.margin + 0.3).abs() < 1e-9);
        let trivial = check_stepsize_composite(&[1.0; 3], 0.0, &l, &[0.0; 3]).unwrap();
        assert!(trivial.holds);
        assert!((trivial.margin - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strongly_convex_stepsize_examples() {
        let l = triangle().laplacian();
        let ok = check_stepsize_strongly_convex(&[2.0; 3], 0.1, &l, &[1.0; 3], &[1.0; 3], 1.0)
            .unwrap();
        assert!(ok.holds);
        assert!((ok.margin - 0.7).abs() < 1e-9);
        let bad = check_stepsize_strongly_convex(&[1.0; 3], 0.1, &l, &[1.0; 3], &[1.0; 3], 1.0)
            .unwrap();
        assert!(!bad.holds);
        let out = check_stepsize_strongly_convex(&[2.0; 3], 0.1, &l, &[1.0; 3], &[1.0; 3], 2.0);
        assert!(matches!(out, Err(Error::Config(_))));
    }

    #[test]
    fn nonpositive_eta_rejected() {
        let l = triangle().laplacian();
        assert!(check_stepsize_composite(&[1.0, 0.0, 1.0], 0.1, &l, &[1.0; 3]).is_err());
    }

    #[test]
    fn edge_list_parse_errors() {
        assert!(Graph::parse_edge_list("").is_err());
        assert!(Graph::parse_edge_list("3 2\n0 1\n").is_err());
        assert!(Graph::parse_edge_list("3 1\n0 x\n").is_err());
        let g = Graph::parse_edge_list("3 2\n1 0\n2 1\n").unwrap();
        assert_eq!(g, Graph::path(3));
    }

    #[test]
    fn deflated_second_eigenvalue() {
        // path-3: λ₂ = 1
        let l2 = algebraic_connectivity(&Graph::path(3)).unwrap();
        assert!((l2 - 1.0).abs() < 1e-9);
        let split = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(algebraic_connectivity(&split).unwrap().abs() < 1e-9);
    }
}
