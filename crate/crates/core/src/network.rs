//! Network topologies and combination matrices.
//!
//! A [`Topology`] is an undirected graph in which every node also neighbors
//! itself. A [`CombinationMatrix`] holds the cooperation weights `c[m][k]`,
//! the weight node `k` assigns to the intermediate estimate of node `m`; each
//! column must be a convex combination over the neighborhood of `k`.

use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::SeedPath;

/// Column-sum tolerance; Metropolis weights are exact small-integer rationals.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

const GEOMETRIC_ATTEMPTS: usize = 100;
const GEOMETRIC_RADIUS_GROWTH: f64 = 1.05;

/// How to build a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    Ring {
        nodes: usize,
    },
    RandomGeometric {
        nodes: usize,
        seed: u64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    /// Dense 0/1 adjacency rows. Diagonal entries are forced to 1.
    Explicit {
        adjacency: Vec<Vec<u8>>,
    },
    /// Undirected edge list with 0-based indices.
    Edges {
        n: usize,
        edges: Vec<[usize; 2]>,
    },
}

fn default_radius() -> f64 {
    0.3
}

fn yes() -> bool {
    true
}

/// A topology descriptor plus the connectivity requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    #[serde(flatten)]
    pub kind: TopologyKind,
    #[serde(default = "yes")]
    pub require_connected: bool,
}

impl TopologySpec {
    pub fn ring(nodes: usize) -> Self {
        TopologySpec {
            kind: TopologyKind::Ring { nodes },
            require_connected: true,
        }
    }

    pub fn random_geometric(nodes: usize, seed: u64, radius: f64) -> Self {
        TopologySpec {
            kind: TopologyKind::RandomGeometric { nodes, seed, radius },
            require_connected: true,
        }
    }

    pub fn explicit(adjacency: Vec<Vec<u8>>) -> Self {
        TopologySpec {
            kind: TopologyKind::Explicit { adjacency },
            require_connected: true,
        }
    }
}

/// Undirected graph with mandatory self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    adjacency: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct TopologyJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Topology {
    /// Build from a dense adjacency relation. Self-loops are added.
    pub fn from_adjacency(n: usize, mut adjacency: Vec<bool>) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("node count must be at least 2, got {n}")));
        }
        if adjacency.len() != n * n {
            return Err(invalid(format!(
                "adjacency has {} entries, expected {}",
                adjacency.len(),
                n * n
            )));
        }
        for k in 0..n {
            adjacency[k * n + k] = true;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacency[i * n + j] != adjacency[j * n + i] {
                    return Err(Error::Validation(format!("adjacency is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Topology { n, adjacency })
    }

    pub fn from_edges(n: usize, edges: &[[usize; 2]]) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("node count must be at least 2, got {n}")));
        }
        let mut adjacency = vec![false; n * n];
        for &[i, j] in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        Topology::from_adjacency(n, adjacency)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn is_neighbor(&self, m: usize, k: usize) -> bool {
        self.adjacency[m * self.n + k]
    }

    /// Neighborhood size of `k`, counting `k` itself.
    pub fn degree(&self, k: usize) -> usize {
        (0..self.n).filter(|&m| self.is_neighbor(m, k)).count()
    }

    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&m| self.is_neighbor(m, k))
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.is_neighbor(i, j) {
                    out.push([i, j]);
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for m in self.neighbors(k) {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&TopologyJson {
            n: self.n,
            edges: self.edges(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TopologyJson = serde_json::from_str(text)?;
        Topology::from_edges(raw.n, &raw.edges)
    }
}

/// Construct a topology from its descriptor.
pub fn build_topology(spec: &TopologySpec) -> Result<Topology> {
    let topology = match &spec.kind {
        TopologyKind::Ring { nodes } => ring(*nodes)?,
        TopologyKind::RandomGeometric { nodes, seed, radius } => return random_geometric(*nodes, *seed, *radius),
        TopologyKind::Explicit { adjacency } => {
            let n = adjacency.len();
            if adjacency.iter().any(|row| row.len() != n) {
                return Err(invalid("explicit adjacency must be square"));
            }
            let flat = adjacency.iter().flat_map(|row| row.iter().map(|&v| v != 0)).collect();
            Topology::from_adjacency(n, flat)?
        }
        TopologyKind::Edges { n, edges } => Topology::from_edges(*n, edges)?,
    };
    if spec.require_connected && !topology.is_connected() {
        return Err(Error::Validation("topology is not connected".into()));
    }
    Ok(topology)
}

fn ring(n: usize) -> Result<Topology> {
    if n < 2 {
        return Err(invalid(format!("node count must be at least 2, got {n}")));
    }
    let edges: Vec<[usize; 2]> = (0..n).map(|k| [k, (k + 1) % n]).collect();
    Topology::from_edges(n, &edges)
}

/// Nodes uniform on the unit square, linked when closer than `radius`.
/// Disconnected draws are retried with a slightly larger radius.
fn random_geometric(n: usize, seed: u64, radius: f64) -> Result<Topology> {
    if n < 2 {
        return Err(invalid(format!("node count must be at least 2, got {n}")));
    }
    if !(radius > 0.0) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    let root = SeedPath::new(seed);
    let mut r = radius;
    for attempt in 0..GEOMETRIC_ATTEMPTS {
        let mut rng = root.child(attempt as u64).rng();
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let mut adjacency = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                adjacency[i * n + j] = i == j || (dx * dx + dy * dy).sqrt() < r;
            }
        }
        let topology = Topology::from_adjacency(n, adjacency)?;
        if topology.is_connected() {
            return Ok(topology);
        }
        r *= GEOMETRIC_RADIUS_GROWTH;
    }
    Err(Error::Validation(format!(
        "no connected random-geometric graph after {GEOMETRIC_ATTEMPTS} draws"
    )))
}

/// Cooperation weights. Entry `(m, k)` is the weight node `k` gives node `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    n: usize,
    weights: Vec<f64>,
    support: Vec<bool>,
}

impl CombinationMatrix {
    /// Wrap arbitrary weights (row-major, `weights[m * n + k]`) over a topology.
    /// No validation happens here; see [`validate_combination`].
    pub fn from_weights(topology: &Topology, weights: Vec<f64>) -> Result<Self> {
        let n = topology.node_count();
        if weights.len() != n * n {
            return Err(invalid(format!(
                "weight matrix has {} entries, expected {}",
                weights.len(),
                n * n
            )));
        }
        Ok(CombinationMatrix {
            n,
            weights,
            support: topology.adjacency.clone(),
        })
    }

    /// The non-cooperative matrix: every node keeps its own estimate.
    pub fn identity(n: usize) -> Self {
        let mut weights = vec![0.0; n * n];
        let mut support = vec![false; n * n];
        for k in 0..n {
            weights[k * n + k] = 1.0;
            support[k * n + k] = true;
        }
        CombinationMatrix { n, weights, support }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.weights[m * self.n + k]
    }

    /// Row-major weights.
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Nonzero entries of column `k` as `(m, c_mk)`.
    pub fn column(&self, k: usize) -> Vec<(usize, f64)> {
        (0..self.n)
            .map(|m| (m, self.weight(m, k)))
            .filter(|&(_, c)| c != 0.0)
            .collect()
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.weights)
    }

    /// Row-major CSV, one line per row `m`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for m in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|k| format!("{}", self.weight(m, k))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Metropolis rule: `1 / max(n_m, n_k)` between distinct neighbors, remainder
/// on the diagonal.
pub fn metropolis_weights(topology: &Topology) -> CombinationMatrix {
    let n = topology.node_count();
    let degrees: Vec<usize> = (0..n).map(|k| topology.degree(k)).collect();
    let mut weights = vec![0.0; n * n];
    for k in 0..n {
        let mut off = 0.0;
        for m in topology.neighbors(k).filter(|&m| m != k) {
            let c = 1.0 / degrees[m].max(degrees[k]) as f64;
            weights[m * n + k] = c;
            off += c;
        }
        weights[k * n + k] = 1.0 - off;
    }
    CombinationMatrix {
        n,
        weights,
        support: topology.adjacency.clone(),
    }
}

/// First invariant violation found in a combination matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    OutOfRange { m: usize, k: usize, value: f64 },
    NonNeighbor { m: usize, k: usize, value: f64 },
    ColumnSum { k: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfRange { m, k, value } => {
                write!(f, "entry ({m}, {k}) = {value} is outside [0, 1]")
            }
            Violation::NonNeighbor { m, k, value } => {
                write!(f, "entry ({m}, {k}) = {value} links non-neighbors")
            }
            Violation::ColumnSum { k, sum } => write!(f, "column {k} sums to {sum}"),
        }
    }
}

/// Check every combination-matrix invariant; `Ok(())` on pass.
pub fn validate_combination(c: &CombinationMatrix) -> std::result::Result<(), Violation> {
    let n = c.n;
    for k in 0..n {
        let mut sum = 0.0;
        for m in 0..n {
            let value = c.weight(m, k);
            if !(0.0..=1.0).contains(&value) {
                return Err(Violation::OutOfRange { m, k, value });
            }
            if value != 0.0 && !c.support[m * n + k] {
                return Err(Violation::NonNeighbor { m, k, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > COLUMN_SUM_TOL {
            return Err(Violation::ColumnSum { k, sum });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Topology {
        build_topology(&TopologySpec::explicit(vec![
            vec![1, 1, 0],
            vec![1, 1, 1],
            vec![0, 1, 1],
        ]))
        .unwrap()
    }

    #[test]
    fn ring_of_three_is_complete() {
        let t = build_topology(&TopologySpec::ring(3)).unwrap();
        for k in 0..3 {
            assert_eq!(t.degree(k), 3);
        }
    }

    #[test]
    fn explicit_chain_passes_through() {
        let t = chain();
        assert!(t.is_neighbor(0, 1) && t.is_neighbor(1, 2));
        assert!(!t.is_neighbor(0, 2));
        assert_eq!(t.edges(), vec![[0, 1], [1, 2]]);
    }

    #[test]
    fn rejects_asymmetric_and_tiny() {
        let err = build_topology(&TopologySpec::explicit(vec![vec![1, 1], vec![0, 1]]));
        assert!(matches!(err, Err(Error::Validation(_))));
        assert!(matches!(
            build_topology(&TopologySpec::ring(1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn random_geometric_is_connected_and_deterministic() {
        let spec = TopologySpec::random_geometric(20, 7, 0.3);
        let a = build_topology(&spec).unwrap();
        let b = build_topology(&spec).unwrap();
        assert!(a.is_connected());
        assert_eq!(a, b);
    }

    #[test]
    fn metropolis_chain_values() {
        let c = metropolis_weights(&chain());
        let third = 1.0 / 3.0;
        assert_eq!(c.weight(0, 1), third);
        assert_eq!(c.weight(1, 0), third);
        assert_eq!(c.weight(1, 2), third);
        assert_eq!(c.weight(2, 1), third);
        assert!((c.weight(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.weight(1, 1) - third).abs() < 1e-15);
        assert!((c.weight(2, 2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.weight(0, 2), 0.0);
        assert!(validate_combination(&c).is_ok());
    }

    #[test]
    fn metropolis_isolated_node_keeps_itself() {
        let spec = TopologySpec {
            kind: TopologyKind::Explicit {
                adjacency: vec![vec![1, 1, 0], vec![1, 1, 0], vec![0, 0, 1]],
            },
            require_connected: false,
        };
        let c = metropolis_weights(&build_topology(&spec).unwrap());
        assert_eq!(c.weight(2, 2), 1.0);
        assert_eq!(c.weight(0, 2), 0.0);
        assert_eq!(c.weight(1, 2), 0.0);
    }

    #[test]
    fn metropolis_complete_graph() {
        let adjacency = vec![vec![1u8; 4]; 4];
        let c = metropolis_weights(&build_topology(&TopologySpec::explicit(adjacency)).unwrap());
        for m in 0..4 {
            for k in 0..4 {
                assert!((c.weight(m, k) - 0.25).abs() < 1e-15);
            }
        }
        assert!(validate_combination(&c).is_ok());
    }

    #[test]
    fn validation_reports_column_and_non_neighbor() {
        let t = chain();
        let mut w = metropolis_weights(&t).as_slice().to_vec();
        // column 1 sums to 0.9
        w[4] -= 0.1; // (1, 1)
        let c = CombinationMatrix::from_weights(&t, w).unwrap();
        match validate_combination(&c) {
            Err(Violation::ColumnSum { k, sum }) => {
                assert_eq!(k, 1);
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut w = metropolis_weights(&t).as_slice().to_vec();
        w[2] = 0.1; // (0, 2)
        w[8] -= 0.1; // (2, 2)
        let c = CombinationMatrix::from_weights(&t, w).unwrap();
        assert_eq!(
            validate_combination(&c),
            Err(Violation::NonNeighbor { m: 0, k: 2, value: 0.1 })
        );
    }

    #[test]
    fn json_round_trip() {
        let t = build_topology(&TopologySpec::random_geometric(12, 3, 0.4)).unwrap();
        let back = Topology::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(t, back);
        assert_eq!(
            Topology::from_json(r#"{"n":3,"edges":[[0,1],[1,2]]}"#).unwrap(),
            chain()
        );
    }

    #[test]
    fn csv_export_has_n_rows() {
        let c = metropolis_weights(&chain());
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("0.6666"));
    }
}
