//! Undirected communication graphs and random geometric network generation.
//!
//! Every node `k` owns an expanded neighborhood `N_k = {k} ∪ N'_k`, kept sorted so
//! that per-node vectors (copies, duals, gradients) can be laid out by slot.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

/// Fixed anchor locations used by the cooperative-localization preset.
pub const ANCHOR_POSITIONS: [[f64; 2]; 5] = [
    [0.25, 0.25],
    [0.75, 0.25],
    [0.25, 0.75],
    [0.5, 0.5],
    [0.75, 0.75],
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighborhoods: Vec<Vec<usize>>,
    connected: bool,
}

impl Topology {
    /// Builds a topology from an edge list. Duplicates and orientation are normalized.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Config(format!(
                    "edge ({a}, {b}) references a node outside 0..{num_nodes}"
                )));
            }
            if a == b {
                return Err(Error::Config(format!("self loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighborhoods: Vec<Vec<usize>> = (0..num_nodes).map(|k| vec![k]).collect();
        for &(a, b) in &edges {
            neighborhoods[a].push(b);
            neighborhoods[b].push(a);
        }
        for n in &mut neighborhoods {
            n.sort_unstable();
        }
        let connected = is_connected(num_nodes, &neighborhoods);
        Ok(Self {
            num_nodes,
            edges,
            neighborhoods,
            connected,
        })
    }

    pub fn ring(num_nodes: usize) -> Self {
        let edges: Vec<_> = match num_nodes {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            n => (0..n).map(|k| (k, (k + 1) % n)).collect(),
        };
        Self::new(num_nodes, edges).expect("ring edges are valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Expanded neighborhood `N_k`, sorted, including `k`.
    pub fn neighborhood(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighborhoods[k]
            .iter()
            .copied()
            .filter(move |&j| j != k)
    }

    /// Position of `j` inside `N_k`, if `j` is a member.
    pub fn slot(&self, k: usize, j: usize) -> Option<usize> {
        self.neighborhoods[k].binary_search(&j).ok()
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Plain-text edge list: a `nodes` line followed by one `edge k j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes {}", self.num_nodes).unwrap();
        for &(a, b) in &self.edges {
            writeln!(out, "edge {a} {b}").unwrap();
        }
        out
    }

    /// Parses the edge-list format. `node` lines and any trailing edge fields
    /// (such as measured distances) are accepted and ignored.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut num_nodes = None;
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut fields = line.split_whitespace();
            match fields.next() {
                None => continue,
                Some(tag) if tag.starts_with('#') => continue,
                Some("nodes") => num_nodes = Some(parse_field(fields.next(), line_no)?),
                Some("edge") => {
                    let a = parse_field(fields.next(), line_no)?;
                    let b = parse_field(fields.next(), line_no)?;
                    edges.push((a, b));
                }
                Some(_) => continue,
            }
        }
        let num_nodes = num_nodes.ok_or(Error::Parse {
            line: 0,
            msg: "missing `nodes` line".into(),
        })?;
        Self::new(num_nodes, edges)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    let raw = field.ok_or(Error::Parse {
        line,
        msg: "missing field".into(),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{raw}`"),
    })
}

fn is_connected(num_nodes: usize, neighborhoods: &[Vec<usize>]) -> bool {
    if num_nodes == 0 {
        return true;
    }
    let mut seen = vec![false; num_nodes];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(k) = stack.pop() {
        for &j in &neighborhoods[k] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// A random geometric graph in the unit square together with the node positions
/// it was generated from.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub topology: Topology,
    pub positions: Vec<[f64; 2]>,
    /// `true` for nodes pinned at [`ANCHOR_POSITIONS`].
    pub anchors: Vec<bool>,
}

/// Places `num_nodes` points uniformly on `[0,1]²` and links every pair within
/// distance `range`. With `with_anchors` and at least five nodes, the first five
/// nodes sit at [`ANCHOR_POSITIONS`] instead.
///
/// A disconnected result is not an error; check [`Topology::is_connected`].
pub fn generate_geometric_graph<R: Rng + ?Sized>(
    num_nodes: usize,
    range: f64,
    with_anchors: bool,
    rng: &mut R,
) -> Result<GeometricGraph> {
    if num_nodes == 0 {
        return Err(Error::Config("graph needs at least one node".into()));
    }
    if range.is_nan() || range <= 0.0 {
        return Err(Error::Config(format!(
            "range must be positive, got {range}"
        )));
    }
    let place_anchors = with_anchors && num_nodes >= ANCHOR_POSITIONS.len();
    let mut positions = Vec::with_capacity(num_nodes);
    let mut anchors = vec![false; num_nodes];
    for k in 0..num_nodes {
        if place_anchors && k < ANCHOR_POSITIONS.len() {
            positions.push(ANCHOR_POSITIONS[k]);
            anchors[k] = true;
        } else {
            positions.push([rng.random::<f64>(), rng.random::<f64>()]);
        }
    }
    let topology = Topology::new(num_nodes, unit_disk_edges(&positions, range))?;
    Ok(GeometricGraph {
        topology,
        positions,
        anchors,
    })
}

pub fn unit_disk_edges(positions: &[[f64; 2]], range: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..positions.len() {
        for b in a + 1..positions.len() {
            let dx = positions[a][0] - positions[b][0];
            let dy = positions[a][1] - positions[b][1];
            if (dx * dx + dy * dy).sqrt() <= range {
                edges.push((a, b));
            }
        }
    }
    edges
}
