//! Cooperative sensor localization via smoothed multidimensional scaling.
//!
//! Node `k` owns the term `g_k = Σ_{j∈N'_k} w_kj (δ_kj − d_kj)²` where
//! `d_kj = √(‖x_k − x_j‖² + ε)`. Anchors are pinned by a singleton constraint set;
//! everyone else is confined to the unit square.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::problem::{NodePrior, Problem, Surrogate};
use crate::topology::{generate_geometric_graph, parse_field, Topology};

pub const DIM: usize = 2;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_NOISE: f64 = 0.02;

/// `√(‖p − q‖² + ε)`.
pub fn smoothed_distance(p: &[f64], q: &[f64], epsilon: f64) -> f64 {
    let sq: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq + epsilon).sqrt()
}

/// Block-row Hessian bound `|N_k| · 8(2/√ε + 1)` for points in the unit square.
pub fn lipschitz_bound(neighborhood_size: usize, epsilon: f64) -> f64 {
    neighborhood_size as f64 * 8.0 * (2.0 / epsilon.sqrt() + 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Ground truth plus range measurements for one network realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationInstance {
    pub positions: Vec<[f64; 2]>,
    pub anchors: Vec<bool>,
    pub measurements: Vec<Measurement>,
    pub epsilon: f64,
}

impl LocalizationInstance {
    /// Random geometric network with Gaussian range noise (`σ = noise`),
    /// clipped at zero.
    pub fn generate<R: Rng + ?Sized>(
        num_nodes: usize,
        range: f64,
        with_anchors: bool,
        noise: f64,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if noise.is_nan() || noise < 0.0 {
            return Err(Error::Config(format!(
                "noise must be nonnegative, got {noise}"
            )));
        }
        let graph = generate_geometric_graph(num_nodes, range, with_anchors, rng)?;
        let normal = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
        let measurements = graph
            .topology
            .edges()
            .iter()
            .map(|&(a, b)| {
                let truth = smoothed_distance(&graph.positions[a], &graph.positions[b], 0.0);
                let noisy = if noise > 0.0 {
                    truth + normal.sample(rng)
                } else {
                    truth
                };
                Measurement {
                    a,
                    b,
                    distance: noisy.max(0.0),
                }
            })
            .collect();
        Ok(Self {
            positions: graph.positions,
            anchors: graph.anchors,
            measurements,
            epsilon,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(
            self.num_nodes(),
            self.measurements.iter().map(|m| (m.a, m.b)),
        )
    }

    pub fn truth(&self) -> Vec<f64> {
        self.positions
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    pub fn problem(&self) -> Result<LocalizationProblem> {
        LocalizationProblem::new(self)
    }

    pub fn to_text(&self) -> String {
        let mut out =
            String::from("# localization instance: node id x y is_anchor; edge k j delta\n");
        writeln!(out, "nodes {}", self.num_nodes()).unwrap();
        writeln!(out, "epsilon {}", self.epsilon).unwrap();
        for (k, p) in self.positions.iter().enumerate() {
            writeln!(
                out,
                "node {k} {} {} {}",
                p[0],
                p[1],
                u8::from(self.anchors[k])
            )
            .unwrap();
        }
        for m in &self.measurements {
            writeln!(out, "edge {} {} {}", m.a, m.b, m.distance).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut num_nodes: Option<usize> = None;
        let mut epsilon = DEFAULT_EPSILON;
        let mut nodes: Vec<(usize, [f64; 2], bool)> = Vec::new();
        let mut measurements = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut f = line.split_whitespace();
            match f.next() {
                None => {}
                Some(tag) if tag.starts_with('#') => {}
                Some("nodes") => num_nodes = Some(parse_field(f.next(), line_no)?),
                Some("epsilon") => epsilon = parse_field(f.next(), line_no)?,
                Some("node") => {
                    let id = parse_field(f.next(), line_no)?;
                    let x = parse_field(f.next(), line_no)?;
                    let y = parse_field(f.next(), line_no)?;
                    let anchor: u8 = parse_field(f.next(), line_no)?;
                    nodes.push((id, [x, y], anchor != 0));
                }
                Some("edge") => {
                    let a = parse_field(f.next(), line_no)?;
                    let b = parse_field(f.next(), line_no)?;
                    let distance: f64 = parse_field(f.next(), line_no)?;
                    if distance < 0.0 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "negative distance".into(),
                        });
                    }
                    measurements.push(Measurement { a, b, distance });
                }
                Some(other) => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown record `{other}`"),
                    })
                }
            }
        }
        let n = num_nodes.ok_or(Error::Parse {
            line: 0,
            msg: "missing `nodes` line".into(),
        })?;
        let mut positions = vec![[f64::NAN; 2]; n];
        let mut anchors = vec![false; n];
        for (id, p, a) in nodes {
            if id >= n {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("node id {id} out of range"),
                });
            }
            positions[id] = p;
            anchors[id] = a;
        }
        if positions.iter().any(|p| p[0].is_nan()) {
            return Err(Error::Parse {
                line: 0,
                msg: "not every node has a `node` line".into(),
            });
        }
        Ok(Self {
            positions,
            anchors,
            measurements,
            epsilon,
        })
    }
}

/// [`Problem`] view of a [`LocalizationInstance`].
#[derive(Debug, Clone)]
pub struct LocalizationProblem {
    topology: Topology,
    epsilon: f64,
    /// Per node, measured distance by slot (unused at the node's own slot).
    deltas: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    own_slot: Vec<usize>,
    priors: Vec<NodePrior>,
    lipschitz: Vec<f64>,
}

impl LocalizationProblem {
    pub fn new(instance: &LocalizationInstance) -> Result<Self> {
        if instance.epsilon.is_nan() || instance.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        let topology = instance.topology()?;
        let n = topology.num_nodes();
        let mut deltas: Vec<Vec<f64>> = (0..n)
            .map(|k| vec![0.0; topology.neighborhood(k).len()])
            .collect();
        let mut weights = deltas.clone();
        for m in &instance.measurements {
            let sa = topology.slot(m.a, m.b).expect("edge present");
            let sb = topology.slot(m.b, m.a).expect("edge present");
            deltas[m.a][sa] = m.distance;
            deltas[m.b][sb] = m.distance;
            weights[m.a][sa] = 1.0;
            weights[m.b][sb] = 1.0;
        }
        let own_slot = (0..n).map(|k| topology.slot(k, k).unwrap()).collect();
        let priors = (0..n)
            .map(|k| {
                if instance.anchors[k] {
                    NodePrior::point(instance.positions[k].to_vec())
                } else {
                    NodePrior::unit_box(DIM)
                }
            })
            .collect();
        let lipschitz = (0..n)
            .map(|k| lipschitz_bound(topology.neighborhood(k).len(), instance.epsilon))
            .collect();
        Ok(Self {
            topology,
            epsilon: instance.epsilon,
            deltas,
            weights,
            own_slot,
            priors,
            lipschitz,
        })
    }

    /// Replaces the conservative Lipschitz bound with a practical value for every node.
    pub fn with_lipschitz(mut self, value: f64) -> Self {
        self.lipschitz.iter_mut().for_each(|l| *l = value);
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn pairs(&self, k: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let own = self.own_slot[k];
        (0..self.deltas[k].len())
            .filter(move |&s| s != own)
            .map(move |s| (s, self.deltas[k][s], self.weights[k][s]))
    }
}

fn block(x: &[f64], slot: usize) -> &[f64] {
    &x[slot * DIM..(slot + 1) * DIM]
}

impl Problem for LocalizationProblem {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn block_dim(&self) -> usize {
        DIM
    }

    fn eval_g(&self, k: usize, x: &[f64]) -> f64 {
        let xk = block(x, self.own_slot[k]);
        self.pairs(k)
            .map(|(s, delta, w)| {
                let r = delta - smoothed_distance(xk, block(x, s), self.epsilon);
                w * r * r
            })
            .sum()
    }

    fn grad_g(&self, k: usize, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let own = self.own_slot[k];
        for (s, delta, w) in self.pairs(k) {
            let (xk, xs) = (block(x, own), block(x, s));
            let d = smoothed_distance(xk, xs, self.epsilon);
            let c = 2.0 * w * (delta - d) / d;
            for i in 0..DIM {
                let term = c * (xk[i] - xs[i]);
                out[s * DIM + i] += term;
                out[own * DIM + i] -= term;
            }
        }
    }

    fn h(&self, k: usize, z: &[f64]) -> f64 {
        self.priors[k].h(z)
    }

    fn prox(&self, k: usize, v: &[f64], weight: f64, out: &mut [f64]) {
        self.priors[k].prox(v, weight, out);
    }

    fn subgradient_distance(&self, k: usize, z: &[f64], s: &[f64]) -> Option<f64> {
        Some(self.priors[k].subgradient_distance(z, s))
    }

    fn lipschitz(&self, k: usize) -> f64 {
        self.lipschitz[k]
    }

    fn initial_point(&self, k: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        self.priors[k].sample(DIM, rng)
    }

    fn surrogate(&self) -> Option<&dyn Surrogate> {
        Some(self)
    }
}

/// Convex–concave majorizer: `d²` is kept, the concave `−2δd` is linearized at `at`.
impl Surrogate for LocalizationProblem {
    fn eval(&self, k: usize, x: &[f64], at: &[f64]) -> f64 {
        let own = self.own_slot[k];
        let (xk, ak) = (block(x, own), block(at, own));
        self.pairs(k)
            .map(|(s, delta, w)| {
                let (xs, as_) = (block(x, s), block(at, s));
                let d_at = smoothed_distance(ak, as_, self.epsilon);
                let d_sq = smoothed_distance(xk, xs, self.epsilon).powi(2);
                // ⟨∇d(at), x − at⟩ over the (k, s) pair of blocks
                let lin: f64 = (0..DIM)
                    .map(|i| (ak[i] - as_[i]) / d_at * ((xk[i] - ak[i]) - (xs[i] - as_[i])))
                    .sum();
                w * (delta * delta + d_sq - 2.0 * delta * (d_at + lin))
            })
            .sum()
    }

    fn grad_x(&self, k: usize, x: &[f64], at: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let own = self.own_slot[k];
        for (s, delta, w) in self.pairs(k) {
            let (xk, xs) = (block(x, own), block(x, s));
            let (ak, as_) = (block(at, own), block(at, s));
            let d_at = smoothed_distance(ak, as_, self.epsilon);
            for i in 0..DIM {
                let term = 2.0 * w * (xk[i] - xs[i]) - 2.0 * w * delta * (ak[i] - as_[i]) / d_at;
                out[own * DIM + i] += term;
                out[s * DIM + i] -= term;
            }
        }
    }

    fn minimize(
        &self,
        k: usize,
        at: &[f64],
        z: &[f64],
        y: &[f64],
        rho: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.deltas[k].len();
        check_dim(n * DIM, z.len(), "surrogate consensus input")?;
        check_dim(n * DIM, at.len(), "surrogate expansion point")?;
        let own = self.own_slot[k];
        // (2·L_star + ρI) x = ρz − y + b, one column per coordinate
        let mut system = DMatrix::<f64>::from_diagonal_element(n, n, rho);
        let mut rhs = DMatrix::<f64>::zeros(n, DIM);
        for s in 0..n {
            for i in 0..DIM {
                rhs[(s, i)] = rho * z[s * DIM + i] - y[s * DIM + i];
            }
        }
        for (s, delta, w) in self.pairs(k) {
            system[(own, own)] += 2.0 * w;
            system[(s, s)] += 2.0 * w;
            system[(own, s)] -= 2.0 * w;
            system[(s, own)] -= 2.0 * w;
            let (ak, as_) = (block(at, own), block(at, s));
            let d_at = smoothed_distance(ak, as_, self.epsilon);
            for i in 0..DIM {
                let b = 2.0 * w * delta * (ak[i] - as_[i]) / d_at;
                rhs[(own, i)] += b;
                rhs[(s, i)] -= b;
            }
        }
        let chol = system
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { node: k })?;
        let sol = chol.solve(&rhs);
        for s in 0..n {
            for i in 0..DIM {
                out[s * DIM + i] = sol[(s, i)];
            }
        }
        Ok(())
    }
}

/// Stacked vector of `N_k` blocks taken from per-node positions.
pub fn gather(topology: &Topology, k: usize, points: &[Vec<f64>]) -> Vec<f64> {
    topology
        .neighborhood(k)
        .iter()
        .flat_map(|&j| points[j].iter().copied())
        .collect()
}
