//! Convex least-squares test problem with a closed-form centralized optimum.
//!
//! `g_k(x_k) = ½ Σ_{j∈N_k} ‖x_kj − a_kj‖²`, no local term, no constraints.

use rand::{Rng, RngCore};

use crate::error::{check_dim, Result};
use crate::problem::{NodePrior, Problem, Surrogate};
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    topology: Topology,
    dim: usize,
    targets: Vec<Vec<f64>>,
    prior: NodePrior,
}

impl QuadraticProblem {
    /// `targets[k]` stacks `a_kj` over the slots of `N_k`.
    pub fn new(topology: Topology, dim: usize, targets: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(topology.num_nodes(), targets.len(), "targets per node")?;
        for (k, a) in targets.iter().enumerate() {
            check_dim(
                topology.neighborhood(k).len() * dim,
                a.len(),
                "stacked targets",
            )?;
        }
        Ok(Self {
            topology,
            dim,
            targets,
            prior: NodePrior::free(),
        })
    }

    /// Targets drawn uniformly from `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(topology: Topology, dim: usize, rng: &mut R) -> Self {
        let targets = (0..topology.num_nodes())
            .map(|k| {
                (0..topology.neighborhood(k).len() * dim)
                    .map(|_| rng.random::<f64>())
                    .collect()
            })
            .collect();
        Self::new(topology, dim, targets).expect("dimensions are consistent by construction")
    }

    pub fn targets(&self, k: usize) -> &[f64] {
        &self.targets[k]
    }

    /// Centralized minimizer: `z_j*` is the mean of `a_kj` over `k ∈ N_j`.
    pub fn optimum(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        (0..self.topology.num_nodes())
            .map(|j| {
                let members = self.topology.neighborhood(j);
                let mut acc = vec![0.0; d];
                for &k in members {
                    let slot = self
                        .topology
                        .slot(k, j)
                        .expect("neighborhoods are symmetric");
                    for (a, t) in acc.iter_mut().zip(&self.targets[k][slot * d..]) {
                        *a += t;
                    }
                }
                acc.iter().map(|v| v / members.len() as f64).collect()
            })
            .collect()
    }
}

impl Problem for QuadraticProblem {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn block_dim(&self) -> usize {
        self.dim
    }

    fn eval_g(&self, k: usize, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.targets[k])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }

    fn grad_g(&self, k: usize, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(&self.targets[k]) {
            *o = a - b;
        }
    }

    fn h(&self, _k: usize, z: &[f64]) -> f64 {
        self.prior.h(z)
    }

    fn prox(&self, _k: usize, v: &[f64], weight: f64, out: &mut [f64]) {
        self.prior.prox(v, weight, out);
    }

    fn subgradient_distance(&self, _k: usize, z: &[f64], s: &[f64]) -> Option<f64> {
        Some(self.prior.subgradient_distance(z, s))
    }

    fn lipschitz(&self, _k: usize) -> f64 {
        1.0
    }

    fn initial_point(&self, _k: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        self.prior.sample(self.dim, rng)
    }

    fn surrogate(&self) -> Option<&dyn Surrogate> {
        Some(self)
    }
}

/// `g_k` is already convex, so it majorizes itself.
impl Surrogate for QuadraticProblem {
    fn eval(&self, k: usize, x: &[f64], _at: &[f64]) -> f64 {
        self.eval_g(k, x)
    }

    fn grad_x(&self, k: usize, x: &[f64], _at: &[f64], out: &mut [f64]) {
        self.grad_g(k, x, out);
    }

    fn minimize(
        &self,
        k: usize,
        _at: &[f64],
        z: &[f64],
        y: &[f64],
        rho: f64,
        out: &mut [f64],
    ) -> Result<()> {
        check_dim(self.targets[k].len(), z.len(), "surrogate consensus input")?;
        for i in 0..out.len() {
            out[i] = (self.targets[k][i] - y[i] + rho * z[i]) / (1.0 + rho);
        }
        Ok(())
    }
}
