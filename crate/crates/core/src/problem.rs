//! The objective interface consumed by the engine.
//!
//! A problem is a sum over nodes of a smooth coupling term `g_k`, which reads the
//! blocks of every member of `N_k`, plus a local term `h_k` and constraint set
//! `X_k` acting on node `k`'s own block. Stacked vectors follow the slot order of
//! [`Topology::neighborhood`].

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::topology::Topology;

pub trait Problem: Send + Sync {
    fn topology(&self) -> &Topology;

    /// Dimension `d` of every variable block.
    fn block_dim(&self) -> usize;

    fn num_nodes(&self) -> usize {
        self.topology().num_nodes()
    }

    /// `g_k` at the stacked blocks `x` (length `|N_k|·d`).
    fn eval_g(&self, k: usize, x: &[f64]) -> f64;

    /// Gradient of `g_k` with respect to every stacked block.
    fn grad_g(&self, k: usize, x: &[f64], out: &mut [f64]);

    /// `h_k(z)`, `+∞` outside `X_k`.
    fn h(&self, k: usize, z: &[f64]) -> f64;

    /// `argmin_{u ∈ X_k} h_k(u) + (weight/2)‖u − v‖²`.
    fn prox(&self, k: usize, v: &[f64], weight: f64, out: &mut [f64]);

    /// Distance from `s` to `∂h_k(z) + N_{X_k}(z)`. `None` when the problem cannot
    /// characterize its subdifferential.
    fn subgradient_distance(&self, _k: usize, _z: &[f64], _s: &[f64]) -> Option<f64> {
        None
    }

    /// Lipschitz constant of `∇g_k`.
    fn lipschitz(&self, k: usize) -> f64;

    /// Starting consensus value, drawn from `X_k`.
    fn initial_point(&self, k: usize, rng: &mut dyn RngCore) -> Vec<f64>;

    fn surrogate(&self) -> Option<&dyn Surrogate> {
        None
    }

    /// Centralized objective `Σ_k g_k(z restricted to N_k) + h_k(z_k)`.
    fn objective(&self, z: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for k in 0..self.num_nodes() {
            let stacked: Vec<f64> = self
                .topology()
                .neighborhood(k)
                .iter()
                .flat_map(|&j| z[j].iter().copied())
                .collect();
            total += self.eval_g(k, &stacked) + self.h(k, &z[k]);
        }
        total
    }
}

/// Convex majorizer `f_k(x, at) ≥ g_k(x)` that touches `g_k` in value and gradient
/// at `x = at`.
pub trait Surrogate: Send + Sync {
    fn eval(&self, k: usize, x: &[f64], at: &[f64]) -> f64;

    fn grad_x(&self, k: usize, x: &[f64], at: &[f64], out: &mut [f64]);

    /// Writes `argmin_x f_k(x, at) + Σ_j ⟨y_j, x_j − z_j⟩ + (rho/2) Σ_j ‖x_j − z_j‖²`.
    fn minimize(
        &self,
        k: usize,
        at: &[f64],
        z: &[f64],
        y: &[f64],
        rho: f64,
        out: &mut [f64],
    ) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `weight · ‖z − center‖`.
    DistanceToPoint {
        weight: f64,
        center: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Free,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Point(Vec<f64>),
}

/// `h_k` and `X_k` for the node-local forms shipped with this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePrior {
    regularizer: Regularizer,
    set: ConstraintSet,
}

impl NodePrior {
    pub fn new(regularizer: Regularizer, set: ConstraintSet) -> Result<Self> {
        if let (Regularizer::DistanceToPoint { .. }, ConstraintSet::Box { .. }) =
            (&regularizer, &set)
        {
            return Err(Error::UnsupportedPrior(
                "distance-to-point regularizer combined with a box".into(),
            ));
        }
        if let ConstraintSet::Box { lo, hi } = &set {
            if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| l > h) {
                return Err(Error::Config("box bounds are inconsistent".into()));
            }
        }
        if let Regularizer::DistanceToPoint { weight, .. } = &regularizer {
            if *weight < 0.0 {
                return Err(Error::Config(
                    "regularizer weight must be nonnegative".into(),
                ));
            }
        }
        Ok(Self { regularizer, set })
    }

    pub fn free() -> Self {
        Self {
            regularizer: Regularizer::Zero,
            set: ConstraintSet::Free,
        }
    }

    pub fn unit_box(dim: usize) -> Self {
        Self {
            regularizer: Regularizer::Zero,
            set: ConstraintSet::Box {
                lo: vec![0.0; dim],
                hi: vec![1.0; dim],
            },
        }
    }

    pub fn point(c: Vec<f64>) -> Self {
        Self {
            regularizer: Regularizer::Zero,
            set: ConstraintSet::Point(c),
        }
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn set(&self) -> &ConstraintSet {
        &self.set
    }

    pub fn prox(&self, v: &[f64], weight: f64, out: &mut [f64]) {
        match (&self.set, &self.regularizer) {
            (ConstraintSet::Point(c), _) => out.copy_from_slice(c),
            (ConstraintSet::Box { lo, hi }, _) => {
                for i in 0..v.len() {
                    out[i] = v[i].clamp(lo[i], hi[i]);
                }
            }
            (ConstraintSet::Free, Regularizer::Zero) => out.copy_from_slice(v),
            (ConstraintSet::Free, Regularizer::DistanceToPoint { weight: r, center }) => {
                let dist = v
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let threshold = r / weight;
                if dist <= threshold {
                    out.copy_from_slice(center);
                } else {
                    let scale = 1.0 - threshold / dist;
                    for i in 0..v.len() {
                        out[i] = center[i] + scale * (v[i] - center[i]);
                    }
                }
            }
        }
    }

    pub fn h(&self, z: &[f64]) -> f64 {
        const TOL: f64 = 1e-12;
        let inside = match &self.set {
            ConstraintSet::Free => true,
            ConstraintSet::Box { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - TOL && *v <= h + TOL),
            ConstraintSet::Point(c) => z.iter().zip(c).all(|(v, c)| (v - c).abs() <= TOL),
        };
        if !inside {
            return f64::INFINITY;
        }
        match &self.regularizer {
            Regularizer::Zero => 0.0,
            Regularizer::DistanceToPoint { weight, center } => {
                weight
                    * z.iter()
                        .zip(center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
            }
        }
    }

    /// Distance from `s` to `∂h(z) + N_X(z)`.
    pub fn subgradient_distance(&self, z: &[f64], s: &[f64]) -> f64 {
        match (&self.set, &self.regularizer) {
            (ConstraintSet::Point(_), _) => 0.0,
            (ConstraintSet::Box { lo, hi }, _) => {
                let mut acc = 0.0;
                for i in 0..z.len() {
                    let at_lo = z[i] <= lo[i];
                    let at_hi = z[i] >= hi[i];
                    let d = match (at_lo, at_hi) {
                        (true, true) => 0.0,
                        (true, false) => s[i].max(0.0),
                        (false, true) => (-s[i]).max(0.0),
                        (false, false) => s[i].abs(),
                    };
                    acc += d * d;
                }
                acc.sqrt()
            }
            (ConstraintSet::Free, Regularizer::Zero) => norm(s),
            (ConstraintSet::Free, Regularizer::DistanceToPoint { weight, center }) => {
                let diff: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
                let dist = norm(&diff);
                if dist == 0.0 {
                    (norm(s) - weight).max(0.0)
                } else {
                    let g: Vec<f64> = s
                        .iter()
                        .zip(&diff)
                        .map(|(si, di)| si - weight * di / dist)
                        .collect();
                    norm(&g)
                }
            }
        }
    }

    /// Uniform draw from the set. Unbounded coordinates are drawn from `[0, 1]`.
    pub fn sample(&self, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        match &self.set {
            ConstraintSet::Free => (0..dim).map(|_| rng.random::<f64>()).collect(),
            ConstraintSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            ConstraintSet::Point(c) => c.clone(),
        }
    }

    pub fn diameter(&self) -> Option<f64> {
        match &self.set {
            ConstraintSet::Free => None,
            ConstraintSet::Box { lo, hi } => Some(
                lo.iter()
                    .zip(hi)
                    .map(|(l, h)| (h - l) * (h - l))
                    .sum::<f64>()
                    .sqrt(),
            ),
            ConstraintSet::Point(_) => Some(0.0),
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prox1(prior: &NodePrior, v: f64, w: f64) -> f64 {
        let mut out = [0.0];
        prior.prox(&[v], w, &mut out);
        out[0]
    }

    #[test]
    fn box_projection() {
        let p = NodePrior::unit_box(2);
        let mut out = [0.0; 2];
        p.prox(&[1.2, -0.1], 3.0, &mut out);
        assert_eq!(out, [1.0, 0.0]);
        p.prox(&[0.5, 0.5], 3.0, &mut out);
        assert_eq!(out, [0.5, 0.5]);
        let interval = NodePrior::new(
            Regularizer::Zero,
            ConstraintSet::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            },
        )
        .unwrap();
        assert_eq!(prox1(&interval, 1.5, 1.0), 1.0);
    }

    #[test]
    fn point_set_ignores_input() {
        let p = NodePrior::point(vec![0.25, 0.25]);
        let mut out = [0.0; 2];
        p.prox(&[0.9, 0.9], 1.0, &mut out);
        assert_eq!(out, [0.25, 0.25]);
    }

    #[test]
    fn norm_prior_matches_grid_search() {
        let p = NodePrior::new(
            Regularizer::DistanceToPoint {
                weight: 1.0,
                center: vec![0.0],
            },
            ConstraintSet::Free,
        )
        .unwrap();
        // brute-force minimization of |u| + ½(u − 3)² on a fine grid
        let (mut best_u, mut best) = (0.0, f64::INFINITY);
        let mut u: f64 = -5.0;
        while u <= 5.0 {
            let val = u.abs() + 0.5 * (u - 3.0) * (u - 3.0);
            if val < best {
                best = val;
                best_u = u;
            }
            u += 1e-5;
        }
        let z = prox1(&p, 3.0, 1.0);
        assert!((z - best_u).abs() < 1e-4);
        assert!((z - 2.0).abs() < 1e-12);
        assert_eq!(prox1(&p, 0.5, 1.0), 0.0);
    }

    #[test]
    fn rejects_norm_prior_on_box() {
        let r = NodePrior::new(
            Regularizer::DistanceToPoint {
                weight: 1.0,
                center: vec![0.0],
            },
            ConstraintSet::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            },
        );
        assert!(matches!(r, Err(Error::UnsupportedPrior(_))));
    }

    #[test]
    fn subgradient_distance_on_box_faces() {
        let p = NodePrior::unit_box(2);
        // interior: plain norm
        assert!((p.subgradient_distance(&[0.5, 0.5], &[3.0, 4.0]) - 5.0).abs() < 1e-15);
        // on the lower face the cone absorbs negative components
        assert_eq!(p.subgradient_distance(&[0.0, 0.5], &[-2.0, 0.0]), 0.0);
        assert_eq!(p.subgradient_distance(&[0.0, 0.5], &[2.0, 0.0]), 2.0);
        assert_eq!(p.subgradient_distance(&[1.0, 1.0], &[2.0, 7.0]), 0.0);
        assert_eq!(
            NodePrior::point(vec![0.1, 0.1]).subgradient_distance(&[0.1, 0.1], &[9.0, 9.0]),
            0.0
        );
    }

    #[test]
    fn h_is_infinite_outside_set() {
        assert_eq!(NodePrior::unit_box(1).h(&[0.5]), 0.0);
        assert!(NodePrior::unit_box(1).h(&[1.5]).is_infinite());
    }
}
