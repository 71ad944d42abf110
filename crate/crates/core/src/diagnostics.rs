//! Lagrangian evaluation, step-size feasibility, stationarity residuals and
//! localization accuracy.

use crate::engine::{AgentState, Variant};
use crate::error::{check_dim, Error, Result};
use crate::problem::{norm, Problem};

fn pair_terms(states: &[AgentState], k: usize) -> f64 {
    let s = &states[k];
    let mut acc = 0.0;
    for (slot, &j) in s.neighborhood.iter().enumerate() {
        let x = s.block(&s.x, slot);
        let y = s.block(&s.y, slot);
        let z = &states[j].z;
        for c in 0..s.dim {
            let r = x[c] - z[c];
            acc += y[c] * r + 0.5 * s.rho * r * r;
        }
    }
    acc
}

/// `Σ_k g_k(x_k) + h_k(z_k) + Σ_{j∈N_k} ⟨y_kj, x_kj − z_j⟩ + (ρ_k/2)‖x_kj − z_j‖²`,
/// grouped by the node owning the copies.
pub fn augmented_lagrangian<P: Problem + ?Sized>(states: &[AgentState], problem: &P) -> f64 {
    (0..states.len())
        .map(|k| {
            problem.eval_g(k, &states[k].x) + problem.h(k, &states[k].z) + pair_terms(states, k)
        })
        .sum()
}

/// Same value with the coupling terms grouped by the consensus block they touch.
pub fn augmented_lagrangian_by_consensus<P: Problem + ?Sized>(
    states: &[AgentState],
    problem: &P,
) -> f64 {
    let mut total = 0.0;
    for j in 0..states.len() {
        let z = &states[j].z;
        let mut coupling = 0.0;
        for &k in &states[j].neighborhood {
            let s = &states[k];
            let slot = s
                .neighborhood
                .binary_search(&j)
                .expect("symmetric neighborhoods");
            let x = s.block(&s.x, slot);
            let y = s.block(&s.y, slot);
            for c in 0..s.dim {
                let r = x[c] - z[c];
                coupling += y[c] * r + 0.5 * s.rho * r * r;
            }
        }
        total += problem.eval_g(j, &states[j].x) + coupling + problem.h(j, z);
    }
    total
}

/// Step-size feasibility margins for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCheck {
    pub alpha: f64,
    pub beta: f64,
    pub variant: Variant,
}

impl ParamCheck {
    pub fn feasible(&self) -> bool {
        self.alpha > 0.0 && self.beta > 0.0
    }
}

/// Inputs to the feasibility margins of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    pub lipschitz: f64,
    pub frequency: f64,
    pub max_staleness: usize,
    pub neighborhood_size: usize,
}

pub fn alpha_beta(rho: f64, p: NodeParams, variant: Variant) -> ParamCheck {
    let l = p.lipschitz;
    let f = p.frequency;
    let t = p.max_staleness as f64;
    let n = p.neighborhood_size as f64;
    let (alpha, beta) = match variant {
        Variant::Proximal => {
            let spread = n * l * l * (t + 1.0) * (t + 1.0);
            let alpha = rho * f / 2.0
                - 7.0 * l / (2.0 * rho * rho) * spread
                - spread / rho
                - n * l * t * t / 2.0;
            (alpha, rho - 7.0 * l)
        }
        Variant::Majorized => {
            let spread = l * l * (t + 1.0) * (t + 1.0);
            let alpha = n
                * (rho * f / 2.0 - 8.0 * l / (rho * rho) * spread - spread / rho - l * t * t / 2.0);
            (alpha, (rho - 9.0 * l) / 2.0 - 8.0 * l * l * l / (rho * rho))
        }
    };
    ParamCheck {
        alpha,
        beta,
        variant,
    }
}

/// Lower edge of the search bracket.
pub const RHO_FLOOR: f64 = 1e-9;

/// Smallest feasible `ρ` to relative precision `1e-6`. Both margins increase
/// with `ρ`, so doubling finds a feasible point and bisection narrows it.
pub fn min_feasible_rho(p: NodeParams, variant: Variant) -> f64 {
    let feasible = |rho: f64| alpha_beta(rho, p, variant).feasible();
    if feasible(RHO_FLOOR) {
        return RHO_FLOOR;
    }
    let mut lo = RHO_FLOOR;
    let mut hi = 1.0;
    while !feasible(hi) {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Floor on the augmented Lagrangian: `P − Σ_k (L_k/2) Σ_{j∈N_k} diam²(X_j)`,
/// where `best_objective` stands in for `P`.
pub fn lagrangian_lower_bound<P: Problem + ?Sized>(
    problem: &P,
    best_objective: f64,
    diameter: impl Fn(usize) -> f64,
) -> f64 {
    let topo = problem.topology();
    let slack: f64 = (0..topo.num_nodes())
        .map(|k| {
            let spread: f64 = topo
                .neighborhood(k)
                .iter()
                .map(|&j| diameter(j).powi(2))
                .sum();
            0.5 * problem.lipschitz(k) * spread
        })
        .sum();
    best_objective - slack
}

/// First-order residuals at the current iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    /// `max_k ‖∇g_k(x_k) + y_k‖`.
    pub r_grad: f64,
    /// `max_k dist(Σ_{j∈N_k} y_jk, ∂h_k(z_k) + N_{X_k}(z_k))`; `None` if any node
    /// cannot characterize its subdifferential.
    pub r_subgrad: Option<f64>,
    /// `max_{k,j} ‖x_kj − z_j‖`.
    pub r_feas: f64,
}

pub fn stationarity_residuals<P: Problem + ?Sized>(
    states: &[AgentState],
    problem: &P,
) -> Stationarity {
    let mut r_grad: f64 = 0.0;
    let mut r_subgrad = Some(0.0f64);
    let mut r_feas: f64 = 0.0;
    for (k, s) in states.iter().enumerate() {
        let mut g = vec![0.0; s.x.len()];
        problem.grad_g(k, &s.x, &mut g);
        let res: Vec<f64> = g.iter().zip(&s.y).map(|(a, b)| a + b).collect();
        r_grad = r_grad.max(norm(&res));

        let mut dual_sum = vec![0.0; s.dim];
        for &j in &s.neighborhood {
            let other = &states[j];
            let slot = other
                .neighborhood
                .binary_search(&k)
                .expect("symmetric neighborhoods");
            for (acc, v) in dual_sum.iter_mut().zip(other.block(&other.y, slot)) {
                *acc += v;
            }
        }
        r_subgrad = match (r_subgrad, problem.subgradient_distance(k, &s.z, &dual_sum)) {
            (Some(best), Some(d)) => Some(best.max(d)),
            _ => None,
        };

        for (slot, &j) in s.neighborhood.iter().enumerate() {
            let diff: Vec<f64> = s
                .block(&s.x, slot)
                .iter()
                .zip(&states[j].z)
                .map(|(a, b)| a - b)
                .collect();
            r_feas = r_feas.max(norm(&diff));
        }
    }
    Stationarity {
        r_grad,
        r_subgrad,
        r_feas,
    }
}

/// `√(Σ_runs ‖X̂ − X*‖_F² / Σ_runs ‖X*‖_F²)` over flattened configurations.
pub fn nrmse(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    check_dim(truths.len(), estimates.len(), "runs")?;
    let mut err = 0.0;
    let mut scale = 0.0;
    for (est, truth) in estimates.iter().zip(truths) {
        check_dim(truth.len(), est.len(), "configuration")?;
        err += squared_error(est, truth);
        scale += truth.iter().map(|v| v * v).sum::<f64>();
    }
    if scale == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((err / scale).sqrt())
}

pub fn squared_error(est: &[f64], truth: &[f64]) -> f64 {
    est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub lagrangian: f64,
    pub psi: f64,
    pub phi: f64,
    pub r_grad: f64,
    pub r_subgrad: Option<f64>,
    pub r_feas: f64,
    pub nrmse: Option<f64>,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "iter,lagrangian,psi,phi,r_grad,r_subgrad,r_feas,nrmse";

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iteration,
            self.lagrangian,
            self.psi,
            self.phi,
            self.r_grad,
            opt(self.r_subgrad),
            self.r_feas,
            opt(self.nrmse)
        )
    }
}
