//! The iteration engine.
//!
//! Every node `k` keeps copies `x_kj` and duals `y_kj` for each `j ∈ N_k`, its own
//! consensus block `z_k`, the latest `z_j` it has heard from each neighbor, and a
//! short cache of gradients (or surrogate expansion points) stamped with the
//! iteration they were taken at. A round runs in two sub-slots: gated consensus
//! updates first, then primal and dual updates at every node.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::problem::{norm, Problem, Surrogate};
use crate::schedule::oldest_admissible;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Linearized x-update using a possibly stale gradient.
    Proximal,
    /// Exact minimization of a convex majorizer built at a possibly stale point.
    Majorized,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proximal" => Ok(Self::Proximal),
            "majorized" => Ok(Self::Majorized),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Proximal => "proximal",
            Self::Majorized => "majorized",
        })
    }
}

/// Schedule for one round. All vectors are indexed by node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundInput {
    /// `t ≥ 1`; the round produces iterate `t + 1`.
    pub iteration: usize,
    pub awake: Vec<bool>,
    /// Stamp `[t+1]_k` of the gradient node `k` should use.
    pub staleness_pick: Vec<usize>,
    pub send_xy: Vec<bool>,
    pub send_z: Vec<bool>,
}

impl RoundInput {
    pub fn synchronous(iteration: usize, num_nodes: usize) -> Self {
        Self {
            iteration,
            awake: vec![true; num_nodes],
            staleness_pick: vec![iteration + 1; num_nodes],
            send_xy: vec![true; num_nodes],
            send_z: vec![true; num_nodes],
        }
    }
}

/// What node `j` hears from a neighbor `k` in the first sub-slot: `ρ_k x_kj + y_kj`.
#[derive(Debug, Clone, PartialEq)]
pub struct XyMessage {
    pub rho: f64,
    pub payload: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub stamp: usize,
    /// The stacked consensus values `z_k^{[stamp]}` the entry was taken at.
    pub point: Vec<f64>,
    /// `∇g_k(point)`; absent for the majorized variant.
    pub gradient: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub node: usize,
    /// `N_k`, sorted; slot `i` of every stacked vector belongs to `neighborhood[i]`.
    pub neighborhood: Vec<usize>,
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Latest consensus value received from each member of `N_k`.
    pub z_view: Vec<f64>,
    pub rho: f64,
    pub max_staleness: usize,
    cache: VecDeque<CacheEntry>,
    used_stamp: usize,
}

impl AgentState {
    pub fn block<'a>(&self, v: &'a [f64], slot: usize) -> &'a [f64] {
        &v[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn cache(&self) -> impl Iterator<Item = &CacheEntry> {
        self.cache.iter()
    }

    /// Cache entry that fed the most recent x-update.
    pub fn last_used(&self) -> &CacheEntry {
        self.cache
            .iter()
            .find(|e| e.stamp == self.used_stamp)
            .expect("used entry is retained until the next round")
    }
}

/// Gated consensus update. Returns `None` when the node is asleep or some member
/// of its neighborhood stayed silent, in which case `z_k` keeps its value.
pub fn z_update<F>(
    current: &[f64],
    awake: bool,
    inbox: &[Option<XyMessage>],
    prox: F,
) -> Result<Option<Vec<f64>>>
where
    F: FnOnce(&[f64], f64) -> Vec<f64>,
{
    for msg in inbox.iter().flatten() {
        check_dim(current.len(), msg.payload.len(), "consensus message")?;
    }
    if !awake || inbox.iter().any(Option::is_none) {
        return Ok(None);
    }
    let mut acc = vec![0.0; current.len()];
    let mut total_rho = 0.0;
    for msg in inbox.iter().flatten() {
        for (a, p) in acc.iter_mut().zip(&msg.payload) {
            *a += p;
        }
        total_rho += msg.rho;
    }
    for a in &mut acc {
        *a /= total_rho;
    }
    let z = prox(&acc, total_rho);
    check_dim(current.len(), z.len(), "proximal output")?;
    Ok(Some(z))
}

/// `x_kj = z_j − (g_j + y_kj)/ρ` with `g` taken at iteration `stamp`.
#[allow(clippy::too_many_arguments)]
pub fn x_update_proximal(
    z_fresh: &[f64],
    gradient: &[f64],
    stamp: usize,
    y: &[f64],
    rho: f64,
    iteration: usize,
    max_staleness: usize,
    out: &mut [f64],
) -> Result<()> {
    check_dim(z_fresh.len(), gradient.len(), "stale gradient")?;
    check_dim(z_fresh.len(), y.len(), "duals")?;
    let oldest = oldest_admissible(iteration, max_staleness);
    if stamp < oldest || stamp > iteration + 1 {
        return Err(Error::Schedule {
            node: usize::MAX,
            reason: format!(
                "gradient stamp {stamp} outside [{oldest}, {}]",
                iteration + 1
            ),
        });
    }
    for i in 0..out.len() {
        out[i] = z_fresh[i] - (gradient[i] + y[i]) / rho;
    }
    Ok(())
}

/// Minimizes the node's surrogate plus the linear and quadratic coupling terms.
pub fn x_update_majorized(
    surrogate: &dyn Surrogate,
    node: usize,
    at: &[f64],
    z_fresh: &[f64],
    y: &[f64],
    rho: f64,
    out: &mut [f64],
) -> Result<()> {
    check_dim(z_fresh.len(), at.len(), "surrogate expansion point")?;
    check_dim(z_fresh.len(), y.len(), "duals")?;
    surrogate.minimize(node, at, z_fresh, y, rho, out)
}

/// `y_kj ← y_kj + ρ(x_kj − z_j)`.
pub fn dual_update(x: &[f64], z_fresh: &[f64], rho: f64, y: &mut [f64]) {
    for i in 0..y.len() {
        y[i] += rho * (x[i] - z_fresh[i]);
    }
}

/// Per-round movement summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub iteration: usize,
    pub z_updated: Vec<bool>,
    pub refreshed: Vec<bool>,
    /// `‖x_k^{t+1} − x_k^t‖` per node.
    pub dx: Vec<f64>,
    /// `‖z_k^{t+1} − z_k^t‖` per node.
    pub dz: Vec<f64>,
    /// `‖z^{t+1} − z^t‖` over all blocks.
    pub psi: f64,
    /// `‖(1/K) Σ_k (x_k^{t+1} − x_k^t)‖_F` with copies placed at their owners' rows.
    pub phi: f64,
}

impl RoundReport {
    pub fn max_dx(&self) -> f64 {
        self.dx.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dz(&self) -> f64 {
        self.dz.iter().copied().fold(0.0, f64::max)
    }
}

/// True iff every round in `window` moved each node's copies and consensus block
/// by at most `delta`.
pub fn check_stop(window: &[RoundReport], delta: f64) -> bool {
    !window.is_empty()
        && window
            .iter()
            .all(|r| r.max_dx() <= delta && r.max_dz() <= delta)
}

#[derive(Debug, Clone)]
pub struct EngineParams {
    pub rho: Vec<f64>,
    pub max_staleness: Vec<usize>,
    pub variant: Variant,
}

impl EngineParams {
    pub fn uniform(num_nodes: usize, rho: f64, max_staleness: usize, variant: Variant) -> Self {
        Self {
            rho: vec![rho; num_nodes],
            max_staleness: vec![max_staleness; num_nodes],
            variant,
        }
    }
}

/// Starting consensus values drawn from each `X_k` with a dedicated seed.
pub fn initial_consensus<P: Problem + ?Sized>(problem: &P, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..problem.num_nodes())
        .map(|k| problem.initial_point(k, &mut rng))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Engine<P> {
    problem: P,
    variant: Variant,
    states: Vec<AgentState>,
    /// `mirror[j][i]`: slot of `j` inside `N_k` for `k = N_j[i]`.
    mirror: Vec<Vec<usize>>,
    iteration: usize,
}

impl<P: Problem> Engine<P> {
    pub fn new(problem: P, params: EngineParams, seed: u64) -> Result<Self> {
        let z0 = initial_consensus(&problem, seed);
        Self::with_initial(problem, params, z0)
    }

    /// Starts from `x_kj = z_j`, `y_kj = 0`.
    pub fn with_initial(problem: P, params: EngineParams, z0: Vec<Vec<f64>>) -> Result<Self> {
        let n = problem.num_nodes();
        let d = problem.block_dim();
        check_dim(n, params.rho.len(), "penalty parameters")?;
        check_dim(n, params.max_staleness.len(), "staleness bounds")?;
        check_dim(n, z0.len(), "initial consensus")?;
        if params.variant == Variant::Majorized && problem.surrogate().is_none() {
            return Err(Error::NoSurrogate);
        }
        for (k, &rho) in params.rho.iter().enumerate() {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Config(format!(
                    "rho of node {k} must be positive, got {rho}"
                )));
            }
        }
        for z in &z0 {
            check_dim(d, z.len(), "initial consensus block")?;
        }
        let topo = problem.topology();
        let mirror = (0..n)
            .map(|j| {
                topo.neighborhood(j)
                    .iter()
                    .map(|&k| topo.slot(k, j).expect("neighborhoods are symmetric"))
                    .collect()
            })
            .collect();
        let states = (0..n)
            .map(|k| {
                let neighborhood = topo.neighborhood(k).to_vec();
                let stacked: Vec<f64> = neighborhood
                    .iter()
                    .flat_map(|&j| z0[j].iter().copied())
                    .collect();
                let gradient = match params.variant {
                    Variant::Proximal => {
                        let mut g = vec![0.0; stacked.len()];
                        problem.grad_g(k, &stacked, &mut g);
                        Some(g)
                    }
                    Variant::Majorized => None,
                };
                let mut cache = VecDeque::new();
                cache.push_back(CacheEntry {
                    stamp: 1,
                    point: stacked.clone(),
                    gradient,
                });
                AgentState {
                    node: k,
                    neighborhood,
                    dim: d,
                    x: stacked.clone(),
                    y: vec![0.0; stacked.len()],
                    z: z0[k].clone(),
                    z_view: stacked,
                    rho: params.rho[k],
                    max_staleness: params.max_staleness[k],
                    cache,
                    used_stamp: 1,
                }
            })
            .collect();
        Ok(Self {
            problem,
            variant: params.variant,
            states,
            mirror,
            iteration: 1,
        })
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Index `t` of the current iterate.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn consensus(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.z.clone()).collect()
    }

    fn validate(&self, input: &RoundInput) -> Result<()> {
        let n = self.states.len();
        check_dim(n, input.awake.len(), "awake set")?;
        check_dim(n, input.staleness_pick.len(), "staleness picks")?;
        check_dim(n, input.send_xy.len(), "x/y send set")?;
        check_dim(n, input.send_z.len(), "z send set")?;
        if input.iteration != self.iteration {
            return Err(Error::Schedule {
                node: usize::MAX,
                reason: format!(
                    "round input is for iteration {}, engine is at {}",
                    input.iteration, self.iteration
                ),
            });
        }
        let t = self.iteration;
        for (k, s) in self.states.iter().enumerate() {
            let pick = input.staleness_pick[k];
            let oldest = oldest_admissible(t, s.max_staleness);
            if pick < oldest || pick > t + 1 {
                return Err(Error::Schedule {
                    node: k,
                    reason: format!("stamp {pick} outside [{oldest}, {}]", t + 1),
                });
            }
        }
        Ok(())
    }

    /// Executes one round and advances the iteration counter.
    pub fn run_round(&mut self, input: &RoundInput) -> Result<RoundReport> {
        self.validate(input)?;
        let t = self.iteration;
        let n = self.states.len();
        let d = self.problem.block_dim();

        // first sub-slot: gated consensus updates from iterate t
        let mut fresh: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
        for j in 0..n {
            let own = &self.states[j];
            let inbox: Vec<Option<XyMessage>> = own
                .neighborhood
                .iter()
                .zip(&self.mirror[j])
                .map(|(&k, &slot)| {
                    (k == j || input.send_xy[k]).then(|| {
                        let sender = &self.states[k];
                        let x = sender.block(&sender.x, slot);
                        let y = sender.block(&sender.y, slot);
                        XyMessage {
                            rho: sender.rho,
                            payload: x.iter().zip(y).map(|(x, y)| sender.rho * x + y).collect(),
                        }
                    })
                })
                .collect();
            let problem = &self.problem;
            let updated = z_update(&own.z, input.awake[j], &inbox, |v, w| {
                let mut out = vec![0.0; v.len()];
                problem.prox(j, v, w, &mut out);
                out
            })?;
            fresh.push(updated);
        }

        let mut dz = vec![0.0; n];
        for (j, z) in fresh.iter().enumerate() {
            if let Some(z) = z {
                let state = &mut self.states[j];
                dz[j] = norm(
                    &z.iter()
                        .zip(&state.z)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                );
                state.z.copy_from_slice(z);
            }
        }
        // transmissions; silent neighbors are held at their previous value
        for k in 0..n {
            let state = &mut self.states[k];
            for (slot, &j) in state.neighborhood.iter().enumerate() {
                let heard = j == k || input.send_z[j];
                if let (true, Some(z)) = (heard, &fresh[j]) {
                    state.z_view[slot * d..(slot + 1) * d].copy_from_slice(z);
                }
            }
        }

        // second sub-slot: gradient bookkeeping, primal and dual updates
        let mut refreshed = vec![false; n];
        let mut dx = vec![0.0; n];
        let mut phi_acc = vec![0.0; n * d];
        for k in 0..n {
            let variant = self.variant;
            let problem = &self.problem;
            let state = &mut self.states[k];
            let oldest = oldest_admissible(t, state.max_staleness);
            state.cache.retain(|e| e.stamp >= oldest);
            let pick = input.staleness_pick[k];
            let reuse = if pick == t + 1 {
                None
            } else {
                state
                    .cache
                    .iter()
                    .rev()
                    .find(|e| e.stamp <= pick)
                    .map(|e| e.stamp)
            };
            let stamp = match reuse {
                Some(s) => s,
                None => {
                    let gradient = match variant {
                        Variant::Proximal => {
                            let mut g = vec![0.0; state.z_view.len()];
                            problem.grad_g(k, &state.z_view, &mut g);
                            Some(g)
                        }
                        Variant::Majorized => None,
                    };
                    state.cache.push_back(CacheEntry {
                        stamp: t + 1,
                        point: state.z_view.clone(),
                        gradient,
                    });
                    refreshed[k] = true;
                    t + 1
                }
            };
            state.used_stamp = stamp;
            let entry = state
                .cache
                .iter()
                .find(|e| e.stamp == stamp)
                .expect("entry was just selected");
            let mut x_new = vec![0.0; state.x.len()];
            let outcome = match variant {
                Variant::Proximal => x_update_proximal(
                    &state.z_view,
                    entry
                        .gradient
                        .as_deref()
                        .expect("proximal cache holds gradients"),
                    stamp,
                    &state.y,
                    state.rho,
                    t,
                    state.max_staleness,
                    &mut x_new,
                ),
                Variant::Majorized => x_update_majorized(
                    problem.surrogate().expect("checked at construction"),
                    k,
                    &entry.point,
                    &state.z_view,
                    &state.y,
                    state.rho,
                    &mut x_new,
                ),
            };
            outcome.map_err(|e| match e {
                Error::Schedule { reason, .. } => Error::Schedule { node: k, reason },
                other => other,
            })?;
            let mut sq = 0.0;
            for (slot, &j) in state.neighborhood.iter().enumerate() {
                for c in 0..d {
                    let i = slot * d + c;
                    let step = x_new[i] - state.x[i];
                    sq += step * step;
                    phi_acc[j * d + c] += step;
                }
            }
            dx[k] = sq.sqrt();
            state.x = x_new;
            dual_update(&state.x, &state.z_view, state.rho, &mut state.y);
        }

        self.iteration += 1;
        let psi = dz.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phi = norm(&phi_acc) / n as f64;
        Ok(RoundReport {
            iteration: t,
            z_updated: fresh.iter().map(Option::is_some).collect(),
            refreshed,
            dx,
            dz,
            psi,
            phi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::NodePrior;
    use crate::quadratic::QuadraticProblem;
    use crate::topology::Topology;

    fn msg(rho: f64, x: &[f64], y: &[f64]) -> Option<XyMessage> {
        Some(XyMessage {
            rho,
            payload: x.iter().zip(y).map(|(x, y)| rho * x + y).collect(),
        })
    }

    fn identity(v: &[f64], _w: f64) -> Vec<f64> {
        v.to_vec()
    }

    #[test]
    fn z_update_single_contributor() {
        let z = z_update(
            &[0.0, 0.0],
            true,
            &[msg(2.0, &[1.0, 1.0], &[0.0, 0.0])],
            identity,
        )
        .unwrap()
        .unwrap();
        assert_eq!(z, vec![1.0, 1.0]);
    }

    #[test]
    fn z_update_arithmetic_mean() {
        let inbox = [msg(1.0, &[0.0], &[0.0]), msg(1.0, &[2.0], &[0.0])];
        assert_eq!(
            z_update(&[5.0], true, &inbox, identity).unwrap(),
            Some(vec![1.0])
        );
    }

    #[test]
    fn z_update_projects_onto_interval() {
        let prior = NodePrior::new(
            crate::problem::Regularizer::Zero,
            crate::problem::ConstraintSet::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            },
        )
        .unwrap();
        let inbox = [msg(1.0, &[1.5], &[0.0])];
        let z = z_update(&[0.0], true, &inbox, |v, w| {
            let mut out = vec![0.0];
            prior.prox(v, w, &mut out);
            out
        })
        .unwrap();
        assert_eq!(z, Some(vec![1.0]));
    }

    #[test]
    fn z_update_norm_prior() {
        let prior = NodePrior::new(
            crate::problem::Regularizer::DistanceToPoint {
                weight: 1.0,
                center: vec![0.0],
            },
            crate::problem::ConstraintSet::Free,
        )
        .unwrap();
        let inbox = [msg(1.0, &[3.0], &[0.0])];
        let z = z_update(&[0.0], true, &inbox, |v, w| {
            let mut out = vec![0.0];
            prior.prox(v, w, &mut out);
            out
        })
        .unwrap()
        .unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn z_update_gate_closed() {
        let inbox = [msg(1.0, &[1.0], &[0.0]), None];
        assert_eq!(z_update(&[7.0], true, &inbox, identity).unwrap(), None);
        let full = [msg(1.0, &[1.0], &[0.0])];
        assert_eq!(z_update(&[7.0], false, &full, identity).unwrap(), None);
    }

    #[test]
    fn z_update_dimension_mismatch_is_fatal() {
        let inbox = [msg(1.0, &[1.0, 2.0], &[0.0, 0.0])];
        assert!(matches!(
            z_update(&[0.0], true, &inbox, identity),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn x_update_fixed_point_and_direct_formula() {
        let mut out = [0.0; 2];
        x_update_proximal(
            &[0.3, -0.2],
            &[0.0, 0.0],
            2,
            &[0.0, 0.0],
            5.0,
            1,
            0,
            &mut out,
        )
        .unwrap();
        assert_eq!(out, [0.3, -0.2]);
        let mut out = [9.0];
        x_update_proximal(&[1.0], &[1.0], 2, &[1.0], 2.0, 1, 0, &mut out).unwrap();
        assert_eq!(out, [0.0]);
    }

    #[test]
    fn x_update_on_half_squared_norm() {
        let z = [2.0, 2.0];
        let grad = z; // ∇(½‖x‖²) at z
        let mut out = [0.0; 2];
        x_update_proximal(&z, &grad, 2, &[0.0, 0.0], 4.0, 1, 0, &mut out).unwrap();
        assert_eq!(out, [1.5, 1.5]);
    }

    #[test]
    fn x_update_rejects_too_old_gradient() {
        let mut out = [0.0];
        let r = x_update_proximal(&[0.0], &[0.0], 3, &[0.0], 1.0, 10, 4, &mut out);
        assert!(matches!(r, Err(Error::Schedule { .. })));
        assert!(x_update_proximal(&[0.0], &[0.0], 7, &[0.0], 1.0, 10, 4, &mut out).is_ok());
    }

    #[test]
    fn dual_update_cases() {
        let mut y = [0.7];
        dual_update(&[1.0], &[1.0], 3.0, &mut y);
        assert_eq!(y, [0.7]);
        let mut y = [0.0];
        dual_update(&[1.5], &[1.0], 2.0, &mut y);
        assert_eq!(y, [1.0]);
    }

    struct ConstantSurrogate;

    impl Surrogate for ConstantSurrogate {
        fn eval(&self, _k: usize, _x: &[f64], _at: &[f64]) -> f64 {
            4.2
        }
        fn grad_x(&self, _k: usize, _x: &[f64], _at: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn minimize(
            &self,
            _k: usize,
            _at: &[f64],
            z: &[f64],
            y: &[f64],
            rho: f64,
            out: &mut [f64],
        ) -> Result<()> {
            for i in 0..out.len() {
                out[i] = z[i] - y[i] / rho;
            }
            Ok(())
        }
    }

    #[test]
    fn majorized_update_with_constant_surrogate_returns_consensus() {
        let mut out = [0.0; 3];
        let z = [0.1, 0.2, 0.3];
        x_update_majorized(&ConstantSurrogate, 0, &z, &z, &[0.0; 3], 2.0, &mut out).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn majorized_update_on_half_squared_norm() {
        let p = QuadraticProblem::new(Topology::new(1, []).unwrap(), 1, vec![vec![0.0]]).unwrap();
        let mut out = [3.0];
        x_update_majorized(&p, 0, &[0.0], &[0.0], &[0.0], 1.0, &mut out).unwrap();
        assert_eq!(out, [0.0]);
    }

    #[test]
    fn check_stop_cases() {
        let report = |step: f64| RoundReport {
            iteration: 1,
            z_updated: vec![true],
            refreshed: vec![true],
            dx: vec![step],
            dz: vec![step],
            psi: step,
            phi: step,
        };
        assert!(check_stop(&[report(0.0)], 1e-9));
        assert!(!check_stop(&[report(1e-3)], 1e-6));
        assert!(!check_stop(&[report(0.0), report(1e-3)], 1e-6));
        assert!(!check_stop(&[], 1.0));
    }

    #[test]
    fn quadratic_run_meets_stop_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = QuadraticProblem::random(Topology::ring(10), 2, &mut rng);
        let mut engine =
            Engine::new(p, EngineParams::uniform(10, 7.0, 0, Variant::Proximal), 4).unwrap();
        let stopped = (1..=500).find(|&t| {
            let report = engine.run_round(&RoundInput::synchronous(t, 10)).unwrap();
            check_stop(&[report], 1e-8)
        });
        assert!(stopped.is_some());
    }

    fn path_problem() -> QuadraticProblem {
        // node 0 in the middle, 1 and 2 hanging off it
        let t = Topology::new(3, [(0, 1), (0, 2)]).unwrap();
        let targets = (0..3)
            .map(|k| vec![0.4 + k as f64; t.neighborhood(k).len()])
            .collect();
        QuadraticProblem::new(t, 1, targets).unwrap()
    }

    #[test]
    fn sleeping_center_freezes_its_neighborhood() {
        let mut engine = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 2.0, 0, Variant::Proximal),
            1,
        )
        .unwrap();
        engine.run_round(&RoundInput::synchronous(1, 3)).unwrap();
        let before = engine.consensus();
        let mut input = RoundInput::synchronous(2, 3);
        input.awake[0] = false;
        input.send_xy[0] = false;
        input.send_z[0] = false;
        let report = engine.run_round(&input).unwrap();
        assert_eq!(engine.consensus(), before);
        assert!(report.z_updated.iter().all(|u| !u));
        assert_eq!(report.psi, 0.0);
    }

    #[test]
    fn leaf_asleep_only_blocks_itself_and_center() {
        let mut engine = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 2.0, 0, Variant::Proximal),
            1,
        )
        .unwrap();
        engine.run_round(&RoundInput::synchronous(1, 3)).unwrap();
        let mut input = RoundInput::synchronous(2, 3);
        input.awake[1] = false;
        input.send_xy[1] = false;
        input.send_z[1] = false;
        let report = engine.run_round(&input).unwrap();
        assert_eq!(report.z_updated, vec![false, false, true]);
    }

    #[test]
    fn silent_neighbor_value_is_held() {
        let mut engine = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 2.0, 0, Variant::Proximal),
            1,
        )
        .unwrap();
        engine.run_round(&RoundInput::synchronous(1, 3)).unwrap();
        let held = engine.states()[0].z_view.clone();
        let mut input = RoundInput::synchronous(2, 3);
        input.send_z[2] = false;
        engine.run_round(&input).unwrap();
        let s0 = &engine.states()[0];
        let slot = 2;
        assert_eq!(s0.z_view[slot], held[slot]);
        assert_ne!(engine.states()[2].z[0], held[slot]);
    }

    #[test]
    fn stale_pick_reuses_cached_gradient() {
        let mut engine = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 2.0, 3, Variant::Proximal),
            1,
        )
        .unwrap();
        let mut input = RoundInput::synchronous(1, 3);
        input.staleness_pick = vec![1, 1, 1];
        let report = engine.run_round(&input).unwrap();
        assert!(report.refreshed.iter().all(|r| !r));
        for s in engine.states() {
            assert_eq!(s.last_used().stamp, 1);
        }
        // a pick that no longer has a cached gradient inside the window forces a refresh
        for t in 2..=4 {
            let mut input = RoundInput::synchronous(t, 3);
            input.staleness_pick = vec![(t + 1).saturating_sub(3).max(1); 3];
            engine.run_round(&input).unwrap();
        }
        for s in engine.states() {
            let t = engine.iteration();
            assert!(s
                .cache()
                .all(|e| e.stamp + s.max_staleness >= t && e.stamp <= t));
        }
    }

    #[test]
    fn schedule_violations_are_reported() {
        let mut engine = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 2.0, 1, Variant::Proximal),
            1,
        )
        .unwrap();
        for t in 1..=3 {
            engine.run_round(&RoundInput::synchronous(t, 3)).unwrap();
        }
        let mut input = RoundInput::synchronous(4, 3);
        input.staleness_pick[1] = 2;
        assert!(matches!(
            engine.run_round(&input),
            Err(Error::Schedule { node: 1, .. })
        ));
        assert!(engine.run_round(&RoundInput::synchronous(7, 3)).is_err());
    }

    #[test]
    fn rejects_nonpositive_rho() {
        let r = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 0.0, 0, Variant::Proximal),
            1,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn state_keys_match_neighborhoods() {
        let engine = Engine::new(
            path_problem(),
            EngineParams::uniform(3, 1.0, 0, Variant::Majorized),
            3,
        )
        .unwrap();
        for s in engine.states() {
            let expected = engine.problem().topology().neighborhood(s.node);
            assert_eq!(s.neighborhood, expected);
            assert_eq!(s.x.len(), expected.len());
            assert_eq!(s.y.len(), expected.len());
            assert!(s.y.iter().all(|v| *v == 0.0));
        }
    }
}
