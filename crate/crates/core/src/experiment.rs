//! Monte Carlo orchestration: instance generation, per-replicate runs, sweeps and
//! CSV output.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ProblemKind, RhoPolicy, RunConfig};
use crate::diagnostics::{
    alpha_beta, augmented_lagrangian, min_feasible_rho, nrmse, squared_error,
    stationarity_residuals, NodeParams, TraceRecord,
};
use crate::engine::{check_stop, initial_consensus, Engine, EngineParams, RoundReport};
use crate::error::{Error, Result};
use crate::localization::LocalizationInstance;
use crate::problem::Problem;
use crate::quadratic::QuadraticProblem;
use crate::reference::SynchronousAdmm;
use crate::schedule::{AsynchronyModel, Scheduler};
use crate::topology::generate_geometric_graph;

/// Independent seeds for the three random streams of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateSeeds {
    pub network: u64,
    pub init: u64,
    pub schedule: u64,
}

impl ReplicateSeeds {
    pub fn derive(seed: u64, replicate: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate as u64);
        Self {
            network: rng.next_u64(),
            init: rng.next_u64(),
            schedule: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Instance {
    Quadratic(QuadraticProblem),
    Localization(LocalizationInstance),
}

impl Instance {
    pub fn generate(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match cfg.problem {
            ProblemKind::Quadratic => {
                let graph = generate_geometric_graph(cfg.nodes, cfg.range, false, &mut rng)?;
                Ok(Self::Quadratic(QuadraticProblem::random(
                    graph.topology,
                    cfg.dim,
                    &mut rng,
                )))
            }
            ProblemKind::Localization => Ok(Self::Localization(LocalizationInstance::generate(
                cfg.nodes,
                cfg.range,
                cfg.anchors,
                cfg.noise,
                cfg.epsilon,
                &mut rng,
            )?)),
        }
    }

    /// Text export: the full instance for localization, the edge list otherwise.
    pub fn to_text(&self) -> String {
        match self {
            Self::Quadratic(p) => p.topology().to_edge_list(),
            Self::Localization(inst) => inst.to_text(),
        }
    }
}

/// Feasibility of one node's penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub node: usize,
    pub neighborhood: usize,
    pub lipschitz: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub feasible: bool,
    pub min_feasible_rho: f64,
}

impl NodeReport {
    pub const CSV_HEADER: &'static str =
        "node,neighborhood,lipschitz,rho,alpha,beta,feasible,min_feasible_rho";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.node,
            self.neighborhood,
            self.lipschitz,
            self.rho,
            self.alpha,
            self.beta,
            self.feasible,
            self.min_feasible_rho
        )
    }
}

/// Per-node `(L_k, ρ_k, α_k, β_k, feasible, ρ_min)` under `cfg`'s penalty policy.
pub fn check_params<P: Problem + ?Sized>(problem: &P, cfg: &RunConfig) -> Vec<NodeReport> {
    let topo = problem.topology();
    (0..topo.num_nodes())
        .map(|k| {
            let params = NodeParams {
                lipschitz: cfg.lipschitz.unwrap_or_else(|| problem.lipschitz(k)),
                frequency: cfg.frequency,
                max_staleness: cfg.max_staleness,
                neighborhood_size: topo.neighborhood(k).len(),
            };
            let min_rho = min_feasible_rho(params, cfg.variant);
            let rho = match cfg.rho {
                RhoPolicy::Auto => min_rho,
                RhoPolicy::Fixed(rho) => rho,
            };
            let check = alpha_beta(rho, params, cfg.variant);
            NodeReport {
                node: k,
                neighborhood: params.neighborhood_size,
                lipschitz: params.lipschitz,
                rho,
                alpha: check.alpha,
                beta: check.beta,
                feasible: check.feasible(),
                min_feasible_rho: min_rho,
            }
        })
        .collect()
}

/// Everything recorded about one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub index: usize,
    pub seeds: ReplicateSeeds,
    pub params: Vec<NodeReport>,
    pub trace: Vec<TraceRecord>,
    /// `‖X̂ − X*‖²` after each round.
    pub squared_error: Vec<f64>,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub iterations_to_threshold: Option<usize>,
    pub reference_match: Option<bool>,
}

impl ReplicateResult {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.trace.last()
    }

    pub fn final_nrmse(&self) -> Result<f64> {
        nrmse(
            std::slice::from_ref(&self.estimate),
            std::slice::from_ref(&self.truth),
        )
    }
}

/// Fewest rounds over which the stop rule and the threshold test must hold. Both
/// also require every node to have updated its consensus block in that span, and
/// the stop rule additionally bounds the stacked movement `ψ` by `δ`.
pub fn stop_window(cfg: &RunConfig) -> usize {
    if cfg.max_staleness == 0 && cfg.frequency == 1.0 {
        1
    } else {
        2 * (cfg.max_staleness + 1) * (1.0 / cfg.frequency).ceil() as usize
    }
}

pub fn run_replicate(cfg: &RunConfig, index: usize) -> Result<ReplicateResult> {
    let seeds = ReplicateSeeds::derive(cfg.seed, index);
    match Instance::generate(cfg, seeds.network)? {
        Instance::Quadratic(problem) => {
            let truth = problem.optimum().concat();
            drive(problem, truth, cfg, index, seeds)
        }
        Instance::Localization(inst) => {
            let mut problem = inst.problem()?;
            if let Some(l) = cfg.lipschitz {
                problem = problem.with_lipschitz(l);
            }
            drive(problem, inst.truth(), cfg, index, seeds)
        }
    }
}

fn drive<P: Problem + Clone>(
    problem: P,
    truth: Vec<f64>,
    cfg: &RunConfig,
    index: usize,
    seeds: ReplicateSeeds,
) -> Result<ReplicateResult> {
    let n = problem.num_nodes();
    let params = check_params(&problem, cfg);
    let rho: Vec<f64> = params.iter().map(|p| p.rho).collect();
    let engine_params = EngineParams {
        rho: rho.clone(),
        max_staleness: vec![cfg.max_staleness; n],
        variant: cfg.variant,
    };
    let z0 = initial_consensus(&problem, seeds.init);
    let mut reference = if cfg.reference_check {
        Some(problem.clone())
    } else {
        None
    };
    let mut reference_run = reference
        .as_mut()
        .map(|p| SynchronousAdmm::new(&*p, rho.clone(), z0.clone()));
    let mut engine = Engine::with_initial(problem, engine_params, z0)?;
    let mut scheduler = Scheduler::new(AsynchronyModel::uniform(
        n,
        cfg.max_staleness,
        cfg.frequency,
        cfg.schedule,
        seeds.schedule,
    ))?;

    let window = stop_window(cfg);
    let mut recent: VecDeque<RoundReport> = VecDeque::with_capacity(window);
    let mut updates_in_window = vec![0usize; n];
    let mut updated_since_above = vec![false; n];
    let truth_scale: f64 = truth.iter().map(|v| v * v).sum();
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut errors = Vec::with_capacity(cfg.max_iter);
    let mut last_above = 0;
    let mut converged = false;
    let mut reference_match = reference_run.as_ref().map(|_| true);

    for t in 1..=cfg.max_iter {
        let report = engine.run_round(&scheduler.draw(t))?;
        if report.psi > cfg.psi_threshold {
            last_above = t;
            updated_since_above.iter_mut().for_each(|u| *u = false);
        } else {
            for (u, &z) in updated_since_above.iter_mut().zip(&report.z_updated) {
                *u |= z;
            }
        }
        if let Some(sync) = reference_run.as_mut() {
            sync.step();
            let same = engine
                .states()
                .iter()
                .zip(&sync.z)
                .all(|(s, z)| s.z.iter().zip(z).all(|(a, b)| a.to_bits() == b.to_bits()));
            if !same {
                reference_match = Some(false);
            }
        }

        let estimate = engine.consensus().concat();
        let err = squared_error(&estimate, &truth);
        errors.push(err);
        let residuals = stationarity_residuals(engine.states(), engine.problem());
        trace.push(TraceRecord {
            iteration: t,
            lagrangian: augmented_lagrangian(engine.states(), engine.problem()),
            psi: report.psi,
            phi: report.phi,
            r_grad: residuals.r_grad,
            r_subgrad: residuals.r_subgrad,
            r_feas: residuals.r_feas,
            nrmse: (truth_scale > 0.0).then(|| (err / truth_scale).sqrt()),
        });

        for (c, &z) in updates_in_window.iter_mut().zip(&report.z_updated) {
            *c += usize::from(z);
        }
        recent.push_back(report);
        // Shrink to the shortest suffix that still spans `window` rounds and
        // one consensus update per node.
        while recent.len() > window {
            let front = &recent[0];
            let keeps_coverage = front
                .z_updated
                .iter()
                .zip(&updates_in_window)
                .all(|(&z, &c)| !z || c > 1);
            if !keeps_coverage {
                break;
            }
            for (c, &z) in updates_in_window.iter_mut().zip(&front.z_updated) {
                *c -= usize::from(z);
            }
            recent.pop_front();
        }
        let covered = updates_in_window.iter().all(|&c| c > 0);
        let still = recent.iter().all(|r| r.psi <= cfg.delta);
        if covered
            && still
            && recent.len() >= window
            && check_stop(recent.make_contiguous(), cfg.delta)
        {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    let settled = iterations - last_above >= window.min(iterations)
        && (last_above == iterations || updated_since_above.iter().all(|&u| u));
    let iterations_to_threshold = (settled && last_above < iterations).then_some(last_above + 1);
    Ok(ReplicateResult {
        index,
        seeds,
        params,
        trace,
        squared_error: errors,
        estimate: engine.consensus().concat(),
        truth,
        iterations,
        converged,
        iterations_to_threshold,
        reference_match,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub replicates: Vec<ReplicateResult>,
}

impl ExperimentResult {
    /// Final-iterate NRMSE pooled over replicates.
    pub fn nrmse(&self) -> Result<f64> {
        let est: Vec<Vec<f64>> = self.replicates.iter().map(|r| r.estimate.clone()).collect();
        let tru: Vec<Vec<f64>> = self.replicates.iter().map(|r| r.truth.clone()).collect();
        nrmse(&est, &tru)
    }

    /// Pooled NRMSE after each round; replicates that stopped early hold their
    /// last value.
    pub fn nrmse_curve(&self) -> Result<Vec<f64>> {
        let len = self
            .replicates
            .iter()
            .map(|r| r.squared_error.len())
            .max()
            .unwrap_or(0);
        let scale: f64 = self
            .replicates
            .iter()
            .map(|r| r.truth.iter().map(|v| v * v).sum::<f64>())
            .sum();
        if scale == 0.0 {
            return Err(Error::ZeroTruth);
        }
        Ok((0..len)
            .map(|t| {
                let err: f64 = self
                    .replicates
                    .iter()
                    .map(|r| r.squared_error[t.min(r.squared_error.len() - 1)])
                    .sum();
                (err / scale).sqrt()
            })
            .collect())
    }

    /// Mean rounds until `ψ` settles below the threshold; runs that never settle
    /// count as `max_iter`.
    pub fn mean_iterations_to_threshold(&self) -> f64 {
        let total: usize = self
            .replicates
            .iter()
            .map(|r| r.iterations_to_threshold.unwrap_or(self.config.max_iter))
            .sum();
        total as f64 / self.replicates.len() as f64
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), self.config.to_text())?;
        for r in &self.replicates {
            let mut csv = String::from(TraceRecord::CSV_HEADER);
            csv.push('\n');
            for rec in &r.trace {
                csv.push_str(&rec.to_csv_row());
                csv.push('\n');
            }
            fs::write(dir.join(format!("trace_{:03}.csv", r.index)), csv)?;
        }
        fs::write(dir.join("summary.csv"), self.summary_csv()?)?;
        fs::write(dir.join("params.csv"), self.params_csv())?;
        fs::write(dir.join("estimates.csv"), self.estimates_csv())?;
        let mut curve = String::from("iter,nrmse\n");
        for (t, v) in self.nrmse_curve()?.iter().enumerate() {
            writeln!(curve, "{},{v}", t + 1).unwrap();
        }
        fs::write(dir.join("nrmse_curve.csv"), curve)?;
        Ok(())
    }

    pub fn summary_csv(&self) -> Result<String> {
        let na = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
        let mut out = String::from(
            "replicate,iterations,converged,iterations_to_threshold,final_psi,final_r_grad,\
             final_r_feas,final_nrmse,feasible_nodes,reference_match\n",
        );
        for r in &self.replicates {
            let last = r.final_record().expect("at least one round");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.iterations,
                r.converged,
                na(r.iterations_to_threshold.map(|v| v.to_string())),
                last.psi,
                last.r_grad,
                last.r_feas,
                r.final_nrmse()?,
                r.params.iter().filter(|p| p.feasible).count(),
                na(r.reference_match.map(|v| v.to_string())),
            )
            .unwrap();
        }
        let all_match = self
            .replicates
            .iter()
            .map(|r| r.reference_match)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.iter().all(|&m| m).to_string());
        writeln!(
            out,
            "all,{},{},{},NA,NA,NA,{},{},{}",
            self.replicates
                .iter()
                .map(|r| r.iterations)
                .max()
                .unwrap_or(0),
            self.replicates.iter().all(|r| r.converged),
            self.mean_iterations_to_threshold(),
            self.nrmse()?,
            self.replicates
                .iter()
                .map(|r| r.params.iter().filter(|p| p.feasible).count())
                .sum::<usize>(),
            na(all_match),
        )
        .unwrap();
        Ok(out)
    }

    /// Node table per replicate; fixed penalties failing the step-size
    /// conditions carry a warning.
    pub fn params_csv(&self) -> String {
        let mut out = format!("replicate,{},warning\n", NodeReport::CSV_HEADER);
        for r in &self.replicates {
            for p in &r.params {
                let warning = if p.feasible {
                    ""
                } else {
                    "rho below step-size bound"
                };
                writeln!(out, "{},{},{warning}", r.index, p.to_csv_row()).unwrap();
            }
        }
        out
    }

    pub fn estimates_csv(&self) -> String {
        let dim = self.config.dim;
        let mut out = String::from("replicate,node,component,estimate,truth\n");
        for r in &self.replicates {
            for (i, (e, t)) in r.estimate.iter().zip(&r.truth).enumerate() {
                writeln!(out, "{},{},{},{e},{t}", r.index, i / dim, i % dim).unwrap();
            }
        }
        out
    }
}

/// Runs every replicate, in parallel when `cfg.workers > 1`. Results are ordered
/// by replicate index regardless of scheduling.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let replicates = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| run_replicate(cfg, r))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..cfg.replicates)
            .map(|r| run_replicate(cfg, r))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ExperimentResult {
        config: cfg.clone(),
        replicates,
    })
}

/// Runs `cfg` once per value of `key`. Each run writes to `out/<key>_<value>`
/// and a `sweep.csv` table is written to `out`.
pub fn sweep(cfg: &RunConfig, key: &str, values: &[String]) -> Result<Vec<ExperimentResult>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut results = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.clone();
        c.set(key, v)?;
        c.out = cfg.out.join(format!("{key}_{v}"));
        results.push(run_experiment(&c)?);
    }
    Ok(results)
}

pub fn sweep_csv(key: &str, values: &[String], results: &[ExperimentResult]) -> Result<String> {
    let mut out = format!("{key},mean_iterations_to_threshold,settled,final_nrmse\n");
    for (v, r) in values.iter().zip(results) {
        writeln!(
            out,
            "{v},{},{},{}",
            r.mean_iterations_to_threshold(),
            r.replicates
                .iter()
                .filter(|x| x.iterations_to_threshold.is_some())
                .count(),
            r.nrmse()?
        )
        .unwrap();
    }
    Ok(out)
}

/// Feasibility table for the first replicate's instance.
pub fn check_params_report(cfg: &RunConfig) -> Result<Vec<NodeReport>> {
    cfg.validate()?;
    let seeds = ReplicateSeeds::derive(cfg.seed, 0);
    Ok(match Instance::generate(cfg, seeds.network)? {
        Instance::Quadratic(p) => check_params(&p, cfg),
        Instance::Localization(inst) => check_params(&inst.problem()?, cfg),
    })
}

pub fn report_csv(reports: &[NodeReport]) -> String {
    let mut out = String::from(NodeReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}
