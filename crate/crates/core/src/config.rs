//! Run configuration as flat `key = value` text.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::engine::Variant;
use crate::error::{Error, Result};
use crate::schedule::ScheduleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    Localization,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "localization" => Ok(Self::Localization),
            other => Err(Error::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quadratic => "quadratic",
            Self::Localization => "localization",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoPolicy {
    /// Per-node smallest `ρ` meeting the step-size conditions.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub nodes: usize,
    pub range: f64,
    pub anchors: bool,
    pub epsilon: f64,
    pub noise: f64,
    pub dim: usize,
    pub variant: Variant,
    pub rho: RhoPolicy,
    pub max_staleness: usize,
    pub frequency: f64,
    pub schedule: ScheduleKind,
    pub max_iter: usize,
    pub delta: f64,
    pub psi_threshold: f64,
    pub seed: u64,
    pub replicates: usize,
    pub workers: usize,
    pub lipschitz: Option<f64>,
    pub reference_check: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Localization,
            nodes: 25,
            range: 0.5,
            anchors: false,
            epsilon: crate::localization::DEFAULT_EPSILON,
            noise: crate::localization::DEFAULT_NOISE,
            dim: 2,
            variant: Variant::Proximal,
            rho: RhoPolicy::Auto,
            max_staleness: 0,
            frequency: 1.0,
            schedule: ScheduleKind::Bernoulli,
            max_iter: 500,
            delta: 1e-8,
            psi_threshold: 1e-6,
            seed: 0,
            replicates: 20,
            workers: 1,
            lipschitz: None,
            reference_check: false,
            out: PathBuf::from("out"),
        }
    }
}

pub const PRESETS: [&str; 2] = ["paper-localization", "sync-check"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-localization" => Ok(Self {
                problem: ProblemKind::Localization,
                nodes: 25,
                range: 0.5,
                anchors: true,
                rho: RhoPolicy::Fixed(10.0),
                max_staleness: 8,
                frequency: 0.75,
                schedule: ScheduleKind::Bernoulli,
                max_iter: 500,
                ..Self::default()
            }),
            "sync-check" => Ok(Self {
                problem: ProblemKind::Quadratic,
                nodes: 10,
                range: 0.5,
                dim: 1,
                rho: RhoPolicy::Auto,
                max_staleness: 0,
                frequency: 1.0,
                max_iter: 200,
                replicates: 1,
                reference_check: true,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown preset `{other}`; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.nodes == 0 {
            return fail("nodes must be at least 1".into());
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return fail(format!("range must be positive, got {}", self.range));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise must be nonnegative, got {}", self.noise));
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if self.problem == ProblemKind::Localization && self.dim != crate::localization::DIM {
            return fail(format!(
                "localization is planar; dim must be {}",
                crate::localization::DIM
            ));
        }
        if let RhoPolicy::Fixed(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return fail(format!("rho must be positive, got {rho}"));
            }
        }
        if !(self.frequency > 0.0 && self.frequency <= 1.0) {
            return fail(format!(
                "frequency must lie in (0, 1], got {}",
                self.frequency
            ));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if self.delta.is_nan()
            || self.delta <= 0.0
            || self.psi_threshold.is_nan()
            || self.psi_threshold <= 0.0
        {
            return fail("delta and psi_threshold must be positive".into());
        }
        if self.replicates == 0 || self.workers == 0 {
            return fail("replicates and workers must be at least 1".into());
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return fail(format!("lipschitz must be nonnegative, got {l}"));
            }
        }
        if self.reference_check
            && (self.max_staleness != 0
                || self.frequency != 1.0
                || self.variant != Variant::Proximal)
        {
            return fail("reference_check needs a synchronous proximal run".into());
        }
        Ok(())
    }

    /// Sets one key. Unknown keys and malformed values are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!(
                    "invalid value `{value}` for `{key}`"
                ))),
            }
        }
        match key {
            "problem" => self.problem = value.parse()?,
            "nodes" => self.nodes = num(key, value)?,
            "range" => self.range = num(key, value)?,
            "anchors" => self.anchors = flag(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "variant" => self.variant = value.parse()?,
            "rho" => {
                self.rho = if value == "auto" {
                    RhoPolicy::Auto
                } else {
                    RhoPolicy::Fixed(num(key, value)?)
                }
            }
            "max_staleness" => self.max_staleness = num(key, value)?,
            "frequency" => self.frequency = num(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "max_iter" => self.max_iter = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "psi_threshold" => self.psi_threshold = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "replicates" => self.replicates = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "lipschitz" => {
                self.lipschitz = if value == "none" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "reference_check" => self.reference_check = flag(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines over `self`. `#` starts a comment. The policy
    /// key `rho_policy = auto` may not be combined with a numeric `rho`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut policy: Option<String> = None;
        let mut rho_value: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "rho_policy" => policy = Some(value.to_string()),
                "rho" => rho_value = Some(value.to_string()),
                _ => self.set(key, value).map_err(|e| match e {
                    Error::Config(msg) => Error::Parse { line: idx + 1, msg },
                    other => other,
                })?,
            }
        }
        match (policy.as_deref(), rho_value.as_deref()) {
            (Some("auto"), Some(v)) if v != "auto" => Err(Error::Config(
                "rho_policy = auto cannot be combined with a fixed rho".into(),
            )),
            (Some("auto"), _) => self.set("rho", "auto"),
            (Some("fixed"), Some(v)) if v != "auto" => self.set("rho", v),
            (Some("fixed"), _) => Err(Error::Config("rho_policy = fixed needs a rho value".into())),
            (Some(other), _) => Err(Error::Config(format!("unknown rho_policy `{other}`"))),
            (None, Some(v)) => self.set("rho", v),
            (None, None) => Ok(()),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        put("problem", self.problem.to_string());
        put("nodes", self.nodes.to_string());
        put("range", self.range.to_string());
        put("anchors", self.anchors.to_string());
        put("epsilon", self.epsilon.to_string());
        put("noise", self.noise.to_string());
        put("dim", self.dim.to_string());
        put("variant", self.variant.to_string());
        match self.rho {
            RhoPolicy::Auto => put("rho_policy", "auto".into()),
            RhoPolicy::Fixed(rho) => {
                put("rho_policy", "fixed".into());
                put("rho", rho.to_string());
            }
        }
        put("max_staleness", self.max_staleness.to_string());
        put("frequency", self.frequency.to_string());
        put("schedule", self.schedule.to_string());
        put("max_iter", self.max_iter.to_string());
        put("delta", self.delta.to_string());
        put("psi_threshold", self.psi_threshold.to_string());
        put("seed", self.seed.to_string());
        put("replicates", self.replicates.to_string());
        put("workers", self.workers.to_string());
        put(
            "lipschitz",
            self.lipschitz
                .map_or_else(|| "none".into(), |l| l.to_string()),
        );
        put("reference_check", self.reference_check.to_string());
        put("out", self.out.display().to_string());
        out
    }
}
