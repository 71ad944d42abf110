//! Asynchrony schedules: who is awake, which gradient stamp each node uses,
//! and who transmits in each round.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::RoundInput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Each node is awake independently with probability `f_k`.
    Bernoulli,
    /// Fixed cyclic pattern hitting the target frequency exactly.
    Deterministic,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Self::Bernoulli),
            "deterministic" => Ok(Self::Deterministic),
            other => Err(Error::Config(format!("unknown schedule kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bernoulli => "bernoulli",
            Self::Deterministic => "deterministic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsynchronyModel {
    /// `T_k`: oldest admissible gradient age.
    pub max_staleness: Vec<usize>,
    /// `f_k` in `(0, 1]`.
    pub frequency: Vec<f64>,
    pub kind: ScheduleKind,
    pub seed: u64,
}

impl AsynchronyModel {
    pub fn uniform(
        num_nodes: usize,
        max_staleness: usize,
        frequency: f64,
        kind: ScheduleKind,
        seed: u64,
    ) -> Self {
        Self {
            max_staleness: vec![max_staleness; num_nodes],
            frequency: vec![frequency; num_nodes],
            kind,
            seed,
        }
    }

    pub fn synchronous(num_nodes: usize) -> Self {
        Self::uniform(num_nodes, 0, 1.0, ScheduleKind::Deterministic, 0)
    }

    pub fn num_nodes(&self) -> usize {
        self.frequency.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_staleness.len() != self.frequency.len() {
            return Err(Error::Config(
                "staleness and frequency vectors differ in length".into(),
            ));
        }
        for (k, &f) in self.frequency.iter().enumerate() {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "update frequency of node {k} must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_synchronous(&self) -> bool {
        self.max_staleness.iter().all(|&t| t == 0) && self.frequency.iter().all(|&f| f == 1.0)
    }

    /// Lemma-style window length `⌈1/min_k f_k⌉ · K`.
    pub fn descent_window(&self) -> usize {
        let min_f = self.frequency.iter().copied().fold(1.0, f64::min);
        (1.0 / min_f).ceil() as usize * self.num_nodes()
    }
}

/// Awake pattern of the deterministic kind: active on round `t` (1-based) iff
/// `⌈t·f⌉` advances, so `f = 0.5` wakes on rounds 1, 3, 5, ...
pub fn cyclic_awake(t: usize, frequency: f64) -> bool {
    let tol = 1e-12;
    let now = (t as f64 * frequency - tol).ceil();
    let before = ((t - 1) as f64 * frequency - tol).ceil();
    now > before
}

/// Lowest admissible gradient stamp for the update producing iterate `t + 1`.
pub fn oldest_admissible(t: usize, max_staleness: usize) -> usize {
    (t + 1).saturating_sub(max_staleness).max(1)
}

/// Seeded stream of [`RoundInput`]s.
#[derive(Debug, Clone)]
pub struct Scheduler {
    model: AsynchronyModel,
    rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(model: AsynchronyModel) -> Result<Self> {
        model.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Ok(Self { model, rng })
    }

    pub fn model(&self) -> &AsynchronyModel {
        &self.model
    }

    /// Draws the schedule for iteration `t`. Calls must be made for `t = 1, 2, ...`
    /// in order for the Bernoulli stream to be reproducible.
    pub fn draw(&mut self, t: usize) -> RoundInput {
        let n = self.model.num_nodes();
        let mut awake = Vec::with_capacity(n);
        let mut staleness_pick = Vec::with_capacity(n);
        match self.model.kind {
            ScheduleKind::Bernoulli => {
                for k in 0..n {
                    let f = self.model.frequency[k];
                    awake.push(f >= 1.0 || self.rng.random_bool(f));
                }
                for k in 0..n {
                    let lo = oldest_admissible(t, self.model.max_staleness[k]);
                    staleness_pick.push(self.rng.random_range(lo..=t + 1));
                }
            }
            ScheduleKind::Deterministic => {
                for k in 0..n {
                    awake.push(cyclic_awake(t, self.model.frequency[k]));
                    let period = self.model.max_staleness[k] + 1;
                    staleness_pick.push(t + 1 - t % period);
                }
            }
        }
        RoundInput {
            iteration: t,
            send_xy: awake.clone(),
            send_z: awake.clone(),
            awake,
            staleness_pick,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synchronous_model_is_all_awake_and_fresh() {
        for kind in [ScheduleKind::Bernoulli, ScheduleKind::Deterministic] {
            let mut s = Scheduler::new(AsynchronyModel::uniform(6, 0, 1.0, kind, 1)).unwrap();
            for t in 1..50 {
                let r = s.draw(t);
                assert!(r.awake.iter().all(|a| *a));
                assert!(r.send_xy.iter().all(|a| *a));
                assert!(r.send_z.iter().all(|a| *a));
                assert!(r.staleness_pick.iter().all(|&p| p == t + 1));
            }
        }
    }

    #[test]
    fn bernoulli_stream_is_reproducible() {
        let model = AsynchronyModel::uniform(25, 8, 0.75, ScheduleKind::Bernoulli, 42);
        let mut a = Scheduler::new(model.clone()).unwrap();
        let mut b = Scheduler::new(model).unwrap();
        for t in 1..200 {
            assert_eq!(a.draw(t), b.draw(t));
        }
    }

    #[test]
    fn half_frequency_wakes_on_odd_rounds() {
        let awake: Vec<usize> = (1..=8).filter(|&t| cyclic_awake(t, 0.5)).collect();
        assert_eq!(awake, vec![1, 3, 5, 7]);
        let three_quarters = (1..=4).filter(|&t| cyclic_awake(t, 0.75)).count();
        assert_eq!(three_quarters, 3);
        assert!((1..=10).all(|t| cyclic_awake(t, 1.0)));
    }

    #[test]
    fn deterministic_windows_meet_frequency() {
        let model = AsynchronyModel::uniform(3, 2, 0.3, ScheduleKind::Deterministic, 0);
        let window = model.descent_window();
        assert_eq!(window, 12);
        let mut s = Scheduler::new(model).unwrap();
        let rounds: Vec<_> = (1..=5 * window).map(|t| s.draw(t)).collect();
        for w in rounds.chunks(window) {
            let count = w.iter().filter(|r| r.awake[0]).count();
            assert!(count >= (0.3 * window as f64).floor() as usize);
        }
        for w in rounds.windows(4) {
            assert!(w.iter().any(|r| r.awake[0]));
        }
    }

    #[test]
    fn asleep_nodes_do_not_transmit() {
        let mut s = Scheduler::new(AsynchronyModel::uniform(
            10,
            3,
            0.5,
            ScheduleKind::Bernoulli,
            5,
        ))
        .unwrap();
        for t in 1..100 {
            let r = s.draw(t);
            for k in 0..10 {
                if !r.awake[k] {
                    assert!(!r.send_xy[k] && !r.send_z[k]);
                }
            }
        }
    }

    #[test]
    fn staleness_stays_within_bound() {
        for kind in [ScheduleKind::Bernoulli, ScheduleKind::Deterministic] {
            let mut s = Scheduler::new(AsynchronyModel::uniform(4, 5, 0.8, kind, 11)).unwrap();
            for t in 1..300 {
                let r = s.draw(t);
                for &p in &r.staleness_pick {
                    assert!(p <= t + 1 && p >= oldest_admissible(t, 5));
                }
            }
        }
    }

    #[test]
    fn bernoulli_frequency_within_three_sigma() {
        let f = 0.75;
        let rounds = 10_000;
        let mut s = Scheduler::new(AsynchronyModel::uniform(
            1,
            0,
            f,
            ScheduleKind::Bernoulli,
            77,
        ))
        .unwrap();
        let hits = (1..=rounds).filter(|&t| s.draw(t).awake[0]).count() as f64;
        let mean = rounds as f64 * f;
        let sigma = (rounds as f64 * f * (1.0 - f)).sqrt();
        assert!((hits - mean).abs() <= 3.0 * sigma, "hits {hits}");
    }

    #[test]
    fn rejects_zero_frequency() {
        let model = AsynchronyModel::uniform(2, 1, 0.0, ScheduleKind::Bernoulli, 0);
        assert!(Scheduler::new(model).is_err());
    }
}
