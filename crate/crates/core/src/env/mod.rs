//! Finite constrained MDPs, the cost-augmented state space, simulation and
//! exact occupancy.

mod augmented;
mod builtin;
mod text;

use thiserror::Error;

pub use augmented::{
    augment_step, enumerate_augmented, enumerate_augmented_with_cap, occupancy, occupancy_normalized, rollout,
    AugmentedIndex, AugmentedState, Step, Trajectory, Transition, DEFAULT_STATE_CAP,
};
pub use builtin::{make_env, EnvSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid CMDP: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("checksum mismatch (file says {expected}, content hashes to {actual})")]
    Checksum { expected: String, actual: String },
    #[error("{count} reachable augmented states exceed the cap of {cap}; use a shorter horizon or coarser costs")]
    StateCap { count: usize, cap: usize },
    #[error("unknown environment `{0}` (expected random(S,A,N), hazard-chain(L) or two-hazard-grid)")]
    UnknownEnv(String),
}

/// A finite CMDP with N cost channels and a finite horizon H.
///
/// Tables are flattened row-major: `transitions[(s * A + a) * S + s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    pub name: String,
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    initial: Vec<f64>,
    gamma: f64,
    rewards: Vec<f64>,
    costs: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    horizon: usize,
}

/// Field-by-field constructor input for [`TabularCmdp`].
#[derive(Debug, Clone)]
pub struct CmdpTables {
    pub name: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<f64>,
    pub initial: Vec<f64>,
    pub gamma: f64,
    pub rewards: Vec<f64>,
    pub costs: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub horizon: usize,
}

const SUM_TOL: f64 = 1e-12;

impl TabularCmdp {
    pub fn new(t: CmdpTables) -> Result<Self, EnvError> {
        let bad = |msg: String| Err(EnvError::Invalid(msg));
        let (s, a) = (t.n_states, t.n_actions);
        if s == 0 || a == 0 {
            return bad("need at least one state and one action".into());
        }
        let sas = s * a * s;
        if t.transitions.len() != sas || t.rewards.len() != sas {
            return bad(format!("transition and reward tables need {sas} entries"));
        }
        if t.initial.len() != s {
            return bad(format!("initial distribution needs {s} entries"));
        }
        if t.costs.is_empty() {
            return bad("need at least one cost channel".into());
        }
        if t.costs.len() != t.thresholds.len() {
            return bad(format!(
                "{} cost channels but {} thresholds",
                t.costs.len(),
                t.thresholds.len()
            ));
        }
        if t.costs.iter().any(|c| c.len() != sas) {
            return bad(format!("cost tables need {sas} entries"));
        }
        if !(t.gamma > 0.0 && t.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", t.gamma));
        }
        let all = t
            .transitions
            .iter()
            .chain(&t.initial)
            .chain(&t.rewards)
            .chain(t.costs.iter().flatten())
            .chain(&t.thresholds);
        if all.clone().any(|v| !v.is_finite()) {
            return bad("non-finite table entry".into());
        }
        if t.transitions.iter().chain(&t.initial).any(|&p| p < 0.0) {
            return bad("negative probability".into());
        }
        if t.costs.iter().flatten().any(|&c| c < 0.0) {
            return bad("costs must be non-negative".into());
        }
        for (row, chunk) in t.transitions.chunks(s).enumerate() {
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > SUM_TOL {
                return bad(format!("P(.|s={}, a={}) sums to {total}", row / a, row % a));
            }
        }
        let total: f64 = t.initial.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return bad(format!("initial distribution sums to {total}"));
        }
        Ok(Self {
            name: t.name,
            n_states: s,
            n_actions: a,
            transitions: t.transitions,
            initial: t.initial,
            gamma: t.gamma,
            rewards: t.rewards,
            costs: t.costs,
            thresholds: t.thresholds,
            horizon: t.horizon,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_costs(&self) -> usize {
        self.costs.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn idx(&self, s: usize, a: usize, next: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + next
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[self.idx(s, a, next)]
    }

    /// P(.|s, a) as a slice over next states.
    pub fn next_probs(&self, s: usize, a: usize) -> &[f64] {
        let start = self.idx(s, a, 0);
        &self.transitions[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.rewards[self.idx(s, a, next)]
    }

    pub fn cost(&self, channel: usize, s: usize, a: usize, next: usize) -> f64 {
        self.costs[channel][self.idx(s, a, next)]
    }

    pub fn r_max(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Largest single-step cost of one channel.
    pub fn c_max(&self, channel: usize) -> f64 {
        self.costs[channel].iter().fold(0.0, |m: f64, &c| m.max(c))
    }

    /// Copy with the thresholds replaced.
    pub fn with_thresholds(&self, thresholds: Vec<f64>) -> Result<Self, EnvError> {
        if thresholds.len() != self.costs.len() {
            return Err(EnvError::Invalid(format!(
                "{} thresholds given for {} cost channels",
                thresholds.len(),
                self.costs.len()
            )));
        }
        Ok(Self {
            thresholds,
            ..self.clone()
        })
    }

    /// Copy with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    /// γᴴ max|R|/(1 - γ): how far H-step returns can be from the discounted
    /// infinite-horizon ones.
    pub fn truncation_error(&self) -> f64 {
        let scale = (0..self.n_costs()).map(|i| self.c_max(i)).fold(self.r_max(), f64::max);
        self.gamma.powi(self.horizon as i32) * scale / (1.0 - self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables() -> CmdpTables {
        CmdpTables {
            name: "t".into(),
            n_states: 2,
            n_actions: 1,
            transitions: vec![0.5, 0.5, 0.0, 1.0],
            initial: vec![1.0, 0.0],
            gamma: 0.9,
            rewards: vec![1.0, -2.0, 0.0, 0.5],
            costs: vec![vec![0.0, 1.0, 0.0, 0.0]],
            thresholds: vec![0.3],
            horizon: 3,
        }
    }

    #[test]
    fn accessors() {
        let m = TabularCmdp::new(tables()).unwrap();
        assert_eq!(m.prob(0, 0, 1), 0.5);
        assert_eq!(m.reward(0, 0, 1), -2.0);
        assert_eq!(m.cost(0, 0, 0, 1), 1.0);
        assert_eq!(m.r_max(), 2.0);
        assert_eq!(m.c_max(0), 1.0);
        assert_eq!(m.next_probs(1, 0), &[0.0, 1.0]);
    }

    #[test]
    fn validation() {
        let mut t = tables();
        t.transitions[0] = 0.6;
        assert!(TabularCmdp::new(t).is_err());
        let mut t = tables();
        t.gamma = 1.0;
        assert!(TabularCmdp::new(t).is_err());
        let mut t = tables();
        t.costs[0][1] = -1.0;
        assert!(TabularCmdp::new(t).is_err());
        let mut t = tables();
        t.thresholds.push(1.0);
        assert!(TabularCmdp::new(t).is_err());
    }
}
