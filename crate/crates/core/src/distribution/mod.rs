//! Return distributions of a fixed policy, risk value functions and the
//! quantile critic.
//!
//! Policies are passed as flat probability tables `probs[id * A + a]` over the
//! augmented index.

mod critic;

pub use critic::{project_quantiles, td_lambda_mixtures, td_lambda_targets, wasserstein1, QuantileCritic};

use crate::env::AugmentedIndex;
use crate::risk::{GBeta, ReturnDistribution};

/// Atoms closer than this are merged during the backward recursion.
pub const MERGE_TOL: f64 = 1e-9;

/// Channel selector: the reward or one cost channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Reward,
    Cost(usize),
}

/// Future-return distributions for every (s̄, a) and s̄ of one policy.
///
/// For a state at step t these are distributions of Σ_{k≥0} γᵏ x_{t+k}: the
/// return still to come, not including what was accrued before t.
#[derive(Debug, Clone)]
pub struct ReturnTable {
    n_actions: usize,
    // [channel][id * A + a]; channel 0 is the reward.
    q: Vec<Vec<ReturnDistribution>>,
    // [channel][id]
    v: Vec<Vec<ReturnDistribution>>,
    initial: Vec<(usize, f64)>,
}

impl ReturnTable {
    fn slot(channel: Channel) -> usize {
        match channel {
            Channel::Reward => 0,
            Channel::Cost(i) => i + 1,
        }
    }

    pub fn q(&self, channel: Channel, id: usize, a: usize) -> &ReturnDistribution {
        &self.q[Self::slot(channel)][id * self.n_actions + a]
    }

    pub fn v(&self, channel: Channel, id: usize) -> &ReturnDistribution {
        &self.v[Self::slot(channel)][id]
    }

    /// Distribution of the full H-step discounted return from the start.
    pub fn total(&self, channel: Channel) -> ReturnDistribution {
        let atoms = self
            .initial
            .iter()
            .flat_map(|&(id, p)| self.v(channel, id).atoms().iter().map(move |&(x, q)| (x, p * q)))
            .collect();
        ReturnDistribution::merged(atoms, MERGE_TOL).expect("initial mass is positive")
    }
}

/// Backward recursion over the augmented chain; step H is terminal with a
/// zero continuation.
pub fn exact_returns(index: &AugmentedIndex, probs: &[f64]) -> ReturnTable {
    let cmdp = index.cmdp();
    let n_actions = index.n_actions();
    let n_channels = cmdp.n_costs() + 1;
    let gamma = index.gamma();
    let zero = ReturnDistribution::point(0.0);
    let mut q = vec![vec![zero.clone(); index.len() * n_actions]; n_channels];
    let mut v = vec![vec![zero; index.len()]; n_channels];

    for t in (0..index.horizon()).rev() {
        for id in index.level(t) {
            let s = index.state(id).s;
            for ch in 0..n_channels {
                for a in 0..n_actions {
                    let mut atoms = Vec::new();
                    for tr in index.transitions(id, a) {
                        let step = if ch == 0 {
                            cmdp.reward(s, a, tr.base)
                        } else {
                            cmdp.cost(ch - 1, s, a, tr.base)
                        };
                        atoms.extend(
                            v[ch][tr.next]
                                .atoms()
                                .iter()
                                .map(|&(z, p)| (step + gamma * z, tr.prob * p)),
                        );
                    }
                    q[ch][id * n_actions + a] =
                        ReturnDistribution::merged(atoms, MERGE_TOL).expect("transition rows carry mass");
                }
                let atoms: Vec<(f64, f64)> = (0..n_actions)
                    .filter(|&a| probs[id * n_actions + a] > 0.0)
                    .flat_map(|a| {
                        let pa = probs[id * n_actions + a];
                        q[ch][id * n_actions + a].atoms().iter().map(move |&(z, p)| (z, pa * p))
                    })
                    .collect();
                v[ch][id] = ReturnDistribution::merged(atoms, MERGE_TOL).expect("policy rows carry mass");
            }
        }
    }
    ReturnTable {
        n_actions,
        q,
        v,
        initial: index.initial().to_vec(),
    }
}

/// V_g(s̄) = E[g(b(e + Y))] from the stored atoms of Y.
pub fn risk_value_v(index: &AugmentedIndex, returns: &ReturnTable, g: &GBeta, channel: usize, id: usize) -> f64 {
    atom_risk(index, returns.v(Channel::Cost(channel), id), g, channel, id)
}

/// Q_g(s̄, a) = E[g(b(e + Y))] with Y the future cost after taking a.
pub fn risk_value_q(
    index: &AugmentedIndex,
    returns: &ReturnTable,
    g: &GBeta,
    channel: usize,
    id: usize,
    a: usize,
) -> f64 {
    atom_risk(index, returns.q(Channel::Cost(channel), id, a), g, channel, id)
}

fn atom_risk(index: &AugmentedIndex, dist: &ReturnDistribution, g: &GBeta, channel: usize, id: usize) -> f64 {
    let b = index.b(id);
    let e = index.state(id).e[channel];
    dist.atoms().iter().map(|&(y, p)| p * g.eval(b * (e + y))).sum()
}

/// V, Q and advantage tables of one quantity under one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub v: Vec<f64>,
    /// Indexed `id * A + a`.
    pub q: Vec<f64>,
    /// Indexed `id * A + a`; already divided by b for risk channels.
    pub advantage: Vec<f64>,
    /// E_{s̄₀∼ρ}[V(s̄₀)].
    pub start_value: f64,
}

/// Scalar backward recursion for V_g, Q_g and A_g = (Q_g - V_g)/b.
///
/// Uses Q_g(s̄, a) = E[V_g(s̄')] with V_g(s̄_H) = g(b_H e_H) at the terminal step.
pub fn risk_values(index: &AugmentedIndex, probs: &[f64], g: &GBeta, channel: usize) -> ValueTables {
    let n_actions = index.n_actions();
    let mut v = vec![0.0; index.len()];
    let mut q = vec![0.0; index.len() * n_actions];
    let horizon = index.horizon();
    for id in index.level(horizon) {
        let value = g.eval(index.b(id) * index.state(id).e[channel]);
        v[id] = value;
        q[id * n_actions..(id + 1) * n_actions].fill(value);
    }
    for t in (0..horizon).rev() {
        for id in index.level(t) {
            let mut value = 0.0;
            for a in 0..n_actions {
                let qa: f64 = index.transitions(id, a).iter().map(|tr| tr.prob * v[tr.next]).sum();
                q[id * n_actions + a] = qa;
                value += probs[id * n_actions + a] * qa;
            }
            v[id] = value;
        }
    }
    let advantage = (0..q.len())
        .map(|k| (q[k] - v[k / n_actions]) / index.b(k / n_actions))
        .collect();
    finish(index, v, q, advantage)
}

/// Reward value tables: Q_R(s̄, a) = E[r + γ V_R(s̄')], A_R = Q_R - V_R.
pub fn reward_values(index: &AugmentedIndex, probs: &[f64]) -> ValueTables {
    let cmdp = index.cmdp();
    let n_actions = index.n_actions();
    let gamma = index.gamma();
    let mut v = vec![0.0; index.len()];
    let mut q = vec![0.0; index.len() * n_actions];
    for t in (0..index.horizon()).rev() {
        for id in index.level(t) {
            let s = index.state(id).s;
            let mut value = 0.0;
            for a in 0..n_actions {
                let qa: f64 = index
                    .transitions(id, a)
                    .iter()
                    .map(|tr| tr.prob * (cmdp.reward(s, a, tr.base) + gamma * v[tr.next]))
                    .sum();
                q[id * n_actions + a] = qa;
                value += probs[id * n_actions + a] * qa;
            }
            v[id] = value;
        }
    }
    let advantage = (0..q.len()).map(|k| q[k] - v[k / n_actions]).collect();
    finish(index, v, q, advantage)
}

/// Expected discounted cost tables (the identity-g special case, unscaled).
pub fn expected_cost_values(index: &AugmentedIndex, probs: &[f64], channel: usize) -> ValueTables {
    let cmdp = index.cmdp();
    let n_actions = index.n_actions();
    let gamma = index.gamma();
    let mut v = vec![0.0; index.len()];
    let mut q = vec![0.0; index.len() * n_actions];
    for t in (0..index.horizon()).rev() {
        for id in index.level(t) {
            let s = index.state(id).s;
            let mut value = 0.0;
            for a in 0..n_actions {
                let qa: f64 = index
                    .transitions(id, a)
                    .iter()
                    .map(|tr| tr.prob * (cmdp.cost(channel, s, a, tr.base) + gamma * v[tr.next]))
                    .sum();
                q[id * n_actions + a] = qa;
                value += probs[id * n_actions + a] * qa;
            }
            v[id] = value;
        }
    }
    let advantage = (0..q.len()).map(|k| q[k] - v[k / n_actions]).collect();
    finish(index, v, q, advantage)
}

fn finish(index: &AugmentedIndex, v: Vec<f64>, q: Vec<f64>, advantage: Vec<f64>) -> ValueTables {
    let start_value = index.initial().iter().map(|&(id, p)| p * v[id]).sum();
    ValueTables {
        v,
        q,
        advantage,
        start_value,
    }
}

/// R^β(G_C) = E_{s̄₀∼ρ}[V_g(s̄₀)] + ∫ g*(σ̃).
pub fn sub_risk_of_policy(index: &AugmentedIndex, probs: &[f64], g: &GBeta, channel: usize) -> f64 {
    risk_values(index, probs, g, channel).start_value + g.conjugate()
}

/// Violations of the value bounds g(eb) ≤ Q, V ≤ g(eb + bC/(1-γ)) and
/// |Q - V| ≤ b (C/(1-γ)) g'(C/(1-γ)), with C the channel's largest step cost.
/// Returns human-readable descriptions, empty when all bounds hold.
pub fn value_bound_violations(
    index: &AugmentedIndex,
    values: &ValueTables,
    g: &GBeta,
    channel: usize,
    tol: f64,
) -> Vec<String> {
    let n_actions = index.n_actions();
    let gamma = index.gamma();
    let cap = index.cmdp().c_max(channel) / (1.0 - gamma);
    let spread = cap * g.slope(cap);
    let mut out = Vec::new();
    for id in 0..index.len() {
        let b = index.b(id);
        let e = index.state(id).e[channel];
        let (lo, hi) = (g.eval(e * b), g.eval(e * b + b * cap));
        let mut check = |name: &str, x: f64, lo: f64, hi: f64| {
            if x < lo - tol || x > hi + tol {
                out.push(format!("{name} at id {id}: {x} outside [{lo}, {hi}]"));
            }
        };
        check("V", values.v[id], lo, hi);
        for a in 0..n_actions {
            let qa = values.q[id * n_actions + a];
            check("Q", qa, lo, hi);
            check("Q-V", (qa - values.v[id]).abs(), 0.0, b * spread);
        }
    }
    out
}
