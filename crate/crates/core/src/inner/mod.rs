//! The inner solver: exact evaluation of reward and sub-risk constraints,
//! softmax policy gradients, natural-gradient directions and the weight
//! strategies that combine them.

mod qp;
mod strategy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{reward_values, risk_values};
use crate::env::{occupancy, AugmentedIndex};
use crate::risk::GBeta;

pub use qp::{linear_trust_region_multipliers, maximize_nonneg_concave};
pub use strategy::{
    decide, weight_strategy_crpo, weight_strategy_proposed, weight_strategy_sdac, weight_strategy_violated,
};

/// Below this Fisher norm² a direction is treated as pure gauge and skipped.
pub const DEGENERATE_FISHER: f64 = 1e-18;

#[derive(Debug, Error)]
pub enum InnerError {
    #[error("unknown strategy `{0}` (expected proposed, crpo or sdac-qp)")]
    UnknownStrategy(String),
    #[error("expected {expected} constraint functions, got {got}")]
    ConstraintCount { expected: usize, got: usize },
    #[error("policy has shape {got:?}, index needs {expected:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// Per-(augmented state, action) table, indexed `id * A + a`.
pub type GradientVector = Vec<f64>;

/// π(a|s̄) ∝ exp θ(s̄, a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            theta: vec![0.0; n_states * n_actions],
        }
    }

    pub fn for_index(index: &AugmentedIndex) -> Self {
        Self::uniform(index.len(), index.n_actions())
    }

    pub fn from_logits(n_states: usize, n_actions: usize, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), n_states * n_actions, "logit table has the wrong size");
        Self {
            n_states,
            n_actions,
            theta,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.theta
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn check(&self, index: &AugmentedIndex) -> Result<(), InnerError> {
        let expected = (index.len(), index.n_actions());
        let got = (self.n_states, self.n_actions);
        if expected != got {
            return Err(InnerError::Shape { expected, got });
        }
        Ok(())
    }

    /// Flat probability table `probs[id * A + a]`.
    pub fn probs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.theta.len()];
        for (row, dst) in self.theta.chunks(self.n_actions).zip(out.chunks_mut(self.n_actions)) {
            let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (p, &x) in dst.iter_mut().zip(row) {
                *p = (x - top).exp();
                total += *p;
            }
            for p in dst.iter_mut() {
                *p /= total;
            }
        }
        out
    }

    /// θ ← θ + step · dir.
    pub fn apply(&mut self, dir: &[f64], step: f64) {
        for (t, d) in self.theta.iter_mut().zip(dir) {
            *t += step * d;
        }
    }
}

/// Everything a weight strategy needs about the current policy: values,
/// advantages and the (unnormalized) occupancy. Filled exactly by
/// [`evaluate`] or from critics in practical mode.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub n_actions: usize,
    pub gamma: f64,
    pub probs: Vec<f64>,
    /// d(s̄) = (1-γ) Σ γᵗ P(s̄_t = s̄).
    pub occupancy: Vec<f64>,
    pub reward_advantage: Vec<f64>,
    /// Risk advantages (already divided by b), one table per constraint.
    pub cost_advantage: Vec<Vec<f64>>,
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl Estimates {
    pub fn n_costs(&self) -> usize {
        self.j_c.len()
    }

    pub fn violated(&self) -> Vec<usize> {
        (0..self.n_costs())
            .filter(|&i| self.j_c[i] > self.thresholds[i])
            .collect()
    }

    /// ∇_θ of the quantity whose advantage table is `adv`.
    pub fn gradient(&self, adv: &[f64]) -> GradientVector {
        gradient_from(&self.occupancy, &self.probs, adv, self.n_actions, self.gamma)
    }

    /// gᵀF g for a direction table.
    pub fn fisher_quadratic(&self, dir: &[f64]) -> f64 {
        fisher_form(&self.occupancy, &self.probs, dir, self.n_actions)
    }

    /// Gram matrix of (reward, costs...) gradients in the F† metric:
    /// K_jk = Σ d π A_j A_k / (1-γ)².
    pub fn gram(&self) -> nalgebra::DMatrix<f64> {
        let tables: Vec<&[f64]> = std::iter::once(self.reward_advantage.as_slice())
            .chain(self.cost_advantage.iter().map(Vec::as_slice))
            .collect();
        let n = tables.len();
        let scale = 1.0 / ((1.0 - self.gamma) * (1.0 - self.gamma));
        let mut k = nalgebra::DMatrix::zeros(n, n);
        for (k_idx, &p) in self.probs.iter().enumerate() {
            let w = self.occupancy[k_idx / self.n_actions] * p * scale;
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in i..n {
                    k[(i, j)] += w * tables[i][k_idx] * tables[j][k_idx];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                k[(i, j)] = k[(j, i)];
            }
        }
        k
    }
}

/// Exact evaluation of J_R, every J_{C_i} and their advantages.
pub fn evaluate(index: &AugmentedIndex, policy: &SoftmaxPolicy, gs: &[GBeta]) -> Result<Estimates, InnerError> {
    policy.check(index)?;
    let cmdp = index.cmdp();
    if gs.len() != cmdp.n_costs() {
        return Err(InnerError::ConstraintCount {
            expected: cmdp.n_costs(),
            got: gs.len(),
        });
    }
    let probs = policy.probs();
    let reward = reward_values(index, &probs);
    let mut j_c = Vec::with_capacity(gs.len());
    let mut cost_advantage = Vec::with_capacity(gs.len());
    for (i, g) in gs.iter().enumerate() {
        let values = risk_values(index, &probs, g, i);
        j_c.push(values.start_value + g.conjugate());
        cost_advantage.push(values.advantage);
    }
    Ok(Estimates {
        n_actions: index.n_actions(),
        gamma: index.gamma(),
        occupancy: occupancy(index, &probs),
        probs,
        reward_advantage: reward.advantage,
        cost_advantage,
        j_r: reward.start_value,
        j_c,
        thresholds: cmdp.thresholds().to_vec(),
    })
}

/// J_{C_i}(π; β) = R^β(G_{C_i}).
pub fn constraint_value(index: &AugmentedIndex, policy: &SoftmaxPolicy, g: &GBeta, channel: usize) -> f64 {
    crate::distribution::sub_risk_of_policy(index, &policy.probs(), g, channel)
}

pub fn reward_value(index: &AugmentedIndex, policy: &SoftmaxPolicy) -> f64 {
    reward_values(index, &policy.probs()).start_value
}

fn gradient_from(occ: &[f64], probs: &[f64], adv: &[f64], n_actions: usize, gamma: f64) -> GradientVector {
    (0..probs.len())
        .map(|k| occ[k / n_actions] * probs[k] * adv[k] / (1.0 - gamma))
        .collect()
}

fn fisher_form(occ: &[f64], probs: &[f64], dir: &[f64], n_actions: usize) -> f64 {
    let mut total = 0.0;
    for (id, &d) in occ.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = id * n_actions..(id + 1) * n_actions;
        let p = &probs[row.clone()];
        let g = &dir[row];
        let mean: f64 = p.iter().zip(g).map(|(p, g)| p * g).sum();
        total += d * p.iter().zip(g).map(|(p, g)| p * (g - mean) * (g - mean)).sum::<f64>();
    }
    total
}

/// ∇_θ J_{C_i}: entry d(s̄) π(a|s̄) A_{i,g}(s̄, a) / (1-γ).
pub fn policy_gradient_risk(
    index: &AugmentedIndex,
    policy: &SoftmaxPolicy,
    g: &GBeta,
    channel: usize,
) -> GradientVector {
    let probs = policy.probs();
    let values = risk_values(index, &probs, g, channel);
    gradient_from(
        &occupancy(index, &probs),
        &probs,
        &values.advantage,
        index.n_actions(),
        index.gamma(),
    )
}

pub fn policy_gradient_reward(index: &AugmentedIndex, policy: &SoftmaxPolicy) -> GradientVector {
    let probs = policy.probs();
    let values = reward_values(index, &probs);
    gradient_from(
        &occupancy(index, &probs),
        &probs,
        &values.advantage,
        index.n_actions(),
        index.gamma(),
    )
}

/// gᵀF(θ)g = E_{d,π}[(g·∇log π)²], with the unnormalized occupancy.
pub fn fisher_quadratic(index: &AugmentedIndex, policy: &SoftmaxPolicy, dir: &[f64]) -> f64 {
    let probs = policy.probs();
    fisher_form(&occupancy(index, &probs), &probs, dir, index.n_actions())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    Satisfied,
    Violated,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Satisfied => "satisfied",
            Self::Violated => "violated",
        })
    }
}

/// Weights of one update: θ ← θ + α·(A_R − αΣλA)/(1-γ) when satisfied,
/// θ ← θ + α·(ανA_R − ΣλA)/(1-γ) when violated.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDecision {
    pub case: Case,
    pub lambda: Vec<f64>,
    pub nu: f64,
    pub alpha: f64,
}

/// The advantage combination whose α-multiple is the natural-gradient step.
pub fn npg_direction(est: &Estimates, w: &WeightDecision) -> GradientVector {
    let scale = 1.0 / (1.0 - est.gamma);
    let (reward_coef, cost_coef) = match w.case {
        Case::Satisfied => (1.0, w.alpha),
        Case::Violated => (w.alpha * w.nu, 1.0),
    };
    (0..est.probs.len())
        .map(|k| {
            let cost: f64 = w.lambda.iter().zip(&est.cost_advantage).map(|(l, a)| l * a[k]).sum();
            (reward_coef * est.reward_advantage[k] - cost_coef * cost) * scale
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Proposed,
    Crpo,
    SdacQp,
}

impl FromStr for Strategy {
    type Err = InnerError;

    fn from_str(s: &str) -> Result<Self, InnerError> {
        match s.trim() {
            "proposed" => Ok(Self::Proposed),
            "crpo" => Ok(Self::Crpo),
            "sdac-qp" => Ok(Self::SdacQp),
            other => Err(InnerError::UnknownStrategy(other.to_string())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Proposed => "proposed",
            Self::Crpo => "crpo",
            Self::SdacQp => "sdac-qp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    pub strategy: Strategy,
    pub lambda_max: f64,
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            strategy: Strategy::Proposed,
            lambda_max: 100.0,
            g_min: 0.1,
            g_max: 10.0,
        }
    }
}

impl StepSettings {
    pub fn clip(&self, norm: f64) -> f64 {
        norm.clamp(self.g_min, self.g_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub case: Case,
    pub lambda: Vec<f64>,
    pub nu: f64,
    pub alpha: f64,
    /// True when the direction was degenerate and θ was left alone.
    pub skipped: bool,
}

/// Picks the weights and the direction for the current estimates without
/// touching the policy. Returns the direction and the report.
pub fn plan_step(est: &Estimates, eps_t: f64, settings: &StepSettings) -> (GradientVector, StepReport) {
    let weights = decide(est, eps_t, settings);
    let dir = npg_direction(est, &weights);
    let quad = est.fisher_quadratic(&dir);
    let skipped = eps_t == 0.0 || !(quad >= DEGENERATE_FISHER);
    if skipped && eps_t != 0.0 {
        log::debug!("degenerate direction (gᵀFg = {quad:e}); step skipped");
    }
    let report = StepReport {
        j_r: est.j_r,
        j_c: est.j_c.clone(),
        case: weights.case,
        lambda: weights.lambda,
        nu: weights.nu,
        alpha: if skipped { 0.0 } else { weights.alpha },
        skipped,
    };
    (dir, report)
}

/// One exact natural-gradient update with a trust-region step size.
pub fn inner_step(
    index: &AugmentedIndex,
    policy: &mut SoftmaxPolicy,
    gs: &[GBeta],
    eps_t: f64,
    settings: &StepSettings,
) -> Result<StepReport, InnerError> {
    let est = evaluate(index, policy, gs)?;
    let (dir, report) = plan_step(&est, eps_t, settings);
    if !report.skipped {
        policy.apply(&dir, report.alpha);
    }
    Ok(report)
}

/// ε_t = ε₀ / √(t + 1).
pub fn robbins_monro(eps0: f64, t: usize) -> f64 {
    eps0 / ((t + 1) as f64).sqrt()
}
