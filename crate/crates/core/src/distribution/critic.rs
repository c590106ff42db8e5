use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::risk::ReturnDistribution;

// Slack when comparing a running CDF against a quantile level.
const LEVEL_TOL: f64 = 1e-12;

/// Tabular quantile critic over (augmented state, action, β-grid point).
///
/// Each cell holds `ensembles` independent sets of `quantiles` values θ_l
/// estimating the (2l-1)/(2L) quantiles of the future return; predictions
/// average the sorted sets across ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCritic {
    n_states: usize,
    n_actions: usize,
    n_grid: usize,
    quantiles: usize,
    ensembles: usize,
    non_negative: bool,
    theta: Vec<f64>,
}

impl QuantileCritic {
    /// Initial values are drawn uniformly from `[0, init_scale)` per ensemble.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        n_grid: usize,
        quantiles: usize,
        ensembles: usize,
        non_negative: bool,
        init_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(
            quantiles > 0 && ensembles > 0,
            "critic needs at least one quantile and ensemble"
        );
        let n = n_states * n_actions * n_grid * ensembles * quantiles;
        let mut theta: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * init_scale).collect();
        for set in theta.chunks_mut(quantiles) {
            set.sort_by(f64::total_cmp);
        }
        Self {
            n_states,
            n_actions,
            n_grid,
            quantiles,
            ensembles,
            non_negative,
            theta,
        }
    }

    pub fn quantiles(&self) -> usize {
        self.quantiles
    }

    pub fn ensembles(&self) -> usize {
        self.ensembles
    }

    fn base(&self, id: usize, a: usize, grid: usize) -> usize {
        debug_assert!(id < self.n_states && a < self.n_actions && grid < self.n_grid);
        ((id * self.n_actions + a) * self.n_grid + grid) * self.ensembles * self.quantiles
    }

    /// Ensemble-averaged quantile atoms (each with weight 1/L).
    pub fn atoms(&self, id: usize, a: usize, grid: usize) -> Vec<f64> {
        let start = self.base(id, a, grid);
        let l = self.quantiles;
        let mut out = vec![0.0; l];
        for e in 0..self.ensembles {
            for (o, v) in out.iter_mut().zip(&self.theta[start + e * l..start + (e + 1) * l]) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= self.ensembles as f64;
        }
        out
    }

    pub fn mean(&self, id: usize, a: usize, grid: usize) -> f64 {
        self.atoms(id, a, grid).iter().sum::<f64>() / self.quantiles as f64
    }

    /// Overwrites every ensemble member of one cell.
    pub fn set_atoms(&mut self, id: usize, a: usize, grid: usize, values: &[f64]) {
        assert_eq!(values.len(), self.quantiles);
        let start = self.base(id, a, grid);
        for e in 0..self.ensembles {
            let set = &mut self.theta[start + e * self.quantiles..start + (e + 1) * self.quantiles];
            set.copy_from_slice(values);
            set.sort_by(f64::total_cmp);
        }
    }

    /// One pinball-loss subgradient step toward equally weighted `targets`:
    /// θ_l += lr (τ_l - P̂(z < θ_l)), then re-sort (and clamp at 0 for costs).
    pub fn update(&mut self, id: usize, a: usize, grid: usize, targets: &[f64], lr: f64) {
        if lr == 0.0 || targets.is_empty() {
            return;
        }
        let mut sorted = targets.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let l = self.quantiles;
        let start = self.base(id, a, grid);
        for e in 0..self.ensembles {
            let set = &mut self.theta[start + e * l..start + (e + 1) * l];
            for (k, theta) in set.iter_mut().enumerate() {
                let tau = (2 * k + 1) as f64 / (2 * l) as f64;
                let below = sorted.partition_point(|&z| z < *theta) as f64 / n;
                *theta += lr * (tau - below);
            }
            set.sort_by(f64::total_cmp);
            if self.non_negative {
                for v in set.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }
}

/// `n` equally weighted atoms at the (2k-1)/(2n) quantiles of a weighted
/// atom mixture (left-continuous quantiles).
pub fn project_quantiles(mut atoms: Vec<(f64, f64)>, n: usize) -> Vec<f64> {
    atoms.retain(|a| a.1 > 0.0);
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    let mut cdf = 0.0;
    for level in (0..n).map(|j| (2 * j + 1) as f64 / (2 * n) as f64) {
        while k < atoms.len() {
            if cdf + atoms[k].1 / total >= level - LEVEL_TOL {
                break;
            }
            cdf += atoms[k].1 / total;
            k += 1;
        }
        out.push(atoms[k.min(atoms.len() - 1)].0);
    }
    out
}

/// Weighted atom mixtures behind the distributional TD(λ) targets.
///
/// `step_values[t]` is the per-step quantity (reward or one cost) at step t.
/// The mixture for step t holds the n-step sets
/// {Σ_{k<n} γᵏ x_{t+k} + γⁿ θ_l(s̄_{t+n}, a_{t+n})} with weights (1-λ)λⁿ⁻¹ for
/// n < H - t, plus the Monte-Carlo return with the remaining weight λ^{H-t-1}.
///
/// With `policy = None` the bootstrap cell is the action actually taken at
/// step t+n. With a flat `probs[id * A + a]` table the bootstrap atoms are
/// mixed over a' ~ π(·|s̄_{t+n}), which keeps replayed trajectories from
/// older policies from anchoring the critic to actions no longer chosen.
pub fn td_lambda_mixtures(
    trajectory: &Trajectory,
    step_values: &[f64],
    critic: &QuantileCritic,
    grid: usize,
    lambda: f64,
    gamma: f64,
    policy: Option<&[f64]>,
) -> Vec<Vec<(f64, f64)>> {
    let h = trajectory.steps.len();
    debug_assert_eq!(step_values.len(), h);
    let l = critic.quantiles() as f64;
    (0..h)
        .map(|t| {
            let remaining = h - t;
            let mut mixture = Vec::new();
            let mut partial = 0.0;
            for n in 1..=remaining {
                partial += gamma.powi(n as i32 - 1) * step_values[t + n - 1];
                if n == remaining {
                    mixture.push((partial, lambda.powi(n as i32 - 1)));
                    continue;
                }
                let w = (1.0 - lambda) * lambda.powi(n as i32 - 1);
                if w == 0.0 {
                    continue;
                }
                let next = &trajectory.steps[t + n];
                let discount = gamma.powi(n as i32);
                let mut push = |a: usize, p: f64| {
                    for theta in critic.atoms(next.state, a, grid) {
                        mixture.push((partial + discount * theta, p * w / l));
                    }
                };
                match policy {
                    None => push(next.action, 1.0),
                    Some(probs) => {
                        let n_actions = critic.n_actions;
                        for a in 0..n_actions {
                            let p = probs[next.state * n_actions + a];
                            if p > 0.0 {
                                push(a, p);
                            }
                        }
                    }
                }
            }
            mixture
        })
        .collect()
}

/// [`td_lambda_mixtures`] projected to `n_target` quantile atoms per step.
#[allow(clippy::too_many_arguments)]
pub fn td_lambda_targets(
    trajectory: &Trajectory,
    step_values: &[f64],
    critic: &QuantileCritic,
    grid: usize,
    lambda: f64,
    gamma: f64,
    policy: Option<&[f64]>,
    n_target: usize,
) -> Vec<Vec<f64>> {
    td_lambda_mixtures(trajectory, step_values, critic, grid, lambda, gamma, policy)
        .into_iter()
        .map(|m| project_quantiles(m, n_target))
        .collect()
}

/// ∫ |F_a(x) - F_b(x)| dx.
pub fn wasserstein1(a: &ReturnDistribution, b: &ReturnDistribution) -> f64 {
    let mut points: Vec<f64> = a.atoms().iter().chain(b.atoms()).map(|x| x.0).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let cdf = |d: &ReturnDistribution, x: f64| -> f64 { d.atoms().iter().filter(|p| p.0 <= x).map(|p| p.1).sum() };
    points
        .windows(2)
        .map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0]))
        .sum()
}
