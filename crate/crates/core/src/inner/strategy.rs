use nalgebra::{DMatrix, DVector};

use super::qp::{linear_trust_region_multipliers, maximize_nonneg_concave};
use super::{Case, Estimates, StepSettings, Strategy, WeightDecision};

/// Picks the case from the constraint values and dispatches to the strategy.
pub fn decide(est: &Estimates, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let violated = !est.violated().is_empty();
    match (settings.strategy, violated) {
        (Strategy::Crpo, _) => weight_strategy_crpo(est, eps_t, settings),
        (_, true) => weight_strategy_violated(est, eps_t, settings),
        (Strategy::Proposed, false) => weight_strategy_proposed(est, eps_t, settings),
        (Strategy::SdacQp, false) => weight_strategy_sdac(est, eps_t, settings),
    }
}

/// Satisfied-case decision from the effective cost weights κ_i = α_t λ_{t,i}.
/// The step size comes from the Fisher norm of the resulting direction.
fn satisfied(est: &Estimates, kappa: Vec<f64>, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let scale = 1.0 / (1.0 - est.gamma);
    let dir: Vec<f64> = (0..est.probs.len())
        .map(|k| {
            let cost: f64 = kappa.iter().zip(&est.cost_advantage).map(|(w, a)| w * a[k]).sum();
            (est.reward_advantage[k] - cost) * scale
        })
        .collect();
    let c = settings.clip(est.fisher_quadratic(&dir).sqrt());
    let alpha = eps_t / c;
    let lambda = kappa
        .iter()
        .map(|&kp| if eps_t > 0.0 { kp / alpha } else { 0.0 })
        .collect();
    WeightDecision {
        case: Case::Satisfied,
        lambda,
        nu: 0.0,
        alpha,
    }
}

/// Violated-case decision with normalized weights and no reward term.
fn violated(est: &Estimates, lambda: Vec<f64>, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let scale = 1.0 / (1.0 - est.gamma);
    let dir: Vec<f64> = (0..est.probs.len())
        .map(|k| {
            -lambda
                .iter()
                .zip(&est.cost_advantage)
                .map(|(w, a)| w * a[k])
                .sum::<f64>()
                * scale
        })
        .collect();
    let c = settings.clip(est.fisher_quadratic(&dir).sqrt());
    WeightDecision {
        case: Case::Violated,
        lambda,
        nu: 0.0,
        alpha: eps_t / c,
    }
}

/// Reward-improvement QP: min ½gᵀFg s.t. ∇J_Rᵀg ≥ e, ∇J_{C_i}ᵀg + J_{C_i} ≤ d_i,
/// with e = ε_t √(∇J_RᵀF†∇J_R). Falls back to the recovery rule when the QP
/// is infeasible.
pub fn weight_strategy_proposed(est: &Estimates, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let n = est.n_costs();
    if eps_t <= 0.0 {
        return satisfied(est, vec![0.0; n], eps_t, settings);
    }
    let k = est.gram();
    let sign = |j: usize| if j == 0 { 1.0 } else { -1.0 };
    let g = DMatrix::from_fn(n + 1, n + 1, |i, j| sign(i) * sign(j) * k[(i, j)]);
    let e = eps_t * k[(0, 0)].max(0.0).sqrt();
    let c = DVector::from_fn(n + 1, |i, _| {
        if i == 0 {
            e
        } else {
            est.j_c[i - 1] - est.thresholds[i - 1]
        }
    });
    let Some(z) = maximize_nonneg_concave(&g, &c) else {
        log::debug!("reward-improvement QP infeasible; using the recovery rule");
        return weight_strategy_violated(est, eps_t, settings);
    };
    let nu_star = z[0];
    if nu_star <= 1e-300 {
        log::debug!("objective constraint inactive (ν* = 0); taking a pure reward step");
        return satisfied(est, vec![0.0; n], eps_t, settings);
    }
    let kappa = (0..n)
        .map(|i| eps_t * (z[i + 1] / (nu_star * eps_t)).min(settings.lambda_max))
        .collect();
    satisfied(est, kappa, eps_t, settings)
}

/// Satisfied case of the linear-quadratic (trust-region) subproblem:
/// λ_{t,i} = C·min(λ*_i/ε_t, λ_max).
pub fn weight_strategy_sdac(est: &Estimates, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let n = est.n_costs();
    if eps_t <= 0.0 {
        return satisfied(est, vec![0.0; n], eps_t, settings);
    }
    let c = DVector::from_fn(n, |i, _| (est.j_c[i] - est.thresholds[i]).min(0.0));
    let kappa = match linear_trust_region_multipliers(&est.gram(), &c, eps_t) {
        Some((lambda, _)) => lambda
            .iter()
            .map(|&l| eps_t * (l / eps_t).min(settings.lambda_max))
            .collect(),
        None => {
            log::debug!("trust-region subproblem degenerate; taking a pure reward step");
            vec![0.0; n]
        }
    };
    satisfied(est, kappa, eps_t, settings)
}

/// Recovery rule: λ* of min ½gᵀFg s.t. ∇J_{C_i}ᵀg + J_{C_i} ≤ d_i over the
/// violated constraints, normalized to sum to one.
pub fn weight_strategy_violated(est: &Estimates, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let n = est.n_costs();
    let set = est.violated();
    let mut lambda = vec![0.0; n];
    if set.is_empty() {
        log::debug!("recovery requested with every constraint satisfied; no step");
        return violated(est, lambda, eps_t, settings);
    }
    let k = est.gram();
    let g = DMatrix::from_fn(set.len(), set.len(), |i, j| k[(set[i] + 1, set[j] + 1)]);
    let c = DVector::from_fn(set.len(), |i, _| est.j_c[set[i]] - est.thresholds[set[i]]);
    let total = maximize_nonneg_concave(&g, &c).map(|z| (z.sum(), z));
    match total {
        Some((sum, z)) if sum > 0.0 => {
            for (r, &i) in set.iter().enumerate() {
                lambda[i] = z[r] / sum;
            }
        }
        _ => {
            log::debug!("recovery QP infeasible; weighting violated constraints equally");
            for &i in &set {
                lambda[i] = 1.0 / set.len() as f64;
            }
        }
    }
    violated(est, lambda, eps_t, settings)
}

/// λ = 0 when satisfied; otherwise λ = 1 on the most violated constraint
/// (lowest index on ties).
pub fn weight_strategy_crpo(est: &Estimates, eps_t: f64, settings: &StepSettings) -> WeightDecision {
    let n = est.n_costs();
    let mut worst: Option<(usize, f64)> = None;
    for i in 0..n {
        let gap = est.j_c[i] - est.thresholds[i];
        if gap > 0.0 && worst.is_none_or(|(_, g)| gap > g) {
            worst = Some((i, gap));
        }
    }
    match worst {
        None => satisfied(est, vec![0.0; n], eps_t, settings),
        Some((k, _)) => {
            let mut lambda = vec![0.0; n];
            lambda[k] = 1.0;
            violated(est, lambda, eps_t, settings)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::npg_direction;

    /// Two augmented states, two actions, uniform policy, hand-set advantages.
    fn toy(reward: [f64; 2], costs: Vec<[f64; 2]>, j_c: Vec<f64>, d: Vec<f64>) -> Estimates {
        let expand = |a: [f64; 2]| vec![a[0], -a[0], a[1], -a[1]];
        Estimates {
            n_actions: 2,
            gamma: 0.5,
            probs: vec![0.5; 4],
            occupancy: vec![0.3, 0.2],
            reward_advantage: expand(reward),
            cost_advantage: costs.into_iter().map(expand).collect(),
            j_r: 1.0,
            j_c,
            thresholds: d,
        }
    }

    fn settings(strategy: Strategy) -> StepSettings {
        StepSettings {
            strategy,
            ..StepSettings::default()
        }
    }

    #[test]
    fn no_active_constraint_means_pure_reward_step() {
        let est = toy([1.0, 0.5], vec![[0.2, -1.0]], vec![0.0], vec![10.0]);
        let w = weight_strategy_proposed(&est, 0.01, &settings(Strategy::Proposed));
        assert_eq!(w.case, Case::Satisfied);
        assert_eq!(w.lambda, vec![0.0]);
        let dir = npg_direction(&est, &w);
        assert!((dir[0] - 2.0).abs() < 1e-12 && (dir[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_satisfies_linearized_constraint() {
        // Reward and cost point the same way and the constraint is nearly tight.
        let est = toy([1.0, 0.5], vec![[1.0, 0.2]], vec![0.99999], vec![1.0]);
        let s = settings(Strategy::Proposed);
        let w = weight_strategy_proposed(&est, 0.1, &s);
        assert!(w.lambda[0] > 0.0);
        let dir = npg_direction(&est, &w);
        let step: Vec<f64> = dir.iter().map(|x| x * w.alpha).collect();
        let grad_c = est.gradient(&est.cost_advantage[0]);
        let predicted: f64 = grad_c.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>() + est.j_c[0];
        assert!(predicted <= est.thresholds[0] + 1e-8, "{predicted}");
        assert!(w.lambda[0] <= s.lambda_max * s.g_max);
    }

    #[test]
    fn single_violation_gets_unit_weight() {
        let est = toy([1.0, 0.5], vec![[1.0, 0.2], [0.3, 0.3]], vec![2.0, 0.0], vec![1.0, 1.0]);
        let w = weight_strategy_violated(&est, 0.1, &settings(Strategy::Proposed));
        assert_eq!(w.case, Case::Violated);
        assert_eq!(w.lambda, vec![1.0, 0.0]);
        assert_eq!(w.nu, 0.0);
    }

    #[test]
    fn identical_violations_split_evenly() {
        let est = toy([1.0, 0.5], vec![[1.0, 0.2], [1.0, 0.2]], vec![2.0, 2.0], vec![1.0, 1.0]);
        let w = weight_strategy_violated(&est, 0.1, &settings(Strategy::Proposed));
        assert!((w.lambda[0] - 0.5).abs() < 1e-9 && (w.lambda[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn recovery_direction_reduces_weighted_cost() {
        let est = toy(
            [1.0, 0.5],
            vec![[1.0, -0.4], [0.2, 0.9]],
            vec![1.5, 1.2],
            vec![1.0, 1.0],
        );
        let w = weight_strategy_violated(&est, 0.1, &settings(Strategy::Proposed));
        let dir = npg_direction(&est, &w);
        let total: f64 = (0..2)
            .map(|i| {
                let g = est.gradient(&est.cost_advantage[i]);
                w.lambda[i] * g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum();
        assert!(total < 0.0);
    }

    #[test]
    fn crpo_choices() {
        let s = settings(Strategy::Crpo);
        let est = toy([1.0, 0.5], vec![[1.0, 0.2], [0.3, 0.3]], vec![0.0, 0.0], vec![1.0, 1.0]);
        assert_eq!(weight_strategy_crpo(&est, 0.1, &s).lambda, vec![0.0, 0.0]);
        let est = toy([1.0, 0.5], vec![[1.0, 0.2], [0.3, 0.3]], vec![1.1, 1.3], vec![1.0, 1.0]);
        assert_eq!(weight_strategy_crpo(&est, 0.1, &s).lambda, vec![0.0, 1.0]);
        let est = toy(
            [1.0, 0.5],
            vec![[1.0, 0.2], [0.3, 0.3]],
            vec![1.25, 1.25],
            vec![1.0, 1.0],
        );
        assert_eq!(weight_strategy_crpo(&est, 0.1, &s).lambda, vec![1.0, 0.0]);
    }

    #[test]
    fn sdac_reduces_to_reward_step_when_slack() {
        let est = toy([1.0, 0.5], vec![[0.2, -1.0]], vec![0.0], vec![10.0]);
        let w = weight_strategy_sdac(&est, 0.01, &settings(Strategy::SdacQp));
        assert_eq!(w.lambda, vec![0.0]);
    }

    #[test]
    fn trust_region_step_size() {
        let est = toy([1.0, 0.5], vec![[0.2, -1.0]], vec![0.0], vec![10.0]);
        let s = settings(Strategy::Proposed);
        let w = weight_strategy_proposed(&est, 0.01, &s);
        let dir = npg_direction(&est, &w);
        let norm = est.fisher_quadratic(&dir).sqrt();
        assert!((w.alpha - 0.01 / norm.clamp(s.g_min, s.g_max)).abs() < 1e-15);
    }
}
