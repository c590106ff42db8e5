//! Brute-force reference computations used to check the fast paths.

use std::collections::BTreeMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use rand::Rng;
use thiserror::Error;

use crate::distribution::{reward_values, sub_risk_of_policy};
use crate::env::{rollout, AugmentedIndex};
use crate::inner::{constraint_value, GradientVector, SoftmaxPolicy};
use crate::risk::{BetaParam, DiscretizedSpectrum, GBeta, RiskError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("expected {expected} constraint functions, got {got}")]
    ConstraintCount { expected: usize, got: usize },
}

/// g*(y) = sup_x (xy − g(x)) by repeated grid refinement of a concave
/// function of x, then integrated against the step spectrum.
pub fn conjugate_by_grid(disc: &DiscretizedSpectrum, beta: &BetaParam) -> Result<f64, OracleError> {
    let g = GBeta::new(disc.clone(), beta.clone())?;
    let span = beta.as_slice().iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let levels = disc.levels();
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(disc.breakpoints());
    bounds.push(1.0);
    let mut total = 0.0;
    for (k, &y) in levels.iter().enumerate() {
        let f = |x: f64| x * y - g.eval(x);
        let (mut lo, mut hi) = (-4.0 * span, 4.0 * span);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..12 {
            let n = 1000;
            let step = (hi - lo) / n as f64;
            let mut arg = lo;
            for i in 0..=n {
                let x = lo + step * i as f64;
                let v = f(x);
                if v > best {
                    best = v;
                    arg = x;
                }
            }
            lo = arg - 2.0 * step;
            hi = arg + 2.0 * step;
        }
        total += (bounds[k + 1] - bounds[k]) * best;
    }
    Ok(total)
}

/// Central differences of J_{C_i} over every logit.
pub fn finite_difference_gradient(
    index: &AugmentedIndex,
    policy: &SoftmaxPolicy,
    g: &GBeta,
    channel: usize,
    h: f64,
) -> GradientVector {
    (0..policy.logits().len())
        .map(|k| {
            let mut up = policy.clone();
            up.logits_mut()[k] += h;
            let mut down = policy.clone();
            down.logits_mut()[k] -= h;
            (constraint_value(index, &up, g, channel) - constraint_value(index, &down, g, channel)) / (2.0 * h)
        })
        .collect()
}

/// Sample estimate of d(s̄) = (1-γ) Σ γᵗ P(s̄_t = s̄).
pub fn monte_carlo_occupancy<R: Rng + ?Sized>(
    index: &AugmentedIndex,
    probs: &[f64],
    episodes: usize,
    rng: &mut R,
) -> Vec<f64> {
    let gamma = index.gamma();
    let mut d = vec![0.0; index.len()];
    for _ in 0..episodes {
        let traj = rollout(index, probs, rng);
        for id in traj.states() {
            d[id] += (1.0 - gamma) * index.b(id);
        }
    }
    for v in &mut d {
        *v /= episodes as f64;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub j_r: f64,
    pub j_c: Vec<f64>,
    /// Flat policy table; unreachable states are uniform.
    pub probs: Vec<f64>,
}

/// Best policy for fixed g functions: max J_R s.t. E[g_i(G_{C_i})] + ∫g_i* ≤ d_i,
/// solved as a linear program over per-step state-action visitation of the
/// augmented MDP. Returns `None` when no policy is feasible.
pub fn lp_optimal_policy(
    index: &AugmentedIndex,
    gs: &[GBeta],
    thresholds: &[f64],
) -> Result<Option<LpSolution>, OracleError> {
    let cmdp = index.cmdp();
    if gs.len() != cmdp.n_costs() || thresholds.len() != gs.len() {
        return Err(OracleError::ConstraintCount {
            expected: cmdp.n_costs(),
            got: gs.len(),
        });
    }
    let n_actions = index.n_actions();
    let horizon = index.horizon();
    let gamma = index.gamma();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let mut vars: Vec<Option<Variable>> = vec![None; index.len() * n_actions];
    let mut inflow: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); index.len()];
    let mut cost_rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); gs.len()];
    for t in 0..horizon {
        for id in index.level(t) {
            let s = index.state(id).s;
            let discount = gamma.powi(t as i32);
            for a in 0..n_actions {
                let reward: f64 = index
                    .transitions(id, a)
                    .iter()
                    .map(|tr| tr.prob * cmdp.reward(s, a, tr.base))
                    .sum();
                let var = lp.add_var(discount * reward, (0.0, f64::INFINITY));
                let k = id * n_actions + a;
                vars[k] = Some(var);
                for tr in index.transitions(id, a) {
                    *inflow[tr.next].entry(k).or_default() += tr.prob;
                    if t + 1 == horizon {
                        let b = index.b(tr.next);
                        for (i, g) in gs.iter().enumerate() {
                            let value = g.eval(b * index.state(tr.next).e[i]);
                            *cost_rows[i].entry(k).or_default() += tr.prob * value;
                        }
                    }
                }
            }
        }
    }
    let mut initial = vec![0.0; index.len()];
    for &(id, p) in index.initial() {
        initial[id] += p;
    }
    for t in 0..horizon {
        for id in index.level(t) {
            let mut row: Vec<(Variable, f64)> = (0..n_actions)
                .map(|a| (vars[id * n_actions + a].expect("non-terminal"), 1.0))
                .collect();
            row.extend(inflow[id].iter().map(|(&k, &p)| (vars[k].expect("non-terminal"), -p)));
            lp.add_constraint(row, ComparisonOp::Eq, initial[id]);
        }
    }
    for (i, row) in cost_rows.iter().enumerate() {
        let terms: Vec<(Variable, f64)> = row.iter().map(|(&k, &c)| (vars[k].expect("non-terminal"), c)).collect();
        lp.add_constraint(terms, ComparisonOp::Le, thresholds[i] - gs[i].conjugate());
    }
    let solution = match lp.solve() {
        Ok(sol) => sol,
        Err(minilp::Error::Infeasible) => return Ok(None),
        Err(e) => return Err(OracleError::Lp(e.to_string())),
    };
    let mut probs = vec![1.0 / n_actions as f64; index.len() * n_actions];
    for id in 0..index.len() {
        let row = id * n_actions..(id + 1) * n_actions;
        let mass: Vec<f64> = row
            .clone()
            .map(|k| vars[k].map_or(0.0, |v| solution[v].max(0.0)))
            .collect();
        let total: f64 = mass.iter().sum();
        if total > 1e-12 {
            for (p, m) in probs[row].iter_mut().zip(&mass) {
                *p = m / total;
            }
        }
    }
    let j_c = gs
        .iter()
        .enumerate()
        .map(|(i, g)| sub_risk_of_policy(index, &probs, g, i))
        .collect();
    Ok(Some(LpSolution {
        j_r: reward_values(index, &probs).start_value,
        j_c,
        probs,
    }))
}

/// Every total discounted cost the augmented MDP can produce on a channel.
pub fn cost_return_support(index: &AugmentedIndex, channel: usize) -> Vec<f64> {
    let mut values: Vec<f64> = index
        .level(index.horizon())
        .map(|id| index.b(id) * index.state(id).e[channel])
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    values
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskOptimum {
    pub betas: Vec<BetaParam>,
    pub solution: LpSolution,
}

/// Exact optimum of the spectral-risk-constrained problem for the given
/// discretized spectra: the minimizing β of any policy has every entry in
/// the cost-return support, so the maximum over monotone support vectors of
/// the fixed-β LP is the optimum.
pub fn risk_constrained_optimum(
    index: &AugmentedIndex,
    discs: &[DiscretizedSpectrum],
    thresholds: &[f64],
) -> Result<Option<RiskOptimum>, OracleError> {
    let candidates: Vec<Vec<BetaParam>> = discs
        .iter()
        .enumerate()
        .map(|(i, disc)| monotone_vectors(&cost_return_support(index, i), disc.breakpoints().len()))
        .collect();
    let mut best: Option<RiskOptimum> = None;
    let mut pick = vec![0usize; discs.len()];
    loop {
        let betas: Vec<BetaParam> = pick
            .iter()
            .enumerate()
            .map(|(i, &k)| candidates[i][k].clone())
            .collect();
        let gs = discs
            .iter()
            .zip(&betas)
            .map(|(d, b)| GBeta::new(d.clone(), b.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(sol) = lp_optimal_policy(index, &gs, thresholds)? {
            if best.as_ref().is_none_or(|b| sol.j_r > b.solution.j_r + 1e-12) {
                best = Some(RiskOptimum { betas, solution: sol });
            }
        }
        // Odometer over the candidate lists.
        let mut i = 0;
        loop {
            if i == pick.len() {
                return Ok(best);
            }
            pick[i] += 1;
            if pick[i] < candidates[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

fn monotone_vectors(support: &[f64], len: usize) -> Vec<BetaParam> {
    fn extend(support: &[f64], from: usize, prefix: &mut Vec<f64>, len: usize, out: &mut Vec<BetaParam>) {
        if prefix.len() == len {
            out.push(BetaParam(prefix.clone()));
            return;
        }
        for k in from..support.len() {
            prefix.push(support[k]);
            extend(support, k, prefix, len, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(support, 0, &mut Vec::new(), len, &mut out);
    out
}
