use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CmdpTables, EnvError, TabularCmdp};

/// Probability that a run in the hazard chain slips (and costs 1).
pub const HAZARD_SLIP: f64 = 0.2;
pub const HAZARD_GOAL_REWARD: f64 = 10.0;
pub const HAZARD_THRESHOLD: f64 = 0.5;

/// Names of the built-in environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvSpec {
    Random {
        states: usize,
        actions: usize,
        costs: usize,
    },
    HazardChain {
        length: usize,
    },
    TwoHazardGrid,
}

impl FromStr for EnvSpec {
    type Err = EnvError;

    fn from_str(name: &str) -> Result<Self, EnvError> {
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        let unknown = || EnvError::UnknownEnv(name.to_string());
        if compact == "two-hazard-grid" {
            return Ok(Self::TwoHazardGrid);
        }
        let (head, rest) = compact.split_once('(').ok_or_else(unknown)?;
        let args: Vec<usize> = rest
            .strip_suffix(')')
            .ok_or_else(unknown)?
            .split(',')
            .map(|s| s.parse().map_err(|_| unknown()))
            .collect::<Result<_, _>>()?;
        match (head, args.as_slice()) {
            ("random", &[s, a, n]) if s > 0 && a > 0 && n > 0 => Ok(Self::Random {
                states: s,
                actions: a,
                costs: n,
            }),
            ("hazard-chain", &[l]) if l >= 2 => Ok(Self::HazardChain { length: l }),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random { states, actions, costs } => write!(f, "random({states},{actions},{costs})"),
            Self::HazardChain { length } => write!(f, "hazard-chain({length})"),
            Self::TwoHazardGrid => write!(f, "two-hazard-grid"),
        }
    }
}

/// Builds a built-in environment; `seed` only affects `random(..)`.
pub fn make_env(name: &str, seed: u64) -> Result<TabularCmdp, EnvError> {
    match name.parse::<EnvSpec>()? {
        EnvSpec::Random { states, actions, costs } => random(states, actions, costs, seed),
        EnvSpec::HazardChain { length } => hazard_chain(length),
        EnvSpec::TwoHazardGrid => two_hazard_grid(),
    }
}

/// Dense random CMDP: rewards uniform on [-1, 1], binary costs, γ = 0.9, H = 6.
fn random(n_states: usize, n_actions: usize, n_costs: usize, seed: u64) -> Result<TabularCmdp, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sas = n_states * n_actions * n_states;
    let mut transitions = Vec::with_capacity(sas);
    for _ in 0..n_states * n_actions {
        let row: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        transitions.extend(row.iter().map(|w| w / total));
    }
    let init: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = init.iter().sum();
    let initial = init.iter().map(|w| w / total).collect();
    let rewards = (0..sas).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let costs = (0..n_costs)
        .map(|_| (0..sas).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
        .collect();
    TabularCmdp::new(CmdpTables {
        name: format!("random({n_states},{n_actions},{n_costs})"),
        n_states,
        n_actions,
        transitions,
        initial,
        gamma: 0.9,
        rewards,
        costs,
        thresholds: vec![1.0; n_costs],
        horizon: 6,
    })
}

/// Corridor 0..L-1 with an absorbing goal at L-1 worth a one-off reward.
/// Action 0 walks one cell safely; action 1 runs two cells but slips with
/// probability [`HAZARD_SLIP`], advancing one cell and costing 1. Costs are
/// keyed by (s, a, s'), so a run from the cell next to the goal always costs 1.
fn hazard_chain(length: usize) -> Result<TabularCmdp, EnvError> {
    let (n_states, n_actions) = (length, 2);
    let goal = length - 1;
    let sas = n_states * n_actions * n_states;
    let mut transitions = vec![0.0; sas];
    let mut rewards = vec![0.0; sas];
    let mut costs = vec![0.0; sas];
    let at = |s: usize, a: usize, next: usize| (s * n_actions + a) * n_states + next;
    for s in 0..n_states {
        for a in 0..n_actions {
            if s == goal {
                transitions[at(s, a, goal)] = 1.0;
                continue;
            }
            let outcomes: Vec<(usize, f64, f64)> = if a == 0 {
                vec![(s + 1, 1.0, 0.0)]
            } else {
                vec![((s + 2).min(goal), 1.0 - HAZARD_SLIP, 0.0), (s + 1, HAZARD_SLIP, 1.0)]
            };
            for (next, p, c) in outcomes {
                transitions[at(s, a, next)] += p;
                costs[at(s, a, next)] = c;
                if next == goal {
                    rewards[at(s, a, next)] = HAZARD_GOAL_REWARD;
                }
            }
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    TabularCmdp::new(CmdpTables {
        name: format!("hazard-chain({length})"),
        n_states,
        n_actions,
        transitions,
        initial,
        gamma: 0.9,
        rewards,
        costs: vec![costs],
        thresholds: vec![HAZARD_THRESHOLD],
        horizon: length + 1,
    })
}

/// 3x3 grid from the top-left corner to an absorbing bottom-right goal.
/// Actions: right, down (each slips to the other direction with probability
/// 0.1) and a diagonal jump that stalls with probability 0.3, costing 1 on
/// channel 0. Entering the centre cell costs 1 on channel 1.
fn two_hazard_grid() -> Result<TabularCmdp, EnvError> {
    const W: usize = 3;
    let (n_states, n_actions) = (W * W, 3);
    let goal = n_states - 1;
    let centre = W * W / 2;
    let sas = n_states * n_actions * n_states;
    let mut transitions = vec![0.0; sas];
    let mut rewards = vec![0.0; sas];
    let mut stall = vec![0.0; sas];
    let mut centre_cost = vec![0.0; sas];
    let at = |s: usize, a: usize, next: usize| (s * n_actions + a) * n_states + next;
    let shift = |s: usize, dr: usize, dc: usize| {
        let (r, c) = (s / W, s % W);
        (r + dr).min(W - 1) * W + (c + dc).min(W - 1)
    };
    for s in 0..n_states {
        for a in 0..n_actions {
            if s == goal {
                transitions[at(s, a, goal)] = 1.0;
                continue;
            }
            let outcomes: Vec<(usize, f64, bool)> = match a {
                0 => vec![(shift(s, 0, 1), 0.9, false), (shift(s, 1, 0), 0.1, false)],
                1 => vec![(shift(s, 1, 0), 0.9, false), (shift(s, 0, 1), 0.1, false)],
                _ => vec![(shift(s, 1, 1), 0.7, false), (s, 0.3, true)],
            };
            for (next, p, stalled) in outcomes {
                transitions[at(s, a, next)] += p;
                if stalled {
                    stall[at(s, a, next)] = 1.0;
                }
                if next == centre && s != centre {
                    centre_cost[at(s, a, next)] = 1.0;
                }
                if next == goal {
                    rewards[at(s, a, next)] = 10.0;
                }
            }
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    TabularCmdp::new(CmdpTables {
        name: "two-hazard-grid".into(),
        n_states,
        n_actions,
        transitions,
        initial,
        gamma: 0.9,
        rewards,
        costs: vec![stall, centre_cost],
        thresholds: vec![0.5, 0.5],
        horizon: 5,
    })
}
