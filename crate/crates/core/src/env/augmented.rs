use std::collections::HashMap;

use rand::Rng;

use super::{EnvError, TabularCmdp};

pub const DEFAULT_STATE_CAP: usize = 2_000_000;

// e-values are keyed after rounding to this many units per 1.0.
const KEY_SCALE: f64 = 1e12;

/// (s, e, b) with b = γᵗ kept as the integer step t.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub s: usize,
    /// e_i = Σ_{j<t} γʲ c_{i,j} / γᵗ.
    pub e: Vec<f64>,
    pub t: usize,
}

impl AugmentedState {
    pub fn initial(s: usize, n_costs: usize) -> Self {
        Self {
            s,
            e: vec![0.0; n_costs],
            t: 0,
        }
    }

    pub fn b(&self, gamma: f64) -> f64 {
        gamma.powi(self.t as i32)
    }
}

/// e'_i = (c_i + e_i)/γ, b' = γb.
pub fn augment_step(state: &AugmentedState, next: usize, costs: &[f64], gamma: f64) -> AugmentedState {
    AugmentedState {
        s: next,
        e: state.e.iter().zip(costs).map(|(e, c)| (c + e) / gamma).collect(),
        t: state.t + 1,
    }
}

/// One outgoing edge of the augmented chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Augmented id of the successor.
    pub next: usize,
    /// Base state of the successor.
    pub base: usize,
    pub prob: f64,
}

/// Dense ids for every augmented state reachable within the horizon, in BFS
/// order grouped by step, plus the transition structure between them.
#[derive(Debug, Clone)]
pub struct AugmentedIndex {
    cmdp: TabularCmdp,
    states: Vec<AugmentedState>,
    level_start: Vec<usize>,
    row_start: Vec<usize>,
    edges: Vec<Transition>,
    initial: Vec<(usize, f64)>,
}

pub fn enumerate_augmented(cmdp: &TabularCmdp) -> Result<AugmentedIndex, EnvError> {
    enumerate_augmented_with_cap(cmdp, DEFAULT_STATE_CAP)
}

pub fn enumerate_augmented_with_cap(cmdp: &TabularCmdp, cap: usize) -> Result<AugmentedIndex, EnvError> {
    let n_costs = cmdp.n_costs();
    let n_actions = cmdp.n_actions();
    let gamma = cmdp.gamma();
    let key = |st: &AugmentedState| -> (usize, Vec<i128>) {
        (st.s, st.e.iter().map(|e| (e * KEY_SCALE).round() as i128).collect())
    };

    let mut states = Vec::new();
    let mut initial = Vec::new();
    for (s, &p) in cmdp.initial().iter().enumerate() {
        if p > 0.0 {
            initial.push((states.len(), p));
            states.push(AugmentedState::initial(s, n_costs));
        }
    }
    let mut level_start = vec![0, states.len()];
    let mut row_start = vec![0];
    let mut edges = Vec::new();
    let mut costs = vec![0.0; n_costs];

    for _t in 0..cmdp.horizon() {
        let (lo, hi) = (level_start[level_start.len() - 2], level_start[level_start.len() - 1]);
        let mut seen: HashMap<(usize, Vec<i128>), usize> = HashMap::new();
        for id in lo..hi {
            let s = states[id].s;
            for a in 0..n_actions {
                for (next, &p) in cmdp.next_probs(s, a).iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    for (i, c) in costs.iter_mut().enumerate() {
                        *c = cmdp.cost(i, s, a, next);
                    }
                    let succ = augment_step(&states[id], next, &costs, gamma);
                    let k = key(&succ);
                    let next_id = match seen.get(&k) {
                        Some(&existing) => existing,
                        None => {
                            let new_id = states.len();
                            if new_id >= cap {
                                return Err(EnvError::StateCap { count: new_id + 1, cap });
                            }
                            seen.insert(k, new_id);
                            states.push(succ);
                            new_id
                        }
                    };
                    edges.push(Transition {
                        next: next_id,
                        base: next,
                        prob: p,
                    });
                }
                row_start.push(edges.len());
            }
        }
        level_start.push(states.len());
    }
    // Terminal level: no outgoing edges.
    let terminal = level_start[level_start.len() - 1] - level_start[level_start.len() - 2];
    for _ in 0..terminal * n_actions {
        row_start.push(edges.len());
    }
    Ok(AugmentedIndex {
        cmdp: cmdp.clone(),
        states,
        level_start,
        row_start,
        edges,
        initial,
    })
}

impl AugmentedIndex {
    pub fn cmdp(&self) -> &TabularCmdp {
        &self.cmdp
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_actions(&self) -> usize {
        self.cmdp.n_actions()
    }

    pub fn gamma(&self) -> f64 {
        self.cmdp.gamma()
    }

    pub fn horizon(&self) -> usize {
        self.cmdp.horizon()
    }

    pub fn state(&self, id: usize) -> &AugmentedState {
        &self.states[id]
    }

    pub fn states(&self) -> &[AugmentedState] {
        &self.states
    }

    /// Ids at step t.
    pub fn level(&self, t: usize) -> std::ops::Range<usize> {
        self.level_start[t]..self.level_start[t + 1]
    }

    pub fn b(&self, id: usize) -> f64 {
        self.states[id].b(self.gamma())
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.states[id].t == self.horizon()
    }

    /// Initial augmented ids with their probabilities.
    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn transitions(&self, id: usize, a: usize) -> &[Transition] {
        let row = id * self.n_actions() + a;
        &self.edges[self.row_start[row]..self.row_start[row + 1]]
    }

    /// Id of an augmented state, if reachable.
    pub fn find(&self, state: &AugmentedState) -> Option<usize> {
        if state.t > self.horizon() {
            return None;
        }
        self.level(state.t).find(|&id| {
            let other = &self.states[id];
            other.s == state.s
                && other
                    .e
                    .iter()
                    .zip(&state.e)
                    .all(|(x, y)| ((x * KEY_SCALE).round() - (y * KEY_SCALE).round()).abs() < 0.5)
        })
    }

    /// Undiscounted marginals P(s̄_t = s̄) under a flat `probs[id * A + a]` policy table.
    pub fn visitation(&self, probs: &[f64]) -> Vec<f64> {
        let n_actions = self.n_actions();
        let mut mass = vec![0.0; self.len()];
        for &(id, p) in &self.initial {
            mass[id] += p;
        }
        for t in 0..self.horizon() {
            for id in self.level(t) {
                let m = mass[id];
                if m == 0.0 {
                    continue;
                }
                for a in 0..n_actions {
                    let pa = m * probs[id * n_actions + a];
                    if pa == 0.0 {
                        continue;
                    }
                    for tr in self.transitions(id, a) {
                        mass[tr.next] += pa * tr.prob;
                    }
                }
            }
        }
        mass
    }
}

/// d(s̄) = (1 - γ) Σ_{t=0}^{H} γᵗ P(s̄_t = s̄). Total mass is 1 - γ^{H+1}.
pub fn occupancy(index: &AugmentedIndex, probs: &[f64]) -> Vec<f64> {
    let gamma = index.gamma();
    let mut d = index.visitation(probs);
    for (id, v) in d.iter_mut().enumerate() {
        *v *= (1.0 - gamma) * index.b(id);
    }
    d
}

/// [`occupancy`] rescaled to a probability distribution.
pub fn occupancy_normalized(index: &AugmentedIndex, probs: &[f64]) -> Vec<f64> {
    let mut d = occupancy(index, probs);
    let total: f64 = d.iter().sum();
    for v in &mut d {
        *v /= total;
    }
    d
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub costs: Vec<f64>,
}

/// H steps plus the terminal augmented id.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal: usize,
}

impl Trajectory {
    pub fn discounted_reward(&self, gamma: f64) -> f64 {
        self.steps.iter().rev().fold(0.0, |acc, s| s.reward + gamma * acc)
    }

    pub fn discounted_cost(&self, channel: usize, gamma: f64) -> f64 {
        self.steps
            .iter()
            .rev()
            .fold(0.0, |acc, s| s.costs[channel] + gamma * acc)
    }

    /// Every augmented id visited, terminal included.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.state).chain(std::iter::once(self.terminal))
    }
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Simulates one H-step episode under a flat `probs[id * A + a]` policy table.
pub fn rollout<R: Rng + ?Sized>(index: &AugmentedIndex, probs: &[f64], rng: &mut R) -> Trajectory {
    let cmdp = index.cmdp();
    let n_actions = index.n_actions();
    let start = sample_index(rng, index.initial().iter().map(|x| x.1));
    let mut id = index.initial()[start].0;
    let mut steps = Vec::with_capacity(index.horizon());
    for _ in 0..index.horizon() {
        let row = &probs[id * n_actions..(id + 1) * n_actions];
        let a = sample_index(rng, row.iter().copied());
        let edges = index.transitions(id, a);
        let tr = edges[sample_index(rng, edges.iter().map(|t| t.prob))];
        let s = index.state(id).s;
        steps.push(Step {
            state: id,
            action: a,
            reward: cmdp.reward(s, a, tr.base),
            costs: (0..cmdp.n_costs()).map(|i| cmdp.cost(i, s, a, tr.base)).collect(),
        });
        id = tr.next;
    }
    Trajectory { steps, terminal: id }
}
