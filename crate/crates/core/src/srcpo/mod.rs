//! The bilevel loop: inner policy updates per β, outer sampler updates.
//!
//! Tabular mode evaluates every quantity exactly and keeps one policy per
//! β-grid point. Practical mode samples β from a stick-breaking sampler,
//! collects rollouts into a replay buffer, trains quantile critics and
//! updates the policy of the grid point nearest to each sampled β.

mod buffer;
pub mod checkpoint;
mod config;
mod metrics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{td_lambda_targets, QuantileCritic};
use crate::env::{enumerate_augmented_with_cap, make_env, rollout, AugmentedIndex, EnvError, TabularCmdp};
use crate::inner::{evaluate, inner_step, plan_step, Estimates, InnerError, SoftmaxPolicy, StepReport};
use crate::outer::{sampler_entropy, target_score, BetaGrid, FiniteSampler, OuterError, StickSampler};
use crate::risk::{discretize, BetaParam, DiscretizedSpectrum, GBeta, RiskError};

pub use buffer::{BufferEntry, ReplayBuffer};
pub use checkpoint::{CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ConfigError, ExperimentConfig, GridSpec, Mode, Schedule};
pub use metrics::{csv_header, fmt_betas, fmt_num, write_csv, MetricsRecord};

/// Critic atoms start uniform on [0, CRITIC_INIT x largest return).
pub const CRITIC_INIT: f64 = 0.001;

/// Slack on J_C ≤ d when reporting a policy as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Outer(#[from] OuterError),
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{grid} grid points x at least {states} augmented states exceeds the state budget {budget}")]
    Budget { grid: usize, states: usize, budget: usize },
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SamplerState {
    Finite(FiniteSampler),
    Stick(StickSampler),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critics {
    pub reward: QuantileCritic,
    pub costs: Vec<QuantileCritic>,
}

/// Everything that changes during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub epoch: usize,
    pub env_steps: u64,
    pub policies: Vec<SoftmaxPolicy>,
    pub sampler: SamplerState,
    pub critics: Option<Critics>,
    pub buffer: ReplayBuffer,
    pub rng: ChaCha8Rng,
    pub records: Vec<MetricsRecord>,
}

/// Final policy chosen by the sampler, evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub grid_index: usize,
    pub betas: Vec<BetaParam>,
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl Summary {
    pub fn feasible(&self, tol: f64) -> bool {
        self.j_c.iter().zip(&self.thresholds).all(|(c, d)| *c <= d + tol)
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(" ");
        format!(
            "grid_index {}\nmodal_beta {}\nj_r {}\nj_c {}\nthresholds {}\nfeasible {}\n",
            self.grid_index,
            fmt_betas(&self.betas),
            fmt_num(self.j_r),
            list(&self.j_c),
            list(&self.thresholds),
            self.feasible(FEASIBILITY_TOL)
        )
    }
}

pub struct Experiment {
    config: ExperimentConfig,
    index: AugmentedIndex,
    discs: Vec<DiscretizedSpectrum>,
    grid: BetaGrid,
    gs: Vec<Vec<GBeta>>,
    thresholds: Vec<f64>,
    upper: Vec<f64>,
    state: RunState,
}

fn build_grid(config: &ExperimentConfig, lens: &[usize], upper: &[f64]) -> Result<BetaGrid, RunError> {
    let spaced = |lo: f64, hi: f64, n: usize, len: usize| -> Vec<BetaParam> {
        (0..n)
            .map(|k| {
                let v = if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                };
                BetaParam(vec![v; len])
            })
            .collect()
    };
    let lists = match &config.beta_grid {
        GridSpec::Uniform(n) => upper
            .iter()
            .zip(lens)
            .map(|(&hi, &len)| spaced(0.0, hi, *n, len))
            .collect(),
        GridSpec::Linspace { lo, hi, n } => lens.iter().map(|&len| spaced(*lo, *hi, *n, len)).collect(),
        GridSpec::Explicit(lists) => lists.clone(),
    };
    Ok(BetaGrid::new(lists)?)
}

/// Environment, spectra and β grid of a config, checked against each other.
struct Setup {
    cmdp: TabularCmdp,
    discs: Vec<DiscretizedSpectrum>,
    upper: Vec<f64>,
    grid: BetaGrid,
}

fn setup(config: &ExperimentConfig) -> Result<Setup, RunError> {
    config.validate()?;
    let field = |key: &str, msg: String| RunError::Config(ConfigError::Field { key: key.into(), msg });
    let mut cmdp = make_env(&config.env, config.seed)?;
    if let Some(h) = config.horizon {
        cmdp = cmdp.with_horizon(h);
    }
    let n_costs = cmdp.n_costs();
    if let Some(d) = &config.thresholds {
        if d.len() != n_costs {
            return Err(field(
                "thresholds",
                format!("{} values given for {n_costs} constraints", d.len()),
            ));
        }
        cmdp = cmdp.with_thresholds(d.clone())?;
    }
    if config.spectra.len() != 1 && config.spectra.len() != n_costs {
        return Err(field(
            "spectrum",
            format!("{} spectra given for {n_costs} constraints", config.spectra.len()),
        ));
    }
    let discs = (0..n_costs)
        .map(|i| discretize(config.spectrum(i), config.levels))
        .collect::<Result<Vec<_>, _>>()?;
    let lens: Vec<usize> = discs.iter().map(|d| d.breakpoints().len()).collect();
    if let GridSpec::Explicit(lists) = &config.beta_grid {
        if lists.len() != n_costs {
            return Err(field(
                "beta_grid",
                format!("{} lists given for {n_costs} constraints", lists.len()),
            ));
        }
        for (i, (list, &len)) in lists.iter().zip(&lens).enumerate() {
            if let Some(bad) = list.iter().find(|b| b.len() != len) {
                return Err(field(
                    "beta_grid",
                    format!("constraint {i} needs {len} β entries per point, got {}", bad.len()),
                ));
            }
        }
    }
    let upper: Vec<f64> = (0..n_costs).map(|i| cmdp.c_max(i) / (1.0 - cmdp.gamma())).collect();
    let grid = build_grid(config, &lens, &upper)?;
    Ok(Setup {
        cmdp,
        discs,
        upper,
        grid,
    })
}

impl ExperimentConfig {
    /// Every check that needs the environment but not the augmented state space.
    pub fn check(&self) -> Result<(), RunError> {
        setup(self).map(|_| ())
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, RunError> {
        let Setup {
            cmdp,
            discs,
            upper,
            grid,
        } = setup(&config)?;
        let n_costs = cmdp.n_costs();
        let thresholds = cmdp.thresholds().to_vec();
        // The cap stops enumeration as soon as the budget is exceeded.
        let cap = config.state_budget / grid.len();
        let index = match enumerate_augmented_with_cap(&cmdp, cap) {
            Err(EnvError::StateCap { count, .. }) => {
                return Err(RunError::Budget {
                    grid: grid.len(),
                    states: count,
                    budget: config.state_budget,
                })
            }
            other => other?,
        };
        let gs = grid
            .points()
            .into_iter()
            .map(|betas| {
                discs
                    .iter()
                    .zip(betas)
                    .map(|(d, b)| GBeta::new(d.clone(), b))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let policies = vec![SoftmaxPolicy::for_index(&index); grid.len()];
        let (sampler, critics) = match config.mode {
            Mode::Tabular => (SamplerState::Finite(FiniteSampler::uniform(grid.len())), None),
            Mode::Practical => {
                let lens: Vec<usize> = discs.iter().map(|d| d.breakpoints().len()).collect();
                let stick = StickSampler::new(&lens, upper.clone(), config.stick_init_mean).with_std(config.stick_std);
                let make = |non_negative: bool, scale: f64, rng: &mut ChaCha8Rng| {
                    QuantileCritic::new(
                        index.len(),
                        index.n_actions(),
                        grid.len(),
                        config.critic_quantiles,
                        config.critic_ensembles,
                        non_negative,
                        scale,
                        rng,
                    )
                };
                let r_scale = CRITIC_INIT * cmdp.r_max() / (1.0 - cmdp.gamma());
                let reward = make(false, r_scale, &mut rng);
                let costs = (0..n_costs)
                    .map(|i| make(true, CRITIC_INIT * upper[i], &mut rng))
                    .collect();
                (SamplerState::Stick(stick), Some(Critics { reward, costs }))
            }
        };
        let state = RunState {
            epoch: 0,
            env_steps: 0,
            policies,
            sampler,
            critics,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            rng,
            records: Vec::new(),
        };
        Ok(Self {
            config,
            index,
            discs,
            grid,
            gs,
            thresholds,
            upper,
            state,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn index(&self) -> &AugmentedIndex {
        &self.index
    }

    pub fn grid(&self) -> &BetaGrid {
        &self.grid
    }

    pub fn discs(&self) -> &[DiscretizedSpectrum] {
        &self.discs
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.state.records
    }

    pub fn n_costs(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    /// Runs the remaining epochs; `on_epoch` sees each new record.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&MetricsRecord)) -> Result<(), RunError> {
        while !self.is_done() {
            let record = self.run_epoch()?;
            on_epoch(&record);
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<MetricsRecord, RunError> {
        let record = match self.config.mode {
            Mode::Tabular => self.tabular_epoch()?,
            Mode::Practical => self.practical_epoch()?,
        };
        self.state.epoch += 1;
        self.state.records.push(record.clone());
        let every = self.config.log_every;
        if every > 0 && (record.epoch % every == 0 || self.is_done()) {
            log::info!(
                "epoch {} modal {} j_r {} j_c {:?} entropy {}",
                record.epoch,
                record.modal_index,
                fmt_num(record.modal_j_r),
                record.modal_j_c.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>(),
                fmt_num(record.entropy)
            );
        }
        Ok(record)
    }

    fn tabular_epoch(&mut self) -> Result<MetricsRecord, RunError> {
        let cfg = &self.config;
        let index = &self.index;
        let base = self.state.epoch * cfg.inner_steps;
        let reports: Vec<StepReport> = self
            .state
            .policies
            .par_iter_mut()
            .zip(self.gs.par_iter())
            .map(|(policy, gs)| {
                let mut first = None;
                for s in 0..cfg.inner_steps {
                    let eps = cfg.schedule.eps(cfg.eps0, base + s, Mode::Tabular);
                    let report = inner_step(index, policy, gs, eps, &cfg.step)?;
                    first.get_or_insert(report);
                }
                Ok(first.expect("at least one inner step"))
            })
            .collect::<Result<_, InnerError>>()?;
        let scores: Vec<f64> = reports
            .iter()
            .map(|r| target_score(r.j_r, &r.j_c, &self.thresholds, cfg.penalty_k))
            .collect();
        let SamplerState::Finite(sampler) = &mut self.state.sampler else {
            return Err(RunError::Inconsistent("tabular mode needs a finite sampler".into()));
        };
        sampler.step(&scores, cfg.sampler_lr)?;
        self.record(&reports, None, Vec::new())
    }

    fn practical_epoch(&mut self) -> Result<MetricsRecord, RunError> {
        let cfg = self.config.clone();
        let n_costs = self.n_costs();
        let gamma = self.index.gamma();
        let eps_t = cfg.schedule.eps(cfg.eps0, self.state.epoch, Mode::Practical);
        let SamplerState::Stick(stick) = self.state.sampler.clone() else {
            return Err(RunError::Inconsistent("practical mode needs a stick sampler".into()));
        };

        let mut reward_sum = 0.0;
        let mut cost_sum = vec![0.0; n_costs];
        let probs: Vec<Vec<f64>> = self.state.policies.iter().map(SoftmaxPolicy::probs).collect();
        for _ in 0..cfg.episodes {
            let rng = &mut self.state.rng;
            let explore = rng.gen::<f64>() < cfg.explore_eps;
            let betas = if explore {
                stick.sample_uniform(rng)
            } else {
                stick.sample(rng).betas
            };
            let k = self.grid.nearest(&betas);
            let trajectory = rollout(&self.index, &probs[k], rng);
            reward_sum += trajectory.discounted_reward(gamma);
            for (i, c) in cost_sum.iter_mut().enumerate() {
                *c += trajectory.discounted_cost(i, gamma);
            }
            self.state.env_steps += trajectory.steps.len() as u64;
            self.state.buffer.push(BufferEntry {
                betas,
                grid: k,
                trajectory,
            });
        }
        let episodes = cfg.episodes as f64;
        let occupancy = self.buffer_occupancy();

        let mut acc = vec![vec![0.0; self.index.len() * self.index.n_actions()]; self.grid.len()];
        let mut counts = vec![0usize; self.grid.len()];
        let mut reports = Vec::with_capacity(cfg.updates);
        let mut batch = Vec::with_capacity(cfg.updates);
        for _ in 0..cfg.updates {
            let Some(entry) = self.state.buffer.sample(&mut self.state.rng).cloned() else {
                break;
            };
            self.update_critics(&entry);
            let est = self.critic_estimates(entry.grid, &entry.betas, &occupancy[entry.grid])?;
            let (dir, report) = plan_step(&est, eps_t, &cfg.step);
            if !report.skipped {
                for (a, d) in acc[entry.grid].iter_mut().zip(&dir) {
                    *a += report.alpha * d;
                }
            }
            counts[entry.grid] += 1;
            let score = target_score(est.j_r, &est.j_c, &self.thresholds, cfg.penalty_k);
            batch.push((stick.log_density_grad(&entry.betas).1, score));
            reports.push(report);
        }
        for (k, policy) in self.state.policies.iter_mut().enumerate() {
            if counts[k] > 0 {
                policy.apply(&acc[k], 1.0 / counts[k] as f64);
            }
        }
        if let SamplerState::Stick(s) = &mut self.state.sampler {
            s.step(&batch, cfg.sampler_lr);
        }
        let rollout_stats = Some(reward_sum / episodes);
        let cost_stats = cost_sum.iter().map(|c| Some(c / episodes)).collect();
        self.record(&reports, rollout_stats, cost_stats)
    }

    /// d̂(s̄) per grid point from the buffered trajectories of its policy.
    fn buffer_occupancy(&self) -> Vec<Vec<f64>> {
        let gamma = self.index.gamma();
        let mut occ = vec![vec![0.0; self.index.len()]; self.grid.len()];
        let mut episodes = vec![0usize; self.grid.len()];
        for entry in self.state.buffer.iter() {
            episodes[entry.grid] += 1;
            for id in entry.trajectory.states() {
                occ[entry.grid][id] += (1.0 - gamma) * self.index.b(id);
            }
        }
        for (row, &n) in occ.iter_mut().zip(&episodes) {
            if n > 0 {
                for v in row.iter_mut() {
                    *v /= n as f64;
                }
            }
        }
        occ
    }

    fn update_critics(&mut self, entry: &BufferEntry) {
        let cfg = &self.config;
        let gamma = self.index.gamma();
        let probs = self.state.policies[entry.grid].probs();
        let policy = Some(probs.as_slice());
        let Some(critics) = self.state.critics.as_mut() else {
            return;
        };
        let traj = &entry.trajectory;
        let l = cfg.critic_quantiles;
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let targets = td_lambda_targets(
            traj,
            &rewards,
            &critics.reward,
            entry.grid,
            cfg.td_lambda,
            gamma,
            policy,
            l,
        );
        for (step, t) in traj.steps.iter().zip(&targets) {
            critics
                .reward
                .update(step.state, step.action, entry.grid, t, cfg.critic_lr);
        }
        for (i, critic) in critics.costs.iter_mut().enumerate() {
            let costs: Vec<f64> = traj.steps.iter().map(|s| s.costs[i]).collect();
            let targets = td_lambda_targets(traj, &costs, critic, entry.grid, cfg.td_lambda, gamma, policy, l);
            for (step, t) in traj.steps.iter().zip(&targets) {
                critic.update(step.state, step.action, entry.grid, t, cfg.critic_lr);
            }
        }
    }

    /// Values and advantages of grid point `k` from the critics, with the
    /// risk values taken at the sampled β: Q ≈ (1/L) Σ g(b e + b θ_l).
    fn critic_estimates(&self, k: usize, betas: &[BetaParam], occupancy: &[f64]) -> Result<Estimates, RunError> {
        let critics = self
            .state
            .critics
            .as_ref()
            .ok_or_else(|| RunError::Inconsistent("practical mode needs critics".into()))?;
        let index = &self.index;
        let n_actions = index.n_actions();
        let probs = self.state.policies[k].probs();
        let advantage = |q: Vec<f64>, scale_by_b: bool| -> (Vec<f64>, Vec<f64>) {
            let mut v = vec![0.0; index.len()];
            for id in 0..index.len() {
                v[id] = (0..n_actions)
                    .map(|a| probs[id * n_actions + a] * q[id * n_actions + a])
                    .sum();
            }
            let adv = (0..q.len())
                .map(|j| {
                    let id = j / n_actions;
                    let diff = q[j] - v[id];
                    if scale_by_b {
                        diff / index.b(id)
                    } else {
                        diff
                    }
                })
                .collect();
            (v, adv)
        };
        let start = |v: &[f64]| index.initial().iter().map(|&(id, p)| p * v[id]).sum::<f64>();
        let non_terminal = |id: usize| !index.is_terminal(id);

        let q_r: Vec<f64> = (0..index.len() * n_actions)
            .map(|j| {
                if non_terminal(j / n_actions) {
                    critics.reward.mean(j / n_actions, j % n_actions, k)
                } else {
                    0.0
                }
            })
            .collect();
        let (v_r, reward_advantage) = advantage(q_r, false);
        let mut cost_advantage = Vec::with_capacity(self.n_costs());
        let mut j_c = Vec::with_capacity(self.n_costs());
        for (i, critic) in critics.costs.iter().enumerate() {
            let g = GBeta::new(self.discs[i].clone(), betas[i].clone())?;
            let q: Vec<f64> = (0..index.len() * n_actions)
                .map(|j| {
                    let id = j / n_actions;
                    let b = index.b(id);
                    let e = index.state(id).e[i];
                    if !non_terminal(id) {
                        return g.eval(b * e);
                    }
                    let atoms = critic.atoms(id, j % n_actions, k);
                    atoms.iter().map(|&theta| g.eval(b * e + b * theta)).sum::<f64>() / atoms.len() as f64
                })
                .collect();
            let (v, adv) = advantage(q, true);
            j_c.push(start(&v) + g.conjugate());
            cost_advantage.push(adv);
        }
        Ok(Estimates {
            n_actions,
            gamma: index.gamma(),
            probs,
            occupancy: occupancy.to_vec(),
            reward_advantage,
            cost_advantage,
            j_r: start(&v_r),
            j_c,
            thresholds: self.thresholds.clone(),
        })
    }

    /// Exact (J_R, J_C) of every grid point's current policy.
    pub fn evaluate_all(&self) -> Result<Vec<(f64, Vec<f64>)>, RunError> {
        self.state
            .policies
            .par_iter()
            .zip(self.gs.par_iter())
            .map(|(p, gs)| evaluate(&self.index, p, gs).map(|e| (e.j_r, e.j_c)))
            .collect::<Result<_, _>>()
            .map_err(RunError::from)
    }

    /// Grid point the sampler currently favours.
    pub fn modal_index(&self) -> usize {
        match &self.state.sampler {
            SamplerState::Finite(s) => s.mode(),
            SamplerState::Stick(s) => self.grid.nearest(&s.modal_betas()),
        }
    }

    fn modal_betas(&self) -> Vec<BetaParam> {
        match &self.state.sampler {
            SamplerState::Finite(s) => self.grid.point(s.mode()),
            SamplerState::Stick(s) => s.modal_betas(),
        }
    }

    fn record(
        &self,
        reports: &[StepReport],
        episode_reward: Option<f64>,
        episode_cost: Vec<Option<f64>>,
    ) -> Result<MetricsRecord, RunError> {
        let n_costs = self.n_costs();
        let values = self.evaluate_all()?;
        let modal = self.modal_index();
        let entropy = match &self.state.sampler {
            SamplerState::Finite(s) => sampler_entropy(s),
            SamplerState::Stick(s) => s.entropy(),
        };
        let lambdas: Vec<f64> = reports.iter().flat_map(|r| r.lambda.iter().copied()).collect();
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let nus: Vec<f64> = reports.iter().map(|r| r.nu).collect();
        let alphas: Vec<f64> = reports.iter().map(|r| r.alpha).collect();
        let violated = reports
            .iter()
            .filter(|r| r.case == crate::inner::Case::Violated)
            .count();
        Ok(MetricsRecord {
            epoch: self.state.epoch,
            env_steps: self.state.env_steps,
            episode_reward,
            episode_cost: if episode_cost.is_empty() {
                vec![None; n_costs]
            } else {
                episode_cost
            },
            modal_index: modal,
            modal_beta: self.modal_betas(),
            modal_j_r: values[modal].0,
            modal_j_c: values[modal].1.clone(),
            entropy,
            satisfied: reports.len() - violated,
            violated,
            lambda_mean: mean(&lambdas),
            lambda_max: lambdas.iter().copied().fold(0.0, f64::max),
            nu_mean: mean(&nus),
            alpha_mean: mean(&alphas),
            j_r: values.iter().map(|v| v.0).collect(),
            j_c: (0..n_costs).map(|i| values.iter().map(|v| v.1[i]).collect()).collect(),
        })
    }

    /// Exact evaluation of the sampler's modal grid point.
    pub fn summary(&self) -> Result<Summary, RunError> {
        let k = self.modal_index();
        let est = evaluate(&self.index, &self.state.policies[k], &self.gs[k])?;
        Ok(Summary {
            grid_index: k,
            betas: self.grid.point(k),
            j_r: est.j_r,
            j_c: est.j_c,
            thresholds: self.thresholds.clone(),
        })
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn g_functions(&self, k: usize) -> &[GBeta] {
        &self.gs[k]
    }
}

/// Output of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub policies: Vec<SoftmaxPolicy>,
    pub sampler: SamplerState,
    pub metrics: Vec<MetricsRecord>,
    pub summary: Summary,
}

fn run_mode(mut config: ExperimentConfig, mode: Mode) -> Result<RunOutput, RunError> {
    config.mode = mode;
    let mut exp = Experiment::new(config)?;
    exp.run(|_| {})?;
    let summary = exp.summary()?;
    Ok(RunOutput {
        policies: exp.state.policies,
        sampler: exp.state.sampler,
        metrics: exp.state.records,
        summary,
    })
}

/// Exact bilevel run with one policy per grid point.
pub fn run_tabular(config: ExperimentConfig) -> Result<RunOutput, RunError> {
    run_mode(config, Mode::Tabular)
}

/// Sample-based run with critics, replay buffer and stick sampler.
pub fn run_practical(config: ExperimentConfig) -> Result<RunOutput, RunError> {
    run_mode(config, Mode::Practical)
}
