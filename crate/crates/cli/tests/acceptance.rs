//! Acceptance report: one PASS/FAIL line per criterion, pinned tolerances.
//! Runs without the test harness so the report always reaches stdout.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srcpo::distribution::{
    exact_returns, risk_values, td_lambda_targets, value_bound_violations, wasserstein1, Channel, QuantileCritic,
};
use srcpo::env::{enumerate_augmented, make_env, occupancy, rollout, AugmentedIndex};
use srcpo::inner::{evaluate, inner_step, policy_gradient_risk, robbins_monro, SoftmaxPolicy, StepSettings};
use srcpo::oracle::{conjugate_by_grid, finite_difference_gradient, lp_optimal_policy, risk_constrained_optimum};
use srcpo::outer::{target_score, FiniteSampler};
use srcpo::risk::{
    conjugate_integral, cvar_dual, discretization_error_bound, discretize, minimizing_beta, spectral_risk, sub_risk,
    BetaParam, DiscretizedSpectrum, GBeta, ReturnDistribution, Spectrum,
};
use srcpo::srcpo::{run_tabular, Experiment, ExperimentConfig, FEASIBILITY_TOL};

type Criterion = (&'static str, u64, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn random_dist(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ReturnDistribution {
    let n = rng.gen_range(1..=10);
    let atoms = (0..n)
        .map(|_| (rng.gen_range(lo..hi), rng.gen_range(0.05..1.0)))
        .collect();
    ReturnDistribution::normalized(atoms).unwrap()
}

fn random_policy(index: &AugmentedIndex, rng: &mut ChaCha8Rng) -> SoftmaxPolicy {
    let theta = (0..index.len() * index.n_actions())
        .map(|_| rng.gen_range(-1.5..1.5))
        .collect();
    SoftmaxPolicy::from_logits(index.len(), index.n_actions(), theta)
}

fn random_beta(rng: &mut ChaCha8Rng, len: usize, hi: f64) -> BetaParam {
    let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..hi)).collect();
    v.sort_by(f64::total_cmp);
    BetaParam(v)
}

fn random_disc(rng: &mut ChaCha8Rng) -> DiscretizedSpectrum {
    let spec = match rng.gen_range(0..3) {
        0 => Spectrum::cvar(rng.gen_range(0.1..0.9)).unwrap(),
        1 => Spectrum::pow(rng.gen_range(0.2..0.9)).unwrap(),
        _ => Spectrum::wang(rng.gen_range(0.2..1.0)).unwrap(),
    };
    discretize(&spec, rng.gen_range(2..=6)).unwrap()
}

fn cvar_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let dist = random_dist(&mut rng, -5.0, 5.0);
        for alpha in [0.25, 0.5, 0.75] {
            let spectral = spectral_risk(&Spectrum::cvar(alpha).unwrap(), &dist);
            // The dual objective is convex and piecewise linear with kinks at the atoms.
            let dual = dist
                .atoms()
                .iter()
                .map(|&(x, _)| cvar_dual(&dist, alpha, x))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((spectral - dual).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max gap {worst:.2e} (tol 1e-6)"))
}

fn reference_discretizations() -> Outcome {
    let check = |spec: &str, eta: &[f64], alpha: &[f64]| {
        let d = discretize(&Spectrum::parse(spec).unwrap(), 5).unwrap();
        d.levels()
            .iter()
            .zip(eta)
            .chain(d.breakpoints().iter().zip(alpha))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };
    let pow = check("pow:0.5", &[0.2, 0.6, 1.0, 1.4, 1.8], &[0.2, 0.4, 0.6, 0.8]);
    let wang = check(
        "wang:0.5",
        &[0.515, 0.790, 1.091, 1.493, 2.191],
        &[0.263, 0.541, 0.770, 0.926],
    );
    outcome(
        pow <= 1e-2 && wang <= 2e-2,
        format!("pow 0.5 err {pow:.2e} (tol 1e-2), wang 0.5 err {wang:.2e} (tol 2e-2)"),
    )
}

fn discretization_bound() -> Outcome {
    let (c_max, gamma) = (1.0, 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut cases = Vec::new();
    for spec in ["cvar:0.5", "pow:0.5", "pow:0.8"].map(|s| Spectrum::parse(s).unwrap()) {
        for m in [2, 5, 10] {
            let disc = discretize(&spec, m).unwrap();
            let bound = discretization_error_bound(&spec, m, c_max, gamma).unwrap();
            cases.push((spec.clone(), disc, bound));
        }
    }
    let mut violations = 0;
    let mut checks = 0;
    for _ in 0..100 {
        let dist = random_dist(&mut rng, 0.0, c_max / (1.0 - gamma));
        for (spec, disc, bound) in &cases {
            let err = (spectral_risk(spec, &dist) - spectral_risk(disc, &dist)).abs();
            checks += 1;
            if err > bound + 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in {checks} checks"))
}

fn performance_difference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let cmdp = make_env("random(4,2,1)", 400 + k).unwrap().with_horizon(6);
        let index = enumerate_augmented(&cmdp).unwrap();
        let disc = random_disc(&mut rng);
        let len = disc.breakpoints().len();
        let g = GBeta::new(disc, random_beta(&mut rng, len, 6.0)).unwrap();
        let (p, q) = (
            random_policy(&index, &mut rng).probs(),
            random_policy(&index, &mut rng).probs(),
        );
        let base = risk_values(&index, &p, &g, 0);
        let lhs = risk_values(&index, &q, &g, 0).start_value - base.start_value;
        let d = occupancy(&index, &q);
        let n_actions = index.n_actions();
        let rhs: f64 = (0..q.len())
            .map(|j| d[j / n_actions] * q[j] * base.advantage[j])
            .sum::<f64>()
            / (1.0 - index.gamma());
        worst = worst.max((lhs - rhs).abs());
    }
    outcome(worst <= 1e-8, format!("max gap {worst:.2e} (tol 1e-8)"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let cmdp = make_env("random(3,2,1)", 500 + k).unwrap().with_horizon(4);
        let index = enumerate_augmented(&cmdp).unwrap();
        let disc = random_disc(&mut rng);
        let len = disc.breakpoints().len();
        let g = GBeta::new(disc, random_beta(&mut rng, len, 4.0)).unwrap();
        let policy = random_policy(&index, &mut rng);
        let fd = finite_difference_gradient(&index, &policy, &g, 0, 1e-5);
        let an = policy_gradient_risk(&index, &policy, &g, 0);
        for (f, a) in fd.iter().zip(&an) {
            worst = worst.max((f - a).abs() / f.abs().max(1e-5));
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} (tol 1e-4)"))
}

fn minimizing_beta_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut worst = 0.0f64;
    let mut beaten = 0;
    for _ in 0..50 {
        let dist = random_dist(&mut rng, 0.0, 10.0);
        let disc = random_disc(&mut rng);
        let best = minimizing_beta(&disc, &dist);
        let at_best = sub_risk(&disc, &best, &dist).unwrap();
        worst = worst.max((at_best - spectral_risk(&disc, &dist)).abs());
        for _ in 0..49 {
            let beta = random_beta(&mut rng, best.len(), 10.0);
            if sub_risk(&disc, &beta, &dist).unwrap() < at_best - 1e-10 {
                beaten += 1;
            }
        }
    }
    outcome(
        worst <= 1e-10 && beaten == 0,
        format!("max gap {worst:.2e} (tol 1e-10), {beaten} grid points below the minimizer"),
    )
}

fn conjugate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let disc = random_disc(&mut rng);
        let beta = random_beta(&mut rng, disc.breakpoints().len(), 8.0);
        let closed = conjugate_integral(&disc, &beta).unwrap();
        let grid = conjugate_by_grid(&disc, &beta).unwrap();
        worst = worst.max((closed - grid).abs());
    }
    outcome(worst <= 1e-6, format!("max gap {worst:.2e} (tol 1e-6)"))
}

fn value_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut violations = 0;
    let mut cells = 0;
    for name in ["hazard-chain(5)", "two-hazard-grid", "random(4,2,1)", "random(3,3,2)"] {
        let cmdp = make_env(name, 8).unwrap();
        let index = enumerate_augmented(&cmdp).unwrap();
        for _ in 0..10 {
            let probs = random_policy(&index, &mut rng).probs();
            for channel in 0..cmdp.n_costs() {
                let disc = random_disc(&mut rng);
                let len = disc.breakpoints().len();
                let g = GBeta::new(disc, random_beta(&mut rng, len, 5.0)).unwrap();
                let values = risk_values(&index, &probs, &g, channel);
                violations += value_bound_violations(&index, &values, &g, channel, 1e-9).len();
                cells += values.q.len();
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {cells} (s̄, a) cells"),
    )
}

fn inner_convergence() -> Outcome {
    let cmdp = make_env("hazard-chain(5)", 0).unwrap();
    let index = enumerate_augmented(&cmdp).unwrap();
    let disc = discretize(&Spectrum::cvar(0.75).unwrap(), 2).unwrap();
    let d = cmdp.thresholds()[0];
    let optimum = risk_constrained_optimum(&index, std::slice::from_ref(&disc), &[d])
        .unwrap()
        .unwrap();
    let gs = vec![GBeta::new(disc, optimum.betas[0].clone()).unwrap()];
    let mut policy = SoftmaxPolicy::for_index(&index);
    let settings = StepSettings::default();
    for t in 0..5000 {
        inner_step(&index, &mut policy, &gs, robbins_monro(0.05, t), &settings).unwrap();
    }
    let est = evaluate(&index, &policy, &gs).unwrap();
    let ratio = est.j_r / optimum.solution.j_r;
    outcome(
        est.j_c[0] <= d + 1e-3 && ratio >= 0.99,
        format!("J_C {:.5} (d {d} + 1e-3), J_R/oracle {ratio:.4} (min 0.99)", est.j_c[0]),
    )
}

fn quickstart() -> ExperimentConfig {
    ExperimentConfig::from_file(&workspace().join("configs/quickstart.cfg")).unwrap()
}

fn outer_convergence() -> Outcome {
    let mut cfg = quickstart();
    cfg.sampler_lr = 0.0;
    let mut exp = Experiment::new(cfg).unwrap();
    exp.run(|_| {}).unwrap();
    let scores: Vec<f64> = exp
        .evaluate_all()
        .unwrap()
        .iter()
        .map(|(j_r, j_c)| target_score(*j_r, j_c, exp.thresholds(), exp.config().penalty_k))
        .collect();
    let argmax = (0..scores.len())
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .unwrap();
    let mut sampler = FiniteSampler::uniform(scores.len());
    for _ in 0..10_000 {
        sampler.step(&scores, 1e-3).unwrap();
    }
    let mass = sampler.probs()[argmax];
    outcome(
        mass >= 0.99,
        format!("mass {mass:.6} on point {argmax} of {} (min 0.99)", scores.len()),
    )
}

fn end_to_end() -> Outcome {
    let cfg = quickstart();
    let exp = Experiment::new(cfg.clone()).unwrap();
    let best = (0..exp.grid().len())
        .filter_map(|k| lp_optimal_policy(exp.index(), exp.g_functions(k), exp.thresholds()).unwrap())
        .map(|s| s.j_r)
        .fold(f64::NEG_INFINITY, f64::max);
    let out = run_tabular(cfg).unwrap();
    let s = &out.summary;
    let ratio = s.j_r / best;
    outcome(
        s.feasible(FEASIBILITY_TOL) && ratio >= 0.99,
        format!(
            "J_C {:?} (d {:?} + {FEASIBILITY_TOL}), J_R/grid best {ratio:.4} (min 0.99)",
            s.j_c, s.thresholds
        ),
    )
}

fn quantile_critic() -> Outcome {
    let cmdp = make_env("hazard-chain(5)", 0).unwrap();
    let index = enumerate_augmented(&cmdp).unwrap();
    let gamma = index.gamma();
    let probs = SoftmaxPolicy::for_index(&index).probs();
    let mut rng = ChaCha8Rng::seed_from_u64(1200);
    let mut reward = QuantileCritic::new(index.len(), index.n_actions(), 1, 25, 2, false, 0.0, &mut rng);
    let mut cost = QuantileCritic::new(index.len(), index.n_actions(), 1, 25, 2, true, 0.0, &mut rng);
    for t in 0..10_000 {
        // Fixed-policy evaluation, so the step size decays instead of tracking.
        let lr = 2.0 * (1.0 + t as f64 / 100.0).powf(-0.75);
        let tr = rollout(&index, &probs, &mut rng);
        let r: Vec<f64> = tr.steps.iter().map(|s| s.reward).collect();
        let c: Vec<f64> = tr.steps.iter().map(|s| s.costs[0]).collect();
        let tr_targets = td_lambda_targets(&tr, &r, &reward, 0, 0.95, gamma, Some(&probs), 25);
        let tc_targets = td_lambda_targets(&tr, &c, &cost, 0, 0.95, gamma, Some(&probs), 25);
        for ((step, a), b) in tr.steps.iter().zip(&tr_targets).zip(&tc_targets) {
            reward.update(step.state, step.action, 0, a, lr);
            cost.update(step.state, step.action, 0, b, lr);
        }
    }
    let exact = exact_returns(&index, &probs);
    let start = index.initial()[0].0;
    let mut worst = 0.0f64;
    for (critic, channel) in [(&reward, Channel::Reward), (&cost, Channel::Cost(0))] {
        let total = exact.total(channel);
        let range = total.max() - total.min();
        for a in 0..index.n_actions() {
            let atoms = critic.atoms(start, a, 0);
            let learned =
                ReturnDistribution::new(atoms.iter().map(|&x| (x, 1.0 / atoms.len() as f64)).collect()).unwrap();
            worst = worst.max(wasserstein1(&learned, exact.q(channel, start, a)) / range);
        }
    }
    outcome(worst <= 0.05, format!("max W1/range {worst:.4} (tol 0.05)"))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_srcpo");
    let config = workspace().join("configs/quickstart.cfg");
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(bin)
            .args([
                "run",
                config.to_str().unwrap(),
                "--seed",
                "7",
                "--log-every",
                "0",
                "--out",
                out.to_str().unwrap(),
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        if !status.success() {
            return outcome(false, format!("run {run} exited with {status}"));
        }
        csv.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    outcome(
        csv[0] == csv[1],
        format!("{} bytes, identical: {}", csv[0].len(), csv[0] == csv[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("cvar duality", 5, cvar_duality),
        ("reference discretizations", 30, reference_discretizations),
        ("discretization error bound", 10, discretization_bound),
        ("risk performance difference identity", 60, performance_difference),
        ("risk policy gradient vs finite differences", 60, gradient_check),
        ("minimizing beta attains the spectral risk", 10, minimizing_beta_check),
        ("conjugate closed form vs grid", 10, conjugate),
        ("risk value bounds", 30, value_bounds),
        ("inner convergence", 300, inner_convergence),
        ("outer sampler convergence", 30, outer_convergence),
        ("end-to-end tabular", 600, end_to_end),
        ("quantile critic accuracy", 120, quantile_critic),
        ("determinism", 600, determinism),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.2}s, limit {limit}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
