use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srcpo::env::{enumerate_augmented, make_env, occupancy};
use srcpo::inner::{policy_gradient_risk, SoftmaxPolicy};
use srcpo::oracle::{conjugate_by_grid, finite_difference_gradient, lp_optimal_policy, monte_carlo_occupancy};
use srcpo::risk::{
    conjugate_integral, discretize, spectral_risk, sub_risk, BetaParam, GBeta, ReturnDistribution, Spectrum,
};
use srcpo::srcpo::{fmt_betas, fmt_num, write_csv, Experiment, ExperimentConfig, Mode};

// Stdout writes ignore errors so a closed pipe (`| head`) ends quietly.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "srcpo",
    version,
    about = "Spectral-risk-constrained policy optimization on finite CMDPs"
)]
struct Cli {
    /// Worker threads (falls back to SRCPO_THREADS, then all cores).
    #[arg(long, global = true, env = "SRCPO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv, final.ckpt and summary.txt.
    Run {
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: `out_dir` from the config, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Log one line to stderr every N epochs (0 = silent).
        #[arg(long)]
        log_every: Option<usize>,
    },
    /// Spectral, discretized and (with --beta) sub-risk of an atom file.
    EvalRisk {
        #[arg(long)]
        spec: String,
        /// File with one `value probability` pair per line.
        #[arg(long)]
        atoms: PathBuf,
        #[arg(long = "M", alias = "m", default_value_t = 10)]
        m: usize,
        /// Comma-separated breakpoints, M-1 of them.
        #[arg(long)]
        beta: Option<String>,
    },
    /// Step-function approximation of a spectrum.
    Discretize {
        #[arg(long)]
        spec: String,
        #[arg(long = "M", alias = "m")]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force reference computations, printed as `key value` lines.
    Oracle {
        #[arg(long)]
        name: OracleName,
        #[arg(long)]
        spec: Option<String>,
        #[arg(long = "M", alias = "m", default_value_t = 2)]
        m: usize,
        #[arg(long)]
        beta: Option<String>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cost channel for fd-gradient.
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Episodes for mc-occupancy.
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        /// Config for exhaustive.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Parse and check a config file without running it.
    ValidateConfig { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleName {
    Conjugate,
    FdGradient,
    Exhaustive,
    McOccupancy,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn domain(msg: impl Into<String>) -> Failure {
    Failure::Domain(msg.into())
}

fn kv(key: &str, value: f64) {
    out!("{key} {}", fmt_num(value));
}

fn parse_beta(text: &str) -> Result<BetaParam, Failure> {
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("bad β entry `{v}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BetaParam::new(values)?)
}

fn parse_spec(text: &str) -> Result<Spectrum, Failure> {
    Ok(Spectrum::parse(text)?)
}

/// `value probability` per line; `#` starts a comment.
fn read_atoms(path: &Path) -> Result<ReturnDistribution, Failure> {
    let text = fs::read_to_string(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    let mut atoms = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [v, p] => v.parse::<f64>().ok().zip(p.parse::<f64>().ok()),
            _ => None,
        };
        let (v, p) =
            parsed.ok_or_else(|| domain(format!("{}:{}: expected `value probability`", path.display(), n + 1)))?;
        atoms.push((v, p));
    }
    ReturnDistribution::new(atoms).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    if !path.is_file() {
        return Err(usage(format!("config file {} not found", path.display())));
    }
    Ok(ExperimentConfig::from_file(path)?)
}

fn cmd_run(
    config: &Path,
    mode: Option<Mode>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    log_every: Option<usize>,
) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = log_every {
        cfg.log_every = n;
    }
    let out = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut exp = Experiment::new(cfg)?;
    if let Some(path) = resume {
        exp.load_checkpoint(&path)?;
    }
    exp.run(|_| {})?;
    fs::create_dir_all(&out)?;
    let mut csv = BufWriter::new(fs::File::create(out.join("metrics.csv"))?);
    write_csv(&mut csv, exp.n_costs(), exp.grid().len(), exp.records())?;
    drop(csv);
    exp.save_checkpoint(&out.join("final.ckpt"))?;
    let summary = exp.summary()?.to_text();
    fs::write(out.join("summary.txt"), &summary)?;
    let _ = write!(std::io::stdout(), "{summary}");
    Ok(())
}

fn cmd_eval_risk(spec: &str, atoms: &Path, m: usize, beta: Option<String>) -> CmdResult {
    let spectrum = parse_spec(spec)?;
    let dist = read_atoms(atoms)?;
    let disc = discretize(&spectrum, m)?;
    kv("spectral_risk", spectral_risk(&spectrum, &dist));
    kv("discretized_risk", spectral_risk(&disc, &dist));
    if let Some(b) = beta {
        kv("sub_risk", sub_risk(&disc, &parse_beta(&b)?, &dist)?);
    }
    Ok(())
}

fn cmd_discretize(spec: &str, m: usize, out: Option<PathBuf>) -> CmdResult {
    let spectrum = parse_spec(spec)?;
    if m == 1 && !spectrum.is_constant() {
        eprintln!("warning: M=1 replaces {spectrum} by the mean");
    }
    let disc = discretize(&spectrum, m)?;
    let join = |v: &[f64]| v.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(" ");
    out!("eta {}", join(disc.levels()));
    out!("{}", format!("alpha {}", join(disc.breakpoints())).trim_end());
    if let Some(path) = out {
        fs::write(path, disc.to_text())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    name: OracleName,
    spec: Option<String>,
    m: usize,
    beta: Option<String>,
    env: Option<String>,
    seed: u64,
    channel: usize,
    episodes: usize,
    config: Option<PathBuf>,
) -> CmdResult {
    let need = |v: Option<String>, flag: &str| v.ok_or_else(|| usage(format!("this oracle needs --{flag}")));
    match name {
        OracleName::Conjugate => {
            let disc = discretize(&parse_spec(&need(spec, "spec")?)?, m)?;
            let beta = parse_beta(&need(beta, "beta")?)?;
            kv("conjugate_grid", conjugate_by_grid(&disc, &beta)?);
            kv("conjugate_closed", conjugate_integral(&disc, &beta)?);
        }
        OracleName::FdGradient => {
            let cmdp = make_env(&need(env, "env")?, seed)?;
            let index = enumerate_augmented(&cmdp)?;
            let disc = discretize(&parse_spec(&need(spec, "spec")?)?, m)?;
            let beta = parse_beta(&need(beta, "beta")?)?;
            let g = GBeta::new(disc, beta)?;
            if channel >= cmdp.n_costs() {
                return Err(usage(format!("channel {channel} out of range")));
            }
            let mut policy = SoftmaxPolicy::for_index(&index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in policy.logits_mut() {
                *t = rng.gen_range(-1.0..1.0);
            }
            let fd = finite_difference_gradient(&index, &policy, &g, channel, 1e-5);
            let analytic = policy_gradient_risk(&index, &policy, &g, channel);
            for (k, (f, a)) in fd.iter().zip(&analytic).enumerate() {
                out!("logit_{k} {} {}", fmt_num(*f), fmt_num(*a));
            }
        }
        OracleName::Exhaustive => {
            let path = config.ok_or_else(|| usage("this oracle needs --config"))?;
            let exp = Experiment::new(load_config(&path)?)?;
            let mut best: Option<(usize, f64)> = None;
            for k in 0..exp.grid().len() {
                let sol = lp_optimal_policy(exp.index(), exp.g_functions(k), exp.thresholds())?;
                match sol {
                    Some(s) => {
                        out!("point_{k} {} {}", fmt_betas(&exp.grid().point(k)), fmt_num(s.j_r));
                        if best.is_none_or(|(_, b)| s.j_r > b) {
                            best = Some((k, s.j_r));
                        }
                    }
                    None => out!("point_{k} {} infeasible", fmt_betas(&exp.grid().point(k))),
                }
            }
            match best {
                Some((k, j)) => {
                    out!("best_index {k}");
                    kv("best_j_r", j);
                }
                None => out!("best_index none"),
            }
        }
        OracleName::McOccupancy => {
            let cmdp = make_env(&need(env, "env")?, seed)?;
            let index = enumerate_augmented(&cmdp)?;
            let probs = SoftmaxPolicy::for_index(&index).probs();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mc = monte_carlo_occupancy(&index, &probs, episodes, &mut rng);
            let exact = occupancy(&index, &probs);
            for (id, (a, b)) in mc.iter().zip(&exact).enumerate() {
                out!("state_{id} {} {}", fmt_num(*a), fmt_num(*b));
            }
        }
    }
    Ok(())
}

fn cmd_validate(config: &Path) -> CmdResult {
    load_config(config)?.check()?;
    out!("ok {}", config.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            out,
            resume,
            log_every,
        } => cmd_run(&config, mode, seed, out, resume, log_every),
        Command::EvalRisk { spec, atoms, m, beta } => cmd_eval_risk(&spec, &atoms, m, beta),
        Command::Discretize { spec, m, out } => cmd_discretize(&spec, m, out),
        Command::Oracle {
            name,
            spec,
            m,
            beta,
            env,
            seed,
            channel,
            episodes,
            config,
        } => cmd_oracle(name, spec, m, beta, env, seed, channel, episodes, config),
        Command::ValidateConfig { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
    }
}
