//! Command-line front end: offline planning, online learning, multi-run
//! comparisons, and the property-check suite.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use blackwell_rl::envs::{greedy_path_length, render_greedy, to_mdp, GridWorldSpec};
use blackwell_rl::harness::{
    self, checks, emit_plot_data, resolve_out_dir, run_experiment, run_single, AlgorithmConfig,
    EnvironmentConfig, ExperimentConfig,
};
use blackwell_rl::learner::{EpisodeLog, DEFAULT_MAX_EPISODE_STEPS};
use blackwell_rl::mdp::{self, value_iteration, MdpModel, Policy, QTable};
use blackwell_rl::planner::blackwell_value_iteration;
use blackwell_rl::Result;

#[derive(Parser)]
#[command(
    name = "blackwell-rl",
    version,
    about = "Tabular MDP planning and learning via Blackwell approachability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlanAlgo {
    /// Regret-matching planner; reports the averaged Q table.
    BlackwellVi,
    /// Classic Bellman-optimality iteration.
    ValueIteration,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LearnAlgo {
    BlackwellQ,
    QLearning,
    Sarsa,
    ExpectedSarsa,
}

impl LearnAlgo {
    fn registered_name(self) -> &'static str {
        match self {
            LearnAlgo::BlackwellQ => "blackwell-q",
            LearnAlgo::QLearning => "q-learning",
            LearnAlgo::Sarsa => "sarsa",
            LearnAlgo::ExpectedSarsa => "expected-sarsa",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP offline and write Q/policy tables (and the per-state
    /// distance trace for the Blackwell planner).
    Plan {
        /// MDP text file (mutually exclusive with --env).
        #[arg(long, conflicts_with = "env")]
        mdp: Option<PathBuf>,
        /// Built-in environment name (currently: cliff).
        #[arg(long)]
        env: Option<String>,
        /// Discount override (required as γ<1 for planning; cliff defaults
        /// to 0.999).
        #[arg(long)]
        discount: Option<f64>,
        #[arg(long, value_enum, default_value_t = PlanAlgo::BlackwellVi)]
        algo: PlanAlgo,
        /// Iteration budget (Blackwell VI runs exactly this many steps).
        #[arg(long, default_value_t = 100_000)]
        iters: usize,
        /// Convergence tolerance for value iteration.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Keep every n-th row of the distance trace.
        #[arg(long, default_value_t = 1)]
        trace_every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one online learner and write its per-episode log.
    Learn {
        /// Built-in environment name (currently: cliff).
        #[arg(long, default_value = "cliff", conflicts_with = "mdp")]
        env: String,
        /// Gridworld spec as TOML (rows, cols, start, goal, cliff, rewards).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// MDP text file simulated with seeded transitions.
        #[arg(long)]
        mdp: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LearnAlgo::BlackwellQ)]
        algo: LearnAlgo,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exploration rate for the ε-greedy baselines.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Constant learning rate for the baselines.
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        /// Initial Q value (optimistic values aid exploration on
        /// positive-reward tasks).
        #[arg(long, default_value_t = 0.0)]
        q_init: f64,
        /// Fast-timescale exponent a in α(k) = (1+k)^-a.
        #[arg(long, default_value_t = 0.6)]
        fast_exponent: f64,
        /// Slow-timescale exponent b in β(k) = (1+k)^-b.
        #[arg(long, default_value_t = 0.9)]
        slow_exponent: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_EPISODE_STEPS)]
        max_steps: usize,
        #[arg(long)]
        discount: Option<f64>,
        /// CSV label; defaults to the algorithm name.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment config (multiple algorithms × runs) and emit
    /// learning curves.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        runs: Option<u64>,
        /// Base seed override; run i uses base_seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Moving-average window for plot.csv.
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suites (regret-matching identities, contraction,
    /// directional-derivative checks).
    Check,
}

fn load_plan_model(
    mdp: Option<&PathBuf>,
    env: Option<&str>,
    discount: Option<f64>,
) -> Result<MdpModel> {
    match (mdp, env) {
        (Some(path), None) => {
            let model = mdp::io::load_mdp(path)?;
            match discount {
                Some(d) => model.with_discount(d),
                None => Ok(model),
            }
        }
        (None, Some("cliff")) => to_mdp(&GridWorldSpec::cliff_walking(), discount.unwrap_or(0.999)),
        (None, Some(other)) => Err(blackwell_rl::Error::InvalidArgument(format!(
            "unknown environment '{other}' (expected: cliff)"
        ))),
        (None, None) => Err(blackwell_rl::Error::InvalidArgument(
            "plan needs --mdp FILE or --env cliff".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn write_file<F>(path: &PathBuf, write: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    mdp: Option<PathBuf>,
    env: Option<String>,
    discount: Option<f64>,
    algo: PlanAlgo,
    iters: usize,
    tol: f64,
    trace_every: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = load_plan_model(mdp.as_ref(), env.as_deref(), discount)?;
    let out_dir = resolve_out_dir(out.as_deref(), None);
    fs::create_dir_all(&out_dir)?;
    if env.is_some() {
        // The learner treats the cliff as undiscounted; planning needs a
        // contraction, so the export substitutes gamma < 1.
        println!(
            "planning on the cliff MDP export with discount {}",
            model.discount()
        );
    }
    match algo {
        PlanAlgo::BlackwellVi => {
            let run = blackwell_value_iteration(
                &model,
                iters,
                QTable::zeros(model.num_states(), model.num_actions()),
                Policy::uniform(model.num_states(), model.num_actions()),
            )?;
            write_file(&out_dir.join("qbar.csv"), |w| {
                harness::write_qtable_csv(&run.qbar, w)
            })?;
            write_file(&out_dir.join("policy.csv"), |w| {
                harness::write_policy_csv(&run.policy, w)
            })?;
            write_file(&out_dir.join("distance.csv"), |w| {
                run.write_distance_csv(w, trace_every)
            })?;
            let worst = run
                .distance_trace
                .last()
                .map(|row| row.iter().cloned().fold(0.0f64, f64::max))
                .unwrap_or(0.0);
            println!(
                "blackwell-vi: {iters} iterations, worst per-state distance {worst:.3e}; \
                 wrote qbar.csv, policy.csv, distance.csv to {}",
                out_dir.display()
            );
        }
        PlanAlgo::ValueIteration => {
            let outcome = value_iteration(&model, tol, iters)?;
            write_file(&out_dir.join("q.csv"), |w| {
                harness::write_qtable_csv(&outcome.qstar, w)
            })?;
            write_file(&out_dir.join("policy.csv"), |w| {
                harness::write_policy_csv(&outcome.greedy, w)
            })?;
            println!(
                "value-iteration: {} iterations, sup gap {:.3e}, error bound {:.3e}, converged: {}; \
                 wrote q.csv, policy.csv to {}",
                outcome.iterations,
                outcome.sup_gap,
                outcome.error_bound,
                outcome.converged,
                out_dir.display()
            );
            if !outcome.converged {
                eprintln!("warning: tolerance not reached within --iters; result is partial");
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_learn(
    env: String,
    grid: Option<PathBuf>,
    mdp_path: Option<PathBuf>,
    algo: LearnAlgo,
    episodes: usize,
    seed: u64,
    epsilon: f64,
    lr: f64,
    q_init: f64,
    fast_exponent: f64,
    slow_exponent: f64,
    max_steps: usize,
    discount: Option<f64>,
    label: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let environment = if let Some(path) = mdp_path {
        EnvironmentConfig::Mdp {
            path,
            noise_sigma: 0.0,
        }
    } else if env == "cliff" {
        let spec = match grid {
            Some(path) => {
                let text = fs::read_to_string(&path)?;
                let spec: GridWorldSpec = toml::from_str(&text)
                    .map_err(|e| blackwell_rl::Error::Config(format!("{}: {e}", path.display())))?;
                spec.validate()?;
                spec
            }
            None => GridWorldSpec::cliff_walking(),
        };
        EnvironmentConfig::Cliff { grid: spec }
    } else {
        return Err(blackwell_rl::Error::InvalidArgument(format!(
            "unknown environment '{env}' (expected: cliff)"
        )));
    };

    let algo_config = AlgorithmConfig {
        name: algo.registered_name().to_string(),
        label,
        epsilon,
        learning_rate: lr,
        fast_exponent,
        slow_exponent,
        q_init,
    };
    let config = ExperimentConfig {
        episodes,
        runs: 1,
        base_seed: seed,
        discount,
        max_steps_per_episode: max_steps,
        out: None,
        environment,
        algorithms: vec![algo_config.clone()],
    };
    config.validate()?;

    let (log, qtable) = run_single(&config, &config.algorithms[0], 0)?;
    let out_dir = resolve_out_dir(out.as_deref(), None);
    fs::create_dir_all(&out_dir)?;
    write_file(&out_dir.join("episodes.csv"), |w| {
        EpisodeLog::write_csv_header(&mut *w)?;
        log.write_csv_rows(algo_config.label(), 0, w)
    })?;

    println!(
        "{}: {episodes} episodes, final-50 mean return {:.2}; wrote episodes.csv to {}",
        algo_config.label(),
        log.final_window_mean(50),
        out_dir.display()
    );
    if let EnvironmentConfig::Cliff { grid } = &config.environment {
        match greedy_path_length(grid, &qtable, 10_000) {
            Some(len) => println!("greedy policy reaches the goal in {len} steps"),
            None => println!("greedy policy does not reach the goal"),
        }
        print!("{}", render_greedy(grid, &qtable));
    }
    Ok(())
}

fn cmd_compare(
    config_path: PathBuf,
    episodes: Option<usize>,
    runs: Option<u64>,
    seed: Option<u64>,
    window: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut config = ExperimentConfig::load(&config_path)?;
    if let Some(episodes) = episodes {
        config.episodes = episodes;
    }
    if let Some(runs) = runs {
        config.runs = runs;
    }
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    config.validate()?;
    let out_dir = resolve_out_dir(out.as_deref(), config.out.as_deref());
    let summary = run_experiment(&config, &out_dir)?;
    let plot = emit_plot_data(&summary, window)?;
    write_file(&out_dir.join("plot.csv"), |w| plot.write_csv(w))?;

    println!(
        "{} algorithms x {} runs x {} episodes in {:.1}s (final window {}):",
        summary.algorithms.len(),
        summary.runs,
        summary.episodes,
        summary.wall_clock_seconds,
        summary.final_window
    );
    for algo in &summary.algorithms {
        println!(
            "  {:<24} final mean return {:>10.2}  (std {:.2})",
            algo.label, algo.final_window_mean, algo.final_window_std
        );
    }
    println!(
        "wrote episodes.csv, summary.json, plot.csv to {}",
        out_dir.display()
    );
    Ok(())
}

fn cmd_check() -> Result<()> {
    let outcomes = checks::run_all();
    let mut failed = 0;
    for check in &outcomes {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} {} — {}", check.name, check.detail);
        if !check.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(blackwell_rl::Error::Numerical(format!(
            "{failed}/{} property checks failed",
            outcomes.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan {
            mdp,
            env,
            discount,
            algo,
            iters,
            tol,
            trace_every,
            out,
        } => cmd_plan(mdp, env, discount, algo, iters, tol, trace_every, out),
        Command::Learn {
            env,
            grid,
            mdp,
            algo,
            episodes,
            seed,
            epsilon,
            lr,
            q_init,
            fast_exponent,
            slow_exponent,
            max_steps,
            discount,
            label,
            out,
        } => cmd_learn(
            env,
            grid,
            mdp,
            algo,
            episodes,
            seed,
            epsilon,
            lr,
            q_init,
            fast_exponent,
            slow_exponent,
            max_steps,
            discount,
            label,
            out,
        ),
        Command::Compare {
            config,
            episodes,
            runs,
            seed,
            window,
            out,
        } => cmd_compare(config, episodes, runs, seed, window, out),
        Command::Check => cmd_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
