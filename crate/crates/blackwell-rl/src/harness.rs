//! Experiment orchestration: TOML configs, deterministic multi-run
//! execution, CSV/summary persistence, and plot-ready learning curves.
//!
//! Reproducibility contract: run `i` of an algorithm uses the ChaCha stream
//! seeded with `base_seed + i` on the stream id derived from the
//! algorithm's label (environments draw from a separate `env/<label>`
//! stream). Identical config + seed therefore reproduces identical CSV
//! bytes on any machine.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{CliffWalk, Environment, GridWorldSpec, MdpEnv};
use crate::error::{Error, Result};
use crate::learner::{
    run_baseline, run_blackwell_q, BaselineAlgo, BaselineConfig, BlackwellQConfig, EpisodeLog,
    StepSchedules, DEFAULT_MAX_EPISODE_STEPS,
};
use crate::mdp::{self, QTable};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "BLACKWELL_RL_OUT";

fn fnv1a(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic generator for (seed, label): the label picks the ChaCha
/// stream so different roles never share a sequence even at equal seeds.
pub fn seeded_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label));
    rng
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_EPISODE_STEPS
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_learning_rate() -> f64 {
    0.5
}
fn default_fast_exponent() -> f64 {
    0.6
}
fn default_slow_exponent() -> f64 {
    0.9
}

/// Which environment an experiment runs on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentConfig {
    /// Gridworld; fields default to the canonical 4×12 cliff layout.
    Cliff {
        #[serde(flatten)]
        grid: GridWorldSpec,
    },
    /// Explicit MDP loaded from a text file, simulated with seeded
    /// transitions. Observed rewards optionally carry zero-mean Gaussian
    /// noise so they remain unbiased estimates of r(s,a).
    Mdp {
        path: PathBuf,
        #[serde(default)]
        noise_sigma: f64,
    },
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig::Cliff {
            grid: GridWorldSpec::cliff_walking(),
        }
    }
}

/// One algorithm entry of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Registered name: `blackwell-q`, `q-learning`, `sarsa`,
    /// `expected-sarsa`.
    pub name: String,
    /// CSV label; defaults to `name`. Must be unique within a config.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_fast_exponent")]
    pub fast_exponent: f64,
    #[serde(default = "default_slow_exponent")]
    pub slow_exponent: f64,
    #[serde(default)]
    pub q_init: f64,
}

impl AlgorithmConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            label: None,
            epsilon: default_epsilon(),
            learning_rate: default_learning_rate(),
            fast_exponent: default_fast_exponent(),
            slow_exponent: default_slow_exponent(),
            q_init: 0.0,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn kind(&self) -> Result<AlgoKind> {
        match self.name.as_str() {
            "blackwell-q" => Ok(AlgoKind::BlackwellQ),
            "q-learning" => Ok(AlgoKind::Baseline(BaselineAlgo::QLearning)),
            "sarsa" => Ok(AlgoKind::Baseline(BaselineAlgo::Sarsa)),
            "expected-sarsa" => Ok(AlgoKind::Baseline(BaselineAlgo::ExpectedSarsa)),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// Resolved algorithm kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoKind {
    BlackwellQ,
    Baseline(BaselineAlgo),
}

/// A full experiment: environment, algorithm list, scale, and seeding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub episodes: usize,
    pub runs: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Discount override; defaults to 1 on the cliff (episodic) and to the
    /// model's own discount for MDP environments.
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps_per_episode: usize,
    /// Output directory; overridable by `--out` and [`OUT_DIR_ENV`].
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one [[algorithm]] required".into()));
        }
        let mut labels = std::collections::HashSet::new();
        for algo in &self.algorithms {
            algo.kind()?;
            let label = algo.label();
            if label.contains(',') || label.is_empty() {
                return Err(Error::Config(format!("bad algorithm label '{label}'")));
            }
            if !labels.insert(label.to_string()) {
                return Err(Error::Config(format!(
                    "duplicate algorithm label '{label}'"
                )));
            }
        }
        if let EnvironmentConfig::Cliff { grid } = &self.environment {
            grid.validate()?;
        }
        Ok(())
    }

    /// The per-algorithm final-statistics window W = max(50, episodes/10).
    pub fn final_window(&self) -> usize {
        (self.episodes / 10).max(50).min(self.episodes)
    }
}

/// One CSV data row of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub algo: String,
    pub run_id: u64,
    pub episode: usize,
    pub total_return: f64,
    pub steps: usize,
}

/// All logs of one algorithm, keyed by run id.
#[derive(Debug, Clone)]
pub struct AlgoRuns {
    pub label: String,
    pub runs: Vec<(u64, EpisodeLog)>,
}

/// Per-algorithm aggregate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub label: String,
    /// Per-episode return averaged over runs (exact mean, ascending run id).
    pub mean_returns: Vec<f64>,
    pub final_window_mean: f64,
    pub final_window_std: f64,
}

/// Aggregated experiment outcome; round-trips through the JSON summary
/// file exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub runs: u64,
    pub base_seed: u64,
    pub final_window: usize,
    pub wall_clock_seconds: f64,
    pub algorithms: Vec<AlgoSummary>,
}

fn build_environment(
    config: &ExperimentConfig,
    label: &str,
    seed: u64,
) -> Result<(Box<dyn Environment>, f64)> {
    match &config.environment {
        EnvironmentConfig::Cliff { grid } => {
            let env = CliffWalk::new(grid.clone())?;
            Ok((Box::new(env), config.discount.unwrap_or(1.0)))
        }
        EnvironmentConfig::Mdp { path, noise_sigma } => {
            let model = mdp::io::load_mdp(path)?;
            let discount = config.discount.unwrap_or(model.discount());
            let rng = seeded_rng(seed, &format!("env/{label}"));
            let env = MdpEnv::new(model, rng).with_noise(*noise_sigma)?;
            Ok((Box::new(env), discount))
        }
    }
}

/// Executes one (algorithm, run) pair with its deterministic seed and
/// returns the per-episode log and the final Q table.
pub fn run_single(
    config: &ExperimentConfig,
    algo: &AlgorithmConfig,
    run_id: u64,
) -> Result<(EpisodeLog, QTable)> {
    let label = algo.label();
    let seed = config.base_seed.wrapping_add(run_id);
    let wrap = |e: Error| Error::RunFailed {
        algo: label.to_string(),
        run_id,
        source: Box::new(e),
    };
    let (mut env, discount) = build_environment(config, label, seed).map_err(wrap)?;
    let rng = seeded_rng(seed, label);
    let (state, log) = match algo.kind().map_err(wrap)? {
        AlgoKind::BlackwellQ => {
            let mut cfg = BlackwellQConfig::new(discount);
            cfg.schedules =
                StepSchedules::new(algo.fast_exponent, algo.slow_exponent).map_err(wrap)?;
            cfg.q_init = algo.q_init;
            cfg.max_steps_per_episode = config.max_steps_per_episode;
            run_blackwell_q(env.as_mut(), config.episodes, &cfg, rng).map_err(wrap)?
        }
        AlgoKind::Baseline(baseline) => {
            let mut cfg = BaselineConfig::new(baseline, discount, algo.learning_rate, algo.epsilon)
                .map_err(wrap)?;
            cfg.q_init = algo.q_init;
            cfg.max_steps_per_episode = config.max_steps_per_episode;
            run_baseline(env.as_mut(), config.episodes, &cfg, rng).map_err(wrap)?
        }
    };
    Ok((log, state.qtable))
}

/// Runs every (algorithm, run) pair sequentially.
pub fn execute_runs(config: &ExperimentConfig) -> Result<Vec<AlgoRuns>> {
    config.validate()?;
    let mut all = Vec::with_capacity(config.algorithms.len());
    for algo in &config.algorithms {
        let mut runs = Vec::with_capacity(config.runs as usize);
        for run_id in 0..config.runs {
            let (log, _) = run_single(config, algo, run_id)?;
            runs.push((run_id, log));
        }
        all.push(AlgoRuns {
            label: algo.label().to_string(),
            runs,
        });
    }
    Ok(all)
}

/// Flattens logs into CSV rows (ascending run id per algorithm).
pub fn to_rows(all: &[AlgoRuns]) -> Vec<EpisodeRow> {
    let mut rows = Vec::new();
    for algo in all {
        for (run_id, log) in &algo.runs {
            for e in &log.episodes {
                rows.push(EpisodeRow {
                    algo: algo.label.clone(),
                    run_id: *run_id,
                    episode: e.episode,
                    total_return: e.total_return,
                    steps: e.steps,
                });
            }
        }
    }
    rows
}

/// Exact per-episode mean over runs, independent of row order: rows are
/// grouped by label, sorted by (run id, episode), and summed in ascending
/// run-id order, so shuffled inputs reproduce identical floating-point
/// results. Labels come back in first-appearance order.
pub fn aggregate_mean_curves(
    rows: &[EpisodeRow],
    episodes: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<&str, Vec<&EpisodeRow>> = BTreeMap::new();
    for row in rows {
        if !grouped.contains_key(row.algo.as_str()) {
            order.push(row.algo.clone());
        }
        grouped.entry(row.algo.as_str()).or_default().push(row);
    }
    let mut out = Vec::with_capacity(order.len());
    for label in order {
        let mut group = grouped.remove(label.as_str()).expect("grouped label");
        group.sort_by_key(|r| (r.run_id, r.episode));
        let runs = group.len() / episodes;
        if runs * episodes != group.len() {
            return Err(Error::Config(format!(
                "algorithm '{label}' has {} rows, not a multiple of {episodes} episodes",
                group.len()
            )));
        }
        let mut sums = vec![0.0f64; episodes];
        for (i, row) in group.iter().enumerate() {
            if row.episode != i % episodes {
                return Err(Error::Config(format!(
                    "algorithm '{label}' run {} has episodes out of order",
                    row.run_id
                )));
            }
            sums[row.episode] += row.total_return;
        }
        let curve: Vec<f64> = sums.into_iter().map(|s| s / runs as f64).collect();
        out.push((label, curve));
    }
    Ok(out)
}

fn window_stats(curve: &[f64], window: usize) -> (f64, f64) {
    let w = window.min(curve.len()).max(1);
    let tail = &curve[curve.len() - w..];
    let mean = tail.iter().sum::<f64>() / w as f64;
    let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64;
    (mean, var.sqrt())
}

/// Builds the summary (mean curves + final-window statistics) from raw rows.
pub fn summarize(
    config: &ExperimentConfig,
    rows: &[EpisodeRow],
    wall_clock_seconds: f64,
) -> Result<RunSummary> {
    let window = config.final_window();
    let algorithms = aggregate_mean_curves(rows, config.episodes)?
        .into_iter()
        .map(|(label, mean_returns)| {
            let (final_window_mean, final_window_std) = window_stats(&mean_returns, window);
            AlgoSummary {
                label,
                mean_returns,
                final_window_mean,
                final_window_std,
            }
        })
        .collect();
    Ok(RunSummary {
        episodes: config.episodes,
        runs: config.runs,
        base_seed: config.base_seed,
        final_window: window,
        wall_clock_seconds,
        algorithms,
    })
}

pub fn write_episode_csv<W: std::io::Write>(rows: &[EpisodeRow], mut w: W) -> std::io::Result<()> {
    EpisodeLog::write_csv_header(&mut w)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.algo, r.run_id, r.episode, r.total_return, r.steps
        )?;
    }
    Ok(())
}

pub fn parse_episode_csv(text: &str) -> Result<Vec<EpisodeRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty episode CSV".into()))?;
    if header != "algo,run_id,episode,return,steps" {
        return Err(Error::Parse(format!("unexpected CSV header '{header}'")));
    }
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 fields", i + 2)));
        }
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", i + 2));
        rows.push(EpisodeRow {
            algo: fields[0].to_string(),
            run_id: fields[1].parse().map_err(|_| bad("run_id"))?,
            episode: fields[2].parse().map_err(|_| bad("episode"))?,
            total_return: fields[3].parse().map_err(|_| bad("return"))?,
            steps: fields[4].parse().map_err(|_| bad("steps"))?,
        });
    }
    Ok(rows)
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("summary: {e}")))
}

/// Runs the whole experiment and persists `episodes.csv` and
/// `summary.json` under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let all = execute_runs(config)?;
    let rows = to_rows(&all);
    let summary = summarize(config, &rows, started.elapsed().as_secs_f64())?;
    fs::create_dir_all(out_dir)?;
    let mut csv = Vec::new();
    write_episode_csv(&rows, &mut csv).map_err(Error::Io)?;
    fs::write(out_dir.join("episodes.csv"), csv)?;
    write_summary(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Plot-ready table: one smoothed column per algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub labels: Vec<String>,
    /// columns[algo][episode], moving-average smoothed.
    pub columns: Vec<Vec<f64>>,
}

/// Moving-average smoothing over the episode axis. The first `window − 1`
/// rows use the partial-window mean of the available prefix; nothing is
/// invented for the warm-up region.
pub fn emit_plot_data(summary: &RunSummary, smoothing_window: usize) -> Result<PlotData> {
    if smoothing_window == 0 {
        return Err(Error::InvalidArgument(
            "smoothing window must be >= 1".into(),
        ));
    }
    if smoothing_window > summary.episodes {
        return Err(Error::InvalidArgument(format!(
            "smoothing window {smoothing_window} exceeds {} episodes",
            summary.episodes
        )));
    }
    let mut labels = Vec::new();
    let mut columns = Vec::new();
    for algo in &summary.algorithms {
        labels.push(algo.label.clone());
        let curve = &algo.mean_returns;
        let mut smoothed = Vec::with_capacity(curve.len());
        let mut running = 0.0f64;
        for e in 0..curve.len() {
            running += curve[e];
            if e >= smoothing_window {
                running -= curve[e - smoothing_window];
                smoothed.push(running / smoothing_window as f64);
            } else {
                smoothed.push(running / (e + 1) as f64);
            }
        }
        columns.push(smoothed);
    }
    Ok(PlotData { labels, columns })
}

impl PlotData {
    /// CSV export: `episode,<label>,...` per line.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "episode")?;
        for label in &self.labels {
            write!(w, ",{label}")?;
        }
        writeln!(w)?;
        let episodes = self.columns.first().map_or(0, Vec::len);
        for e in 0..episodes {
            write!(w, "{e}")?;
            for col in &self.columns {
                write!(w, ",{}", col[e])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Resolution order for output directories: CLI flag, then the
/// [`OUT_DIR_ENV`] variable, then the config entry, then `./out`.
pub fn resolve_out_dir(cli: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(dir) = cli {
        return dir.to_path_buf();
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    config.map_or_else(|| PathBuf::from("out"), Path::to_path_buf)
}

pub fn write_qtable_csv<W: std::io::Write>(q: &QTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "state,action,value")?;
    for s in 0..q.num_states() {
        for a in 0..q.num_actions() {
            writeln!(w, "{},{},{}", s, a, q.get(s, a))?;
        }
    }
    Ok(())
}

pub fn write_policy_csv<W: std::io::Write>(
    policy: &crate::mdp::Policy,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "state,action,prob")?;
    for s in 0..policy.num_states() {
        for a in 0..policy.num_actions() {
            writeln!(w, "{},{},{}", s, a, policy.prob(s, a))?;
        }
    }
    Ok(())
}

pub mod checks {
    //! The property suites behind the `check` subcommand. Each check pins
    //! its sample count and tolerance; all of them are deterministic.

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::approachability::{directional_improvement_check, regret_matching_from_mean};
    use crate::envs::random_mdp;
    use crate::mdp::{dot, expected_sarsa_backup, policy_evaluation_exact, Policy, QTable};

    /// Outcome of one named property check.
    #[derive(Debug, Clone)]
    pub struct CheckOutcome {
        pub name: &'static str,
        pub passed: bool,
        pub detail: String,
    }

    fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
        CheckOutcome {
            name,
            passed,
            detail,
        }
    }

    /// ⟨y − ⟨x,y⟩·1, [mean]^+⟩ = 0 within 1e-9 for x = RM(mean), over 1000
    /// random (mean, payoff) pairs with a nonzero positive part.
    pub fn check_rm_identity() -> CheckOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(0x524d);
        let mut worst = 0.0f64;
        let mut tested = 0;
        while tested < 1000 {
            let m = rng.random_range(2..6);
            let mean: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let positive: Vec<f64> = mean.iter().map(|&v| v.max(0.0)).collect();
            if positive.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let x = regret_matching_from_mean(&mean);
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let realized = dot(&x, &y);
            let inner: f64 = y
                .iter()
                .zip(&positive)
                .map(|(yi, pi)| (yi - realized) * pi)
                .sum();
            worst = worst.max(inner.abs());
            tested += 1;
        }
        outcome(
            "rm-blackwell-identity",
            worst <= 1e-9,
            format!("worst |⟨u(x,y), [ū]^+⟩| = {worst:.3e} over 1000 pairs (tolerance 1e-9)"),
        )
    }

    /// RM outputs are simplex vectors (sum within 1e-12, entries ≥ 0),
    /// including the all-nonpositive fallback.
    pub fn check_rm_simplex() -> CheckOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5253);
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let m = rng.random_range(1..7);
            let mean: Vec<f64> = if i % 10 == 0 {
                (0..m).map(|_| rng.random_range(-3.0..0.0)).collect()
            } else {
                (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()
            };
            let x = regret_matching_from_mean(&mean);
            if x.iter().any(|&p| p < 0.0) {
                return outcome("rm-simplex", false, format!("negative entry in {x:?}"));
            }
            worst = worst.max((x.iter().sum::<f64>() - 1.0).abs());
        }
        outcome(
            "rm-simplex",
            worst <= 1e-12,
            format!("worst |Σx − 1| = {worst:.3e} over 1000 means (tolerance 1e-12)"),
        )
    }

    /// Expected-SARSA backup is a γ-contraction in sup norm (exact, 1e-12
    /// slack) and its fixed point matches exact policy evaluation to 1e-8.
    pub fn check_contraction() -> CheckOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
        let gamma = 0.9;
        for pair in 0..100u64 {
            let ns = rng.random_range(2..6);
            let na = rng.random_range(2..5);
            let mdp = random_mdp(ns, na, gamma, 0xc0de + pair).unwrap();
            let policy = Policy::uniform(ns, na);
            let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..ns * na)
                    .map(|_| rng.random_range(-10.0..10.0))
                    .collect()
            };
            let q1 = QTable::from_values(ns, na, sample(&mut rng)).unwrap();
            let q2 = QTable::from_values(ns, na, sample(&mut rng)).unwrap();
            let b1 = expected_sarsa_backup(&mdp, &q1, &policy).unwrap();
            let b2 = expected_sarsa_backup(&mdp, &q2, &policy).unwrap();
            let lhs = b1.sup_distance(&b2);
            let rhs = gamma * q1.sup_distance(&q2);
            if lhs > rhs + 1e-12 {
                return outcome(
                    "expected-sarsa-contraction",
                    false,
                    format!("pair {pair}: ‖B(Q1)−B(Q2)‖ = {lhs} > γ‖Q1−Q2‖ = {rhs}"),
                );
            }
        }
        // Fixed point against the direct linear solve.
        let mdp = random_mdp(5, 3, gamma, 0xf1).unwrap();
        let policy = Policy::uniform(5, 3);
        let (_, q_exact) = policy_evaluation_exact(&mdp, &policy).unwrap();
        let mut q = QTable::zeros(5, 3);
        for _ in 0..400 {
            q = expected_sarsa_backup(&mdp, &q, &policy).unwrap();
        }
        let gap = q.sup_distance(&q_exact);
        outcome(
            "expected-sarsa-contraction",
            gap <= 1e-8,
            format!("contraction exact on 100 pairs; fixed-point gap {gap:.3e} (tolerance 1e-8)"),
        )
    }

    /// Finite-difference directional derivative of V^π(s) along the
    /// regret-matching direction is ≥ −1e-5·max|Q^π| on 100 random
    /// (model, interior policy, state) triples.
    pub fn check_directional_derivative() -> CheckOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(0xd1);
        let mut worst_margin = f64::INFINITY;
        for trial in 0..100u64 {
            let ns = rng.random_range(2..6);
            let na = rng.random_range(2..5);
            let mdp = random_mdp(ns, na, 0.9, 0xd1ff + trial).unwrap();
            let mut probs = Vec::new();
            for _ in 0..ns {
                let mut row: Vec<f64> = (0..na)
                    .map(|_| 0.05 - f64::ln(1.0 - rng.random::<f64>()))
                    .collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                probs.extend_from_slice(&row);
            }
            let policy = Policy::from_probs(ns, na, probs).unwrap();
            let s = rng.random_range(0..ns);
            let (_, q) = policy_evaluation_exact(&mdp, &policy).unwrap();
            let scale = q.max_abs().max(1.0);
            let derivative = match directional_improvement_check(&mdp, &policy, s, 1e-5) {
                Ok(d) => d,
                Err(e) => {
                    return outcome(
                        "rm-direction-improves-value",
                        false,
                        format!("trial {trial}: {e}"),
                    )
                }
            };
            let margin = derivative + 1e-5 * scale;
            worst_margin = worst_margin.min(margin);
            if margin < 0.0 {
                return outcome(
                    "rm-direction-improves-value",
                    false,
                    format!("trial {trial}: derivative {derivative} below −1e-5·{scale}"),
                );
            }
        }
        outcome(
            "rm-direction-improves-value",
            true,
            format!("100 triples; worst margin {worst_margin:.3e} above the −1e-5·max|Q| floor"),
        )
    }

    /// Runs every property suite.
    pub fn run_all() -> Vec<CheckOutcome> {
        vec![
            check_rm_identity(),
            check_rm_simplex(),
            check_contraction(),
            check_directional_derivative(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn desk_config(episodes: usize, runs: u64) -> ExperimentConfig {
        ExperimentConfig {
            episodes,
            runs,
            base_seed: 7,
            discount: None,
            max_steps_per_episode: DEFAULT_MAX_EPISODE_STEPS,
            out: None,
            environment: EnvironmentConfig::default(),
            algorithms: vec![
                AlgorithmConfig::named("sarsa"),
                AlgorithmConfig::named("q-learning"),
            ],
        }
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            episodes = 500
            runs = 20
            base_seed = 1

            [environment]
            kind = "cliff"

            [[algorithm]]
            name = "blackwell-q"

            [[algorithm]]
            name = "expected-sarsa"
            label = "expected-sarsa-e0.5"
            epsilon = 0.5
        "#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(config.episodes, 500);
        assert_eq!(config.runs, 20);
        assert_eq!(config.algorithms.len(), 2);
        assert_eq!(config.algorithms[1].label(), "expected-sarsa-e0.5");
        assert_eq!(config.algorithms[1].epsilon, 0.5);
        assert_eq!(config.final_window(), 50);
    }

    #[test]
    fn config_rejects_unknown_algorithms_and_duplicates() {
        let mut config = desk_config(10, 1);
        config.algorithms[0].name = "dyna-q".into();
        assert!(matches!(config.validate(), Err(Error::UnknownAlgorithm(_))));

        let mut config = desk_config(10, 1);
        config.algorithms[1].name = "sarsa".into();
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_parses_grid_overrides() {
        let text = r#"
            episodes = 10
            runs = 1

            [environment]
            kind = "cliff"
            rows = 3
            cols = 5
            start = [2, 0]
            goal = [2, 4]
            cliff = [[2, 1], [2, 2], [2, 3]]

            [[algorithm]]
            name = "sarsa"
        "#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        match &config.environment {
            EnvironmentConfig::Cliff { grid } => {
                assert_eq!(grid.rows, 3);
                assert_eq!(grid.cliff.len(), 3);
                assert_eq!(grid.step_reward, -1.0);
            }
            other => panic!("unexpected environment {other:?}"),
        }
    }

    #[test]
    fn seeded_rng_streams_are_label_separated() {
        use rand::Rng;
        let mut a = seeded_rng(5, "sarsa");
        let mut b = seeded_rng(5, "q-learning");
        let mut a2 = seeded_rng(5, "sarsa");
        let xs: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.random()).collect();
        let xs2: Vec<u64> = (0..8).map(|_| a2.random()).collect();
        assert_eq!(xs, xs2);
        assert_ne!(xs, ys);
    }

    #[test]
    fn csv_round_trips_and_row_count_matches() {
        let config = desk_config(12, 3);
        let all = execute_runs(&config).unwrap();
        let rows = to_rows(&all);
        assert_eq!(rows.len(), 2 * 3 * 12);
        let mut csv = Vec::new();
        write_episode_csv(&rows, &mut csv).unwrap();
        let parsed = parse_episode_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn aggregation_is_order_invariant() {
        let config = desk_config(15, 4);
        let all = execute_runs(&config).unwrap();
        let rows = to_rows(&all);
        let baseline = aggregate_mean_curves(&rows, config.episodes).unwrap();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let recomputed = aggregate_mean_curves(&shuffled, config.episodes).unwrap();
        // Label order follows first appearance and may differ after the
        // shuffle; the curves themselves must match bitwise.
        let as_map = |curves: Vec<(String, Vec<f64>)>| -> BTreeMap<String, Vec<u64>> {
            curves
                .into_iter()
                .map(|(l, c)| (l, c.into_iter().map(f64::to_bits).collect()))
                .collect()
        };
        assert_eq!(as_map(baseline), as_map(recomputed));
    }

    #[test]
    fn experiment_is_reproducible_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let config = desk_config(10, 2);
        let s1 = run_experiment(&config, dir.path()).unwrap();
        let csv1 = fs::read(dir.path().join("episodes.csv")).unwrap();
        let s2 = run_experiment(&config, dir.path()).unwrap();
        let csv2 = fs::read(dir.path().join("episodes.csv")).unwrap();
        assert_eq!(csv1, csv2, "CSV bytes must be identical across reruns");
        assert_eq!(s1.algorithms, s2.algorithms);

        let loaded = read_summary(&dir.path().join("summary.json")).unwrap();
        assert_eq!(loaded, s2, "summary must round-trip exactly");
    }

    #[test]
    fn plot_data_smoothing_cases() {
        let summary = RunSummary {
            episodes: 200,
            runs: 1,
            base_seed: 0,
            final_window: 50,
            wall_clock_seconds: 0.0,
            algorithms: vec![
                AlgoSummary {
                    label: "const".into(),
                    mean_returns: vec![2.5; 200],
                    final_window_mean: 2.5,
                    final_window_std: 0.0,
                },
                AlgoSummary {
                    label: "step".into(),
                    mean_returns: (0..200).map(|e| if e < 100 { 0.0 } else { 1.0 }).collect(),
                    final_window_mean: 1.0,
                    final_window_std: 0.0,
                },
            ],
        };
        // Window 1 is the identity.
        let raw = emit_plot_data(&summary, 1).unwrap();
        assert_eq!(raw.columns[0], summary.algorithms[0].mean_returns);
        assert_eq!(raw.columns[1], summary.algorithms[1].mean_returns);

        // A constant curve is unchanged by any window.
        let smooth = emit_plot_data(&summary, 10).unwrap();
        assert!(smooth.columns[0].iter().all(|&v| (v - 2.5).abs() < 1e-12));

        // A step ramps linearly across episodes 100..=109.
        let step = &smooth.columns[1];
        assert_eq!(step[99], 0.0);
        for k in 0..10 {
            let expected = (k + 1) as f64 / 10.0;
            assert!(
                (step[100 + k] - expected).abs() < 1e-12,
                "ramp value {} at {}",
                step[100 + k],
                100 + k
            );
        }
        assert_eq!(step[110], 1.0);

        assert!(emit_plot_data(&summary, 0).is_err());
        assert!(emit_plot_data(&summary, 201).is_err());
    }

    #[test]
    fn plot_csv_has_one_column_per_algorithm() {
        let summary = RunSummary {
            episodes: 3,
            runs: 1,
            base_seed: 0,
            final_window: 3,
            wall_clock_seconds: 0.0,
            algorithms: vec![AlgoSummary {
                label: "sarsa".into(),
                mean_returns: vec![1.0, 2.0, 3.0],
                final_window_mean: 2.0,
                final_window_std: 1.0,
            }],
        };
        let plot = emit_plot_data(&summary, 1).unwrap();
        let mut csv = Vec::new();
        plot.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next(), Some("episode,sarsa"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn mdp_environment_experiments_run() {
        let dir = tempfile::tempdir().unwrap();
        let model_path = dir.path().join("bandit.txt");
        let model = crate::envs::random_mdp(1, 3, 0.9, 88).unwrap();
        mdp::io::save_mdp(&model_path, &model).unwrap();

        let mut config = desk_config(3, 2);
        config.environment = EnvironmentConfig::Mdp {
            path: model_path,
            noise_sigma: 0.1,
        };
        config.max_steps_per_episode = 50;
        config.algorithms = vec![AlgorithmConfig::named("blackwell-q")];
        let all = execute_runs(&config).unwrap();
        assert_eq!(all[0].runs.len(), 2);
        for (_, log) in &all[0].runs {
            assert_eq!(log.episodes.len(), 3);
            // Infinite-horizon simulator: episodes end by truncation.
            assert!(log.episodes.iter().all(|e| e.steps == 50));
        }
        // Distinct seeds produce distinct trajectories.
        assert_ne!(all[0].runs[0].1, all[0].runs[1].1);
    }

    #[test]
    fn run_failure_carries_context() {
        let mut config = desk_config(5, 1);
        config.environment = EnvironmentConfig::Mdp {
            path: PathBuf::from("/nonexistent/model.txt"),
            noise_sigma: 0.0,
        };
        let err = execute_runs(&config).unwrap_err();
        match err {
            Error::RunFailed {
                algo,
                run_id: 0,
                source,
            } => {
                assert_eq!(algo, "sarsa");
                assert!(matches!(*source, Error::Io(_)));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn property_checks_all_pass() {
        for check in checks::run_all() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
