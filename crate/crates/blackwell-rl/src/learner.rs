//! Online learners.
//!
//! The centerpiece is Blackwell Q-learning, a two-timescale asynchronous
//! scheme on a visited transition (s, a, R, s'):
//!
//!   Q(s,a) += α(φ(s,a)) · [R + γ·⟨π(s'), Q(s')⟩ − Q(s,a)]   (fast)
//!   π(s)   += β(ψ(s))   · [e_a − π(s)]                      (slow)
//!
//! with per-(state, action) visit counters φ and per-state counters ψ
//! indexing the step-size schedules, and actions sampled with probability
//! proportional to the positive part of the instantaneous regret
//! Q(s) − ⟨π(s), Q(s)⟩·1 (uniform when no entry is positive). The policy
//! update is a convex combination, so rows stay in the simplex by
//! construction; β = o(α) keeps the policy quasi-static from the Q update's
//! point of view.
//!
//! ε-greedy Q-learning, SARSA, and expected SARSA with a constant learning
//! rate are provided as baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mdp::{argmax, state_value, Policy, QTable};

/// Default per-episode step cap; truncation is not termination (the final
/// update still bootstraps).
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 10_000;

/// Polynomial step-size schedules α(k) = (1+k)^{−a} (fast, Q updates) and
/// β(k) = (1+k)^{−b} (slow, policy updates) with 0.5 < a < b ≤ 1, so that
/// Σα = ∞, Σα² < ∞ and β(k)/α(k) → 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedules {
    fast_exponent: f64,
    slow_exponent: f64,
}

impl StepSchedules {
    pub fn new(fast_exponent: f64, slow_exponent: f64) -> Result<Self> {
        if !(fast_exponent > 0.5 && fast_exponent < slow_exponent && slow_exponent <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "schedule exponents must satisfy 0.5 < a < b <= 1, got a={fast_exponent}, b={slow_exponent}"
            )));
        }
        Ok(Self {
            fast_exponent,
            slow_exponent,
        })
    }

    /// The defaults a = 0.6, b = 0.9.
    pub fn default_two_timescale() -> Self {
        Self {
            fast_exponent: 0.6,
            slow_exponent: 0.9,
        }
    }

    pub fn fast_exponent(&self) -> f64 {
        self.fast_exponent
    }

    pub fn slow_exponent(&self) -> f64 {
        self.slow_exponent
    }

    /// α(k) = (1+k)^{−a}.
    pub fn fast(&self, k: u64) -> f64 {
        ((1 + k) as f64).powf(-self.fast_exponent)
    }

    /// β(k) = (1+k)^{−b}.
    pub fn slow(&self, k: u64) -> f64 {
        ((1 + k) as f64).powf(-self.slow_exponent)
    }
}

impl Default for StepSchedules {
    fn default() -> Self {
        Self::default_two_timescale()
    }
}

/// Visit counters φ(s,a) and ψ(s) for asynchronous step sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsyncCounters {
    num_actions: usize,
    state_action: Vec<u64>,
    state: Vec<u64>,
}

impl AsyncCounters {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            state_action: vec![0; num_states * num_actions],
            state: vec![0; num_states],
        }
    }

    /// Increments both counters for a visit to (s, a) and returns the new
    /// (φ(s,a), ψ(s)).
    pub fn record(&mut self, s: usize, a: usize) -> (u64, u64) {
        self.state_action[s * self.num_actions + a] += 1;
        self.state[s] += 1;
        (self.state_action[s * self.num_actions + a], self.state[s])
    }

    pub fn state_action(&self, s: usize, a: usize) -> u64 {
        self.state_action[s * self.num_actions + a]
    }

    pub fn state(&self, s: usize) -> u64 {
        self.state[s]
    }
}

/// One observed environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: usize,
    /// Possibly noisy reward; unbiased for r(s,a) when the environment
    /// declares a noise model.
    pub reward: f64,
    pub s_next: usize,
    pub terminal: bool,
}

/// Everything a tabular learner carries between steps: the Q table, the
/// slow-timescale policy, visit counters, schedules, and its own
/// deterministic random stream.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub qtable: QTable,
    pub policy: Policy,
    pub counters: AsyncCounters,
    pub schedules: StepSchedules,
    rng: ChaCha8Rng,
}

impl LearnerState {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        schedules: StepSchedules,
        q_init: f64,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            qtable: QTable::constant(num_states, num_actions, q_init),
            policy: Policy::uniform(num_states, num_actions),
            counters: AsyncCounters::new(num_states, num_actions),
            schedules,
            rng,
        }
    }
}

/// Samples an index from an unnormalized nonnegative weight vector; the
/// caller guarantees the total is positive.
fn sample_weighted(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Regret-matching action selection: samples proportionally to the positive
/// part of the instantaneous regret Q(s) − ⟨π(s), Q(s)⟩·1, falling back to
/// uniform when no action has positive regret.
pub fn select_action_rm(state: &mut LearnerState, s: usize) -> usize {
    let realized = state_value(&state.qtable, &state.policy, s);
    let row = state.qtable.row(s);
    let positive: Vec<f64> = row.iter().map(|&q| (q - realized).max(0.0)).collect();
    let total: f64 = positive.iter().sum();
    if total > 0.0 {
        sample_weighted(&positive, total, &mut state.rng)
    } else {
        state.rng.random_range(0..row.len())
    }
}

/// The coupled two-timescale update for one observed transition. Counters
/// are incremented first; the bootstrap value ⟨π(s'), Q(s')⟩ is taken from
/// the pre-update tables and is zero on terminal transitions.
pub fn blackwell_q_update(state: &mut LearnerState, rec: &TransitionRecord, discount: f64) {
    let (phi, psi) = state.counters.record(rec.s, rec.a);
    let bootstrap = if rec.terminal {
        0.0
    } else {
        state_value(&state.qtable, &state.policy, rec.s_next)
    };
    let alpha = state.schedules.fast(phi);
    let q = state.qtable.get(rec.s, rec.a);
    state.qtable.set(
        rec.s,
        rec.a,
        q + alpha * (rec.reward + discount * bootstrap - q),
    );

    let beta = state.schedules.slow(psi);
    let row = state.policy.row_mut(rec.s);
    for (a, p) in row.iter_mut().enumerate() {
        let target = if a == rec.a { 1.0 } else { 0.0 };
        *p += beta * (target - *p);
    }
}

/// Per-episode outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub total_return: f64,
    pub steps: usize,
}

/// Returns and lengths for a whole run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub episodes: Vec<EpisodeStats>,
}

impl EpisodeLog {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_return).collect()
    }

    /// Mean return over the final `window` episodes.
    pub fn final_window_mean(&self, window: usize) -> f64 {
        let n = self.episodes.len();
        let w = window.min(n).max(1);
        self.episodes[n - w..]
            .iter()
            .map(|e| e.total_return)
            .sum::<f64>()
            / w as f64
    }

    pub fn write_csv_header<W: std::io::Write>(mut w: W) -> std::io::Result<()> {
        writeln!(w, "algo,run_id,episode,return,steps")
    }

    /// Appends this log's rows under the given algorithm label and run id.
    pub fn write_csv_rows<W: std::io::Write>(
        &self,
        algo: &str,
        run_id: u64,
        mut w: W,
    ) -> std::io::Result<()> {
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{}",
                algo, run_id, e.episode, e.total_return, e.steps
            )?;
        }
        Ok(())
    }
}

/// Configuration for a Blackwell Q-learning run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackwellQConfig {
    pub schedules: StepSchedules,
    pub discount: f64,
    /// Initial value for every Q entry. Zero is optimistic for
    /// negative-reward tasks (cliff walking); positive-reward tasks need an
    /// optimistic value (an upper bound like r_max/(1−γ)) so that untried
    /// actions keep positive regret until they have been evaluated.
    pub q_init: f64,
    pub max_steps_per_episode: usize,
}

impl BlackwellQConfig {
    pub fn new(discount: f64) -> Self {
        Self {
            schedules: StepSchedules::default_two_timescale(),
            discount,
            q_init: 0.0,
            max_steps_per_episode: DEFAULT_MAX_EPISODE_STEPS,
        }
    }

    pub fn with_q_init(mut self, q_init: f64) -> Self {
        self.q_init = q_init;
        self
    }
}

fn env_fault(episode: usize, step: usize, err: Error) -> Error {
    Error::EnvironmentFault {
        episode,
        step,
        detail: err.to_string(),
    }
}

/// Runs Blackwell Q-learning for `episodes` episodes. Episodes longer than
/// the configured cap are truncated; truncation is recorded as non-terminal
/// so the final update bootstraps ⟨π(s'), Q(s')⟩ rather than zero.
pub fn run_blackwell_q(
    env: &mut dyn Environment,
    episodes: usize,
    config: &BlackwellQConfig,
    rng: ChaCha8Rng,
) -> Result<(LearnerState, EpisodeLog)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let mut state = LearnerState::new(
        env.num_states(),
        env.num_actions(),
        config.schedules,
        config.q_init,
        rng,
    );
    let mut log = EpisodeLog::default();
    for episode in 0..episodes {
        let mut s = env.reset();
        let mut total_return = 0.0;
        let mut steps = 0;
        loop {
            let a = select_action_rm(&mut state, s);
            let (s_next, reward, terminal) =
                env.step(a).map_err(|e| env_fault(episode, steps, e))?;
            let rec = TransitionRecord {
                s,
                a,
                reward,
                s_next,
                terminal,
            };
            blackwell_q_update(&mut state, &rec, config.discount);
            total_return += reward;
            steps += 1;
            s = s_next;
            if terminal || steps >= config.max_steps_per_episode {
                break;
            }
        }
        log.episodes.push(EpisodeStats {
            episode,
            total_return,
            steps,
        });
    }
    Ok((state, log))
}

/// The ε-greedy TD baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineAlgo {
    QLearning,
    Sarsa,
    ExpectedSarsa,
}

/// Configuration shared by the baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub algo: BaselineAlgo,
    pub discount: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub q_init: f64,
    pub max_steps_per_episode: usize,
}

impl BaselineConfig {
    pub fn new(
        algo: BaselineAlgo,
        discount: f64,
        learning_rate: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be in (0, 1], got {learning_rate}"
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self {
            algo,
            discount,
            learning_rate,
            epsilon,
            q_init: 0.0,
            max_steps_per_episode: DEFAULT_MAX_EPISODE_STEPS,
        })
    }
}

/// ε-greedy selection; the greedy branch breaks ties to the lowest index.
pub fn select_epsilon_greedy(state: &mut LearnerState, s: usize, epsilon: f64) -> usize {
    let m = state.qtable.num_actions();
    if state.rng.random::<f64>() < epsilon {
        state.rng.random_range(0..m)
    } else {
        argmax(state.qtable.row(s))
    }
}

/// Expected value of Q(s) under the ε-greedy distribution, with the greedy
/// mass on the lowest-index argmax.
pub fn epsilon_greedy_expectation(q_row: &[f64], epsilon: f64) -> f64 {
    let m = q_row.len() as f64;
    let greedy = argmax(q_row);
    q_row
        .iter()
        .enumerate()
        .map(|(a, &q)| {
            let p = epsilon / m + if a == greedy { 1.0 - epsilon } else { 0.0 };
            p * q
        })
        .sum()
}

fn td_update(
    state: &mut LearnerState,
    rec: &TransitionRecord,
    bootstrap: f64,
    discount: f64,
    lr: f64,
) {
    state.counters.record(rec.s, rec.a);
    let q = state.qtable.get(rec.s, rec.a);
    let target = rec.reward + discount * bootstrap;
    state.qtable.set(rec.s, rec.a, q + lr * (target - q));
}

/// Off-policy TD update bootstrapping max_a Q(s', a).
pub fn q_learning_step(state: &mut LearnerState, rec: &TransitionRecord, discount: f64, lr: f64) {
    let bootstrap = if rec.terminal {
        0.0
    } else {
        let row = state.qtable.row(rec.s_next);
        row[argmax(row)]
    };
    td_update(state, rec, bootstrap, discount, lr);
}

/// On-policy TD update bootstrapping Q(s', a') of the sampled next action
/// (`None` on terminal transitions).
pub fn sarsa_step(
    state: &mut LearnerState,
    rec: &TransitionRecord,
    next_action: Option<usize>,
    discount: f64,
    lr: f64,
) {
    let bootstrap = match (rec.terminal, next_action) {
        (true, _) | (false, None) => 0.0,
        (false, Some(a_next)) => state.qtable.get(rec.s_next, a_next),
    };
    td_update(state, rec, bootstrap, discount, lr);
}

/// TD update bootstrapping the ε-greedy expectation over Q(s', ·).
pub fn expected_sarsa_step(
    state: &mut LearnerState,
    rec: &TransitionRecord,
    discount: f64,
    lr: f64,
    epsilon: f64,
) {
    let bootstrap = if rec.terminal {
        0.0
    } else {
        epsilon_greedy_expectation(state.qtable.row(rec.s_next), epsilon)
    };
    td_update(state, rec, bootstrap, discount, lr);
}

/// Runs one of the ε-greedy baselines for `episodes` episodes.
pub fn run_baseline(
    env: &mut dyn Environment,
    episodes: usize,
    config: &BaselineConfig,
    rng: ChaCha8Rng,
) -> Result<(LearnerState, EpisodeLog)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let mut state = LearnerState::new(
        env.num_states(),
        env.num_actions(),
        StepSchedules::default_two_timescale(),
        config.q_init,
        rng,
    );
    let mut log = EpisodeLog::default();
    for episode in 0..episodes {
        let mut s = env.reset();
        let mut a = select_epsilon_greedy(&mut state, s, config.epsilon);
        let mut total_return = 0.0;
        let mut steps = 0;
        loop {
            let (s_next, reward, terminal) =
                env.step(a).map_err(|e| env_fault(episode, steps, e))?;
            let rec = TransitionRecord {
                s,
                a,
                reward,
                s_next,
                terminal,
            };
            let a_next = if terminal {
                None
            } else {
                Some(select_epsilon_greedy(&mut state, s_next, config.epsilon))
            };
            match config.algo {
                BaselineAlgo::QLearning => {
                    q_learning_step(&mut state, &rec, config.discount, config.learning_rate)
                }
                BaselineAlgo::Sarsa => sarsa_step(
                    &mut state,
                    &rec,
                    a_next,
                    config.discount,
                    config.learning_rate,
                ),
                BaselineAlgo::ExpectedSarsa => expected_sarsa_step(
                    &mut state,
                    &rec,
                    config.discount,
                    config.learning_rate,
                    config.epsilon,
                ),
            }
            total_return += reward;
            steps += 1;
            s = s_next;
            match a_next {
                Some(next) => a = next,
                None => break,
            }
            if steps >= config.max_steps_per_episode {
                break;
            }
        }
        log.episodes.push(EpisodeStats {
            episode,
            total_return,
            steps,
        });
    }
    Ok((state, log))
}
