//! Blackwell value iteration: offline planning as one regret-matching
//! learner per state.
//!
//! Each iteration feeds back a synchronous expected-SARSA sweep
//! Q_k = B(Q_{k−1}, π_{k−1}), charges every state's regret average with
//! u(π_{k−1}(s), Q_k(s)), and lets regret matching pick the next policy
//! row. The per-state average regrets are driven into the nonpositive
//! orthant, and the running mean Q̄_n = mean(Q_0 … Q_n) converges to Q*.

use crate::approachability::{
    approachability_distance, regret_matching, regret_vector, RegretAverage,
};
use crate::error::{Error, Result};
use crate::mdp::{expected_sarsa_backup_into, MdpModel, Policy, QTable};

/// Mutable state of a planning run.
#[derive(Debug, Clone)]
pub struct PlannerState {
    /// Current iterate Q_k.
    pub qtable: QTable,
    /// Exact running mean of Q_0 … Q_k.
    pub qbar: QTable,
    /// Current policy π_k.
    pub policy: Policy,
    /// Per-state average regret.
    pub regrets: Vec<RegretAverage>,
    /// Iteration counter k.
    pub iteration: usize,
}

impl PlannerState {
    /// Canonical start: Q_0 = 0, π_0 uniform.
    pub fn new(mdp: &MdpModel) -> Self {
        Self::from_start(
            QTable::zeros(mdp.num_states(), mdp.num_actions()),
            Policy::uniform(mdp.num_states(), mdp.num_actions()),
        )
        .expect("zero/uniform start is always consistent")
    }

    /// Start from explicit Q_0 and π_0.
    pub fn from_start(q0: QTable, pi0: Policy) -> Result<Self> {
        if q0.num_states() != pi0.num_states() || q0.num_actions() != pi0.num_actions() {
            return Err(Error::DimensionMismatch(format!(
                "Q_0 is {}x{}, π_0 is {}x{}",
                q0.num_states(),
                q0.num_actions(),
                pi0.num_states(),
                pi0.num_actions()
            )));
        }
        pi0.validate()?;
        let regrets = (0..q0.num_states())
            .map(|_| RegretAverage::new(q0.num_actions()))
            .collect();
        Ok(Self {
            qbar: q0.clone(),
            qtable: q0,
            policy: pi0,
            regrets,
            iteration: 0,
        })
    }

    /// Distance of every state's average regret to the nonpositive orthant.
    pub fn distances(&self) -> Vec<f64> {
        self.regrets.iter().map(approachability_distance).collect()
    }
}

/// One synchronous step: backup, regret update, regret-matching policy,
/// running-mean update.
pub fn blackwell_vi_step(state: &mut PlannerState, mdp: &MdpModel) -> Result<()> {
    let mut scratch = QTable::zeros(mdp.num_states(), mdp.num_actions());
    step_with_scratch(state, mdp, &mut scratch)
}

fn step_with_scratch(state: &mut PlannerState, mdp: &MdpModel, scratch: &mut QTable) -> Result<()> {
    expected_sarsa_backup_into(mdp, &state.qtable, &state.policy, scratch)?;
    std::mem::swap(&mut state.qtable, scratch);
    if !state.qtable.is_finite() {
        return Err(Error::NonFiniteIterate {
            iteration: state.iteration + 1,
        });
    }
    for s in 0..mdp.num_states() {
        // Decision π_{k−1}(s) is judged against the fresh payoff Q_k(s).
        let regret = regret_vector(state.policy.row(s), state.qtable.row(s))?;
        state.regrets[s].update(&regret);
        let row = regret_matching(&state.regrets[s]);
        state.policy.set_row(s, &row);
    }
    state.iteration += 1;
    let count = (state.iteration + 1) as f64;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let mean = state.qbar.get(s, a);
            state
                .qbar
                .set(s, a, mean + (state.qtable.get(s, a) - mean) / count);
        }
    }
    Ok(())
}

/// Output of [`blackwell_value_iteration`].
#[derive(Debug, Clone)]
pub struct BlackwellViRun {
    /// Averaged table Q̄_n.
    pub qbar: QTable,
    /// Final policy π_n.
    pub policy: Policy,
    /// distance_trace[k][s]: per-state approachability distance after
    /// iteration k+1.
    pub distance_trace: Vec<Vec<f64>>,
    pub state: PlannerState,
}

impl BlackwellViRun {
    /// CSV export: `iteration,state,distance` rows, optionally thinned to
    /// every `stride`-th iteration (the final iteration is always written).
    pub fn write_distance_csv<W: std::io::Write>(
        &self,
        mut w: W,
        stride: usize,
    ) -> std::io::Result<()> {
        let stride = stride.max(1);
        writeln!(w, "iteration,state,distance")?;
        let last = self.distance_trace.len();
        for (k, row) in self.distance_trace.iter().enumerate() {
            if (k + 1) % stride != 0 && k + 1 != last {
                continue;
            }
            for (s, d) in row.iter().enumerate() {
                writeln!(w, "{},{},{}", k + 1, s, d)?;
            }
        }
        Ok(())
    }
}

/// Runs `iters` Blackwell value-iteration steps from the given start.
pub fn blackwell_value_iteration(
    mdp: &MdpModel,
    iters: usize,
    q0: QTable,
    pi0: Policy,
) -> Result<BlackwellViRun> {
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be >= 1".into()));
    }
    let mut state = PlannerState::from_start(q0, pi0)?;
    let mut scratch = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut distance_trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        step_with_scratch(&mut state, mdp, &mut scratch)?;
        distance_trace.push(state.distances());
    }
    Ok(BlackwellViRun {
        qbar: state.qbar.clone(),
        policy: state.policy.clone(),
        distance_trace,
        state,
    })
}
