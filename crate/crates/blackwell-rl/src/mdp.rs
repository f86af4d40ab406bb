//! Finite tabular MDPs and the exact dynamic-programming oracles built on them.
//!
//! An MDP is the tuple (S, A, P, r, γ) with a dense transition tensor
//! P[s][a][s'] and reward table r[s][a]. Everything downstream treats the
//! solvers here as ground truth:
//!
//! - [`policy_evaluation_exact`] solves the Bellman identity
//!   V = r_π + γ P_π V as a linear system (direct solve, not iteration).
//! - [`value_iteration`] iterates the Bellman optimality operator on Q.
//! - [`expected_sarsa_backup`] applies one synchronous policy-expectation
//!   backup Q'(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) ⟨π(s'), Q(s')⟩.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Slack for row-stochasticity of transition rows.
pub const PROB_TOL: f64 = 1e-12;

/// Slack accepted on policy rows at operation boundaries. Looser than
/// [`PROB_TOL`] because learned policies accumulate floating-point drift.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Finite MDP with dense transition tensor and reward table.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    num_states: usize,
    num_actions: usize,
    /// Row-major [s][a][s'] transition probabilities.
    transition: Vec<f64>,
    /// Row-major [s][a] rewards.
    reward: Vec<f64>,
    discount: f64,
}

impl MdpModel {
    /// Builds a model and validates every invariant: row-stochastic
    /// transitions (within [`PROB_TOL`]), finite rewards, discount in (0, 1]
    /// (γ = 1 is allowed so episodic environments can export themselves; the
    /// planning oracles reject it at call time).
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument(
                "num_states and num_actions must be positive".into(),
            ));
        }
        if !(discount > 0.0 && discount <= 1.0) || !discount.is_finite() {
            return Err(Error::InvalidDiscount {
                value: discount,
                expected: "expected 0 < discount <= 1",
            });
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::DimensionMismatch(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                num_states * num_actions
            )));
        }
        let model = Self {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = model.transition_row(s, a);
                let mut sum = 0.0;
                for (s2, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::BadTransitionEntry {
                            state: s,
                            action: a,
                            next_state: s2,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::TransitionRowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                let r = model.reward(s, a);
                if !r.is_finite() {
                    return Err(Error::NonFiniteReward {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Returns a copy of the model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.reward.clone(),
            discount,
        )
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn transition(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + s_next]
    }

    /// P(·|s,a) as a slice of length |S|.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// Largest absolute reward; bounds value magnitudes via r_max/(1−γ).
    pub fn reward_max_abs(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Per-state probability distribution over actions (row-stochastic table).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    /// Uniform distribution in every state.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            num_states,
            num_actions,
            probs: vec![p; num_states * num_actions],
        }
    }

    /// Deterministic policy from one action index per state.
    pub fn deterministic(num_states: usize, num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; num_states * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    /// Builds from a flat row-major table, validating each row.
    pub fn from_probs(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        let policy = Self {
            num_states,
            num_actions,
            probs,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// π(s) as a slice of length |A|.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn set_row(&mut self, s: usize, row: &[f64]) {
        assert_eq!(row.len(), self.num_actions, "policy row length");
        self.row_mut(s).copy_from_slice(row);
    }

    /// Checks every row lies in the simplex within [`SIMPLEX_TOL`].
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            let row = self.row(s);
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < -SIMPLEX_TOL {
                    return Err(Error::NotADistribution {
                        row: s,
                        detail: format!("entry {p} is negative or non-finite"),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::NotADistribution {
                    row: s,
                    detail: format!("row sums to {sum}"),
                });
            }
        }
        Ok(())
    }
}

/// Per-(state, action) real values.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::constant(num_states, num_actions, 0.0)
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "Q table has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.num_actions + a] = value;
    }

    /// Q(s) as a slice of length |A|.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "Q table shapes");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Deterministic argmax policy; ties break to the lowest action index.
    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = (0..self.num_states).map(|s| argmax(self.row(s))).collect();
        Policy::deterministic(self.num_states, self.num_actions, &actions)
    }
}

/// Index of the maximum entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ⟨π(s), Q(s)⟩ — the state value of `s` under `policy`.
pub fn state_value(qtable: &QTable, policy: &Policy, s: usize) -> f64 {
    assert!(s < qtable.num_states(), "state index {s} out of range");
    dot(policy.row(s), qtable.row(s))
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_shapes(mdp: &MdpModel, policy: &Policy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, model is {}x{}",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

/// Exact policy evaluation: solves V = r_π + γ P_π V directly and derives
/// Q^π(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) V^π(s').
///
/// Requires γ < 1 so the system is nonsingular. The returned pair satisfies
/// the Bellman identity with residual below 1e-9 or an internal error is
/// reported.
pub fn policy_evaluation_exact(mdp: &MdpModel, policy: &Policy) -> Result<(Vec<f64>, QTable)> {
    check_shapes(mdp, policy)?;
    policy.validate()?;
    if mdp.discount() >= 1.0 {
        return Err(Error::InvalidDiscount {
            value: mdp.discount(),
            expected: "exact evaluation requires discount < 1",
        });
    }
    let n = mdp.num_states();
    let gamma = mdp.discount();

    // System matrix I - γ P_π and reward vector r_π.
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut r_pi = DVector::<f64>::zeros(n);
    for s in 0..n {
        for (a, &w) in policy.row(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward(s, a);
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                system[(s, s2)] -= gamma * w * p;
            }
        }
    }

    let values = system
        .clone()
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::Numerical("linear solve failed in policy evaluation".into()))?;

    let mut q = QTable::zeros(n, mdp.num_actions());
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let expected_next = dot(mdp.transition_row(s, a), values.as_slice());
            q.set(s, a, mdp.reward(s, a) + gamma * expected_next);
        }
    }

    // Bellman identity residual: V(s) must equal ⟨π(s), Q(s)⟩.
    let mut residual = 0.0f64;
    for s in 0..n {
        residual = residual.max((values[s] - dot(policy.row(s), q.row(s))).abs());
    }
    if residual > 1e-9 {
        return Err(Error::Numerical(format!(
            "policy evaluation residual {residual:e} exceeds 1e-9"
        )));
    }

    Ok((values.as_slice().to_vec(), q))
}

/// Result of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub qstar: QTable,
    pub greedy: Policy,
    pub iterations: usize,
    /// Sup-norm gap between the last two iterates.
    pub sup_gap: f64,
    /// A-posteriori bound γ·gap/(1−γ) on ‖Q − Q*‖_∞.
    pub error_bound: f64,
    pub converged: bool,
}

/// Bellman-optimality iteration on Q until the successive-iterate sup-norm
/// gap drops to `tolerance`. If `max_iters` is exhausted first the partial
/// result is returned with `converged = false`.
pub fn value_iteration(
    mdp: &MdpModel,
    tolerance: f64,
    max_iters: usize,
) -> Result<ValueIterationOutcome> {
    if mdp.discount() >= 1.0 {
        return Err(Error::InvalidDiscount {
            value: mdp.discount(),
            expected: "value iteration requires discount < 1",
        });
    }
    if !tolerance.is_finite() || tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let gamma = mdp.discount();

    let mut q = QTable::zeros(n, m);
    let mut next = QTable::zeros(n, m);
    let mut vmax = vec![0.0f64; n];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        for (s, v) in vmax.iter_mut().enumerate() {
            let row = q.row(s);
            *v = row[argmax(row)];
        }
        gap = 0.0;
        for s in 0..n {
            for a in 0..m {
                let backed = mdp.reward(s, a) + gamma * dot(mdp.transition_row(s, a), &vmax);
                gap = gap.max((backed - q.get(s, a)).abs());
                next.set(s, a, backed);
            }
        }
        std::mem::swap(&mut q, &mut next);
        iterations += 1;
        if gap <= tolerance {
            converged = true;
            break;
        }
    }

    let greedy = q.greedy_policy();
    Ok(ValueIterationOutcome {
        qstar: q,
        greedy,
        iterations,
        sup_gap: gap,
        error_bound: gamma * gap / (1.0 - gamma),
        converged,
    })
}

/// One synchronous expected-SARSA backup of the whole table:
/// out(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) ⟨π(s'), Q(s')⟩.
///
/// Every output entry is computed from the input table; there is no
/// in-place sweeping.
pub fn expected_sarsa_backup(mdp: &MdpModel, qtable: &QTable, policy: &Policy) -> Result<QTable> {
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    expected_sarsa_backup_into(mdp, qtable, policy, &mut out)?;
    Ok(out)
}

/// Allocation-free variant of [`expected_sarsa_backup`] for hot loops.
pub fn expected_sarsa_backup_into(
    mdp: &MdpModel,
    qtable: &QTable,
    policy: &Policy,
    out: &mut QTable,
) -> Result<()> {
    check_shapes(mdp, policy)?;
    if qtable.num_states() != mdp.num_states() || qtable.num_actions() != mdp.num_actions() {
        return Err(Error::DimensionMismatch(format!(
            "Q table is {}x{}, model is {}x{}",
            qtable.num_states(),
            qtable.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    let n = mdp.num_states();
    let gamma = mdp.discount();
    // V(s') = ⟨π(s'), Q(s')⟩ once per state, then one dot per (s,a).
    let values: Vec<f64> = (0..n).map(|s| dot(policy.row(s), qtable.row(s))).collect();
    for s in 0..n {
        for a in 0..mdp.num_actions() {
            let backed = mdp.reward(s, a) + gamma * dot(mdp.transition_row(s, a), &values);
            out.set(s, a, backed);
        }
    }
    Ok(())
}

pub mod io {
    //! Plain-text MDP files.
    //!
    //! Whitespace-separated tokens with `#` line comments, in this order:
    //!
    //! ```text
    //! num_states 2
    //! num_actions 2
    //! discount 0.5
    //! reward
    //! 1 1        # row-major |S|x|A|
    //! 0 0
    //! transition
    //! 0 1        # row-major |S|x|A|x|S|, one row per (s,a)
    //! 0 1
    //! 1 0
    //! 1 0
    //! ```
    //!
    //! Loading validates every model invariant and reports the offending
    //! index on violation.

    use std::fmt::Write as _;
    use std::path::Path;

    use super::MdpModel;
    use crate::error::{Error, Result};

    pub fn format_mdp(mdp: &MdpModel) -> String {
        let mut out = String::new();
        writeln!(out, "num_states {}", mdp.num_states()).unwrap();
        writeln!(out, "num_actions {}", mdp.num_actions()).unwrap();
        writeln!(out, "discount {}", mdp.discount()).unwrap();
        writeln!(out, "reward").unwrap();
        for s in 0..mdp.num_states() {
            let row: Vec<String> = (0..mdp.num_actions())
                .map(|a| mdp.reward(s, a).to_string())
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        writeln!(out, "transition").unwrap();
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let row: Vec<String> = mdp
                    .transition_row(s, a)
                    .iter()
                    .map(|p| p.to_string())
                    .collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    struct Tokens<'a> {
        iter: std::iter::Peekable<std::vec::IntoIter<&'a str>>,
        consumed: usize,
    }

    impl<'a> Tokens<'a> {
        fn new(text: &'a str) -> Self {
            let tokens: Vec<&str> = text
                .lines()
                .map(|line| line.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace)
                .collect();
            Self {
                iter: tokens.into_iter().peekable(),
                consumed: 0,
            }
        }

        fn next(&mut self, what: &str) -> Result<&'a str> {
            self.consumed += 1;
            self.iter.next().ok_or_else(|| {
                Error::Parse(format!(
                    "unexpected end of file while reading {what} (token {})",
                    self.consumed
                ))
            })
        }

        fn expect_key(&mut self, key: &str) -> Result<()> {
            let tok = self.next(key)?;
            if tok != key {
                return Err(Error::Parse(format!("expected '{key}', found '{tok}'")));
            }
            Ok(())
        }

        fn usize_field(&mut self, key: &str) -> Result<usize> {
            self.expect_key(key)?;
            let tok = self.next(key)?;
            tok.parse()
                .map_err(|_| Error::Parse(format!("{key}: '{tok}' is not a positive integer")))
        }

        fn f64_value(&mut self, what: &str) -> Result<f64> {
            let tok = self.next(what)?;
            tok.parse()
                .map_err(|_| Error::Parse(format!("{what}: '{tok}' is not a number")))
        }
    }

    pub fn parse_mdp(text: &str) -> Result<MdpModel> {
        let mut tokens = Tokens::new(text);
        let num_states = tokens.usize_field("num_states")?;
        let num_actions = tokens.usize_field("num_actions")?;
        tokens.expect_key("discount")?;
        let discount = tokens.f64_value("discount")?;
        tokens.expect_key("reward")?;
        let mut reward = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                reward.push(tokens.f64_value(&format!("reward (s={s}, a={a})"))?);
            }
        }
        tokens.expect_key("transition")?;
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for s in 0..num_states {
            for a in 0..num_actions {
                for s2 in 0..num_states {
                    transition
                        .push(tokens.f64_value(&format!("transition (s={s}, a={a}, s'={s2})"))?);
                }
            }
        }
        if let Some(extra) = tokens.iter.peek() {
            return Err(Error::Parse(format!("trailing content '{extra}'")));
        }
        MdpModel::new(num_states, num_actions, transition, reward, discount)
    }

    pub fn save_mdp(path: &Path, mdp: &MdpModel) -> Result<()> {
        std::fs::write(path, format_mdp(mdp))?;
        Ok(())
    }

    pub fn load_mdp(path: &Path) -> Result<MdpModel> {
        let text = std::fs::read_to_string(path)?;
        parse_mdp(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random_mdp;

    fn single_state(rewards: &[f64], discount: f64) -> MdpModel {
        let m = rewards.len();
        MdpModel::new(1, m, vec![1.0; m], rewards.to_vec(), discount).unwrap()
    }

    /// Iterative policy evaluation, the independent oracle for the direct
    /// linear solve: V ← r_π + γ P_π V until a 1e-10 fixed point.
    fn policy_evaluation_iterative(mdp: &MdpModel, policy: &Policy) -> Vec<f64> {
        let n = mdp.num_states();
        let mut v = vec![0.0f64; n];
        for _ in 0..200_000 {
            let mut next = vec![0.0f64; n];
            let mut delta = 0.0f64;
            for s in 0..n {
                let mut acc = 0.0;
                for a in 0..mdp.num_actions() {
                    let w = policy.prob(s, a);
                    acc +=
                        w * (mdp.reward(s, a) + mdp.discount() * dot(mdp.transition_row(s, a), &v));
                }
                next[s] = acc;
                delta = delta.max((next[s] - v[s]).abs());
            }
            v = next;
            if delta < 1e-10 {
                break;
            }
        }
        v
    }

    #[test]
    fn rejects_bad_transition_row() {
        let err = MdpModel::new(1, 1, vec![0.5], vec![0.0], 0.9).unwrap_err();
        match err {
            Error::TransitionRowSum {
                state: 0,
                action: 0,
                ..
            } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_transition_entry() {
        let err = MdpModel::new(1, 1, vec![-1.0], vec![0.0], 0.9).unwrap_err();
        match err {
            Error::BadTransitionEntry { next_state: 0, .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_reward() {
        let err = MdpModel::new(1, 1, vec![1.0], vec![f64::NAN], 0.9).unwrap_err();
        assert!(matches!(err, Error::NonFiniteReward { .. }));
    }

    #[test]
    fn single_state_geometric_series() {
        // r = 1 everywhere, γ = 0.9: V = 1/(1-γ) = 10 under any policy.
        let mdp = single_state(&[1.0, 1.0], 0.9);
        for policy in [
            Policy::uniform(1, 2),
            Policy::from_probs(1, 2, vec![0.3, 0.7]).unwrap(),
        ] {
            let (v, q) = policy_evaluation_exact(&mdp, &policy).unwrap();
            assert!((v[0] - 10.0).abs() < 1e-9, "V = {}", v[0]);
            assert!((q.get(0, 0) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_state_swap_by_hand() {
        // Deterministic swap, r(s0,·)=1, r(s1,·)=0, γ = 0.5:
        // V0 = 1 + 0.5 V1, V1 = 0 + 0.5 V0 → V0 = 4/3, V1 = 2/3.
        let transition = vec![
            0.0, 1.0, // s0 a0
            0.0, 1.0, // s0 a1
            1.0, 0.0, // s1 a0
            1.0, 0.0, // s1 a1
        ];
        let mdp = MdpModel::new(2, 2, transition, vec![1.0, 1.0, 0.0, 0.0], 0.5).unwrap();
        let (v, _) = policy_evaluation_exact(&mdp, &Policy::uniform(2, 2)).unwrap();
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_evaluation_matches_iterative_oracle() {
        let mdp = random_mdp(5, 3, 0.9, 7).unwrap();
        let policy = Policy::uniform(5, 3);
        let (v, _) = policy_evaluation_exact(&mdp, &policy).unwrap();
        let oracle = policy_evaluation_iterative(&mdp, &policy);
        for s in 0..5 {
            assert!(
                (v[s] - oracle[s]).abs() < 1e-8,
                "state {s}: exact {} vs iterative {}",
                v[s],
                oracle[s]
            );
        }
    }

    #[test]
    fn bellman_residual_on_random_models() {
        // 100 random MDPs across discounts; the identity must hold to 1e-9.
        let mut idx = 0;
        for &gamma in &[0.5, 0.9, 0.99] {
            for seed in 0..34u64 {
                idx += 1;
                if idx > 100 {
                    break;
                }
                let ns = 2 + (seed % 5) as usize; // up to 6
                let na = 1 + (seed % 4) as usize; // up to 4
                let mdp = random_mdp(ns, na, gamma, 1000 + seed).unwrap();
                let policy = Policy::uniform(ns, na);
                let (v, q) = policy_evaluation_exact(&mdp, &policy).unwrap();
                for (s, &vs) in v.iter().enumerate() {
                    let rhs = dot(policy.row(s), q.row(s));
                    assert!(
                        (vs - rhs).abs() <= 1e-9,
                        "residual at γ={gamma} seed={seed} s={s}"
                    );
                }
            }
        }
    }

    #[test]
    fn policy_evaluation_rejects_invalid_policy_row() {
        let mdp = single_state(&[1.0, 1.0], 0.9);
        let bad = Policy {
            num_states: 1,
            num_actions: 2,
            probs: vec![0.7, 0.7],
        };
        assert!(matches!(
            policy_evaluation_exact(&mdp, &bad),
            Err(Error::NotADistribution { .. })
        ));
    }

    #[test]
    fn value_iteration_single_state_by_hand() {
        // Rewards (1, 2), γ = 0.5: V* = 2/(1-0.5) = 4, Q* = (1,2) + 0.5·4 = (3,4).
        let mdp = single_state(&[1.0, 2.0], 0.5);
        let out = value_iteration(&mdp, 1e-12, 10_000).unwrap();
        assert!(out.converged);
        assert!((out.qstar.get(0, 0) - 3.0).abs() < 1e-9);
        assert!((out.qstar.get(0, 1) - 4.0).abs() < 1e-9);
        assert_eq!(argmax(out.greedy.row(0)), 1);
    }

    #[test]
    fn value_iteration_zero_rewards() {
        let mdp = random_mdp(4, 2, 0.9, 3).unwrap();
        let zeroed = MdpModel::new(
            4,
            2,
            (0..4 * 2 * 4)
                .map(|i| mdp.transition(i / 8, (i / 4) % 2, i % 4))
                .collect(),
            vec![0.0; 8],
            0.9,
        )
        .unwrap();
        let out = value_iteration(&zeroed, 1e-10, 1000).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!(out.qstar.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn value_iteration_bellman_optimality_residual() {
        let mdp = random_mdp(4, 2, 0.9, 11).unwrap();
        let out = value_iteration(&mdp, 1e-10, 1_000_000).unwrap();
        assert!(out.converged);
        // Residual of the optimality equation is the oracle here.
        let q = &out.qstar;
        for s in 0..4 {
            for a in 0..2 {
                let best_next: f64 = (0..4)
                    .map(|s2| mdp.transition(s, a, s2) * q.row(s2)[argmax(q.row(s2))])
                    .sum();
                let residual = (q.get(s, a) - (mdp.reward(s, a) + 0.9 * best_next)).abs();
                assert!(residual <= 1e-8, "residual {residual} at ({s},{a})");
            }
        }
    }

    #[test]
    fn value_iteration_flags_non_convergence() {
        let mdp = random_mdp(4, 2, 0.99, 5).unwrap();
        let out = value_iteration(&mdp, 1e-14, 3).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.error_bound > 0.0);
    }

    #[test]
    fn greedy_policy_dominates_random_policies() {
        use rand::{Rng, SeedableRng};
        let tol = 1e-10;
        let mdp = random_mdp(5, 3, 0.9, 21).unwrap();
        let out = value_iteration(&mdp, tol, 1_000_000).unwrap();
        let (v_greedy, _) = policy_evaluation_exact(&mdp, &out.greedy).unwrap();
        let slack = 10.0 * tol / (1.0 - 0.9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut probs = vec![0.0; 15];
            for s in 0..5 {
                let mut row: Vec<f64> = (0..3).map(|_| -f64::ln(rng.random::<f64>())).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                probs[s * 3..(s + 1) * 3].copy_from_slice(&row);
            }
            let policy = Policy::from_probs(5, 3, probs).unwrap();
            let (v, _) = policy_evaluation_exact(&mdp, &policy).unwrap();
            for s in 0..5 {
                assert!(
                    v_greedy[s] >= v[s] - slack,
                    "greedy loses at state {s}: {} < {}",
                    v_greedy[s],
                    v[s]
                );
            }
        }
    }

    #[test]
    fn expected_sarsa_backup_by_hand() {
        // Single state, rewards (1,2), γ = 0.5, π uniform, Q = (3,4):
        // V = 3.5, out = (1,2) + 0.5·3.5 = (2.75, 3.75).
        let mdp = single_state(&[1.0, 2.0], 0.5);
        let q = QTable::from_values(1, 2, vec![3.0, 4.0]).unwrap();
        let out = expected_sarsa_backup(&mdp, &q, &Policy::uniform(1, 2)).unwrap();
        assert!((out.get(0, 0) - 2.75).abs() < 1e-15);
        assert!((out.get(0, 1) - 3.75).abs() < 1e-15);
    }

    #[test]
    fn expected_sarsa_backup_myopic_at_zero_discount() {
        // γ → 0 is not constructible (discount must be > 0); use the limit
        // case via a table of zeros instead: backup equals the reward table.
        let mdp = random_mdp(3, 2, 0.9, 13).unwrap();
        let q = QTable::zeros(3, 2);
        let out = expected_sarsa_backup(&mdp, &q, &Policy::uniform(3, 2)).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(out.get(s, a), mdp.reward(s, a));
            }
        }
    }

    #[test]
    fn repeated_backup_converges_to_exact_evaluation() {
        let mdp = random_mdp(4, 3, 0.9, 17).unwrap();
        let policy = Policy::uniform(4, 3);
        let (_, q_exact) = policy_evaluation_exact(&mdp, &policy).unwrap();
        let mut q = QTable::zeros(4, 3);
        // ⌈log(ε)/log(γ)⌉ iterations at ε = 1e-9 and γ = 0.9 is ~197.
        let iters = (1e-9f64.ln() / 0.9f64.ln()).ceil() as usize + 1;
        for _ in 0..iters {
            q = expected_sarsa_backup(&mdp, &q, &policy).unwrap();
        }
        assert!(q.sup_distance(&q_exact) < 1e-8);
    }

    #[test]
    fn backup_is_gamma_contraction() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
        for seed in 0..100u64 {
            let mdp = random_mdp(4, 3, 0.9, 300 + seed).unwrap();
            let policy = Policy::uniform(4, 3);
            let q1 =
                QTable::from_values(4, 3, (0..12).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .unwrap();
            let q2 =
                QTable::from_values(4, 3, (0..12).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .unwrap();
            let b1 = expected_sarsa_backup(&mdp, &q1, &policy).unwrap();
            let b2 = expected_sarsa_backup(&mdp, &q2, &policy).unwrap();
            assert!(
                b1.sup_distance(&b2) <= 0.9 * q1.sup_distance(&q2) + 1e-12,
                "contraction violated at seed {seed}"
            );
        }
    }

    #[test]
    fn state_value_cases() {
        let q = QTable::from_values(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!((state_value(&q, &Policy::uniform(1, 3), 0) - 2.0).abs() < 1e-15);

        let pure = Policy::deterministic(1, 3, &[2]);
        assert_eq!(state_value(&q, &pure, 0), 3.0);

        let q2 = QTable::from_values(1, 2, vec![4.0, 0.0]).unwrap();
        let mixed = Policy::from_probs(1, 2, vec![0.25, 0.75]).unwrap();
        assert!((state_value(&q2, &mixed, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn state_value_rejects_bad_index() {
        let q = QTable::zeros(2, 2);
        state_value(&q, &Policy::uniform(2, 2), 5);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0]), 0);
    }

    #[test]
    fn mdp_file_round_trips_bitwise() {
        let mdp = random_mdp(4, 3, 0.97, 55).unwrap();
        let text = io::format_mdp(&mdp);
        let back = io::parse_mdp(&text).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn mdp_file_supports_comments_and_layout() {
        let text = "# tiny model\nnum_states 1\nnum_actions 2\ndiscount 0.5\nreward 1 2 # inline\ntransition\n1\n1\n";
        let mdp = io::parse_mdp(text).unwrap();
        assert_eq!(mdp.num_states(), 1);
        assert_eq!(mdp.reward(0, 1), 2.0);
    }

    #[test]
    fn mdp_file_reports_offending_index() {
        // Second transition row sums to 0.9.
        let text = "num_states 1\nnum_actions 2\ndiscount 0.5\nreward 1 2\ntransition\n1\n0.9\n";
        match io::parse_mdp(text) {
            Err(Error::TransitionRowSum {
                state: 0,
                action: 1,
                ..
            }) => {}
            other => panic!("unexpected result {other:?}"),
        }

        let truncated = "num_states 1\nnum_actions 2\ndiscount 0.5\nreward 1\n";
        match io::parse_mdp(truncated) {
            Err(Error::Parse(msg)) => assert!(msg.contains("reward (s=0, a=1)"), "{msg}"),
            other => panic!("unexpected result {other:?}"),
        }

        let bad_token = "num_states 1\nnum_actions 1\ndiscount x\nreward 1\ntransition 1\n";
        assert!(matches!(io::parse_mdp(bad_token), Err(Error::Parse(_))));
    }
}
