//! Blackwell-game primitives: regret vectors, regret matching, and the
//! distance to the nonpositive orthant.
//!
//! In the repeated vector-payoff game (Blackwell 1956) a player picks a
//! mixed decision x ∈ Δ^m, an adversary picks a payoff vector y ∈ ℝ^m, and
//! the player incurs the regret vector
//!
//!   u(x, y) = y − ⟨x, y⟩·1,
//!
//! whose i-th entry is the counterfactual gap of the pure action i over the
//! realized mixed payoff. Driving the running average ū_k into the
//! nonpositive orthant is exactly the no-regret property, and regret
//! matching (Hart & Mas-Colell 2000)
//!
//!   x_{k+1} ∝ [ū_k]^+   (uniform when [ū_k]^+ = 0)
//!
//! achieves it: ⟨u(x_{k+1}, y), [ū_k]^+⟩ = 0 for every y, so each new payoff
//! lands in the halfspace that separates ū_k from the orthant.

use crate::error::{Error, Result};
use crate::mdp::{dot, policy_evaluation_exact, MdpModel, Policy, SIMPLEX_TOL};

/// Per-action counterfactual gaps u(x, y) for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretVector {
    pub entries: Vec<f64>,
}

/// Exact running mean of regret vectors (arithmetic, no decay).
#[derive(Debug, Clone, PartialEq)]
pub struct RegretAverage {
    mean: Vec<f64>,
    count: u64,
}

impl RegretAverage {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Incremental exact mean: mean += (r − mean)/count.
    pub fn update(&mut self, regret: &RegretVector) {
        assert_eq!(regret.entries.len(), self.mean.len(), "regret dimension");
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (m, r) in self.mean.iter_mut().zip(&regret.entries) {
            *m += (r - *m) * inv;
        }
    }
}

/// u(x, y): output(i) = y(i) − ⟨x, y⟩. Requires x in the simplex (within
/// 1e-9) and matching dimensions; ⟨x, u(x,y)⟩ = 0 by construction.
pub fn regret_vector(decision: &[f64], payoff: &[f64]) -> Result<RegretVector> {
    if decision.len() != payoff.len() {
        return Err(Error::DimensionMismatch(format!(
            "decision has {} entries, payoff has {}",
            decision.len(),
            payoff.len()
        )));
    }
    let mut sum = 0.0;
    for &p in decision {
        if !p.is_finite() || p < -SIMPLEX_TOL {
            return Err(Error::NotADistribution {
                row: 0,
                detail: format!("decision entry {p}"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotADistribution {
            row: 0,
            detail: format!("decision sums to {sum}"),
        });
    }
    let realized = dot(decision, payoff);
    Ok(RegretVector {
        entries: payoff.iter().map(|&y| y - realized).collect(),
    })
}

/// Regret matching on an arbitrary mean vector: the ℓ1-normalized positive
/// part, or uniform when no entry is positive.
pub fn regret_matching_from_mean(mean: &[f64]) -> Vec<f64> {
    let positive: Vec<f64> = mean.iter().map(|&m| m.max(0.0)).collect();
    let norm: f64 = positive.iter().sum();
    if norm > 0.0 {
        positive.iter().map(|&p| p / norm).collect()
    } else {
        vec![1.0 / mean.len() as f64; mean.len()]
    }
}

/// The regret-matching decision for an averaged regret.
pub fn regret_matching(avg: &RegretAverage) -> Vec<f64> {
    regret_matching_from_mean(avg.mean())
}

/// Euclidean distance from `mean` to the nonpositive orthant: ‖[mean]^+‖₂.
pub fn distance_to_orthant(mean: &[f64]) -> f64 {
    mean.iter()
        .map(|&m| {
            let p = m.max(0.0);
            p * p
        })
        .sum::<f64>()
        .sqrt()
}

/// Distance of the running average payoff to the target set.
pub fn approachability_distance(avg: &RegretAverage) -> f64 {
    distance_to_orthant(avg.mean())
}

/// One recorded round of a Blackwell game.
#[derive(Debug, Clone)]
pub struct RolloutRound {
    pub round: usize,
    pub decision: Vec<f64>,
    pub payoff: Vec<f64>,
    /// Distance of the average regret to the nonpositive orthant after this
    /// round.
    pub distance: f64,
}

/// Trace of a full rollout.
#[derive(Debug, Clone)]
pub struct RolloutTrace {
    pub dim: usize,
    pub rounds: Vec<RolloutRound>,
}

impl RolloutTrace {
    pub fn final_distance(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.distance)
    }

    pub fn distance_at(&self, round: usize) -> Option<f64> {
        self.rounds.get(round.checked_sub(1)?).map(|r| r.distance)
    }

    /// CSV export: `round,distance,x0,...,x{m-1}` per line.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "round,distance")?;
        for i in 0..self.dim {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for r in &self.rounds {
            write!(w, "{},{}", r.round, r.distance)?;
            for x in &r.decision {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Plays `horizon` rounds of the Blackwell game with regret matching
/// against a scripted adversary. The adversary sees the round index, the
/// player's current decision, and the full history, and must return a
/// payoff vector of dimension `dim`.
///
/// The first decision is uniform; afterwards x_{k+1} is regret matching on
/// the average of u(x_1,y_1)…u(x_k,y_k).
pub fn blackwell_game_rollout<F>(
    dim: usize,
    horizon: usize,
    mut adversary: F,
) -> Result<RolloutTrace>
where
    F: FnMut(usize, &[f64], &[RolloutRound]) -> Vec<f64>,
{
    if dim == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "rollout needs dim >= 1 and horizon >= 1".into(),
        ));
    }
    let mut avg = RegretAverage::new(dim);
    let mut rounds: Vec<RolloutRound> = Vec::with_capacity(horizon);
    let mut decision = vec![1.0 / dim as f64; dim];
    for k in 1..=horizon {
        let payoff = adversary(k, &decision, &rounds);
        if payoff.len() != dim {
            return Err(Error::AdversaryDimension {
                round: k,
                got: payoff.len(),
                expected: dim,
            });
        }
        let regret = regret_vector(&decision, &payoff)?;
        avg.update(&regret);
        rounds.push(RolloutRound {
            round: k,
            decision: decision.clone(),
            payoff,
            distance: approachability_distance(&avg),
        });
        decision = regret_matching(&avg);
    }
    Ok(RolloutTrace { dim, rounds })
}

/// Numeric check that the regret-matching direction is an ascent direction
/// for the state value: computes h(s) = RM(u(π(s), Q^π(s))) − π(s) and the
/// central finite-difference derivative of V^π(s) along h(s).
///
/// The perturbed rows are renormalized to the simplex; if a perturbation
/// leaves the simplex the step is halved, up to ten times.
pub fn directional_improvement_check(
    mdp: &MdpModel,
    policy: &Policy,
    s: usize,
    fd_step: f64,
) -> Result<f64> {
    if !fd_step.is_finite() || fd_step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    if s >= mdp.num_states() {
        return Err(Error::IndexOutOfRange(format!("state {s}")));
    }
    if mdp.discount() >= 1.0 {
        return Err(Error::InvalidDiscount {
            value: mdp.discount(),
            expected: "directional check requires discount < 1",
        });
    }
    let (_, q) = policy_evaluation_exact(mdp, policy)?;
    let regret = regret_vector(policy.row(s), q.row(s))?;
    let target = regret_matching_from_mean(&regret.entries);
    let direction: Vec<f64> = target
        .iter()
        .zip(policy.row(s))
        .map(|(t, p)| t - p)
        .collect();

    let perturbed = |step: f64| -> Option<Policy> {
        let mut row: Vec<f64> = policy
            .row(s)
            .iter()
            .zip(&direction)
            .map(|(p, h)| p + step * h)
            .collect();
        if row.iter().any(|&p| p < 0.0) {
            return None;
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        let mut out = policy.clone();
        out.set_row(s, &row);
        Some(out)
    };

    let mut step = fd_step;
    for _ in 0..10 {
        match (perturbed(step), perturbed(-step)) {
            (Some(plus), Some(minus)) => {
                let (v_plus, _) = policy_evaluation_exact(mdp, &plus)?;
                let (v_minus, _) = policy_evaluation_exact(mdp, &minus)?;
                return Ok((v_plus[s] - v_minus[s]) / (2.0 * step));
            }
            _ => step *= 0.5,
        }
    }
    Err(Error::Numerical(format!(
        "perturbation left the simplex after 10 step reductions (state {s})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::random_mdp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= tol, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn regret_vector_by_hand() {
        let r = regret_vector(&[1.0 / 3.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert_close(&r.entries, &[-1.0, 0.0, 1.0], 1e-12);

        let r = regret_vector(&[1.0, 0.0], &[2.0, 5.0]).unwrap();
        assert_close(&r.entries, &[0.0, 3.0], 1e-12);

        let r = regret_vector(&[0.5, 0.5], &[4.0, 4.0]).unwrap();
        assert_close(&r.entries, &[0.0, 0.0], 1e-12);
    }

    #[test]
    fn regret_vector_is_orthogonal_to_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = rng.random_range(1..6);
            let mut x: Vec<f64> = (0..m)
                .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
                .collect();
            let sum: f64 = x.iter().sum();
            x.iter_mut().for_each(|p| *p /= sum);
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
            let r = regret_vector(&x, &y).unwrap();
            assert!(dot(&x, &r.entries).abs() <= 1e-12);
        }
    }

    #[test]
    fn regret_vector_rejects_bad_inputs() {
        assert!(regret_vector(&[0.5, 0.5], &[1.0]).is_err());
        assert!(regret_vector(&[0.7, 0.7], &[1.0, 2.0]).is_err());
        assert!(regret_vector(&[-0.2, 1.2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn regret_average_is_exact_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut avg = RegretAverage::new(3);
        let mut history: Vec<Vec<f64>> = Vec::new();
        for _ in 0..500 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            history.push(v.clone());
            avg.update(&RegretVector { entries: v });
        }
        for i in 0..3 {
            let mean: f64 = history.iter().map(|v| v[i]).sum::<f64>() / history.len() as f64;
            assert!((avg.mean()[i] - mean).abs() <= 1e-12);
        }
        assert_eq!(avg.count(), 500);
    }

    #[test]
    fn regret_matching_by_hand() {
        let mut avg = RegretAverage::new(3);
        avg.update(&RegretVector {
            entries: vec![2.0, -1.0, 3.0],
        });
        assert_close(&regret_matching(&avg), &[0.4, 0.0, 0.6], 1e-12);

        let mut neg = RegretAverage::new(2);
        neg.update(&RegretVector {
            entries: vec![-1.0, -2.0],
        });
        assert_close(&regret_matching(&neg), &[0.5, 0.5], 1e-12);

        assert_close(
            &regret_matching_from_mean(&[0.0, 0.0, 5.0]),
            &[0.0, 0.0, 1.0],
            1e-12,
        );
    }

    #[test]
    fn regret_matching_output_is_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let m = rng.random_range(1..7);
            let mean: Vec<f64> = (0..m).map(|_| rng.random_range(-4.0..4.0)).collect();
            let x = regret_matching_from_mean(&mean);
            let sum: f64 = x.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(x.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn blackwell_identity_holds() {
        // ⟨y − ⟨x,y⟩·1, [mean]^+⟩ = 0 for x = RM(mean) whenever [mean]^+ ≠ 0.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
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
            assert!(inner.abs() <= 1e-9, "identity violated: {inner}");
            tested += 1;
        }
    }

    #[test]
    fn distance_by_hand() {
        assert_eq!(distance_to_orthant(&[-1.0, -2.0]), 0.0);
        assert!((distance_to_orthant(&[3.0, 4.0]) - 5.0).abs() <= 1e-12);
        assert!((distance_to_orthant(&[-1.0, 2.0]) - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn rollout_constant_adversary_concentrates() {
        // Payoff always (1, 0): the only positive-regret action is 0.
        let trace = blackwell_game_rollout(2, 10_000, |_, _, _| vec![1.0, 0.0]).unwrap();
        assert!(
            trace.final_distance() <= 0.05,
            "distance {}",
            trace.final_distance()
        );
        let last = trace.rounds.last().unwrap();
        assert!(
            last.decision[0] >= 0.99,
            "decision did not concentrate: {:?}",
            last.decision
        );
    }

    #[test]
    fn rollout_alternating_adversary_decays() {
        let trace = blackwell_game_rollout(2, 10_000, |k, _, _| {
            if k % 2 == 0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        })
        .unwrap();
        assert!(trace.final_distance() <= trace.distance_at(100).unwrap());
    }

    #[test]
    fn rollout_single_action_has_zero_regret() {
        let trace = blackwell_game_rollout(1, 100, |_, _, _| vec![3.5]).unwrap();
        for r in &trace.rounds {
            assert_eq!(r.distance, 0.0);
        }
    }

    #[test]
    fn rollout_csv_has_decision_columns() {
        let trace = blackwell_game_rollout(3, 5, |_, _, _| vec![1.0, 0.0, 0.0]).unwrap();
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round,distance,x0,x1,x2"));
        assert_eq!(lines.count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("1,"));
    }

    #[test]
    fn rollout_rejects_dimension_drift() {
        let err = blackwell_game_rollout(
            2,
            10,
            |k, _, _| {
                if k < 4 {
                    vec![1.0, 0.0]
                } else {
                    vec![1.0]
                }
            },
        )
        .unwrap_err();
        match err {
            Error::AdversaryDimension {
                round: 4,
                got: 1,
                expected: 2,
            } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn directional_derivative_positive_when_improvable() {
        // Single state, rewards (1, 2), γ = 0.5, uniform policy: shifting
        // mass toward action 1 strictly increases the value.
        let mdp = MdpModel::new(1, 2, vec![1.0, 1.0], vec![1.0, 2.0], 0.5).unwrap();
        let d = directional_improvement_check(&mdp, &Policy::uniform(1, 2), 0, 1e-5).unwrap();
        assert!(d > 0.1, "derivative {d}");
    }

    #[test]
    fn directional_derivative_zero_for_constant_rewards() {
        let base = random_mdp(3, 2, 0.9, 42).unwrap();
        let constant = MdpModel::new(
            3,
            2,
            (0..3 * 2 * 3)
                .map(|i| base.transition(i / 6, (i / 3) % 2, i % 3))
                .collect(),
            vec![0.7; 6],
            0.9,
        )
        .unwrap();
        let d = directional_improvement_check(&constant, &Policy::uniform(3, 2), 1, 1e-5).unwrap();
        assert!(d.abs() <= 1e-6, "derivative {d}");
    }

    #[test]
    fn directional_derivative_small_at_zero_regret_optimum() {
        // Two-state MDP whose actions at state 0 are interchangeable, so
        // every interior policy is optimal there with zero positive regret.
        // The direction falls back to uniform − π and the derivative must
        // vanish up to finite-difference error.
        let transition = vec![
            0.3, 0.7, // s0 a0
            0.3, 0.7, // s0 a1
            0.8, 0.2, // s1 a0
            0.1, 0.9, // s1 a1
        ];
        let reward = vec![0.4, 0.4, 0.9, 0.1];
        let mdp = MdpModel::new(2, 2, transition, reward, 0.9).unwrap();
        let policy = Policy::from_probs(2, 2, vec![0.7, 0.3, 0.5, 0.5]).unwrap();
        let (_, q) = policy_evaluation_exact(&mdp, &policy).unwrap();
        // Same payoff for both actions at s0 means zero regret there.
        assert!((q.get(0, 0) - q.get(0, 1)).abs() < 1e-12);
        let d = directional_improvement_check(&mdp, &policy, 0, 1e-5).unwrap();
        assert!(
            d.abs() <= 1e-6 * q.max_abs().max(1.0),
            "derivative {d} should vanish at a zero-regret state"
        );

        // A near-greedy interior policy on a generic model still satisfies
        // the one-sided bound.
        let mdp = random_mdp(2, 2, 0.9, 77).unwrap();
        let out = crate::mdp::value_iteration(&mdp, 1e-12, 1_000_000).unwrap();
        let eps = 1e-9;
        let mut probs = Vec::new();
        for s in 0..2 {
            let greedy = crate::mdp::argmax(out.qstar.row(s));
            for a in 0..2 {
                probs.push(if a == greedy { 1.0 - eps } else { eps });
            }
        }
        let policy = Policy::from_probs(2, 2, probs).unwrap();
        let value_range = out.qstar.max_abs();
        let d = directional_improvement_check(&mdp, &policy, 0, 1e-5).unwrap();
        assert!(
            d >= -1e-6 * value_range.max(1.0),
            "derivative {d} at near-optimal policy"
        );
    }

    #[test]
    fn directional_check_rejects_bad_step() {
        let mdp = random_mdp(2, 2, 0.9, 1).unwrap();
        assert!(directional_improvement_check(&mdp, &Policy::uniform(2, 2), 0, 0.0).is_err());
        assert!(directional_improvement_check(&mdp, &Policy::uniform(2, 2), 9, 1e-5).is_err());
    }

    #[test]
    fn directional_check_shrinks_step_near_the_boundary() {
        // Action 0 is best but nearly unplayed, so the regret-matching
        // target concentrates on the 5e-8-probability entry and the minus
        // perturbation leaves the simplex until the step has been halved
        // several times. At 5e-10 ten halvings are not enough.
        let mdp = MdpModel::new(1, 2, vec![1.0, 1.0], vec![2.0, 1.0], 0.5).unwrap();
        let tight = Policy::from_probs(1, 2, vec![5e-8, 1.0 - 5e-8]).unwrap();
        let d = directional_improvement_check(&mdp, &tight, 0, 1e-5).unwrap();
        assert!(d > 0.0, "moving toward the better arm must help: {d}");

        let hopeless = Policy::from_probs(1, 2, vec![5e-10, 1.0 - 5e-10]).unwrap();
        assert!(matches!(
            directional_improvement_check(&mdp, &hopeless, 0, 1e-5),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn ascent_direction_property_on_random_triples() {
        // Finite-difference directional derivative is nonnegative up to
        // discretization error, across random models, interior policies and
        // states.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..100 {
            let ns = rng.random_range(2..6);
            let na = rng.random_range(2..5);
            let mdp = random_mdp(ns, na, 0.9, 9000 + trial).unwrap();
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
            let d = directional_improvement_check(&mdp, &policy, s, 1e-5).unwrap();
            assert!(
                d >= -1e-5 * q.max_abs(),
                "trial {trial}: derivative {d} too negative"
            );
        }
    }
}
