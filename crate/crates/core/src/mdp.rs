//! Finite-horizon episodic MDPs with exact dynamic-programming oracles.
//!
//! Everything downstream (critics, actors, regret accounting) assumes the
//! environment is small enough to solve exactly by backward induction, so
//! all learned quantities can be compared against ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability rows summing to one.
pub const PROB_TOL: f64 = 1e-9;

/// Per-(h, s, a) value tables, the common shape for critics, occupancies,
/// and diagnostics.
pub type ValueTable = Vec<Vec<Vec<f64>>>;

/// Nonzero transition entries per (h, s, a).
type SupportTable = Vec<Vec<Vec<Vec<(usize, f64)>>>>;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("sizes must be positive (S={n_states}, A={n_actions}, H={horizon})")]
    EmptyDimension {
        n_states: usize,
        n_actions: usize,
        horizon: usize,
    },

    #[error("transition table has wrong shape at [{h}][{s}][{a}]")]
    BadShape { h: usize, s: usize, a: usize },

    #[error("transition row [{h}][{s}][{a}] sums to {sum}, expected 1")]
    BadRow { h: usize, s: usize, a: usize, sum: f64 },

    #[error("reward {value} at [{h}][{s}][{a}] outside [0,1]")]
    RewardRange { h: usize, s: usize, a: usize, value: f64 },

    #[error("initial state {0} out of range")]
    BadInitialState(usize),

    #[error("feature vector at [{h}][{s}][{a}] has norm {norm}, exceeds 1")]
    FeatureNorm { h: usize, s: usize, a: usize, norm: f64 },

    #[error("feature table shape inconsistent with MDP dimensions")]
    FeatureShape,

    #[error("policy table shape does not match MDP")]
    PolicyShape,

    #[error("policy row [{h}][{s}] sums to {sum}, expected 1")]
    PolicyRow { h: usize, s: usize, sum: f64 },
}

/// A tabular finite-horizon MDP. Steps are 0-indexed internally
/// (`h = 0..horizon`), matching array indexing throughout the crate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// P\[h\]\[s\]\[a\]\[s'\]
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// r\[h\]\[s\]\[a\], all in [0,1]
    rewards: Vec<Vec<Vec<f64>>>,
    initial_state: usize,
    /// Nonzero entries of each transition row, precomputed for sparse DP.
    #[serde(skip)]
    support: SupportTable,
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        let horizon = transitions.len();
        let n_states = transitions.first().map_or(0, |t| t.len());
        let n_actions = transitions
            .first()
            .and_then(|t| t.first())
            .map_or(0, |t| t.len());
        if horizon == 0 || n_states == 0 || n_actions == 0 {
            return Err(MdpError::EmptyDimension {
                n_states,
                n_actions,
                horizon,
            });
        }
        if initial_state >= n_states {
            return Err(MdpError::BadInitialState(initial_state));
        }
        if rewards.len() != horizon {
            return Err(MdpError::BadShape { h: rewards.len(), s: 0, a: 0 });
        }
        for h in 0..horizon {
            if transitions[h].len() != n_states || rewards[h].len() != n_states {
                return Err(MdpError::BadShape { h, s: 0, a: 0 });
            }
            for s in 0..n_states {
                if transitions[h][s].len() != n_actions || rewards[h][s].len() != n_actions {
                    return Err(MdpError::BadShape { h, s, a: 0 });
                }
                for a in 0..n_actions {
                    let row = &transitions[h][s][a];
                    if row.len() != n_states {
                        return Err(MdpError::BadShape { h, s, a });
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > PROB_TOL || row.iter().any(|&p| p < 0.0) {
                        return Err(MdpError::BadRow { h, s, a, sum });
                    }
                    let r = rewards[h][s][a];
                    if !(0.0..=1.0).contains(&r) {
                        return Err(MdpError::RewardRange { h, s, a, value: r });
                    }
                }
            }
        }
        let support = build_support(&transitions);
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            transitions,
            rewards,
            initial_state,
            support,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[h][s][a]
    }

    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h][s][a]
    }

    /// Nonzero `(next_state, prob)` pairs of a transition row.
    pub fn successors(&self, h: usize, s: usize, a: usize) -> &[(usize, f64)] {
        &self.support[h][s][a]
    }
}

fn build_support(transitions: &[Vec<Vec<Vec<f64>>>]) -> SupportTable {
    transitions
        .iter()
        .map(|per_s| {
            per_s
                .iter()
                .map(|per_a| {
                    per_a
                        .iter()
                        .map(|row| {
                            row.iter()
                                .enumerate()
                                .filter(|(_, &p)| p > 0.0)
                                .map(|(sp, &p)| (sp, p))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// A linear MDP: a feature map over an exactly solvable tabular ground truth.
///
/// The tabular core always exists so DP oracles apply; whether the features
/// make Q-functions exactly representable is the environment builder's
/// concern, not enforced here.
#[derive(Debug, Clone)]
pub struct LinearMdp {
    underlying: TabularMdp,
    /// φ\[h\]\[s\]\[a\] with ‖φ‖₂ ≤ 1
    features: Vec<Vec<Vec<Vec<f64>>>>,
    dim: usize,
}

impl LinearMdp {
    pub fn new(
        underlying: TabularMdp,
        features: Vec<Vec<Vec<Vec<f64>>>>,
    ) -> Result<Self, MdpError> {
        let (n_s, n_a, hor) = (
            underlying.n_states(),
            underlying.n_actions(),
            underlying.horizon(),
        );
        if features.len() != hor {
            return Err(MdpError::FeatureShape);
        }
        let dim = features
            .first()
            .and_then(|f| f.first())
            .and_then(|f| f.first())
            .map_or(0, |f| f.len());
        if dim == 0 {
            return Err(MdpError::FeatureShape);
        }
        for h in 0..hor {
            if features[h].len() != n_s {
                return Err(MdpError::FeatureShape);
            }
            for s in 0..n_s {
                if features[h][s].len() != n_a {
                    return Err(MdpError::FeatureShape);
                }
                for a in 0..n_a {
                    let phi = &features[h][s][a];
                    if phi.len() != dim {
                        return Err(MdpError::FeatureShape);
                    }
                    let norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1.0 + PROB_TOL {
                        return Err(MdpError::FeatureNorm { h, s, a, norm });
                    }
                }
            }
        }
        Ok(Self {
            underlying,
            features,
            dim,
        })
    }

    /// Wraps a tabular MDP with one-hot features of dimension S·A.
    pub fn one_hot(underlying: TabularMdp) -> Self {
        let (n_s, n_a, hor) = (
            underlying.n_states(),
            underlying.n_actions(),
            underlying.horizon(),
        );
        let dim = n_s * n_a;
        let features = (0..hor)
            .map(|_| {
                (0..n_s)
                    .map(|s| {
                        (0..n_a)
                            .map(|a| {
                                let mut phi = vec![0.0; dim];
                                phi[s * n_a + a] = 1.0;
                                phi
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            underlying,
            features,
            dim,
        }
    }

    pub fn tabular(&self) -> &TabularMdp {
        &self.underlying
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.features[h][s][a]
    }
}

/// Either environment kind; every algorithm runs against this.
#[derive(Debug, Clone)]
pub enum Env {
    Tabular(TabularMdp),
    Linear(LinearMdp),
}

impl Env {
    pub fn tabular(&self) -> &TabularMdp {
        match self {
            Env::Tabular(m) => m,
            Env::Linear(m) => m.tabular(),
        }
    }

    pub fn linear(&self) -> Option<&LinearMdp> {
        match self {
            Env::Tabular(_) => None,
            Env::Linear(m) => Some(m),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Env::Linear(_))
    }
}

/// One step of experience. `next_state` is `None` at the terminal step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: Option<usize>,
}

/// A full episode: exactly `horizon` chained transitions.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub episode: usize,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Optimal,
    PolicyEval,
}

/// Exact Q/V tables from backward induction.
#[derive(Debug, Clone)]
pub struct ValueTables {
    /// q\[h\]\[s\]\[a\]
    pub q: Vec<Vec<Vec<f64>>>,
    /// v\[h\]\[s\]
    pub v: Vec<Vec<f64>>,
    pub kind: ValueKind,
}

impl ValueTables {
    pub fn initial_value(&self, mdp: &TabularMdp) -> f64 {
        self.v[0][mdp.initial_state()]
    }
}

/// Materialized action probabilities π\[h\]\[s\]\[a\]. The DP and occupancy
/// routines work on this form; `SoftmaxPolicy` produces it.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    probs: Vec<Vec<Vec<f64>>>,
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<Vec<f64>>>) -> Result<Self, MdpError> {
        for (h, per_s) in probs.iter().enumerate() {
            for (s, row) in per_s.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                    return Err(MdpError::PolicyRow { h, s, sum });
                }
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            probs: vec![vec![vec![p; n_actions]; n_states]; horizon],
        }
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        &self.probs[h][s]
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<(), MdpError> {
        if self.probs.len() != mdp.horizon()
            || self.probs[0].len() != mdp.n_states()
            || self.probs[0][0].len() != mdp.n_actions()
        {
            return Err(MdpError::PolicyShape);
        }
        Ok(())
    }
}

/// Exact Q*, V* by backward induction:
/// Q*_H = r_H and Q*_h = r_h + Σ_{s'} P_h(s'|s,a) max_{a'} Q*_{h+1}(s',a').
pub fn dp_solve_optimal(mdp: &TabularMdp) -> ValueTables {
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut q = vec![vec![vec![0.0; n_a]; n_s]; hor];
    let mut v = vec![vec![0.0; n_s]; hor];
    for h in (0..hor).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                let mut val = mdp.reward(h, s, a);
                if h + 1 < hor {
                    for &(sp, p) in mdp.successors(h, s, a) {
                        val += p * v[h + 1][sp];
                    }
                }
                q[h][s][a] = val;
            }
            v[h][s] = q[h][s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    ValueTables {
        q,
        v,
        kind: ValueKind::Optimal,
    }
}

/// Exact Q^π, V^π for a materialized policy.
pub fn dp_policy_eval(mdp: &TabularMdp, policy: &PolicyTable) -> Result<ValueTables, MdpError> {
    policy.check_shape(mdp)?;
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut q = vec![vec![vec![0.0; n_a]; n_s]; hor];
    let mut v = vec![vec![0.0; n_s]; hor];
    for h in (0..hor).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                let mut val = mdp.reward(h, s, a);
                if h + 1 < hor {
                    for &(sp, p) in mdp.successors(h, s, a) {
                        val += p * v[h + 1][sp];
                    }
                }
                q[h][s][a] = val;
            }
            v[h][s] = policy
                .row(h, s)
                .iter()
                .zip(&q[h][s])
                .map(|(p, qv)| p * qv)
                .sum();
        }
    }
    Ok(ValueTables {
        q,
        v,
        kind: ValueKind::PolicyEval,
    })
}

/// Per-step state-action occupancy d_h(s,a) under a policy, by forward
/// recursion from the fixed initial state. Each step sums to one.
pub fn occupancy_measures(
    mdp: &TabularMdp,
    policy: &PolicyTable,
) -> Result<Vec<Vec<Vec<f64>>>, MdpError> {
    policy.check_shape(mdp)?;
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut occ = vec![vec![vec![0.0; n_a]; n_s]; hor];
    let mut state_dist = vec![0.0; n_s];
    state_dist[mdp.initial_state()] = 1.0;
    for h in 0..hor {
        for s in 0..n_s {
            let ds = state_dist[s];
            if ds == 0.0 {
                continue;
            }
            for a in 0..n_a {
                occ[h][s][a] = ds * policy.row(h, s)[a];
            }
        }
        if h + 1 < hor {
            let mut next = vec![0.0; n_s];
            for s in 0..n_s {
                for a in 0..n_a {
                    let mass = occ[h][s][a];
                    if mass == 0.0 {
                        continue;
                    }
                    for &(sp, p) in mdp.successors(h, s, a) {
                        next[sp] += mass * p;
                    }
                }
            }
            state_dist = next;
        }
    }
    Ok(occ)
}

/// Samples one episode. Deterministic given the generator state.
pub fn sample_episode<R: Rng>(
    env: &Env,
    policy: &PolicyTable,
    episode: usize,
    rng: &mut R,
) -> Trajectory {
    let mdp = env.tabular();
    let hor = mdp.horizon();
    let mut transitions = Vec::with_capacity(hor);
    let mut s = mdp.initial_state();
    for h in 0..hor {
        let a = sample_index(policy.row(h, s), rng);
        let reward = mdp.reward(h, s, a);
        let next_state = if h + 1 < hor {
            Some(sample_successor(mdp.successors(h, s, a), rng))
        } else {
            None
        };
        transitions.push(Transition {
            step: h,
            state: s,
            action: a,
            reward,
            next_state,
        });
        if let Some(sp) = next_state {
            s = sp;
        }
    }
    Trajectory {
        episode,
        transitions,
    }
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_successor<R: Rng>(successors: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(sp, p) in successors {
        acc += p;
        if u < acc {
            return sp;
        }
    }
    successors.last().expect("nonempty transition row").0
}

/// JSON document form of an MDP spec. `features` switches the result to a
/// linear MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub initial_state: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

#[derive(Debug, Error)]
pub enum MdpSpecError {
    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("declared sizes do not match table shapes")]
    SizeMismatch,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

impl MdpSpec {
    pub fn from_json(text: &str) -> Result<Env, MdpSpecError> {
        let spec: MdpSpec = serde_json::from_str(text)?;
        spec.build()
    }

    pub fn build(self) -> Result<Env, MdpSpecError> {
        if self.transitions.len() != self.horizon
            || self.transitions.first().map_or(0, |t| t.len()) != self.n_states
            || self
                .transitions
                .first()
                .and_then(|t| t.first())
                .map_or(0, |t| t.len())
                != self.n_actions
        {
            return Err(MdpSpecError::SizeMismatch);
        }
        let mdp = TabularMdp::new(self.transitions, self.rewards, self.initial_state)?;
        match self.features {
            Some(f) => Ok(Env::Linear(LinearMdp::new(mdp, f)?)),
            None => Ok(Env::Tabular(mdp)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Deterministic 3-state chain: action 1 moves right, action 0 stays,
    /// reward only for action 1 at the last state, last step.
    fn three_state_chain() -> TabularMdp {
        let (n_s, n_a, hor) = (3, 2, 3);
        let mut transitions = vec![vec![vec![vec![0.0; n_s]; n_a]; n_s]; hor];
        let mut rewards = vec![vec![vec![0.0; n_a]; n_s]; hor];
        for h in 0..hor {
            for s in 0..n_s {
                transitions[h][s][0][s] = 1.0;
                transitions[h][s][1][(s + 1).min(n_s - 1)] = 1.0;
            }
        }
        rewards[2][2][1] = 1.0;
        TabularMdp::new(transitions, rewards, 0).unwrap()
    }

    fn two_state_random() -> TabularMdp {
        let transitions = vec![
            vec![
                vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.9, 0.1]],
            ],
            vec![
                vec![vec![0.4, 0.6], vec![0.3, 0.7]],
                vec![vec![0.8, 0.2], vec![0.1, 0.9]],
            ],
        ];
        let rewards = vec![
            vec![vec![0.1, 0.9], vec![0.5, 0.2]],
            vec![vec![0.4, 0.6], vec![0.8, 0.3]],
        ];
        TabularMdp::new(transitions, rewards, 0).unwrap()
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let transitions = vec![vec![vec![vec![0.5, 0.4]], vec![vec![1.0, 0.0]]]];
        let rewards = vec![vec![vec![0.0], vec![0.0]]];
        assert!(matches!(
            TabularMdp::new(transitions, rewards, 0),
            Err(MdpError::BadRow { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_rewards() {
        let transitions = vec![vec![vec![vec![1.0]]]];
        let rewards = vec![vec![vec![1.5]]];
        assert!(matches!(
            TabularMdp::new(transitions, rewards, 0),
            Err(MdpError::RewardRange { .. })
        ));
    }

    #[test]
    fn horizon_one_optimal_q_equals_rewards() {
        let transitions = vec![vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        ]];
        let rewards = vec![vec![vec![0.3, 0.7], vec![0.9, 0.1]]];
        let mdp = TabularMdp::new(transitions, rewards.clone(), 0).unwrap();
        let vt = dp_solve_optimal(&mdp);
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(vt.q[0][s][a], rewards[0][s][a]);
            }
        }
    }

    #[test]
    fn zero_reward_mdp_has_zero_values() {
        let mut mdp = two_state_random();
        for h in 0..mdp.horizon() {
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    mdp.rewards[h][s][a] = 0.0;
                }
            }
        }
        let vt = dp_solve_optimal(&mdp);
        assert!(vt.q.iter().flatten().flatten().all(|&x| x == 0.0));
        assert!(vt.v.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_chain_value_from_hand_induction() {
        // Reach state 2 after two right moves, collect 1 at the final step.
        let mdp = three_state_chain();
        let vt = dp_solve_optimal(&mdp);
        assert_abs_diff_eq!(vt.initial_value(&mdp), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn greedy_of_optimal_recovers_optimal_values() {
        let mdp = two_state_random();
        let vt = dp_solve_optimal(&mdp);
        let mut probs = vec![vec![vec![0.0; 2]; 2]; 2];
        for h in 0..2 {
            for s in 0..2 {
                let a = if vt.q[h][s][0] >= vt.q[h][s][1] { 0 } else { 1 };
                probs[h][s][a] = 1.0;
            }
        }
        let greedy = PolicyTable::new(probs).unwrap();
        let pe = dp_policy_eval(&mdp, &greedy).unwrap();
        for h in 0..2 {
            for s in 0..2 {
                assert_abs_diff_eq!(pe.v[h][s], vt.v[h][s], epsilon = 1e-10);
                for a in 0..2 {
                    assert_abs_diff_eq!(pe.q[h][s][a], vt.q[h][s][a], epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn symmetric_actions_make_all_policies_optimal() {
        // Identical rewards and transitions per action: uniform equals optimal.
        let transitions = vec![vec![
            vec![vec![0.6, 0.4], vec![0.6, 0.4]],
            vec![vec![0.1, 0.9], vec![0.1, 0.9]],
        ]];
        let rewards = vec![vec![vec![0.5, 0.5], vec![0.2, 0.2]]];
        let mdp = TabularMdp::new(transitions, rewards, 0).unwrap();
        let uniform = PolicyTable::uniform(2, 2, 1);
        let pe = dp_policy_eval(&mdp, &uniform).unwrap();
        let vt = dp_solve_optimal(&mdp);
        assert_abs_diff_eq!(pe.initial_value(&mdp), vt.initial_value(&mdp), epsilon = 1e-12);
    }

    /// Brute-force oracle: enumerate every action sequence of a 2-state,
    /// 2-action, H=2 MDP and weight by probability.
    #[test]
    fn policy_eval_matches_exhaustive_enumeration() {
        let mdp = two_state_random();
        let uniform = PolicyTable::uniform(2, 2, 2);
        let pe = dp_policy_eval(&mdp, &uniform).unwrap();

        let mut expected = 0.0;
        let s1 = mdp.initial_state();
        for a1 in 0..2 {
            let p_a1 = uniform.row(0, s1)[a1];
            let r1 = mdp.reward(0, s1, a1);
            for s2 in 0..2 {
                let p_s2 = mdp.transition_row(0, s1, a1)[s2];
                for a2 in 0..2 {
                    let p_a2 = uniform.row(1, s2)[a2];
                    let r2 = mdp.reward(1, s2, a2);
                    expected += p_a1 * p_s2 * p_a2 * (r1 + r2);
                }
            }
        }
        assert_abs_diff_eq!(pe.initial_value(&mdp), expected, epsilon = 1e-12);
    }

    #[test]
    fn occupancy_first_step_is_point_mass_on_initial_state() {
        let mdp = two_state_random();
        let uniform = PolicyTable::uniform(2, 2, 2);
        let occ = occupancy_measures(&mdp, &uniform).unwrap();
        assert_abs_diff_eq!(occ[0][0][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(occ[0][0][1], 0.5, epsilon = 1e-12);
        assert_eq!(occ[0][1][0], 0.0);
    }

    #[test]
    fn occupancy_deterministic_mdp_and_policy_is_point_mass_per_step() {
        let mdp = three_state_chain();
        let mut probs = vec![vec![vec![0.0, 1.0]; 3]; 3];
        for row in probs.iter_mut().flatten() {
            assert_eq!(row.len(), 2);
        }
        let right = PolicyTable::new(probs).unwrap();
        let occ = occupancy_measures(&mdp, &right).unwrap();
        for h in 0..3 {
            let nonzero: Vec<_> = occ[h]
                .iter()
                .flatten()
                .filter(|&&p| p > 0.0)
                .collect();
            assert_eq!(nonzero.len(), 1);
            assert_abs_diff_eq!(*nonzero[0], 1.0, epsilon = 1e-12);
        }
    }

    /// Monte-Carlo oracle for the occupancy measure at h=2.
    #[test]
    fn occupancy_matches_monte_carlo() {
        let mdp = two_state_random();
        let env = Env::Tabular(mdp.clone());
        let uniform = PolicyTable::uniform(2, 2, 2);
        let occ = occupancy_measures(&mdp, &uniform).unwrap();

        let n = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut counts = vec![vec![0u64; 2]; 2];
        for ep in 0..n {
            let traj = sample_episode(&env, &uniform, ep, &mut rng);
            let t = &traj.transitions[1];
            counts[t.state][t.action] += 1;
        }
        for s in 0..2 {
            for a in 0..2 {
                let freq = counts[s][a] as f64 / n as f64;
                assert!(
                    (freq - occ[1][s][a]).abs() < 3e-3,
                    "occupancy mismatch at ({s},{a}): {freq} vs {}",
                    occ[1][s][a]
                );
            }
        }
    }

    #[test]
    fn occupancy_sums_to_one_and_reproduces_policy_value() {
        let mdp = two_state_random();
        let uniform = PolicyTable::uniform(2, 2, 2);
        let occ = occupancy_measures(&mdp, &uniform).unwrap();
        let pe = dp_policy_eval(&mdp, &uniform).unwrap();
        let mut total = 0.0;
        for h in 0..2 {
            let step_sum: f64 = occ[h].iter().flatten().sum();
            assert_abs_diff_eq!(step_sum, 1.0, epsilon = 1e-9);
            for s in 0..2 {
                for a in 0..2 {
                    total += occ[h][s][a] * mdp.reward(h, s, a);
                }
            }
        }
        assert_abs_diff_eq!(total, pe.initial_value(&mdp), epsilon = 1e-10);
    }

    #[test]
    fn episodes_are_deterministic_given_seed() {
        let mdp = two_state_random();
        let env = Env::Tabular(mdp);
        let uniform = PolicyTable::uniform(2, 2, 2);
        let a = sample_episode(&env, &uniform, 0, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_episode(&env, &uniform, 0, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.transitions, b.transitions);
    }

    #[test]
    fn deterministic_env_and_policy_give_unique_trajectory() {
        let mdp = three_state_chain();
        let env = Env::Tabular(mdp);
        let right = PolicyTable::new(vec![vec![vec![0.0, 1.0]; 3]; 3]).unwrap();
        let a = sample_episode(&env, &right, 0, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample_episode(&env, &right, 0, &mut ChaCha8Rng::seed_from_u64(999));
        assert_eq!(a.transitions, b.transitions);
        assert_abs_diff_eq!(a.total_reward(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trajectories_chain_and_have_full_length() {
        let mdp = two_state_random();
        let env = Env::Tabular(mdp.clone());
        let uniform = PolicyTable::uniform(2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ep in 0..50 {
            let traj = sample_episode(&env, &uniform, ep, &mut rng);
            assert_eq!(traj.transitions.len(), mdp.horizon());
            for w in traj.transitions.windows(2) {
                assert_eq!(w[0].next_state, Some(w[1].state));
            }
            assert_eq!(traj.transitions.last().unwrap().next_state, None);
        }
    }

    /// Law-of-large-numbers check on action frequencies.
    #[test]
    fn uniform_policy_action_frequency_near_half() {
        let mdp = two_state_random();
        let env = Env::Tabular(mdp);
        let uniform = PolicyTable::uniform(2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000usize;
        let mut count = 0u64;
        for ep in 0..n {
            let traj = sample_episode(&env, &uniform, ep, &mut rng);
            if traj.transitions[0].action == 1 {
                count += 1;
            }
        }
        let freq = count as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn mdp_spec_roundtrips_through_json() {
        let mdp = two_state_random();
        let spec = MdpSpec {
            n_states: 2,
            n_actions: 2,
            horizon: 2,
            transitions: mdp.transitions.clone(),
            rewards: mdp.rewards.clone(),
            initial_state: 0,
            features: None,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let env = MdpSpec::from_json(&text).unwrap();
        assert_eq!(env.tabular().n_states(), 2);
        let vt = dp_solve_optimal(env.tabular());
        let vt2 = dp_solve_optimal(&mdp);
        assert_eq!(vt.v, vt2.v);
    }

    #[test]
    fn one_hot_features_have_unit_norm() {
        let mdp = two_state_random();
        let lin = LinearMdp::one_hot(mdp);
        assert_eq!(lin.dim(), 4);
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    let phi = lin.features(h, s, a);
                    let norm: f64 = phi.iter().map(|x| x * x).sum();
                    assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
                }
            }
        }
    }
}
