//! Softmax actor with multiplicative-weights (mirror ascent) updates.
//!
//! The update π^{(t+1)} ∝ π^{(t)} exp(η f^{(t)}) is kept in logit space:
//! logits accumulate η·f and the softmax is evaluated on demand with
//! max-subtraction for stability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{Critic, CriticParams};
use crate::mdp::{occupancy_measures, Env, MdpError, PolicyTable, TabularMdp};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("learning rate must be positive, got {0}")]
    NonpositiveEta(f64),

    #[error("critic shape incompatible with policy representation")]
    ShapeMismatch,

    #[error("linear-logit policies require a linear critic and environment")]
    LinearRequired,

    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Logit large enough that the softmax of (GREEDY_LOGIT, 0) is exactly 1 in
/// f64; used to express deterministic policies in logit form.
const GREEDY_LOGIT: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PolicyParams {
    /// L\[h\]\[s\]\[a\]
    TabularLogits(Vec<Vec<Vec<f64>>>),
    /// Accumulated weight vector per step; logit(h,s,a) = u_hᵀφ(h,s,a).
    /// Valid because each linear-critic increment η·w is linear in φ.
    LinearLogits(Vec<Vec<f64>>),
}

/// Accumulated-logit stochastic policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    params: PolicyParams,
    pub eta: f64,
    reset_count: usize,
    n_actions: usize,
}

impl SoftmaxPolicy {
    pub fn uniform_tabular(n_states: usize, n_actions: usize, horizon: usize, eta: f64) -> Self {
        Self {
            params: PolicyParams::TabularLogits(vec![vec![vec![0.0; n_actions]; n_states]; horizon]),
            eta,
            reset_count: 0,
            n_actions,
        }
    }

    pub fn uniform_linear(dim: usize, n_actions: usize, horizon: usize, eta: f64) -> Self {
        Self {
            params: PolicyParams::LinearLogits(vec![vec![0.0; dim]; horizon]),
            eta,
            reset_count: 0,
            n_actions,
        }
    }

    /// Builds a tabular-logit policy realizing the given action probabilities
    /// exactly (logits = ln p). All probabilities must be strictly positive.
    pub fn from_probs(probs: &PolicyTable, n_states: usize, n_actions: usize, horizon: usize) -> Self {
        let mut logits = vec![vec![vec![0.0; n_actions]; n_states]; horizon];
        for h in 0..horizon {
            for s in 0..n_states {
                for a in 0..n_actions {
                    logits[h][s][a] = probs.row(h, s)[a].ln();
                }
            }
        }
        Self {
            params: PolicyParams::TabularLogits(logits),
            eta: 1.0,
            reset_count: 0,
            n_actions,
        }
    }

    pub fn reset_count(&self) -> usize {
        self.reset_count
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    /// Numerically stable softmax over actions at (h, s).
    pub fn action_probs(&self, env: &Env, h: usize, s: usize) -> Vec<f64> {
        let logits = self.logits_at(env, h, s);
        softmax(&logits)
    }

    fn logits_at(&self, env: &Env, h: usize, s: usize) -> Vec<f64> {
        match &self.params {
            PolicyParams::TabularLogits(l) => l[h][s].clone(),
            PolicyParams::LinearLogits(u) => {
                let lin = env.linear().expect("linear-logit policy on tabular env");
                (0..self.n_actions)
                    .map(|a| dot(&u[h], lin.features(h, s, a)))
                    .collect()
            }
        }
    }

    /// Materializes probabilities at every (h, s).
    pub fn table(&self, env: &Env) -> PolicyTable {
        let mdp = env.tabular();
        let probs: Vec<Vec<Vec<f64>>> = (0..mdp.horizon())
            .map(|h| {
                (0..mdp.n_states())
                    .map(|s| self.action_probs(env, h, s))
                    .collect()
            })
            .collect();
        PolicyTable::new(probs).expect("softmax rows sum to one")
    }

    /// Mirror ascent: logits += η·f. Accepts any per-(h,s,a) value table.
    pub fn ascend_tables(&mut self, values: &[Vec<Vec<f64>>], eta: f64) -> Result<(), PolicyError> {
        if eta <= 0.0 {
            return Err(PolicyError::NonpositiveEta(eta));
        }
        match &mut self.params {
            PolicyParams::TabularLogits(l) => {
                if l.len() != values.len() {
                    return Err(PolicyError::ShapeMismatch);
                }
                for (lh, vh) in l.iter_mut().zip(values) {
                    if lh.len() != vh.len() {
                        return Err(PolicyError::ShapeMismatch);
                    }
                    for (ls, vs) in lh.iter_mut().zip(vh) {
                        for (la, va) in ls.iter_mut().zip(vs) {
                            *la += eta * va;
                        }
                    }
                }
                Ok(())
            }
            PolicyParams::LinearLogits(_) => Err(PolicyError::LinearRequired),
        }
    }

    /// Restores the uniform policy: all logits exactly zero.
    pub fn reset_uniform(&mut self) {
        match &mut self.params {
            PolicyParams::TabularLogits(l) => {
                for x in l.iter_mut().flatten().flatten() {
                    *x = 0.0;
                }
            }
            PolicyParams::LinearLogits(u) => {
                for x in u.iter_mut().flatten() {
                    *x = 0.0;
                }
            }
        }
        self.reset_count += 1;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mirror ascent step against a critic: logits ← logits + η·f.
pub fn mirror_ascent_step(
    policy: &mut SoftmaxPolicy,
    critic: &Critic,
    env: &Env,
    eta: f64,
) -> Result<(), PolicyError> {
    if eta <= 0.0 {
        return Err(PolicyError::NonpositiveEta(eta));
    }
    match (&mut policy.params, critic.params()) {
        (PolicyParams::LinearLogits(u), CriticParams::Linear { weights }) => {
            if u.len() != weights.len() || u[0].len() != weights[0].len() {
                return Err(PolicyError::ShapeMismatch);
            }
            for (uh, wh) in u.iter_mut().zip(weights) {
                for (ui, wi) in uh.iter_mut().zip(wh) {
                    *ui += eta * wi;
                }
            }
            Ok(())
        }
        (PolicyParams::LinearLogits(_), _) => Err(PolicyError::LinearRequired),
        (PolicyParams::TabularLogits(_), _) => {
            let tables = critic.value_tables(env);
            policy.ascend_tables(&tables, eta)
        }
    }
}

/// Uniform reset, exposed as a free function to mirror the update above.
pub fn reset_uniform(policy: &mut SoftmaxPolicy) {
    policy.reset_uniform();
}

/// Deterministic greedy policy of a critic, ties to the lowest action index.
/// Returned in logit form with a gap large enough to be exact in f64.
pub fn greedy_policy(critic: &Critic, env: &Env) -> SoftmaxPolicy {
    let mdp = env.tabular();
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let tables = critic.value_tables(env);
    let mut logits = vec![vec![vec![0.0; n_a]; n_s]; hor];
    for h in 0..hor {
        for s in 0..n_s {
            let best = argmax_lowest(&tables[h][s]);
            logits[h][s][best] = GREEDY_LOGIT;
        }
    }
    SoftmaxPolicy {
        params: PolicyParams::TabularLogits(logits),
        eta: 1.0,
        reset_count: 0,
        n_actions: n_a,
    }
}

/// Greedy table directly from per-(h,s,a) values.
pub fn greedy_table_from_values(values: &[Vec<Vec<f64>>]) -> PolicyTable {
    let probs: Vec<Vec<Vec<f64>>> = values
        .iter()
        .map(|vh| {
            vh.iter()
                .map(|vs| {
                    let mut row = vec![0.0; vs.len()];
                    row[argmax_lowest(vs)] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    PolicyTable::new(probs).expect("greedy rows are one-hot")
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Both sides of the mirror-descent tracking bound.
///
/// Replays the multiplicative-weights updates from the uniform policy with
/// the supplied critic value tables (one per episode, entries must lie in
/// [0, H]), accumulating the tracking error against a fixed comparator under
/// the comparator's exact occupancy. Returns `(lhs, rhs)` where
/// rhs = ηH³T/2 + H·ln|A|/η.
pub fn mirror_tracking_check(
    critic_tables: &[Vec<Vec<Vec<f64>>>],
    comparator: &PolicyTable,
    mdp: &TabularMdp,
    eta: f64,
) -> Result<(f64, f64), PolicyError> {
    if eta <= 0.0 {
        return Err(PolicyError::NonpositiveEta(eta));
    }
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let occ = occupancy_measures(mdp, comparator)?;
    // State marginals of the comparator.
    let state_mass: Vec<Vec<f64>> = occ
        .iter()
        .map(|oh| oh.iter().map(|row| row.iter().sum()).collect())
        .collect();

    let env = Env::Tabular(mdp.clone());
    let mut policy = SoftmaxPolicy::uniform_tabular(n_s, n_a, hor, eta);
    let mut lhs = 0.0;
    for tables in critic_tables {
        for h in 0..hor {
            for s in 0..n_s {
                let mass = state_mass[h][s];
                if mass == 0.0 {
                    continue;
                }
                let probs = policy.action_probs(&env, h, s);
                let mut inner = 0.0;
                for a in 0..n_a {
                    inner += tables[h][s][a] * (comparator.row(h, s)[a] - probs[a]);
                }
                lhs += mass * inner;
            }
        }
        policy.ascend_tables(tables, eta)?;
    }
    let t = critic_tables.len() as f64;
    let h3 = (hor as f64).powi(3);
    let rhs = eta * h3 * t / 2.0 + (hor as f64) * (n_a as f64).ln() / eta;
    Ok((lhs, rhs))
}
