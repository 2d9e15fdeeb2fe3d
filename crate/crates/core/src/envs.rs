//! Environment constructors, all reducible to an exactly solvable
//! `TabularMdp`: a hard-exploration chain, seeded random tabular MDPs,
//! low-rank random linear MDPs, and a small fully enumerable tetris.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Env, LinearMdp, MdpError, TabularMdp};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("chain needs H ≥ S−1 to reach the reward (S={s}, H={h})")]
    ChainTooShort { s: usize, h: usize },

    #[error("chain needs at least 2 states, got {0}")]
    ChainTooSmall(usize),

    #[error("feature dimension {d} exceeds S·A = {sa}")]
    DimTooLarge { d: usize, sa: usize },

    #[error("factor row normalization failed after projection (row sum {0})")]
    MuNormalization(f64),

    #[error("board width and height cap must lie in [3,6], got {w}×{cap}")]
    BadBoard { w: usize, cap: usize },

    #[error("piece count must be 1..=3, got {0}")]
    BadPieces(usize),

    #[error("enumerated tetris has {count} states, exceeding the cap {cap}")]
    TooManyStates { count: usize, cap: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Chain,
    RandomTabular,
    RandomLinear,
    Tetris,
}

/// Environment configuration; which fields matter depends on `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub seed: u64,
    /// Chain length / state count for random generators.
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// Feature dimension for random linear MDPs.
    pub dim: usize,
    /// Chain: probability a move goes the opposite way.
    pub slip: f64,
    /// Random generators: fraction of rewards zeroed out.
    pub reward_sparsity: f64,
    /// Dirichlet concentration for transition rows and feature simplices.
    pub dirichlet_alpha: f64,
    /// Dirichlet concentration of the low-rank factor rows; small values
    /// make transitions nearly deterministic.
    pub mu_concentration: f64,
    pub board_width: usize,
    pub board_height_cap: usize,
    pub n_pieces: usize,
    /// Guard on enumerated tetris state count.
    pub state_cap: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Chain,
            seed: 0,
            n_states: 5,
            n_actions: 2,
            horizon: 8,
            dim: 4,
            slip: 0.0,
            reward_sparsity: 0.0,
            dirichlet_alpha: 1.0,
            mu_concentration: 0.3,
            board_width: 3,
            board_height_cap: 3,
            n_pieces: 2,
            state_cap: 200_000,
        }
    }
}

/// Named presets reachable from the CLI.
pub fn preset(name: &str) -> Result<EnvConfig, EnvError> {
    match name {
        "chain-5" => Ok(EnvConfig {
            kind: EnvKind::Chain,
            n_states: 5,
            n_actions: 2,
            horizon: 8,
            ..Default::default()
        }),
        "random-tab" => Ok(EnvConfig {
            kind: EnvKind::RandomTabular,
            n_states: 6,
            n_actions: 3,
            horizon: 5,
            reward_sparsity: 0.5,
            ..Default::default()
        }),
        "random-lin" => Ok(EnvConfig {
            kind: EnvKind::RandomLinear,
            n_states: 6,
            n_actions: 3,
            horizon: 4,
            dim: 4,
            ..Default::default()
        }),
        "tetris-small" => Ok(EnvConfig {
            kind: EnvKind::Tetris,
            board_width: 3,
            board_height_cap: 3,
            n_pieces: 2,
            horizon: 8,
            ..Default::default()
        }),
        other => Err(EnvError::UnknownPreset(other.to_string())),
    }
}

pub const PRESET_NAMES: &[&str] = &["chain-5", "random-tab", "random-lin", "tetris-small"];

pub fn build_env(cfg: &EnvConfig) -> Result<Env, EnvError> {
    match cfg.kind {
        EnvKind::Chain => make_chain_cfg(cfg),
        EnvKind::RandomTabular => make_random_tabular(cfg),
        EnvKind::RandomLinear => make_random_linear(cfg).map(Env::Linear),
        EnvKind::Tetris => make_tetris(cfg).map(Env::Linear),
    }
}

/// Deterministic chain: action 0 drifts left, action 1 steps right, reward 1
/// for stepping right from the two rightmost states. The optimal value is
/// exactly H − S + 2. A nonzero `slip` flips moves with that probability.
pub fn make_chain(length: usize, horizon: usize) -> Result<Env, EnvError> {
    make_chain_cfg(&EnvConfig {
        kind: EnvKind::Chain,
        n_states: length,
        horizon,
        ..Default::default()
    })
}

fn make_chain_cfg(cfg: &EnvConfig) -> Result<Env, EnvError> {
    let (s_count, hor, slip) = (cfg.n_states, cfg.horizon, cfg.slip);
    if s_count < 2 {
        return Err(EnvError::ChainTooSmall(s_count));
    }
    if hor < s_count - 1 {
        return Err(EnvError::ChainTooShort { s: s_count, h: hor });
    }
    let n_a = 2;
    let mut transitions = vec![vec![vec![vec![0.0; s_count]; n_a]; s_count]; hor];
    let mut rewards = vec![vec![vec![0.0; n_a]; s_count]; hor];
    for h in 0..hor {
        for s in 0..s_count {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(s_count - 1);
            transitions[h][s][0][left] += 1.0 - slip;
            transitions[h][s][0][right] += slip;
            transitions[h][s][1][right] += 1.0 - slip;
            transitions[h][s][1][left] += slip;
            if s >= s_count - 2 {
                rewards[h][s][1] = 1.0;
            }
        }
    }
    Ok(Env::Tabular(TabularMdp::new(transitions, rewards, 0)?))
}

fn dirichlet_row<R: Rng>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let raw: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 1e-300 {
            return raw.into_iter().map(|x| x / sum).collect();
        }
        // Underflowed to all zeros for tiny alpha; resample.
    }
}

/// Random tabular MDP: symmetric-Dirichlet transition rows, uniform rewards
/// with a sparsity knob. Byte-identical given the seed.
pub fn make_random_tabular(cfg: &EnvConfig) -> Result<Env, EnvError> {
    let (n_s, n_a, hor) = (cfg.n_states, cfg.n_actions, cfg.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut transitions = vec![vec![vec![vec![0.0; n_s]; n_a]; n_s]; hor];
    let mut rewards = vec![vec![vec![0.0; n_a]; n_s]; hor];
    for h in 0..hor {
        for s in 0..n_s {
            for a in 0..n_a {
                transitions[h][s][a] = dirichlet_row(n_s, cfg.dirichlet_alpha, &mut rng);
                let r: f64 = rng.random();
                let keep: f64 = rng.random();
                rewards[h][s][a] = if keep < cfg.reward_sparsity { 0.0 } else { r };
            }
        }
    }
    Ok(Env::Tabular(TabularMdp::new(transitions, rewards, 0)?))
}

/// Random linear MDP with the low-rank construction P_h(s'|s,a) = φᵀμ_h(s'):
/// features live on the d-simplex, factor rows μ_h(j,·) are distributions
/// over next states, and rewards are φᵀθ_h with θ ∈ [0,1]^d. Every Q^π is
/// then exactly linear in φ.
pub fn make_random_linear(cfg: &EnvConfig) -> Result<LinearMdp, EnvError> {
    let (n_s, n_a, hor, d) = (cfg.n_states, cfg.n_actions, cfg.horizon, cfg.dim);
    if d > n_s * n_a {
        return Err(EnvError::DimTooLarge { d, sa: n_s * n_a });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // φ on the simplex: ‖φ‖₂ ≤ ‖φ‖₁ = 1.
    let mut features = vec![vec![vec![vec![0.0; d]; n_a]; n_s]; hor];
    for h in 0..hor {
        for s in 0..n_s {
            for a in 0..n_a {
                features[h][s][a] = dirichlet_row(d, cfg.dirichlet_alpha, &mut rng);
            }
        }
    }

    // Factor rows, projected (negative entries clamped) and renormalized.
    let mut mu = vec![vec![vec![0.0; n_s]; d]; hor];
    for h in 0..hor {
        for j in 0..d {
            let mut row = dirichlet_row(n_s, cfg.mu_concentration, &mut rng);
            for x in row.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            if sum < 1e-12 {
                return Err(EnvError::MuNormalization(sum));
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
            mu[h][j] = row;
        }
    }

    let mut theta = vec![vec![0.0; d]; hor];
    for h in 0..hor {
        for j in 0..d {
            let r: f64 = rng.random();
            let keep: f64 = rng.random();
            theta[h][j] = if keep < cfg.reward_sparsity { 0.0 } else { r };
        }
    }

    let mut transitions = vec![vec![vec![vec![0.0; n_s]; n_a]; n_s]; hor];
    let mut rewards = vec![vec![vec![0.0; n_a]; n_s]; hor];
    for h in 0..hor {
        for s in 0..n_s {
            for a in 0..n_a {
                let phi = &features[h][s][a];
                for sp in 0..n_s {
                    transitions[h][s][a][sp] =
                        (0..d).map(|j| phi[j] * mu[h][j][sp]).sum();
                }
                // Mixture rows can miss 1 by accumulated rounding; renormalize.
                let sum: f64 = transitions[h][s][a].iter().sum();
                for x in transitions[h][s][a].iter_mut() {
                    *x /= sum;
                }
                rewards[h][s][a] = (0..d).map(|j| phi[j] * theta[h][j]).sum();
            }
        }
    }

    let mdp = TabularMdp::new(transitions, rewards, 0)?;
    Ok(LinearMdp::new(mdp, features)?)
}

// ── Tetris ──────────────────────────────────────────────────────────────

/// Piece shapes: vertical extent when dropped upright, horizontal span when
/// laid flat. Rotation 0 is flat, rotation 1 is upright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece {
    Mono,
    Domino,
    Tromino,
}

const PIECES: [Piece; 3] = [Piece::Mono, Piece::Domino, Piece::Tromino];

impl Piece {
    fn size(self) -> usize {
        match self {
            Piece::Mono => 1,
            Piece::Domino => 2,
            Piece::Tromino => 3,
        }
    }
}

struct Board {
    width: usize,
    cap: usize,
    n_pieces: usize,
}

impl Board {
    fn n_profiles(&self) -> usize {
        (self.cap + 1).pow(self.width as u32)
    }

    fn n_states(&self) -> usize {
        self.n_profiles() * self.n_pieces
    }

    fn decode(&self, state: usize) -> (Vec<usize>, usize) {
        let piece = state % self.n_pieces;
        let mut idx = state / self.n_pieces;
        let mut heights = vec![0; self.width];
        for h in heights.iter_mut() {
            *h = idx % (self.cap + 1);
            idx /= self.cap + 1;
        }
        (heights, piece)
    }

    fn encode_profile(&self, heights: &[usize]) -> usize {
        let mut idx = 0;
        for &h in heights.iter().rev() {
            idx = idx * (self.cap + 1) + h;
        }
        idx
    }

    /// Drops a piece; returns the post-clear profile and rows cleared.
    /// Heights saturate at the cap, which keeps the profile space closed.
    fn drop(&self, heights: &[usize], piece: Piece, col: usize, upright: bool) -> (Vec<usize>, usize) {
        let mut next = heights.to_vec();
        let size = piece.size();
        if upright || size == 1 {
            let c = col.min(self.width - 1);
            next[c] = (next[c] + size).min(self.cap);
        } else {
            let span = size.min(self.width);
            let c = col.min(self.width - span);
            let base = (c..c + span).map(|i| next[i]).max().unwrap();
            let level = (base + 1).min(self.cap);
            for i in c..c + span {
                next[i] = level;
            }
        }
        let cleared = *next.iter().min().unwrap();
        if cleared > 0 {
            for h in next.iter_mut() {
                *h -= cleared;
            }
        }
        (next, cleared)
    }
}

/// Tetris on a narrow board with capped column heights: states are height
/// profiles × current piece, actions are (column, rotation) drops, reward is
/// rows cleared normalized by the tallest piece. The full state space is
/// enumerated into a tabular MDP so DP oracles apply; features are the
/// post-drop column heights, a piece one-hot, and a bias, scaled to unit
/// norm.
pub fn make_tetris(cfg: &EnvConfig) -> Result<LinearMdp, EnvError> {
    let (w, cap) = (cfg.board_width, cfg.board_height_cap);
    if !(3..=6).contains(&w) || !(3..=6).contains(&cap) {
        return Err(EnvError::BadBoard { w, cap });
    }
    if cfg.n_pieces == 0 || cfg.n_pieces > PIECES.len() {
        return Err(EnvError::BadPieces(cfg.n_pieces));
    }
    let board = Board {
        width: w,
        cap,
        n_pieces: cfg.n_pieces,
    };
    let n_states = board.n_states();
    if n_states > cfg.state_cap {
        return Err(EnvError::TooManyStates {
            count: n_states,
            cap: cfg.state_cap,
        });
    }
    let pieces = &PIECES[..cfg.n_pieces];
    // Normalize by the height cap: no single drop can clear more rows, even
    // from saturated (unreachable) profiles, so rewards stay in [0,1].
    let max_clear = cap as f64;
    let n_a = 2 * w;
    let hor = cfg.horizon;
    let piece_prob = 1.0 / cfg.n_pieces as f64;

    // Per-state-action outcome, shared across steps (dynamics are stationary).
    let mut after_profile = vec![vec![0usize; n_a]; n_states];
    let mut cleared_rows = vec![vec![0usize; n_a]; n_states];
    for state in 0..n_states {
        let (heights, piece_id) = board.decode(state);
        let piece = pieces[piece_id];
        for a in 0..n_a {
            let col = a / 2;
            let upright = a % 2 == 1;
            let (next, cleared) = board.drop(&heights, piece, col, upright);
            after_profile[state][a] = board.encode_profile(&next);
            cleared_rows[state][a] = cleared;
        }
    }

    let mut transitions = vec![vec![vec![vec![0.0; n_states]; n_a]; n_states]; hor];
    let mut rewards = vec![vec![vec![0.0; n_a]; n_states]; hor];
    for h in 0..hor {
        for state in 0..n_states {
            for a in 0..n_a {
                let profile = after_profile[state][a];
                for next_piece in 0..cfg.n_pieces {
                    transitions[h][state][a][profile * cfg.n_pieces + next_piece] = piece_prob;
                }
                rewards[h][state][a] = cleared_rows[state][a] as f64 / max_clear;
            }
        }
    }

    // φ(s, a): normalized after-state column heights, rows cleared by the
    // drop, bottom-row fill, total mass, surface unevenness, the current
    // piece one-hot, and a bias, all scaled to unit norm. Action dependence
    // enters through the after-state.
    let d = w + 4 + cfg.n_pieces + 1;
    let scale = 1.0 / ((w + 6) as f64).sqrt();
    let mut feature_of = vec![vec![vec![0.0; d]; n_a]; n_states];
    for state in 0..n_states {
        let (_, piece_id) = board.decode(state);
        for a in 0..n_a {
            let (after_heights, _) = {
                let idx = after_profile[state][a];
                board.decode(idx * cfg.n_pieces)
            };
            let mut phi = Vec::with_capacity(d);
            for &hh in &after_heights {
                phi.push(hh as f64 / cap as f64 * scale);
            }
            phi.push(cleared_rows[state][a] as f64 / cap as f64 * scale);
            let bottom_fill =
                after_heights.iter().filter(|&&hh| hh >= 1).count() as f64 / w as f64;
            phi.push(bottom_fill * scale);
            let mass: usize = after_heights.iter().sum();
            phi.push(mass as f64 / (w * cap) as f64 * scale);
            let unevenness: usize = after_heights
                .windows(2)
                .map(|p| p[0].abs_diff(p[1]))
                .sum();
            phi.push(unevenness as f64 / ((w - 1) * cap) as f64 * scale);
            for p in 0..cfg.n_pieces {
                phi.push(if p == piece_id { scale } else { 0.0 });
            }
            phi.push(scale);
            feature_of[state][a] = phi;
        }
    }
    let features = vec![feature_of; hor];

    let mdp = TabularMdp::new(transitions, rewards, 0)?;
    Ok(LinearMdp::new(mdp, features)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ridge_fit;
    use crate::mdp::{dp_policy_eval, dp_solve_optimal, PolicyTable};
    use crate::policy::SoftmaxPolicy;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_two_states_one_step() {
        let env = make_chain(2, 1).unwrap();
        let vt = dp_solve_optimal(env.tabular());
        assert_abs_diff_eq!(vt.initial_value(env.tabular()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn chain_value_is_h_minus_s_plus_two() {
        let env = make_chain(5, 8).unwrap();
        let mdp = env.tabular();
        let vt = dp_solve_optimal(mdp);
        assert_abs_diff_eq!(vt.initial_value(mdp), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn chain_uniform_policy_is_poor() {
        let env = make_chain(5, 8).unwrap();
        let mdp = env.tabular();
        let uniform = PolicyTable::uniform(5, 2, 8);
        let pe = dp_policy_eval(mdp, &uniform).unwrap();
        assert!(pe.initial_value(mdp) < 0.5, "got {}", pe.initial_value(mdp));
    }

    #[test]
    fn chain_rejects_degenerate_horizon() {
        assert!(matches!(
            make_chain(5, 3),
            Err(EnvError::ChainTooShort { .. })
        ));
    }

    #[test]
    fn random_tabular_deterministic_per_seed() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomTabular,
            seed: 42,
            n_states: 4,
            n_actions: 2,
            horizon: 3,
            ..Default::default()
        };
        let a = make_random_tabular(&cfg).unwrap();
        let b = make_random_tabular(&cfg).unwrap();
        for h in 0..3 {
            for s in 0..4 {
                for ac in 0..2 {
                    assert_eq!(a.tabular().transition_row(h, s, ac), b.tabular().transition_row(h, s, ac));
                    assert_eq!(a.tabular().reward(h, s, ac), b.tabular().reward(h, s, ac));
                }
            }
        }
    }

    #[test]
    fn full_sparsity_zeroes_all_value() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomTabular,
            seed: 1,
            n_states: 4,
            n_actions: 2,
            horizon: 3,
            reward_sparsity: 1.0,
            ..Default::default()
        };
        let env = make_random_tabular(&cfg).unwrap();
        let vt = dp_solve_optimal(env.tabular());
        assert!(vt.v.iter().flatten().all(|&v| v == 0.0));
    }

    /// Monte-Carlo oracle: greedy(Q*) rollouts against the DP value.
    #[test]
    fn random_tabular_dp_matches_monte_carlo() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomTabular,
            seed: 0,
            n_states: 4,
            n_actions: 2,
            horizon: 3,
            ..Default::default()
        };
        let env = make_random_tabular(&cfg).unwrap();
        let mdp = env.tabular();
        let vt = dp_solve_optimal(mdp);
        let greedy = crate::policy::greedy_table_from_values(&vt.q);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000usize;
        let mut total = 0.0;
        for ep in 0..n {
            total += crate::mdp::sample_episode(&env, &greedy, ep, &mut rng).total_reward();
        }
        let mc = total / n as f64;
        assert!(
            (mc - vt.initial_value(mdp)).abs() < 3e-3,
            "MC {mc} vs DP {}",
            vt.initial_value(mdp)
        );
    }

    #[test]
    fn random_linear_rejects_oversized_dim() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomLinear,
            n_states: 2,
            n_actions: 2,
            horizon: 2,
            dim: 5,
            ..Default::default()
        };
        assert!(matches!(
            make_random_linear(&cfg),
            Err(EnvError::DimTooLarge { .. })
        ));
    }

    #[test]
    fn random_linear_feature_norms_bounded() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomLinear,
            seed: 7,
            n_states: 6,
            n_actions: 3,
            horizon: 4,
            dim: 4,
            ..Default::default()
        };
        let lin = make_random_linear(&cfg).unwrap();
        for h in 0..4 {
            for s in 0..6 {
                for a in 0..3 {
                    let norm: f64 = lin.features(h, s, a).iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!(norm <= 1.0 + 1e-9);
                }
            }
        }
    }

    /// Exact realizability: Q* solves onto the features with tiny residual.
    #[test]
    fn random_linear_q_star_is_realizable() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomLinear,
            seed: 7,
            n_states: 6,
            n_actions: 3,
            horizon: 4,
            dim: 4,
            ..Default::default()
        };
        let lin = make_random_linear(&cfg).unwrap();
        let vt = dp_solve_optimal(lin.tabular());
        for h in 0..4 {
            let mut rows: Vec<&[f64]> = Vec::new();
            let mut targets = Vec::new();
            for s in 0..6 {
                for a in 0..3 {
                    rows.push(lin.features(h, s, a));
                    targets.push(vt.q[h][s][a]);
                }
            }
            let w = ridge_fit(&rows, &targets, 1e-10).unwrap();
            for (row, y) in rows.iter().zip(&targets) {
                let pred: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum();
                assert!((pred - y).abs() < 1e-8, "residual {}", (pred - y).abs());
            }
        }
    }

    /// Realizability holds for arbitrary policies, not just the greedy one.
    #[test]
    fn random_linear_q_pi_realizable_for_random_policies() {
        let cfg = EnvConfig {
            kind: EnvKind::RandomLinear,
            seed: 11,
            n_states: 5,
            n_actions: 2,
            horizon: 3,
            dim: 4,
            ..Default::default()
        };
        let lin = make_random_linear(&cfg).unwrap();
        let env = Env::Linear(lin.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let mut policy = SoftmaxPolicy::uniform_tabular(5, 2, 3, 1.0);
            let tables: Vec<Vec<Vec<f64>>> = (0..3)
                .map(|_| {
                    (0..5)
                        .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect();
            policy.ascend_tables(&tables, 1.0).unwrap();
            let table = policy.table(&env);
            let pe = dp_policy_eval(lin.tabular(), &table).unwrap();
            for h in 0..3 {
                let mut rows: Vec<&[f64]> = Vec::new();
                let mut targets = Vec::new();
                for s in 0..5 {
                    for a in 0..2 {
                        rows.push(lin.features(h, s, a));
                        targets.push(pe.q[h][s][a]);
                    }
                }
                let w = ridge_fit(&rows, &targets, 1e-10).unwrap();
                for (row, y) in rows.iter().zip(&targets) {
                    let pred: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum();
                    assert!((pred - y).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn tetris_profile_count_matches_combinatorics() {
        // Width 3, cap 3, single 1×1 piece: 4³ profiles, one piece.
        let cfg = EnvConfig {
            kind: EnvKind::Tetris,
            board_width: 3,
            board_height_cap: 3,
            n_pieces: 1,
            horizon: 4,
            ..Default::default()
        };
        let lin = make_tetris(&cfg).unwrap();
        assert_eq!(lin.tabular().n_states(), 64);
    }

    #[test]
    fn tetris_first_drop_never_clears() {
        let cfg = preset("tetris-small").unwrap();
        let lin = make_tetris(&cfg).unwrap();
        let mdp = lin.tabular();
        let s0 = mdp.initial_state();
        for a in 0..mdp.n_actions() {
            assert_eq!(mdp.reward(0, s0, a), 0.0);
        }
    }

    #[test]
    fn tetris_deterministic_construction() {
        let cfg = preset("tetris-small").unwrap();
        let a = make_tetris(&cfg).unwrap();
        let b = make_tetris(&cfg).unwrap();
        let va = dp_solve_optimal(a.tabular());
        let vb = dp_solve_optimal(b.tabular());
        assert_eq!(va.initial_value(a.tabular()), vb.initial_value(b.tabular()));
        assert!(va.initial_value(a.tabular()) > 0.0);
    }

    #[test]
    fn tetris_rejects_oversized_boards() {
        let cfg = EnvConfig {
            kind: EnvKind::Tetris,
            board_width: 6,
            board_height_cap: 6,
            n_pieces: 3,
            state_cap: 200_000,
            ..Default::default()
        };
        assert!(matches!(
            make_tetris(&cfg),
            Err(EnvError::TooManyStates { .. })
        ));
    }

    #[test]
    fn tetris_vertical_domino_clears_deep_well() {
        let board = Board {
            width: 3,
            cap: 3,
            n_pieces: 2,
        };
        // Profile (2, 2, 0): upright domino in the well clears two rows.
        let (next, cleared) = board.drop(&[2, 2, 0], Piece::Domino, 2, true);
        assert_eq!(cleared, 2);
        assert_eq!(next, vec![0, 0, 0]);
        // Flat domino across columns 0-1 rests on the taller column.
        let (next, cleared) = board.drop(&[1, 0, 0], Piece::Domino, 0, false);
        assert_eq!(cleared, 0);
        assert_eq!(next, vec![2, 2, 0]);
    }
}
