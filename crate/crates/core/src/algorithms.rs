//! The episode-loop learners: per-episode optimistic actor-critic, the
//! rare-switching variants with policy resets, the non-optimistic hybrid
//! learners, and a rare-switching LSVI-UCB baseline.
//!
//! Every run is sequential and deterministic given (config, seed). Critics
//! are "frozen as played": the acting tables used for action selection and
//! policy updates change only at refits, while Gram matrices, visit counts,
//! and trigger statistics accumulate continuously.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::CriticSnapshot;
use crate::approx::{
    fit_backward, switch_should_fire, BonusState, ExactConfidenceSet, FitOptions, FunctionClass,
    StepDataset, SwitchRule, SwitchState, TdTargetMode, TriggerStats,
};
use crate::mdp::{
    dp_policy_eval, dp_solve_optimal, sample_episode, Env, LinearMdp, PolicyTable,
};
use crate::offline::OfflineDataset;
use crate::policy::{greedy_table_from_values, SoftmaxPolicy};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("episode count must be at least 1")]
    ZeroEpisodes,

    #[error("hybrid algorithms need offline data; pass --allow-empty-offline to run without")]
    EmptyOffline,

    #[error("det-doubling switching needs a linear environment")]
    DetDoublingNeedsLinear,

    #[error("exact confidence-set optimism needs a tabular environment")]
    ExactSetNeedsTabular,

    #[error(transparent)]
    Approx(#[from] crate::approx::ApproxError),

    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),

    #[error(transparent)]
    Mdp(#[from] crate::mdp::MdpError),

    #[error(transparent)]
    Offline(#[from] crate::offline::OfflineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Douhua,
    Nora,
    NoraPi,
    NoahPi,
    NoahStar,
    HybridNora,
    LsviUcbRs,
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::Douhua => "douhua",
            Algo::Nora => "nora",
            Algo::NoraPi => "nora-pi",
            Algo::NoahPi => "noah-pi",
            Algo::NoahStar => "noah-star",
            Algo::HybridNora => "hybrid-nora",
            Algo::LsviUcbRs => "lsvi-ucb-rs",
        }
    }

    pub fn needs_offline(&self) -> bool {
        matches!(self, Algo::NoahPi | Algo::NoahStar | Algo::HybridNora)
    }
}

/// How optimism is realized for the rare-switching critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimismMode {
    /// Additive bonuses (LSVI-UCB style, or visit counts for tabular).
    Bonus,
    /// Enumerated confidence set on a value grid; tiny tabular only.
    ExactSet,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.05
}
fn default_snapshot_interval() -> usize {
    50
}
fn default_eta_scale() -> f64 {
    1.0
}
// Calibrated so the 5H²β trigger both fires within tens of episodes on the
// hard-exploration chain and stays silent for coverage-free non-optimistic
// runs; the asymptotic form leaves the constant free.
fn default_beta_scale() -> f64 {
    0.25
}
fn default_optimism() -> OptimismMode {
    OptimismMode::Bonus
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algo: Algo,
    pub episodes: usize,
    /// Learning-rate override; `0.0` freezes the policy entirely.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Confidence-width override for the 5H²β trigger.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub beta_bonus: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub switch_rule: Option<SwitchRule>,
    /// Clip critic values to [0, H−h+1]; off by default. With range-dominant
    /// bonuses, clipping saturates every action at the cap and stalls the
    /// actor for thousands of episodes.
    #[serde(default)]
    pub clip: Option<bool>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub seed: u64,
    /// Episodes between acting-critic snapshots; 0 disables them.
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: usize,
    #[serde(default)]
    pub allow_empty_offline: bool,
    #[serde(default = "default_optimism")]
    pub optimism: OptimismMode,
    /// Constant in front of the η = Θ(·) learning-rate forms.
    #[serde(default = "default_eta_scale")]
    pub eta_scale: f64,
    /// Constant in front of the β = Θ(log ·) confidence width.
    #[serde(default = "default_beta_scale")]
    pub beta_scale: f64,
}

impl AlgoConfig {
    pub fn new(algo: Algo, episodes: usize, seed: u64) -> Self {
        Self {
            algo,
            episodes,
            eta: None,
            beta: None,
            beta_bonus: None,
            lambda: default_lambda(),
            switch_rule: None,
            clip: None,
            delta: default_delta(),
            seed,
            snapshot_interval: default_snapshot_interval(),
            allow_empty_offline: false,
            optimism: default_optimism(),
            eta_scale: default_eta_scale(),
            beta_scale: default_beta_scale(),
        }
    }
}

/// One row of the per-episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub t: usize,
    pub episode_return: f64,
    /// V*(s₁) − V^{π_t}(s₁), exact via policy evaluation.
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub switched: bool,
    pub cum_switches: usize,
    pub reset: bool,
    /// Per-step trigger gaps at this episode (empty when not applicable).
    pub td_gaps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub algo: Algo,
    pub records: Vec<EpisodeRecord>,
    pub v_star: f64,
    pub n_refits: usize,
    pub snapshots: Vec<CriticSnapshot>,
}

impl RunResult {
    pub fn final_cum_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn total_switches(&self) -> usize {
        self.records.last().map_or(0, |r| r.cum_switches)
    }
}

/// Resolved hyperparameters for one run.
#[derive(Debug, Clone, Copy)]
struct Resolved {
    episodes: usize,
    eta: f64,
    threshold: f64,
    beta: f64,
    beta_bonus: f64,
    lambda: f64,
    clip: bool,
    class: FunctionClass,
    snapshot_interval: usize,
}

fn resolve(env: &Env, cfg: &AlgoConfig) -> Result<Resolved, AlgoError> {
    if cfg.episodes == 0 {
        return Err(AlgoError::ZeroEpisodes);
    }
    let mdp = env.tabular();
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let t = cfg.episodes as f64;
    let h = hor as f64;
    let ln_a = (n_a as f64).ln();
    let class = if env.is_linear() {
        FunctionClass::Linear
    } else {
        FunctionClass::Tabular
    };
    // The complexity parameter: feature dimension for linear critics,
    // S·A for tabular ones.
    let d = match class {
        FunctionClass::Linear => env.linear().unwrap().dim() as f64,
        FunctionClass::Tabular => (n_s * n_a) as f64,
    };
    let eta = cfg.eta.unwrap_or_else(|| {
        let base = match cfg.algo {
            // Rare-switching learners run a more aggressive rate to recover
            // from policy resets.
            Algo::Nora | Algo::NoahStar | Algo::HybridNora => {
                (d * t.ln() * ln_a / (h * t)).sqrt()
            }
            _ => (ln_a / (h * h * t)).sqrt(),
        };
        cfg.eta_scale * base
    });
    let beta = cfg.beta.unwrap_or_else(|| {
        let base = match class {
            FunctionClass::Tabular => ((n_s * n_a) as f64 * h * t / cfg.delta).ln(),
            FunctionClass::Linear => (d * h * t / cfg.delta).ln(),
        };
        cfg.beta_scale * base
    });
    let beta_bonus = cfg.beta_bonus.unwrap_or(match class {
        FunctionClass::Tabular => h,
        // The Θ(H√(d log(T/δ))) form with a constant small enough that early
        // bonuses sit at the value range rather than far above it.
        FunctionClass::Linear => 0.125 * h * (d * (t / cfg.delta).ln()).sqrt(),
    });
    Ok(Resolved {
        episodes: cfg.episodes,
        eta,
        threshold: 5.0 * h * h * beta,
        beta,
        beta_bonus,
        lambda: cfg.lambda,
        clip: cfg.clip.unwrap_or(false),
        class,
        snapshot_interval: cfg.snapshot_interval,
    })
}

fn new_bonus(env: &Env, r: &Resolved) -> BonusState {
    let mdp = env.tabular();
    match r.class {
        FunctionClass::Tabular => {
            BonusState::new_tabular(mdp.n_states(), mdp.n_actions(), mdp.horizon(), r.beta_bonus)
        }
        FunctionClass::Linear => BonusState::new_linear(
            env.linear().unwrap().dim(),
            mdp.horizon(),
            r.lambda,
            r.beta_bonus,
        ),
    }
}

/// The pointwise argmax over the unconstrained class: the constant-H tables
/// every optimistic learner starts from before any data arrives.
fn full_class_argmax(env: &Env) -> Vec<Vec<Vec<f64>>> {
    let mdp = env.tabular();
    vec![
        vec![vec![mdp.horizon() as f64; mdp.n_actions()]; mdp.n_states()];
        mdp.horizon()
    ]
}

fn zero_tables(env: &Env) -> Vec<Vec<Vec<f64>>> {
    let mdp = env.tabular();
    vec![vec![vec![0.0; mdp.n_actions()]; mdp.n_states()]; mdp.horizon()]
}

/// Shared per-episode bookkeeping.
struct Recorder {
    records: Vec<EpisodeRecord>,
    snapshots: Vec<CriticSnapshot>,
    cum_regret: f64,
    cum_switches: usize,
    v_star: f64,
    snapshot_interval: usize,
}

impl Recorder {
    fn new(v_star: f64, r: &Resolved) -> Self {
        Self {
            records: Vec::with_capacity(r.episodes),
            snapshots: Vec::new(),
            cum_regret: 0.0,
            cum_switches: 0,
            v_star,
            snapshot_interval: r.snapshot_interval,
        }
    }

    fn maybe_snapshot(&mut self, t: usize, acting: &[Vec<Vec<f64>>]) {
        if self.snapshot_interval > 0 && (t - 1).is_multiple_of(self.snapshot_interval) {
            self.snapshots.push(CriticSnapshot {
                episode: t,
                values: acting.to_vec(),
            });
        }
    }

    fn push(
        &mut self,
        t: usize,
        episode_return: f64,
        v_policy: f64,
        switched: bool,
        reset: bool,
        td_gaps: Vec<f64>,
    ) {
        let instant = self.v_star - v_policy;
        self.cum_regret += instant;
        if switched {
            self.cum_switches += 1;
        }
        self.records.push(EpisodeRecord {
            t,
            episode_return,
            instant_regret: instant,
            cum_regret: self.cum_regret,
            switched,
            cum_switches: self.cum_switches,
            reset,
            td_gaps,
        });
    }
}

fn require_offline(offline: &OfflineDataset, cfg: &AlgoConfig) -> Result<(), AlgoError> {
    if offline.n_samples() == 0 && !cfg.allow_empty_offline {
        return Err(AlgoError::EmptyOffline);
    }
    Ok(())
}

/// Per-episode double-optimistic actor-critic: refit an optimistic critic
/// targeting the played policy every episode, then mirror-ascend with the
/// previous episode's critic. No switching, no resets.
pub fn run_douhua(env: &Env, cfg: &AlgoConfig) -> Result<RunResult, AlgoError> {
    let r = resolve(env, cfg)?;
    let mdp = env.tabular();
    let v_star = dp_solve_optimal(mdp).initial_value(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = SoftmaxPolicy::uniform_tabular(
        mdp.n_states(),
        mdp.n_actions(),
        mdp.horizon(),
        r.eta,
    );
    let mut data = StepDataset::per_step(mdp.horizon());
    let mut bonus = new_bonus(env, &r);
    let mut acting = full_class_argmax(env);
    let mut rec = Recorder::new(v_star, &r);
    let mut n_refits = 0usize;

    for t in 1..=r.episodes {
        rec.maybe_snapshot(t, &acting);
        let probs = policy.table(env);
        let v_policy = dp_policy_eval(mdp, &probs)?.initial_value(mdp);
        let traj = sample_episode(env, &probs, t, &mut rng);
        let episode_return = traj.total_reward();
        for tr in traj.transitions {
            bonus.observe(env, tr.step, tr.state, tr.action);
            data[tr.step].push(tr)?;
        }
        // Confidence set targeting the policy just played.
        let opts = FitOptions {
            class: r.class,
            lambda: r.lambda,
            clip: r.clip,
            bonus: Some(&bonus),
        };
        let (_, new_acting) = fit_backward(env, &data, &TdTargetMode::Policy(&probs), &opts)?;
        n_refits += 1;
        // Mirror step with f^{(t)}, the critic selected before this refit.
        if r.eta > 0.0 {
            policy.ascend_tables(&acting, r.eta)?;
        }
        acting = new_acting;
        rec.push(t, episode_return, v_policy, false, false, Vec::new());
    }
    Ok(RunResult {
        algo: Algo::Douhua,
        records: rec.records,
        v_star,
        n_refits,
        snapshots: rec.snapshots,
    })
}

/// Core rare-switching loop shared by NORA, hybrid NORA, and NOAH-★.
/// `optimistic` switches between bonus-backed refits (NORA) and plain FQI
/// (NOAH-★); the offline dataset seeds every statistic and all refits.
fn run_rare_switching(
    env: &Env,
    cfg: &AlgoConfig,
    offline: &OfflineDataset,
    optimistic: bool,
    algo: Algo,
) -> Result<RunResult, AlgoError> {
    let r = resolve(env, cfg)?;
    let mdp = env.tabular();
    if offline.horizon() != mdp.horizon() && offline.n_samples() > 0 {
        return Err(AlgoError::Offline(
            crate::offline::OfflineError::HorizonMismatch {
                online: mdp.horizon(),
                offline: offline.horizon(),
            },
        ));
    }
    // TD-gap triggering for tabular critics; Gram-determinant doubling for
    // linear ones, where it is the standard practical trigger.
    let switch_rule = cfg.switch_rule.unwrap_or(if env.is_linear() {
        SwitchRule::DetDoubling
    } else {
        SwitchRule::TdGap
    });
    if switch_rule == SwitchRule::DetDoubling && !env.is_linear() {
        return Err(AlgoError::DetDoublingNeedsLinear);
    }
    if cfg.optimism == OptimismMode::ExactSet {
        if r.class != FunctionClass::Tabular {
            return Err(AlgoError::ExactSetNeedsTabular);
        }
        let cells = mdp.n_states() * mdp.n_actions();
        if cells > crate::approx::EXACT_SET_CELL_CAP {
            return Err(AlgoError::Approx(
                crate::approx::ApproxError::ExactSetTooLarge {
                    cap: crate::approx::EXACT_SET_CELL_CAP,
                    got: cells,
                },
            ));
        }
    }

    let v_star = dp_solve_optimal(mdp).initial_value(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = SoftmaxPolicy::uniform_tabular(
        mdp.n_states(),
        mdp.n_actions(),
        mdp.horizon(),
        r.eta,
    );

    // Offline samples sit at the front of every per-step buffer.
    let mut data = StepDataset::per_step(mdp.horizon());
    for h in 0..mdp.horizon() {
        for tr in offline.per_step[h].iter() {
            data[h].push(*tr)?;
        }
    }
    // Gram/count state also backs the det-doubling trigger, so it is kept
    // current even for non-optimistic runs under that rule.
    let track_bonus = optimistic || switch_rule == SwitchRule::DetDoubling;
    let mut bonus = new_bonus(env, &r);
    if track_bonus {
        for ds in &data {
            for tr in ds.iter() {
                bonus.observe(env, tr.step, tr.state, tr.action);
            }
        }
    }

    let mut acting = if optimistic {
        full_class_argmax(env)
    } else {
        zero_tables(env)
    };
    let mut trigger = TriggerStats::rebuild(env, r.class, &acting, &acting, &data);
    let mut det_last = bonus.determinants().unwrap_or_default();

    let mut rec = Recorder::new(v_star, &r);
    let mut n_refits = 0usize;

    for t in 1..=r.episodes {
        rec.maybe_snapshot(t, &acting);
        let probs = policy.table(env);
        let v_policy = dp_policy_eval(mdp, &probs)?.initial_value(mdp);
        let traj = sample_episode(env, &probs, t, &mut rng);
        let episode_return = traj.total_reward();
        for tr in traj.transitions {
            if track_bonus {
                bonus.observe(env, tr.step, tr.state, tr.action);
            }
            trigger.add(env, &acting, &acting, &tr);
            data[tr.step].push(tr)?;
        }

        let gaps = trigger.gaps(&acting, r.lambda);
        let fired = match switch_rule {
            SwitchRule::TdGap => switch_should_fire(&SwitchState::TdGap {
                gaps: &gaps,
                threshold: r.threshold,
            }),
            SwitchRule::DetDoubling => {
                let det_now = bonus.determinants().unwrap_or_default();
                switch_should_fire(&SwitchState::DetDoubling {
                    det_now: &det_now,
                    det_last: &det_last,
                })
            }
        };

        if fired {
            acting = match (cfg.optimism, optimistic) {
                (OptimismMode::ExactSet, true) => {
                    let set = ExactConfidenceSet::new(
                        mdp.horizon(),
                        (mdp.horizon() as f64).powi(2) * r.beta,
                    );
                    set.pointwise_argmax(env, &data)?
                }
                _ => {
                    let opts = FitOptions {
                        class: r.class,
                        lambda: r.lambda,
                        clip: r.clip,
                        bonus: if optimistic { Some(&bonus) } else { None },
                    };
                    fit_backward(env, &data, &TdTargetMode::Greedy, &opts)?.1
                }
            };
            trigger = TriggerStats::rebuild(env, r.class, &acting, &acting, &data);
            if let Some(d) = bonus.determinants() {
                det_last = d;
            }
            policy.reset_uniform();
            n_refits += 1;
        }

        // One mirror step per episode with the current critic: the fresh one
        // right after a switch, the frozen one otherwise.
        if r.eta > 0.0 {
            policy.ascend_tables(&acting, r.eta)?;
        }
        rec.push(t, episode_return, v_policy, fired, fired, gaps);
    }
    Ok(RunResult {
        algo,
        records: rec.records,
        v_star,
        n_refits,
        snapshots: rec.snapshots,
    })
}

/// Optimistic rare-switching actor-critic targeting Q*: refits and policy
/// resets only when the TD-loss gap reaches 5H²β.
pub fn run_nora(env: &Env, cfg: &AlgoConfig) -> Result<RunResult, AlgoError> {
    let empty = OfflineDataset::empty(env.tabular().horizon());
    run_rare_switching(env, cfg, &empty, true, Algo::Nora)
}

/// NORA over the union of online and offline data.
pub fn run_hybrid_nora(
    env: &Env,
    cfg: &AlgoConfig,
    offline: &OfflineDataset,
) -> Result<RunResult, AlgoError> {
    require_offline(offline, cfg)?;
    run_rare_switching(env, cfg, offline, true, Algo::HybridNora)
}

/// Non-optimistic rare-switching hybrid learner: plain FQI refits over the
/// merged data, policy resets on switch, no bonuses anywhere.
pub fn run_noah_star(
    env: &Env,
    cfg: &AlgoConfig,
    offline: &OfflineDataset,
) -> Result<RunResult, AlgoError> {
    require_offline(offline, cfg)?;
    run_rare_switching(env, cfg, offline, false, Algo::NoahStar)
}

/// Rare-switching variant whose critic targets the *current* policy: the
/// trigger and refits use policy backups, and there is no reset. The moving
/// target makes the trigger fire more often; shipped as the instability
/// demonstration.
pub fn run_nora_pi(env: &Env, cfg: &AlgoConfig) -> Result<RunResult, AlgoError> {
    let r = resolve(env, cfg)?;
    let mdp = env.tabular();
    let v_star = dp_solve_optimal(mdp).initial_value(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = SoftmaxPolicy::uniform_tabular(
        mdp.n_states(),
        mdp.n_actions(),
        mdp.horizon(),
        r.eta,
    );
    let mut data = StepDataset::per_step(mdp.horizon());
    let mut bonus = new_bonus(env, &r);
    let mut acting = full_class_argmax(env);
    let mut rec = Recorder::new(v_star, &r);
    let mut n_refits = 0usize;

    for t in 1..=r.episodes {
        rec.maybe_snapshot(t, &acting);
        let probs = policy.table(env);
        let v_policy = dp_policy_eval(mdp, &probs)?.initial_value(mdp);
        let traj = sample_episode(env, &probs, t, &mut rng);
        let episode_return = traj.total_reward();
        for tr in traj.transitions {
            bonus.observe(env, tr.step, tr.state, tr.action);
            data[tr.step].push(tr)?;
        }

        // The policy-backup loss has a moving target, so the gap is
        // recomputed from scratch against the current policy every episode.
        let gaps = policy_backup_gaps(env, &data, &acting, &probs, r.lambda, r.class)?;
        let fired = switch_should_fire(&SwitchState::TdGap {
            gaps: &gaps,
            threshold: r.threshold,
        });
        if fired {
            let opts = FitOptions {
                class: r.class,
                lambda: r.lambda,
                clip: r.clip,
                bonus: Some(&bonus),
            };
            acting = fit_backward(env, &data, &TdTargetMode::Policy(&probs), &opts)?.1;
            n_refits += 1;
        }
        if r.eta > 0.0 {
            policy.ascend_tables(&acting, r.eta)?;
        }
        // No policy reset in this variant.
        rec.push(t, episode_return, v_policy, fired, false, gaps);
    }
    Ok(RunResult {
        algo: Algo::NoraPi,
        records: rec.records,
        v_star,
        n_refits,
        snapshots: rec.snapshots,
    })
}

fn policy_backup_gaps(
    env: &Env,
    data: &[StepDataset],
    acting: &[Vec<Vec<f64>>],
    probs: &PolicyTable,
    lambda: f64,
    class: FunctionClass,
) -> Result<Vec<f64>, AlgoError> {
    let hor = acting.len();
    let mut gaps = Vec::with_capacity(hor);
    for h in 0..hor {
        let targets: Vec<f64> = data[h]
            .iter()
            .map(|tr| {
                let backup = match tr.next_state {
                    Some(sp) if h + 1 < hor => probs
                        .row(h + 1, sp)
                        .iter()
                        .zip(&acting[h + 1][sp])
                        .map(|(p, v)| p * v)
                        .sum(),
                    _ => 0.0,
                };
                tr.reward + backup
            })
            .collect();
        let frozen_loss: f64 = data[h]
            .iter()
            .zip(&targets)
            .map(|(tr, y)| {
                let e = acting[h][tr.state][tr.action] - y;
                e * e
            })
            .sum();
        let min_loss = match class {
            FunctionClass::Tabular => {
                let mdp = env.tabular();
                let mut count = vec![0.0; mdp.n_states() * mdp.n_actions()];
                let mut sum = vec![0.0; mdp.n_states() * mdp.n_actions()];
                let mut sum_sq = 0.0;
                for (tr, &y) in data[h].iter().zip(&targets) {
                    let idx = tr.state * mdp.n_actions() + tr.action;
                    count[idx] += 1.0;
                    sum[idx] += y;
                    sum_sq += y * y;
                }
                let explained: f64 = count
                    .iter()
                    .zip(&sum)
                    .filter(|(&n, _)| n > 0.0)
                    .map(|(&n, &s)| s * s / n)
                    .sum();
                sum_sq - explained
            }
            FunctionClass::Linear => {
                let lin = env.linear().expect("linear class on linear env");
                let rows: Vec<&[f64]> = data[h]
                    .iter()
                    .map(|tr| lin.features(h, tr.state, tr.action))
                    .collect();
                let w = crate::approx::ridge_fit(&rows, &targets, lambda)?;
                rows.iter()
                    .zip(&targets)
                    .map(|(row, y)| {
                        let pred: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum();
                        (pred - y) * (pred - y)
                    })
                    .sum()
            }
        };
        gaps.push((frozen_loss - min_loss).max(0.0));
    }
    Ok(gaps)
}

/// Non-optimistic per-episode actor-critic: FQE over online ∪ offline data
/// targeting the played policy, refit and policy update every episode.
pub fn run_noah_pi(
    env: &Env,
    cfg: &AlgoConfig,
    offline: &OfflineDataset,
) -> Result<RunResult, AlgoError> {
    require_offline(offline, cfg)?;
    let r = resolve(env, cfg)?;
    let mdp = env.tabular();
    if offline.horizon() != mdp.horizon() && offline.n_samples() > 0 {
        return Err(AlgoError::Offline(
            crate::offline::OfflineError::HorizonMismatch {
                online: mdp.horizon(),
                offline: offline.horizon(),
            },
        ));
    }
    let v_star = dp_solve_optimal(mdp).initial_value(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = SoftmaxPolicy::uniform_tabular(
        mdp.n_states(),
        mdp.n_actions(),
        mdp.horizon(),
        r.eta,
    );
    let mut data = StepDataset::per_step(mdp.horizon());
    for h in 0..mdp.horizon() {
        for tr in offline.per_step[h].iter() {
            data[h].push(*tr)?;
        }
    }
    let mut acting = zero_tables(env);
    let mut rec = Recorder::new(v_star, &r);
    let mut n_refits = 0usize;

    for t in 1..=r.episodes {
        rec.maybe_snapshot(t, &acting);
        let probs = policy.table(env);
        let v_policy = dp_policy_eval(mdp, &probs)?.initial_value(mdp);
        let traj = sample_episode(env, &probs, t, &mut rng);
        let episode_return = traj.total_reward();
        for tr in traj.transitions {
            data[tr.step].push(tr)?;
        }
        let opts = FitOptions {
            class: r.class,
            lambda: r.lambda,
            clip: r.clip,
            bonus: None,
        };
        let (_, new_acting) = fit_backward(env, &data, &TdTargetMode::Policy(&probs), &opts)?;
        acting = new_acting;
        n_refits += 1;
        if r.eta > 0.0 {
            policy.ascend_tables(&acting, r.eta)?;
        }
        rec.push(t, episode_return, v_policy, false, false, Vec::new());
    }
    Ok(RunResult {
        algo: Algo::NoahPi,
        records: rec.records,
        v_star,
        n_refits,
        snapshots: rec.snapshots,
    })
}

/// Rare-switching LSVI-UCB: value iteration with optimistic least-squares
/// targets, refit on Gram-determinant doubling, greedy action selection.
/// Tabular environments are wrapped with one-hot features.
pub fn run_lsvi_ucb_rs(env: &Env, cfg: &AlgoConfig) -> Result<RunResult, AlgoError> {
    let linear_env;
    let env = if env.is_linear() {
        env
    } else {
        linear_env = Env::Linear(LinearMdp::one_hot(env.tabular().clone()));
        &linear_env
    };
    let r = resolve(env, cfg)?;
    let mdp = env.tabular();
    let v_star = dp_solve_optimal(mdp).initial_value(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = StepDataset::per_step(mdp.horizon());
    let mut bonus = new_bonus(env, &r);
    let zero = crate::approx::Critic::zero_linear(env.linear().unwrap().dim(), mdp.horizon(), r.clip);
    let mut acting = crate::approx::optimistic_tables(&zero, Some(&bonus), env);
    let mut det_last = bonus.determinants().expect("linear bonus state");
    let mut rec = Recorder::new(v_star, &r);
    let mut n_refits = 0usize;

    for t in 1..=r.episodes {
        rec.maybe_snapshot(t, &acting);
        let greedy = greedy_table_from_values(&acting);
        let v_policy = dp_policy_eval(mdp, &greedy)?.initial_value(mdp);
        let traj = sample_episode(env, &greedy, t, &mut rng);
        let episode_return = traj.total_reward();
        for tr in traj.transitions {
            bonus.observe(env, tr.step, tr.state, tr.action);
            data[tr.step].push(tr)?;
        }
        let det_now = bonus.determinants().expect("linear bonus state");
        let fired = switch_should_fire(&SwitchState::DetDoubling {
            det_now: &det_now,
            det_last: &det_last,
        });
        if fired {
            let opts = FitOptions {
                class: FunctionClass::Linear,
                lambda: r.lambda,
                clip: r.clip,
                bonus: Some(&bonus),
            };
            acting = fit_backward(env, &data, &TdTargetMode::Greedy, &opts)?.1;
            det_last = det_now;
            n_refits += 1;
        }
        rec.push(t, episode_return, v_policy, fired, false, Vec::new());
    }
    Ok(RunResult {
        algo: Algo::LsviUcbRs,
        records: rec.records,
        v_star,
        n_refits,
        snapshots: rec.snapshots,
    })
}

/// Dispatch by configured algorithm; hybrid variants read the offline data.
pub fn run_algorithm(
    env: &Env,
    cfg: &AlgoConfig,
    offline: Option<&OfflineDataset>,
) -> Result<RunResult, AlgoError> {
    let empty;
    let off = match offline {
        Some(o) => o,
        None => {
            empty = OfflineDataset::empty(env.tabular().horizon());
            &empty
        }
    };
    match cfg.algo {
        Algo::Douhua => run_douhua(env, cfg),
        Algo::Nora => run_nora(env, cfg),
        Algo::NoraPi => run_nora_pi(env, cfg),
        Algo::NoahPi => run_noah_pi(env, cfg, off),
        Algo::NoahStar => run_noah_star(env, cfg, off),
        Algo::HybridNora => run_hybrid_nora(env, cfg, off),
        Algo::LsviUcbRs => run_lsvi_ucb_rs(env, cfg),
    }
}
