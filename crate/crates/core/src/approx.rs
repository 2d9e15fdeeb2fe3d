//! Critic function classes, TD losses, regression fits, and optimism.
//!
//! Version-space optimism (argmax over a confidence set) is realized with
//! additive bonuses: LSVI-UCB style √(φᵀΛ⁻¹φ) for linear critics and
//! 1/√(1+n) visit-count bonuses for tabular ones. An exact enumerated
//! confidence set over a small value grid is also provided for tiny tabular
//! instances.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::mdp::{Env, PolicyTable, Transition, ValueTable};

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("critic kind does not match environment (linear critic needs features)")]
    CriticEnvMismatch,

    #[error("table shape inconsistent at step {0}")]
    ShapeMismatch(usize),

    #[error("dataset step {data_step} does not match requested step {step}")]
    StepMismatch { data_step: usize, step: usize },

    #[error("transition at step {got} pushed into step-{expected} dataset")]
    WrongStep { expected: usize, got: usize },

    #[error("ridge regularizer must be positive, got {0}")]
    NonpositiveLambda(f64),

    #[error("exact confidence set supports S·A ≤ {cap}, got {got}")]
    ExactSetTooLarge { cap: usize, got: usize },
}

/// Append-only buffer of transitions sharing one step index, the 𝓓_h of the
/// episode loops.
#[derive(Debug, Clone, Default)]
pub struct StepDataset {
    step: usize,
    transitions: Vec<Transition>,
}

impl StepDataset {
    pub fn new(step: usize) -> Self {
        Self {
            step,
            transitions: Vec::new(),
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<(), ApproxError> {
        if t.step != self.step {
            return Err(ApproxError::WrongStep {
                expected: self.step,
                got: t.step,
            });
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    /// Fresh per-step buffers for a full horizon.
    pub fn per_step(horizon: usize) -> Vec<StepDataset> {
        (0..horizon).map(StepDataset::new).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionClass {
    Tabular,
    Linear,
}

/// A step-indexed Q-function estimate.
#[derive(Debug, Clone)]
pub enum CriticParams {
    /// q\[h\]\[s\]\[a\]
    Tabular { q: Vec<Vec<Vec<f64>>> },
    /// One weight vector per step.
    Linear { weights: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct Critic {
    params: CriticParams,
    clip_enabled: bool,
    horizon: usize,
}

impl Critic {
    pub fn tabular(q: Vec<Vec<Vec<f64>>>, clip_enabled: bool) -> Result<Self, ApproxError> {
        let horizon = q.len();
        if horizon == 0 || q[0].is_empty() || q[0][0].is_empty() {
            return Err(ApproxError::ShapeMismatch(0));
        }
        Ok(Self {
            params: CriticParams::Tabular { q },
            clip_enabled,
            horizon,
        })
    }

    pub fn zero_tabular(n_states: usize, n_actions: usize, horizon: usize, clip: bool) -> Self {
        Self {
            params: CriticParams::Tabular {
                q: vec![vec![vec![0.0; n_actions]; n_states]; horizon],
            },
            clip_enabled: clip,
            horizon,
        }
    }

    pub fn linear(weights: Vec<Vec<f64>>, horizon: usize, clip_enabled: bool) -> Result<Self, ApproxError> {
        if weights.len() != horizon || weights.is_empty() || weights[0].is_empty() {
            return Err(ApproxError::ShapeMismatch(weights.len()));
        }
        Ok(Self {
            params: CriticParams::Linear { weights },
            clip_enabled,
            horizon,
        })
    }

    pub fn zero_linear(dim: usize, horizon: usize, clip: bool) -> Self {
        Self {
            params: CriticParams::Linear {
                weights: vec![vec![0.0; dim]; horizon],
            },
            clip_enabled: clip,
            horizon,
        }
    }

    pub fn params(&self) -> &CriticParams {
        &self.params
    }

    pub fn clip_enabled(&self) -> bool {
        self.clip_enabled
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn raw_value(&self, env: &Env, h: usize, s: usize, a: usize) -> f64 {
        match &self.params {
            CriticParams::Tabular { q } => q[h][s][a],
            CriticParams::Linear { weights } => {
                let lin = env.linear().expect("linear critic on tabular env");
                dot(&weights[h], lin.features(h, s, a))
            }
        }
    }

    /// Critic value, clipped to [0, H−h] when clipping is enabled
    /// (`H−h` in 0-indexed steps is the paper's H−h+1).
    pub fn value(&self, env: &Env, h: usize, s: usize, a: usize) -> f64 {
        let v = self.raw_value(env, h, s, a);
        if self.clip_enabled {
            clip_range(v, self.horizon, h)
        } else {
            v
        }
    }

    /// Materializes values at every (h, s, a).
    pub fn value_tables(&self, env: &Env) -> Vec<Vec<Vec<f64>>> {
        let mdp = env.tabular();
        (0..self.horizon)
            .map(|h| {
                (0..mdp.n_states())
                    .map(|s| {
                        (0..mdp.n_actions())
                            .map(|a| self.value(env, h, s, a))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

fn clip_range(v: f64, horizon: usize, h: usize) -> f64 {
    let cap = (horizon - h) as f64;
    v.clamp(0.0, cap)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exploration-bonus state: per-step Gram matrices for linear critics,
/// per-cell visit counts for tabular ones.
#[derive(Debug, Clone)]
pub enum BonusState {
    Linear {
        /// Λ_h = λI + Σ φφᵀ
        grams: Vec<DMatrix<f64>>,
        lambda: f64,
        beta_bonus: f64,
        samples: Vec<usize>,
    },
    Tabular {
        counts: Vec<Vec<Vec<u64>>>,
        beta_bonus: f64,
    },
}

impl BonusState {
    pub fn new_linear(dim: usize, horizon: usize, lambda: f64, beta_bonus: f64) -> Self {
        BonusState::Linear {
            grams: vec![DMatrix::identity(dim, dim) * lambda; horizon],
            lambda,
            beta_bonus,
            samples: vec![0; horizon],
        }
    }

    pub fn new_tabular(n_states: usize, n_actions: usize, horizon: usize, beta_bonus: f64) -> Self {
        BonusState::Tabular {
            counts: vec![vec![vec![0; n_actions]; n_states]; horizon],
            beta_bonus,
        }
    }

    pub fn beta_bonus(&self) -> f64 {
        match self {
            BonusState::Linear { beta_bonus, .. } => *beta_bonus,
            BonusState::Tabular { beta_bonus, .. } => *beta_bonus,
        }
    }

    /// Rank-one update with the features (or visit count) of one transition.
    pub fn observe(&mut self, env: &Env, h: usize, s: usize, a: usize) {
        match self {
            BonusState::Linear { grams, samples, .. } => {
                let lin = env.linear().expect("linear bonus on tabular env");
                let phi = lin.features(h, s, a);
                let g = &mut grams[h];
                for i in 0..phi.len() {
                    for j in 0..phi.len() {
                        g[(i, j)] += phi[i] * phi[j];
                    }
                }
                samples[h] += 1;
            }
            BonusState::Tabular { counts, .. } => {
                counts[h][s][a] += 1;
            }
        }
    }

    /// β_bonus·√(φᵀΛ_h⁻¹φ) or β_bonus/√(1+n_h(s,a)).
    pub fn bonus(&self, env: &Env, h: usize, s: usize, a: usize) -> f64 {
        match self {
            BonusState::Linear { grams, beta_bonus, .. } => {
                let lin = env.linear().expect("linear bonus on tabular env");
                let phi = DVector::from_column_slice(lin.features(h, s, a));
                let chol = Cholesky::new(grams[h].clone()).expect("gram matrix is PD");
                let solved = chol.solve(&phi);
                beta_bonus * phi.dot(&solved).max(0.0).sqrt()
            }
            BonusState::Tabular { counts, beta_bonus } => {
                beta_bonus / (1.0 + counts[h][s][a] as f64).sqrt()
            }
        }
    }

    /// Bonus at every (s, a) of one step; one factorization per call.
    pub fn bonus_row(&self, env: &Env, h: usize) -> Vec<Vec<f64>> {
        let mdp = env.tabular();
        match self {
            BonusState::Linear { grams, beta_bonus, .. } => {
                let lin = env.linear().expect("linear bonus on tabular env");
                let chol = Cholesky::new(grams[h].clone()).expect("gram matrix is PD");
                (0..mdp.n_states())
                    .map(|s| {
                        (0..mdp.n_actions())
                            .map(|a| {
                                let phi = DVector::from_column_slice(lin.features(h, s, a));
                                let solved = chol.solve(&phi);
                                beta_bonus * phi.dot(&solved).max(0.0).sqrt()
                            })
                            .collect()
                    })
                    .collect()
            }
            BonusState::Tabular { counts, beta_bonus } => (0..mdp.n_states())
                .map(|s| {
                    (0..mdp.n_actions())
                        .map(|a| *beta_bonus / (1.0 + counts[h][s][a] as f64).sqrt())
                        .collect()
                })
                .collect(),
        }
    }

    /// Gram determinants per step (linear only).
    pub fn determinants(&self) -> Option<Vec<f64>> {
        match self {
            BonusState::Linear { grams, .. } => Some(
                grams
                    .iter()
                    .map(|g| {
                        Cholesky::new(g.clone())
                            .map(|c| c.determinant())
                            .unwrap_or(0.0)
                    })
                    .collect(),
            ),
            BonusState::Tabular { .. } => None,
        }
    }
}

/// Optimistic evaluation: critic value plus bonus, clipped to [0, H−h]
/// (0-indexed) only when the critic has clipping enabled.
pub fn optimistic_eval(critic: &Critic, bonus: &BonusState, env: &Env, h: usize, s: usize, a: usize) -> f64 {
    let v = critic.raw_value(env, h, s, a) + bonus.bonus(env, h, s, a);
    if critic.clip_enabled() {
        clip_range(v, critic.horizon(), h)
    } else {
        v
    }
}

/// Materialized optimistic tables; `bonus = None` yields plain critic values.
pub fn optimistic_tables(critic: &Critic, bonus: Option<&BonusState>, env: &Env) -> Vec<Vec<Vec<f64>>> {
    let mdp = env.tabular();
    (0..critic.horizon())
        .map(|h| {
            let bonus_row = bonus.map(|b| b.bonus_row(env, h));
            (0..mdp.n_states())
                .map(|s| {
                    (0..mdp.n_actions())
                        .map(|a| {
                            let mut v = critic.raw_value(env, h, s, a);
                            if let Some(br) = &bonus_row {
                                v += br[s][a];
                            }
                            if critic.clip_enabled() {
                                clip_range(v, critic.horizon(), h)
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Backup target for TD regression.
#[derive(Debug, Clone, Copy)]
pub enum TdTargetMode<'a> {
    /// 𝒯: greedy max over next-step values.
    Greedy,
    /// 𝒯^π: expectation under the supplied policy.
    Policy(&'a PolicyTable),
}

impl TdTargetMode<'_> {
    /// Backup of a next-step value row at state `s'`, step `h+1`.
    pub fn backup(&self, next_values: &[Vec<f64>], h_next: usize, s_next: usize) -> f64 {
        match self {
            TdTargetMode::Greedy => next_values[s_next]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
            TdTargetMode::Policy(pi) => pi
                .row(h_next, s_next)
                .iter()
                .zip(&next_values[s_next])
                .map(|(p, v)| p * v)
                .sum(),
        }
    }
}

/// Squared TD error of `tables` at step `h` against its own next step:
/// Σ (f_h(s,a) − r − target(s'))², terminal target 0.
pub fn td_loss_tables(
    tables: &[Vec<Vec<f64>>],
    h: usize,
    mode: &TdTargetMode,
    data: &StepDataset,
) -> Result<f64, ApproxError> {
    if data.step() != h {
        return Err(ApproxError::StepMismatch {
            data_step: data.step(),
            step: h,
        });
    }
    let horizon = tables.len();
    let mut loss = 0.0;
    for t in data.iter() {
        let target = match t.next_state {
            Some(sp) if h + 1 < horizon => mode.backup(&tables[h + 1], h + 1, sp),
            _ => 0.0,
        };
        let err = tables[h][t.state][t.action] - t.reward - target;
        loss += err * err;
    }
    Ok(loss)
}

/// TD loss of a critic (both slices drawn from the same critic).
pub fn td_loss(
    critic: &Critic,
    env: &Env,
    h: usize,
    mode: &TdTargetMode,
    data: &StepDataset,
) -> Result<f64, ApproxError> {
    if matches!(critic.params(), CriticParams::Linear { .. }) && !env.is_linear() {
        return Err(ApproxError::CriticEnvMismatch);
    }
    let tables = critic.value_tables(env);
    td_loss_tables(&tables, h, mode, data)
}

/// Ridge regression: w = (λI + Σφφᵀ)⁻¹ Σφy.
pub fn ridge_fit(rows: &[&[f64]], targets: &[f64], lambda: f64) -> Result<Vec<f64>, ApproxError> {
    if lambda <= 0.0 {
        return Err(ApproxError::NonpositiveLambda(lambda));
    }
    let dim = rows.first().map_or(0, |r| r.len());
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut m = DMatrix::identity(dim, dim) * lambda;
    let mut b = DVector::zeros(dim);
    for (row, &y) in rows.iter().zip(targets) {
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
    }
    let chol = Cholesky::new(m).expect("λI + Σφφᵀ is PD for λ > 0");
    Ok(chol.solve(&b).iter().cloned().collect())
}

/// Max-norm residual of the normal equations at `w`; diagnostic for tests.
pub fn normal_equations_residual(rows: &[&[f64]], targets: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let dim = w.len();
    let mut m = DMatrix::identity(dim, dim) * lambda;
    let mut b = DVector::zeros(dim);
    for (row, &y) in rows.iter().zip(targets) {
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
    }
    let wv = DVector::from_column_slice(w);
    (m * wv - b).amax()
}

/// Options for the shared backward fitting pass.
#[derive(Clone, Copy)]
pub struct FitOptions<'a> {
    pub class: FunctionClass,
    pub lambda: f64,
    pub clip: bool,
    /// When present, regression targets back up *optimistic* next-step values
    /// (critic + bonus), and the returned tables include the bonus.
    pub bonus: Option<&'a BonusState>,
}

/// Backward pass h = H…1 fitting each step against targets
/// r + backup(f_{h+1}); returns the fitted critic and its acting tables
/// (optimistic when a bonus is supplied).
pub fn fit_backward(
    env: &Env,
    data: &[StepDataset],
    mode: &TdTargetMode,
    opts: &FitOptions,
) -> Result<(Critic, ValueTable), ApproxError> {
    let mdp = env.tabular();
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    if data.len() != hor {
        return Err(ApproxError::ShapeMismatch(data.len()));
    }
    if opts.class == FunctionClass::Linear && !env.is_linear() {
        return Err(ApproxError::CriticEnvMismatch);
    }

    let mut q_tab = vec![vec![vec![0.0; n_a]; n_s]; hor];
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut acting = vec![vec![vec![0.0; n_a]; n_s]; hor];

    for h in (0..hor).rev() {
        if data[h].step() != h {
            return Err(ApproxError::StepMismatch {
                data_step: data[h].step(),
                step: h,
            });
        }
        let targets: Vec<f64> = data[h]
            .iter()
            .map(|t| {
                let backup = match t.next_state {
                    Some(sp) if h + 1 < hor => mode.backup(&acting[h + 1], h + 1, sp),
                    _ => 0.0,
                };
                t.reward + backup
            })
            .collect();

        match opts.class {
            FunctionClass::Tabular => {
                let mut count = vec![vec![0.0; n_a]; n_s];
                let mut sum = vec![vec![0.0; n_a]; n_s];
                for (t, &y) in data[h].iter().zip(&targets) {
                    count[t.state][t.action] += 1.0;
                    sum[t.state][t.action] += y;
                }
                for s in 0..n_s {
                    for a in 0..n_a {
                        // Unvisited cells regress to zero; the bonus supplies
                        // optimism there.
                        q_tab[h][s][a] = if count[s][a] > 0.0 {
                            sum[s][a] / count[s][a]
                        } else {
                            0.0
                        };
                    }
                }
            }
            FunctionClass::Linear => {
                let lin = env.linear().expect("checked above");
                let rows: Vec<&[f64]> = data[h]
                    .iter()
                    .map(|t| lin.features(h, t.state, t.action))
                    .collect();
                let w = ridge_fit(&rows, &targets, opts.lambda)?;
                if weights.is_empty() {
                    weights = vec![vec![0.0; lin.dim()]; hor];
                }
                weights[h] = w;
            }
        }

        // Acting values at this step, used as backup source for h−1.
        let bonus_row = opts.bonus.map(|b| b.bonus_row(env, h));
        for s in 0..n_s {
            for a in 0..n_a {
                let base = match opts.class {
                    FunctionClass::Tabular => q_tab[h][s][a],
                    FunctionClass::Linear => {
                        let lin = env.linear().expect("checked above");
                        dot(&weights[h], lin.features(h, s, a))
                    }
                };
                let mut v = base + bonus_row.as_ref().map_or(0.0, |br| br[s][a]);
                if opts.clip {
                    v = clip_range(v, hor, h);
                }
                acting[h][s][a] = v;
            }
        }
    }

    let critic = match opts.class {
        FunctionClass::Tabular => Critic::tabular(q_tab, opts.clip)?,
        FunctionClass::Linear => Critic::linear(weights, hor, opts.clip)?,
    };
    Ok((critic, acting))
}

/// Fitted Q-evaluation: policy backups, zero bonus.
pub fn fqe(
    env: &Env,
    data: &[StepDataset],
    policy: &PolicyTable,
    class: FunctionClass,
    lambda: f64,
    clip: bool,
) -> Result<Critic, ApproxError> {
    let opts = FitOptions {
        class,
        lambda,
        clip,
        bonus: None,
    };
    fit_backward(env, data, &TdTargetMode::Policy(policy), &opts).map(|(c, _)| c)
}

/// Fitted Q-iteration: greedy backups, zero bonus.
pub fn fqi(
    env: &Env,
    data: &[StepDataset],
    class: FunctionClass,
    lambda: f64,
    clip: bool,
) -> Result<Critic, ApproxError> {
    let opts = FitOptions {
        class,
        lambda,
        clip,
        bonus: None,
    };
    fit_backward(env, data, &TdTargetMode::Greedy, &opts).map(|(c, _)| c)
}

/// Rare-switching trigger inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchRule {
    TdGap,
    DetDoubling,
}

pub enum SwitchState<'a> {
    /// Fires iff some per-step TD-loss gap reaches the threshold (5H²β).
    TdGap { gaps: &'a [f64], threshold: f64 },
    /// Fires iff some Gram determinant has doubled since the last switch.
    DetDoubling {
        det_now: &'a [f64],
        det_last: &'a [f64],
    },
}

pub fn switch_should_fire(state: &SwitchState) -> bool {
    match state {
        SwitchState::TdGap { gaps, threshold } => gaps.iter().any(|g| g >= threshold),
        SwitchState::DetDoubling { det_now, det_last } => det_now
            .iter()
            .zip(det_last.iter())
            .any(|(now, last)| *now >= 2.0 * last),
    }
}

/// Incrementally maintained TD-gap statistics against a *frozen* critic.
///
/// Targets and the charged loss may come from different frozen tables; the
/// rare-switching learners pass the optimistic acting tables for both, so
/// the gap carries the bonus widths of the frozen critic (bounded by
/// β_bonus²·d per step) and grows as data makes the frozen widths stale.
/// The tables must stay fixed between switches: each sample's target is
/// computed once at insertion, and everything is rebuilt after every refit.
#[derive(Debug, Clone)]
pub struct TriggerStats {
    per_h: Vec<StepStats>,
}

#[derive(Debug, Clone)]
enum StepStats {
    Tabular {
        /// (count, Σy) per cell, flattened s·A + a.
        cells: Vec<(f64, f64)>,
        n_actions: usize,
        /// Σ (f̄(s,a) − y)² of the frozen critic.
        frozen_loss: f64,
        /// Σ (y − ȳ_cell)² is derived from Σy²; kept to report the min loss.
        sum_yy: f64,
    },
    Linear {
        m: DMatrix<f64>,
        b: DVector<f64>,
        c: f64,
        frozen_loss: f64,
    },
}

impl TriggerStats {
    pub fn new(env: &Env, class: FunctionClass) -> Self {
        let mdp = env.tabular();
        let per_h = (0..mdp.horizon())
            .map(|_| match class {
                FunctionClass::Tabular => StepStats::Tabular {
                    cells: vec![(0.0, 0.0); mdp.n_states() * mdp.n_actions()],
                    n_actions: mdp.n_actions(),
                    frozen_loss: 0.0,
                    sum_yy: 0.0,
                },
                FunctionClass::Linear => {
                    let d = env.linear().expect("linear stats on tabular env").dim();
                    StepStats::Linear {
                        m: DMatrix::zeros(d, d),
                        b: DVector::zeros(d),
                        c: 0.0,
                        frozen_loss: 0.0,
                    }
                }
            })
            .collect();
        Self { per_h }
    }

    /// Adds one transition: the greedy target backs up the frozen *acting*
    /// tables, the loss is charged to the frozen *fitted* tables.
    pub fn add(
        &mut self,
        env: &Env,
        acting: &[Vec<Vec<f64>>],
        fitted: &[Vec<Vec<f64>>],
        t: &Transition,
    ) {
        let h = t.step;
        let horizon = acting.len();
        let target = match t.next_state {
            Some(sp) if h + 1 < horizon => acting[h + 1][sp]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
            _ => 0.0,
        };
        let y = t.reward + target;
        let f_bar = fitted[h][t.state][t.action];
        match &mut self.per_h[h] {
            StepStats::Tabular {
                cells,
                n_actions,
                frozen_loss,
                sum_yy,
            } => {
                let idx = t.state * *n_actions + t.action;
                cells[idx].0 += 1.0;
                cells[idx].1 += y;
                *frozen_loss += (f_bar - y) * (f_bar - y);
                *sum_yy += y * y;
            }
            StepStats::Linear {
                m,
                b,
                c,
                frozen_loss,
            } => {
                let lin = env.linear().expect("linear stats on tabular env");
                let phi = lin.features(h, t.state, t.action);
                for i in 0..phi.len() {
                    for j in 0..phi.len() {
                        m[(i, j)] += phi[i] * phi[j];
                    }
                    b[i] += phi[i] * y;
                }
                *c += y * y;
                *frozen_loss += (f_bar - y) * (f_bar - y);
            }
        }
    }

    /// Per-step gaps 𝓛_h(fitted) − min_{f'} 𝓛_h(f'), the min taken over the
    /// critic class (per-cell means for tabular, ridge for linear).
    pub fn gaps(&self, fitted: &[Vec<Vec<f64>>], lambda: f64) -> Vec<f64> {
        self.per_h
            .iter()
            .enumerate()
            .map(|(h, stats)| match stats {
                StepStats::Tabular {
                    cells, n_actions, ..
                } => {
                    let mut gap = 0.0;
                    for (idx, &(n, sum_y)) in cells.iter().enumerate() {
                        if n == 0.0 {
                            continue;
                        }
                        let s = idx / n_actions;
                        let a = idx % n_actions;
                        let f_bar = fitted[h][s][a];
                        let mean = sum_y / n;
                        gap += n * (f_bar - mean) * (f_bar - mean);
                    }
                    gap
                }
                StepStats::Linear {
                    m,
                    b,
                    c,
                    frozen_loss,
                } => {
                    let d = b.len();
                    let reg = m.clone() + DMatrix::identity(d, d) * lambda;
                    let chol = Cholesky::new(reg).expect("PD for λ > 0");
                    let w = chol.solve(b);
                    let min_loss = (w.transpose() * m * &w)[(0, 0)] - 2.0 * w.dot(b) + c;
                    (frozen_loss - min_loss).max(0.0)
                }
            })
            .collect()
    }

    /// Rebuild from a full dataset after the frozen tables changed.
    pub fn rebuild(
        env: &Env,
        class: FunctionClass,
        acting: &[Vec<Vec<f64>>],
        fitted: &[Vec<Vec<f64>>],
        data: &[StepDataset],
    ) -> Self {
        let mut stats = Self::new(env, class);
        for ds in data {
            for t in ds.iter() {
                stats.add(env, acting, fitted, t);
            }
        }
        stats
    }
}

/// Exact GOLF-style confidence set over a discretized tabular class.
///
/// Enumerates every per-step table on the value grid {0, H/4, …, H},
/// keeps the chains whose per-step TD-loss gap stays within `budget`
/// (= H²β), and returns the pointwise argmax. Exponential in S·A, so the
/// state-action space is capped.
pub struct ExactConfidenceSet {
    pub budget: f64,
    pub grid: Vec<f64>,
}

pub const EXACT_SET_CELL_CAP: usize = 12;

impl ExactConfidenceSet {
    pub fn new(horizon: usize, budget: f64) -> Self {
        let h = horizon as f64;
        let grid = (0..=4).map(|i| h * i as f64 / 4.0).collect();
        Self { budget, grid }
    }

    /// Pointwise argmax f̂_h(s,a) = max{f_h(s,a) : f in the set}.
    pub fn pointwise_argmax(
        &self,
        env: &Env,
        data: &[StepDataset],
    ) -> Result<Vec<Vec<Vec<f64>>>, ApproxError> {
        let mdp = env.tabular();
        let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
        let cells = n_s * n_a;
        if cells > EXACT_SET_CELL_CAP {
            return Err(ApproxError::ExactSetTooLarge {
                cap: EXACT_SET_CELL_CAP,
                got: cells,
            });
        }
        let tables = enumerate_grid_tables(&self.grid, cells);

        // feasible[i] = true while table i extends to a valid chain below.
        let mut feasible = vec![true; tables.len()];
        let mut result = vec![vec![vec![0.0; n_a]; n_s]; hor];

        for h in (0..hor).rev() {
            // Cell statistics (count, Σy) for each candidate next-step table.
            let next_candidates: Vec<&Vec<f64>> = if h + 1 < hor {
                tables
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| feasible[*i])
                    .map(|(_, t)| t)
                    .collect()
            } else {
                Vec::new()
            };

            let stat_sets: Vec<Vec<(f64, f64)>> = if h + 1 == hor {
                vec![cell_stats(&data[h], n_a, None, n_a)]
            } else {
                next_candidates
                    .iter()
                    .map(|next| cell_stats(&data[h], n_a, Some(next), n_a))
                    .collect()
            };

            let mut new_feasible = vec![false; tables.len()];
            let mut best = vec![f64::NEG_INFINITY; cells];
            for stats in &stat_sets {
                let min_gap = grid_min_gap(stats, &self.grid);
                for (i, table) in tables.iter().enumerate() {
                    let gap = table_gap(table, stats) - min_gap;
                    if gap <= self.budget {
                        new_feasible[i] = true;
                        for (c, &v) in table.iter().enumerate() {
                            if v > best[c] {
                                best[c] = v;
                            }
                        }
                    }
                }
            }
            feasible = new_feasible;
            if !feasible.iter().any(|&f| f) {
                // Empty set: fall back to the grid max, fully optimistic.
                let top = *self.grid.last().unwrap();
                best = vec![top; cells];
                feasible = vec![true; tables.len()];
            }
            for s in 0..n_s {
                for a in 0..n_a {
                    result[h][s][a] = best[s * n_a + a];
                }
            }
        }
        Ok(result)
    }
}

fn enumerate_grid_tables(grid: &[f64], cells: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..cells {
        let mut next = Vec::with_capacity(out.len() * grid.len());
        for partial in &out {
            for &g in grid {
                let mut p = partial.clone();
                p.push(g);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// (count, Σy) per flattened cell; `next` of None means terminal step.
fn cell_stats(
    data: &StepDataset,
    n_a: usize,
    next: Option<&Vec<f64>>,
    next_n_a: usize,
) -> Vec<(f64, f64)> {
    let mut stats: Vec<(f64, f64)> = Vec::new();
    for t in data.iter() {
        let idx = t.state * n_a + t.action;
        if stats.len() <= idx {
            stats.resize(idx + 1, (0.0, 0.0));
        }
        let target = match (t.next_state, next) {
            (Some(sp), Some(next_table)) => {
                let base = sp * next_n_a;
                (0..next_n_a)
                    .map(|a| next_table[base + a])
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            _ => 0.0,
        };
        stats[idx].0 += 1.0;
        stats[idx].1 += t.reward + target;
    }
    stats
}

/// Σ_c n_c (f_c − ȳ_c)² for one candidate table.
fn table_gap(table: &[f64], stats: &[(f64, f64)]) -> f64 {
    stats
        .iter()
        .enumerate()
        .map(|(idx, &(n, sum_y))| {
            if n == 0.0 {
                0.0
            } else {
                let mean = sum_y / n;
                let d = table[idx] - mean;
                n * d * d
            }
        })
        .sum()
}

/// Loss excess of the best grid table (per-cell nearest grid point).
fn grid_min_gap(stats: &[(f64, f64)], grid: &[f64]) -> f64 {
    stats
        .iter()
        .map(|&(n, sum_y)| {
            if n == 0.0 {
                return 0.0;
            }
            let mean = sum_y / n;
            let nearest = grid
                .iter()
                .cloned()
                .min_by(|a, b| {
                    (a - mean)
                        .abs()
                        .partial_cmp(&(b - mean).abs())
                        .unwrap()
                })
                .unwrap();
            n * (nearest - mean) * (nearest - mean)
        })
        .sum()
}
