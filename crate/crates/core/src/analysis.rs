//! Exact regret accounting and diagnostics: regret decompositions evaluated
//! to machine precision via occupancy measures, √T exponent fits, switch
//! curves, and optimism-violation rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::EpisodeRecord;
use crate::approx::Critic;
use crate::mdp::{dp_policy_eval, occupancy_measures, Env, PolicyTable, TabularMdp, ValueTables};
use crate::policy::greedy_table_from_values;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("window [{lo}, {hi}] is empty or exceeds the series length {len}")]
    BadWindow { lo: usize, hi: usize, len: usize },

    #[error("episode records violate ledger invariants: {0}")]
    BadRecords(String),

    #[error(transparent)]
    Mdp(#[from] crate::mdp::MdpError),
}

/// Per-episode regret series with its exact reference value.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    pub v_star: f64,
    pub records: Vec<EpisodeRecord>,
}

impl RegretLedger {
    pub fn new(v_star: f64, records: Vec<EpisodeRecord>) -> Result<Self, AnalysisError> {
        let mut prev_cum = 0.0;
        let mut prev_switches = 0;
        for (i, r) in records.iter().enumerate() {
            if r.instant_regret < -1e-9 {
                return Err(AnalysisError::BadRecords(format!(
                    "negative instantaneous regret {} at t={}",
                    r.instant_regret,
                    i + 1
                )));
            }
            if r.cum_regret < prev_cum - 1e-9 || r.cum_switches < prev_switches {
                return Err(AnalysisError::BadRecords(format!(
                    "cumulative series decreased at t={}",
                    i + 1
                )));
            }
            prev_cum = r.cum_regret;
            prev_switches = r.cum_switches;
        }
        Ok(Self { v_star, records })
    }

    pub fn cum_regret(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cum_regret).collect()
    }

    pub fn cum_switches(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.cum_switches as u64).collect()
    }
}

/// Four-term decomposition of per-episode regret for critics targeting Q*.
/// All expectations are exact (occupancy measures), so the terms sum to the
/// regret up to floating-point error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QStarDecomposition {
    /// 𝔼_{π†}⟨f_h, π† − π⟩ - tracking error of the actor.
    pub tracking: f64,
    /// −𝔼_{π†}[f_h − 𝒯^{π†} f_{h+1}] - negative Bellman error under π†.
    pub neg_bellman_comparator: f64,
    /// 𝔼_{π}[f_h − 𝒯 f_{h+1}] - greedy Bellman error under the current policy.
    pub bellman_current: f64,
    /// 𝔼_{π}⟨f_{h+1}, π^f − π⟩ - tracking error against the critic's greedy policy.
    pub greedy_tracking: f64,
    pub sum: f64,
    /// V^{π†}(s₁) − V^{π}(s₁), the actual regret when π† is optimal.
    pub regret: f64,
}

/// Three-term variant for critics targeting Q^π (the per-episode-refit loop).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QPiDecomposition {
    pub tracking: f64,
    pub neg_bellman_comparator: f64,
    /// 𝔼_{π}[f_h − 𝒯^{π} f_{h+1}] - policy-backup Bellman error.
    pub bellman_current: f64,
    pub sum: f64,
    pub regret: f64,
}

struct DecompParts {
    tracking: f64,
    neg_bellman_comparator: f64,
    bellman_greedy_current: f64,
    bellman_policy_current: f64,
    greedy_tracking: f64,
    regret: f64,
}

fn decomposition_parts(
    mdp: &TabularMdp,
    f: &[Vec<Vec<f64>>],
    policy: &PolicyTable,
    comparator: &PolicyTable,
) -> Result<DecompParts, AnalysisError> {
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let occ_comp = occupancy_measures(mdp, comparator)?;
    let occ_cur = occupancy_measures(mdp, policy)?;
    let greedy = greedy_table_from_values(f);

    // Backups of f_{h+1} (zero beyond the horizon).
    let backup = |h: usize, s: usize, a: usize, pi: Option<&PolicyTable>| -> f64 {
        let mut val = mdp.reward(h, s, a);
        if h + 1 < hor {
            for &(sp, p) in mdp.successors(h, s, a) {
                let next = match pi {
                    None => f[h + 1][sp]
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max),
                    Some(table) => table
                        .row(h + 1, sp)
                        .iter()
                        .zip(&f[h + 1][sp])
                        .map(|(pb, fv)| pb * fv)
                        .sum(),
                };
                val += p * next;
            }
        }
        val
    };

    let mut tracking = 0.0;
    let mut neg_bellman_comparator = 0.0;
    let mut bellman_greedy_current = 0.0;
    let mut bellman_policy_current = 0.0;
    let mut greedy_tracking = 0.0;

    for h in 0..hor {
        for s in 0..n_s {
            let mass_comp: f64 = occ_comp[h][s].iter().sum();
            if mass_comp > 0.0 {
                let mut inner = 0.0;
                for a in 0..n_a {
                    inner += f[h][s][a] * (comparator.row(h, s)[a] - policy.row(h, s)[a]);
                }
                tracking += mass_comp * inner;
            }
            for a in 0..n_a {
                let w_comp = occ_comp[h][s][a];
                if w_comp > 0.0 {
                    // Backup under the *played* policy: the exact identity
                    // needs 𝒯^{π}, not 𝒯^{π†} (cf. the H=1 case by hand).
                    neg_bellman_comparator -= w_comp * (f[h][s][a] - backup(h, s, a, Some(policy)));
                }
                let w_cur = occ_cur[h][s][a];
                if w_cur > 0.0 {
                    bellman_greedy_current += w_cur * (f[h][s][a] - backup(h, s, a, None));
                    bellman_policy_current += w_cur * (f[h][s][a] - backup(h, s, a, Some(policy)));
                }
            }
            // Greedy-tracking term indexes states one step later.
            if h > 0 {
                let mass_cur: f64 = occ_cur[h][s].iter().sum();
                if mass_cur > 0.0 {
                    let mut inner = 0.0;
                    for a in 0..n_a {
                        inner += f[h][s][a] * (greedy.row(h, s)[a] - policy.row(h, s)[a]);
                    }
                    greedy_tracking += mass_cur * inner;
                }
            }
        }
    }

    let v_comp = dp_policy_eval(mdp, comparator)?.initial_value(mdp);
    let v_cur = dp_policy_eval(mdp, policy)?.initial_value(mdp);
    Ok(DecompParts {
        tracking,
        neg_bellman_comparator,
        bellman_greedy_current,
        bellman_policy_current,
        greedy_tracking,
        regret: v_comp - v_cur,
    })
}

/// Exact Q*-targeting decomposition from critic value tables.
pub fn decomposition_q_star(
    mdp: &TabularMdp,
    f: &[Vec<Vec<f64>>],
    policy: &PolicyTable,
    comparator: &PolicyTable,
) -> Result<QStarDecomposition, AnalysisError> {
    let parts = decomposition_parts(mdp, f, policy, comparator)?;
    let sum = parts.tracking
        + parts.neg_bellman_comparator
        + parts.bellman_greedy_current
        + parts.greedy_tracking;
    Ok(QStarDecomposition {
        tracking: parts.tracking,
        neg_bellman_comparator: parts.neg_bellman_comparator,
        bellman_current: parts.bellman_greedy_current,
        greedy_tracking: parts.greedy_tracking,
        sum,
        regret: parts.regret,
    })
}

/// Exact Q^π-targeting decomposition from critic value tables.
pub fn decomposition_q_pi(
    mdp: &TabularMdp,
    f: &[Vec<Vec<f64>>],
    policy: &PolicyTable,
    comparator: &PolicyTable,
) -> Result<QPiDecomposition, AnalysisError> {
    let parts = decomposition_parts(mdp, f, policy, comparator)?;
    let sum = parts.tracking + parts.neg_bellman_comparator + parts.bellman_policy_current;
    Ok(QPiDecomposition {
        tracking: parts.tracking,
        neg_bellman_comparator: parts.neg_bellman_comparator,
        bellman_current: parts.bellman_policy_current,
        sum,
        regret: parts.regret,
    })
}

/// Convenience wrapper evaluating a critic into tables first.
pub fn decomposition_terms(
    env: &Env,
    critic: &Critic,
    policy: &PolicyTable,
    comparator: &PolicyTable,
) -> Result<QStarDecomposition, AnalysisError> {
    let tables = critic.value_tables(env);
    decomposition_q_star(env.tabular(), &tables, policy, comparator)
}

/// Both sides of the value-difference identity
/// f₁(s₁, π₁(s₁)) − V^{π′}₁(s₁) =
///   Σ_h 𝔼_{π′}[⟨f_h, π_h − π′_h⟩] + Σ_h 𝔼_{π′}[f_h − 𝒯^{π} f_{h+1}],
/// with the Bellman residual taken against π, the policy f is paired with.
pub fn value_difference_sides(
    mdp: &TabularMdp,
    f: &[Vec<Vec<f64>>],
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
) -> Result<(f64, f64), AnalysisError> {
    let (n_s, n_a, hor) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let occ = occupancy_measures(mdp, pi_prime)?;
    let s1 = mdp.initial_state();
    let f1_pi: f64 = pi
        .row(0, s1)
        .iter()
        .zip(&f[0][s1])
        .map(|(p, v)| p * v)
        .sum();
    let v_prime = dp_policy_eval(mdp, pi_prime)?.initial_value(mdp);
    let lhs = f1_pi - v_prime;

    let mut rhs = 0.0;
    for h in 0..hor {
        for s in 0..n_s {
            let mass: f64 = occ[h][s].iter().sum();
            if mass > 0.0 {
                let mut inner = 0.0;
                for a in 0..n_a {
                    inner += f[h][s][a] * (pi.row(h, s)[a] - pi_prime.row(h, s)[a]);
                }
                rhs += mass * inner;
            }
            for a in 0..n_a {
                let w = occ[h][s][a];
                if w == 0.0 {
                    continue;
                }
                let mut backup = mdp.reward(h, s, a);
                if h + 1 < hor {
                    for &(sp, p) in mdp.successors(h, s, a) {
                        let next: f64 = pi
                            .row(h + 1, sp)
                            .iter()
                            .zip(&f[h + 1][sp])
                            .map(|(pb, fv)| pb * fv)
                            .sum();
                        backup += p * next;
                    }
                }
                rhs += w * (f[h][s][a] - backup);
            }
        }
    }
    Ok((lhs, rhs))
}

/// OLS fit of log Reg(t) against log t over a 1-indexed inclusive window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// False when the regret was not strictly positive across the window.
    pub valid: bool,
    pub window: (usize, usize),
}

pub fn exponent_fit(
    cum_regret: &[f64],
    window: (usize, usize),
) -> Result<ExponentFit, AnalysisError> {
    let (lo, hi) = window;
    if lo == 0 || hi < lo || hi > cum_regret.len() {
        return Err(AnalysisError::BadWindow {
            lo,
            hi,
            len: cum_regret.len(),
        });
    }
    if cum_regret[lo - 1..hi].iter().any(|&r| r <= 0.0) {
        return Ok(ExponentFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            valid: false,
            window,
        });
    }
    let n = (hi - lo + 1) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in lo..=hi {
        let x = (t as f64).ln();
        let y = cum_regret[t - 1].ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok(ExponentFit {
        slope,
        intercept,
        valid: true,
        window,
    })
}

/// Default fit window: drop the first 10% of episodes as transient.
pub fn default_fit_window(len: usize) -> (usize, usize) {
    ((len / 10).max(1), len)
}

/// Cumulative switch counts and the log-growth statistic
/// switches(T)/log₂(T), comparable against d·H margins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchCurve {
    pub cumulative: Vec<u64>,
    pub log_growth_stat: f64,
}

pub fn switch_curve(records: &[EpisodeRecord]) -> SwitchCurve {
    let cumulative: Vec<u64> = records.iter().map(|r| r.cum_switches as u64).collect();
    let t = records.len().max(2) as f64;
    let total = cumulative.last().copied().unwrap_or(0) as f64;
    SwitchCurve {
        cumulative,
        log_growth_stat: total / t.log2(),
    }
}

/// Periodic snapshot of the acting (optimistic) critic tables during a run.
#[derive(Debug, Clone)]
pub struct CriticSnapshot {
    pub episode: usize,
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Fraction of sampled (t,h,s,a) cells whose acting value falls below
/// Q*_h(s,a) − 1e-9.
pub fn optimism_violation_rate(snapshots: &[CriticSnapshot], q_star: &ValueTables) -> f64 {
    let mut total = 0usize;
    let mut violations = 0usize;
    for snap in snapshots {
        for (h, per_s) in snap.values.iter().enumerate() {
            for (s, per_a) in per_s.iter().enumerate() {
                for (a, &v) in per_a.iter().enumerate() {
                    total += 1;
                    if v < q_star.q[h][s][a] - 1e-9 {
                        violations += 1;
                    }
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        violations as f64 / total as f64
    }
}
