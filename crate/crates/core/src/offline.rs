//! Offline dataset generation, merging with online buffers, and empirical
//! concentrability diagnostics for the hybrid learners.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::StepDataset;
use crate::mdp::{
    dp_solve_optimal, occupancy_measures, sample_episode, Env, PolicyTable, TabularMdp, Transition,
};
use crate::policy::greedy_table_from_values;

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("horizon mismatch: online has {online} steps, offline has {offline}")]
    HorizonMismatch { online: usize, offline: usize },

    #[error("offline CSV parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("mixture weight must lie in [0,1], got {0}")]
    BadMixture(f64),

    #[error(transparent)]
    Approx(#[from] crate::approx::ApproxError),
}

/// Per-step transition buffers 𝓓_off plus provenance. Generated from full
/// trajectories, so every step holds the same number of samples.
#[derive(Debug, Clone)]
pub struct OfflineDataset {
    pub per_step: Vec<StepDataset>,
    pub behavior: String,
    pub mix_uniform: f64,
    pub n_episodes: usize,
    pub seed: u64,
}

impl OfflineDataset {
    pub fn empty(horizon: usize) -> Self {
        Self {
            per_step: StepDataset::per_step(horizon),
            behavior: "empty".to_string(),
            mix_uniform: 0.0,
            n_episodes: 0,
            seed: 0,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.per_step.iter().map(|d| d.len()).sum()
    }

    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }
}

/// The behavior policy mix·π* + (1−mix)·uniform, realized action-wise.
pub fn optimal_mixture_table(mdp: &TabularMdp, mix_optimal: f64) -> Result<PolicyTable, OfflineError> {
    if !(0.0..=1.0).contains(&mix_optimal) {
        return Err(OfflineError::BadMixture(mix_optimal));
    }
    let vt = dp_solve_optimal(mdp);
    let greedy = greedy_table_from_values(&vt.q);
    let n_a = mdp.n_actions() as f64;
    let probs: Vec<Vec<Vec<f64>>> = (0..mdp.horizon())
        .map(|h| {
            (0..mdp.n_states())
                .map(|s| {
                    greedy
                        .row(h, s)
                        .iter()
                        .map(|p| mix_optimal * p + (1.0 - mix_optimal) / n_a)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(PolicyTable::new(probs).expect("mixture rows sum to one"))
}

/// Rolls out `n_episodes` trajectories under the behavior policy.
pub fn generate_offline(
    env: &Env,
    behavior: &PolicyTable,
    behavior_name: &str,
    mix_uniform: f64,
    n_episodes: usize,
    seed: u64,
) -> Result<OfflineDataset, OfflineError> {
    let horizon = env.tabular().horizon();
    let mut per_step = StepDataset::per_step(horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in 0..n_episodes {
        let traj = sample_episode(env, behavior, ep, &mut rng);
        for t in traj.transitions {
            per_step[t.step].push(t)?;
        }
    }
    Ok(OfflineDataset {
        per_step,
        behavior: behavior_name.to_string(),
        mix_uniform,
        n_episodes,
        seed,
    })
}

/// Occupancy-ratio concentrability report.
///
/// Reports max_h max_{(s,a): d*_h(s,a)>0} d*_h(s,a)/μ̂_h(s,a) where μ̂ is the
/// empirical offline occupancy. This is a computable upper-bound proxy for
/// the Bellman-error-defined coefficient, not the coefficient itself; cells
/// on the optimal support with no offline visits yield the +∞ sentinel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrabilityReport {
    pub per_step: Vec<f64>,
    pub overall: f64,
    pub note: String,
}

pub fn estimate_concentrability(
    offline: &OfflineDataset,
    mdp: &TabularMdp,
) -> Result<ConcentrabilityReport, OfflineError> {
    if offline.horizon() != mdp.horizon() {
        return Err(OfflineError::HorizonMismatch {
            online: mdp.horizon(),
            offline: offline.horizon(),
        });
    }
    let vt = dp_solve_optimal(mdp);
    let pi_star = greedy_table_from_values(&vt.q);
    let d_star = occupancy_measures(mdp, &pi_star).expect("policy table matches mdp");

    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut per_step = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let mut counts = vec![vec![0usize; n_a]; n_s];
        let total = offline.per_step[h].len();
        for t in offline.per_step[h].iter() {
            counts[t.state][t.action] += 1;
        }
        let mut worst: f64 = 0.0;
        for s in 0..n_s {
            for a in 0..n_a {
                let d = d_star[h][s][a];
                if d <= 1e-12 {
                    continue;
                }
                let mu = if total == 0 {
                    0.0
                } else {
                    counts[s][a] as f64 / total as f64
                };
                let ratio = if mu == 0.0 { f64::INFINITY } else { d / mu };
                worst = worst.max(ratio);
            }
        }
        per_step.push(worst);
    }
    let overall = per_step.iter().cloned().fold(0.0, f64::max);
    Ok(ConcentrabilityReport {
        per_step,
        overall,
        note: "occupancy-ratio proxy: max_h max_(s,a) d*_h(s,a)/mu_hat_h(s,a); \
               upper-bounds the Bellman-error concentrability for bounded errors, \
               +inf when optimal-support cells are unvisited"
            .to_string(),
    })
}

/// Concatenates online and offline buffers per step, offline samples first
/// (matching how the hybrid learners accumulate data). All fits downstream
/// depend only on the sample multiset.
pub fn merge(online: &[StepDataset], offline: &OfflineDataset) -> Result<Vec<StepDataset>, OfflineError> {
    if online.len() != offline.horizon() {
        return Err(OfflineError::HorizonMismatch {
            online: online.len(),
            offline: offline.horizon(),
        });
    }
    let mut merged = StepDataset::per_step(online.len());
    for h in 0..online.len() {
        for t in offline.per_step[h].iter() {
            merged[h].push(*t)?;
        }
        for t in online[h].iter() {
            merged[h].push(*t)?;
        }
    }
    Ok(merged)
}

/// Sidecar metadata stored next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineSidecar {
    pub behavior: String,
    pub mix_uniform: f64,
    pub n_episodes: usize,
    pub n_samples: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// Flat CSV form `h,s,a,r,s_next` with -1 as the terminal sentinel.
pub fn to_csv(offline: &OfflineDataset) -> String {
    let mut out = String::from("h,s,a,r,s_next\n");
    for ds in &offline.per_step {
        for t in ds.iter() {
            let next = t.next_state.map_or(-1i64, |s| s as i64);
            writeln!(out, "{},{},{},{},{}", t.step, t.state, t.action, t.reward, next)
                .expect("string write");
        }
    }
    out
}

pub fn from_csv(text: &str, sidecar: &OfflineSidecar) -> Result<OfflineDataset, OfflineError> {
    let mut per_step = StepDataset::per_step(sidecar.horizon);
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(OfflineError::Parse {
                line: i + 1,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_usize = |f: &str, what: &str| {
            f.parse::<usize>().map_err(|e| OfflineError::Parse {
                line: i + 1,
                msg: format!("{what}: {e}"),
            })
        };
        let step = parse_usize(fields[0], "h")?;
        let state = parse_usize(fields[1], "s")?;
        let action = parse_usize(fields[2], "a")?;
        let reward = fields[3].parse::<f64>().map_err(|e| OfflineError::Parse {
            line: i + 1,
            msg: format!("r: {e}"),
        })?;
        let next_raw = fields[4].parse::<i64>().map_err(|e| OfflineError::Parse {
            line: i + 1,
            msg: format!("s_next: {e}"),
        })?;
        let next_state = if next_raw < 0 { None } else { Some(next_raw as usize) };
        if step >= sidecar.horizon {
            return Err(OfflineError::Parse {
                line: i + 1,
                msg: format!("step {step} out of range for horizon {}", sidecar.horizon),
            });
        }
        per_step[step].push(Transition {
            step,
            state,
            action,
            reward,
            next_state,
        })?;
    }
    Ok(OfflineDataset {
        per_step,
        behavior: sidecar.behavior.clone(),
        mix_uniform: sidecar.mix_uniform,
        n_episodes: sidecar.n_episodes,
        seed: sidecar.seed,
    })
}
