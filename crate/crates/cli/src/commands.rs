//! Command implementations: single runs, parallel seed sweeps, offline
//! dataset generation, and plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use acbench_core::algorithms::{run_algorithm, Algo, AlgoConfig, RunResult};
use acbench_core::analysis::{
    default_fit_window, exponent_fit, optimism_violation_rate, switch_curve, ExponentFit,
    RegretLedger,
};
use acbench_core::mdp::{dp_policy_eval, dp_solve_optimal, Env, PolicyTable};
use acbench_core::offline::{estimate_concentrability, ConcentrabilityReport, OfflineDataset};

use crate::config::{OfflineSpec, RunConfig};
use crate::svg;
use crate::CliError;

/// Per-run summary written as `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: String,
    pub env: String,
    pub seed: u64,
    pub episodes: usize,
    pub v_star: f64,
    pub v_uniform: f64,
    /// T·(V* − V^uniform), the linear never-learn reference.
    pub uniform_baseline: f64,
    pub final_cum_regret: f64,
    pub total_switches: usize,
    pub n_refits: usize,
    pub exponent: ExponentFit,
    pub switch_stat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimism_violation_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentrability: Option<ConcentrabilityReport>,
}

pub fn summarize(
    env: &Env,
    env_name: &str,
    seed: u64,
    result: &RunResult,
    offline: Option<&OfflineDataset>,
) -> Result<RunSummary, CliError> {
    let mdp = env.tabular();
    let uniform = PolicyTable::uniform(mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let v_uniform = dp_policy_eval(mdp, &uniform)
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .initial_value(mdp);
    // The ledger constructor enforces the record invariants (nonnegative
    // instantaneous regret, nondecreasing cumulative series).
    let ledger = RegretLedger::new(result.v_star, result.records.clone())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let series = ledger.cum_regret();
    let exponent = exponent_fit(&series, default_fit_window(series.len()))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let curve = switch_curve(&result.records);
    let optimism = if result.snapshots.is_empty() {
        None
    } else {
        let q_star = dp_solve_optimal(mdp);
        Some(optimism_violation_rate(&result.snapshots, &q_star))
    };
    let concentrability = match offline {
        Some(off) if off.n_samples() > 0 => Some(
            estimate_concentrability(off, mdp).map_err(|e| CliError::Runtime(e.to_string()))?,
        ),
        _ => None,
    };
    Ok(RunSummary {
        algo: result.algo.name().to_string(),
        env: env_name.to_string(),
        seed,
        episodes: result.records.len(),
        v_star: result.v_star,
        v_uniform,
        uniform_baseline: result.records.len() as f64 * (result.v_star - v_uniform),
        final_cum_regret: result.final_cum_regret(),
        total_switches: result.total_switches(),
        n_refits: result.n_refits,
        exponent,
        switch_stat: curve.log_growth_stat,
        optimism_violation_rate: optimism,
        concentrability,
    })
}

pub fn episodes_csv(result: &RunResult) -> String {
    let mut out = String::from("t,reward,regret,cum_regret,switch,cum_switches,reset\n");
    for r in &result.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t,
            r.episode_return,
            r.instant_regret,
            r.cum_regret,
            u8::from(r.switched),
            r.cum_switches,
            u8::from(r.reset)
        )
        .expect("string write");
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("creating {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))
}

fn load_offline(cfg: &RunConfig, env: &Env) -> Result<Option<OfflineDataset>, CliError> {
    match &cfg.offline {
        Some(spec) => Ok(Some(spec.load(env)?)),
        None => Ok(None),
    }
}

struct SingleOutcome {
    result: RunResult,
    summary: RunSummary,
}

fn execute(
    env: &Env,
    env_name: &str,
    algo_cfg: &AlgoConfig,
    offline: Option<&OfflineDataset>,
) -> Result<SingleOutcome, CliError> {
    let result = run_algorithm(env, algo_cfg, offline)
        .map_err(|e| CliError::Runtime(format!("{} run failed: {e}", algo_cfg.algo.name())))?;
    let summary = summarize(env, env_name, algo_cfg.seed, &result, offline)?;
    Ok(SingleOutcome { result, summary })
}

/// `acbench run`: one (algo, env, seed) run; the first listed seed is used.
pub fn cmd_run(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let (env, env_name) = cfg.env.build()?;
    let offline = load_offline(cfg, &env)?;
    let mut algo_cfg = cfg.algo.clone();
    algo_cfg.seed = cfg.seeds[0];
    let outcome = execute(&env, &env_name, &algo_cfg, offline.as_ref())?;

    let out_dir = PathBuf::from(cfg.resolved_out_dir());
    if cfg.emit.csv {
        write_file(&out_dir.join("episodes.csv"), &episodes_csv(&outcome.result))?;
    }
    if cfg.emit.json {
        write_file(
            &out_dir.join("summary.json"),
            &to_json_pretty(&outcome.summary)?,
        )?;
    }
    Ok(out_dir)
}

/// Mean and central-80% band of one metric across runs at each episode.
fn band(values: &mut [f64]) -> (f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let rank = |q: f64| values[((n - 1) as f64 * q).round() as usize];
    (mean, rank(0.1), rank(0.9))
}

pub fn aggregate_csv(runs: &[(Algo, Vec<RunResult>)]) -> String {
    let mut out = String::from(
        "algo,t,cum_regret_mean,cum_regret_lo,cum_regret_hi,\
         reward_mean,reward_lo,reward_hi,switches_mean,switches_lo,switches_hi\n",
    );
    for (algo, results) in runs {
        let t_max = results.iter().map(|r| r.records.len()).min().unwrap_or(0);
        for t in 0..t_max {
            let mut regret: Vec<f64> = results.iter().map(|r| r.records[t].cum_regret).collect();
            let mut reward: Vec<f64> =
                results.iter().map(|r| r.records[t].episode_return).collect();
            let mut switches: Vec<f64> = results
                .iter()
                .map(|r| r.records[t].cum_switches as f64)
                .collect();
            let (rm, rl, rh) = band(&mut regret);
            let (wm, wl, wh) = band(&mut reward);
            let (sm, sl, sh) = band(&mut switches);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                algo.name(),
                t + 1,
                rm,
                rl,
                rh,
                wm,
                wl,
                wh,
                sm,
                sl,
                sh
            )
            .expect("string write");
        }
    }
    out
}

/// Per-algorithm aggregate statistics plus the qualitative ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub env: String,
    pub seeds: Vec<u64>,
    pub per_algo: Vec<AlgoAggregate>,
    /// Algorithms sorted by mean final cumulative regret, best first.
    /// Recorded for qualitative comparison, not asserted anywhere.
    pub ordering_by_final_regret: Vec<String>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoAggregate {
    pub algo: String,
    pub mean_final_cum_regret: f64,
    pub mean_total_switches: f64,
    /// Exponent fit of the seed-mean cumulative regret curve.
    pub exponent_of_mean: ExponentFit,
    pub uniform_baseline: f64,
}

/// `acbench sweep`: all (algo, seed) pairs in parallel, per-run artifacts
/// plus `aggregate.csv` and `sweep-summary.json`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let (env, env_name) = cfg.env.build()?;
    let offline = load_offline(cfg, &env)?;
    let out_dir = PathBuf::from(cfg.resolved_out_dir());
    let algos = cfg.sweep_algos();

    let jobs: Vec<(Algo, u64)> = algos
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();

    let outcomes: Vec<(Algo, u64, Result<SingleOutcome, CliError>)> = jobs
        .par_iter()
        .map(|&(algo, seed)| {
            let mut algo_cfg = cfg.algo.clone();
            algo_cfg.algo = algo;
            algo_cfg.seed = seed;
            (algo, seed, execute(&env, &env_name, &algo_cfg, offline.as_ref()))
        })
        .collect();

    let mut failures = Vec::new();
    let mut by_algo: Vec<(Algo, Vec<RunResult>)> = Vec::new();
    for (algo, seed, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                let run_dir = out_dir.join(algo.name()).join(format!("seed-{seed}"));
                if cfg.emit.csv {
                    write_file(&run_dir.join("episodes.csv"), &episodes_csv(&o.result))?;
                }
                if cfg.emit.json {
                    write_file(&run_dir.join("summary.json"), &to_json_pretty(&o.summary)?)?;
                }
                match by_algo.iter_mut().find(|(a, _)| *a == algo) {
                    Some((_, v)) => v.push(o.result),
                    None => by_algo.push((algo, vec![o.result])),
                }
            }
            Err(e) => {
                let msg = format!("{} seed {seed}: {e}", algo.name());
                eprintln!("warning: run failed, excluded from aggregate: {msg}");
                failures.push(msg);
            }
        }
    }
    if by_algo.is_empty() {
        return Err(CliError::Runtime("every run in the sweep failed".into()));
    }

    let csv = aggregate_csv(&by_algo);
    write_file(&out_dir.join("aggregate.csv"), &csv)?;

    let mdp = env.tabular();
    let uniform = PolicyTable::uniform(mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let v_uniform = dp_policy_eval(mdp, &uniform)
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .initial_value(mdp);

    let mut per_algo = Vec::new();
    for (algo, results) in &by_algo {
        let n = results.len() as f64;
        let t_len = results.iter().map(|r| r.records.len()).min().unwrap_or(0);
        let mean_curve: Vec<f64> = (0..t_len)
            .map(|t| results.iter().map(|r| r.records[t].cum_regret).sum::<f64>() / n)
            .collect();
        let exponent = exponent_fit(&mean_curve, default_fit_window(t_len))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let v_star = results[0].v_star;
        per_algo.push(AlgoAggregate {
            algo: algo.name().to_string(),
            mean_final_cum_regret: results.iter().map(|r| r.final_cum_regret()).sum::<f64>() / n,
            mean_total_switches: results.iter().map(|r| r.total_switches() as f64).sum::<f64>()
                / n,
            exponent_of_mean: exponent,
            uniform_baseline: t_len as f64 * (v_star - v_uniform),
        });
    }
    let mut ordering: Vec<(String, f64)> = per_algo
        .iter()
        .map(|a| (a.algo.clone(), a.mean_final_cum_regret))
        .collect();
    ordering.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite regret"));

    let summary = SweepSummary {
        env: env_name,
        seeds: cfg.seeds.clone(),
        per_algo,
        ordering_by_final_regret: ordering.into_iter().map(|(a, _)| a).collect(),
        failures,
    };
    write_file(&out_dir.join("sweep-summary.json"), &to_json_pretty(&summary)?)?;

    if cfg.emit.svg {
        let svg_text = svg::render(&csv, svg::PlotKind::Regret, false)?;
        write_file(&out_dir.join("regret.svg"), &svg_text)?;
    }
    Ok(out_dir)
}

/// `acbench gen-offline`: roll out the configured behavior mixture and write
/// `<out>.csv` plus the `<out>.json` sidecar.
pub fn cmd_gen_offline(cfg: &RunConfig, out_stem: &str) -> Result<PathBuf, CliError> {
    let (env, _) = cfg.env.build()?;
    let spec = cfg
        .offline
        .as_ref()
        .ok_or_else(|| CliError::Config("gen-offline needs an `offline` section".into()))?;
    if matches!(spec, OfflineSpec::Path { .. }) {
        return Err(CliError::Config(
            "gen-offline needs `offline.generate`, not a path".into(),
        ));
    }
    let dataset = spec.load(&env)?;
    let csv_path = PathBuf::from(format!("{out_stem}.csv"));
    write_file(&csv_path, &acbench_core::offline::to_csv(&dataset))?;
    let sidecar = acbench_core::offline::OfflineSidecar {
        behavior: dataset.behavior.clone(),
        mix_uniform: dataset.mix_uniform,
        n_episodes: dataset.n_episodes,
        n_samples: dataset.n_samples(),
        horizon: dataset.horizon(),
        seed: dataset.seed,
    };
    write_file(
        &PathBuf::from(format!("{out_stem}.json")),
        &to_json_pretty(&sidecar)?,
    )?;
    Ok(csv_path)
}

/// `acbench plot`: aggregate CSV to a standalone SVG chart.
pub fn cmd_plot(
    input: &str,
    kind: svg::PlotKind,
    loglog: bool,
    output: &str,
) -> Result<(), CliError> {
    let csv = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("reading {input}: {e}")))?;
    let rendered = svg::render(&csv, kind, loglog)?;
    write_file(Path::new(output), &rendered)
}
