//! End-to-end CLI coverage: artifact layout, byte-for-byte reproducibility,
//! aggregate identities, plots, offline round-trips, and exit codes.

use std::path::Path;
use std::process::Command;

use acbench_cli::commands::{cmd_gen_offline, cmd_plot, cmd_run, cmd_sweep};
use acbench_cli::config::RunConfig;
use acbench_cli::svg::{render, PlotKind};

fn config_json(algo: &str, episodes: usize, seeds: &str, out_dir: &Path, extra: &str) -> String {
    format!(
        r#"{{
  "env": {{"preset": "chain-5"}},
  "algo": {{"algo": "{algo}", "episodes": {episodes}, "seed": 0, "snapshot_interval": 0}},
  "seeds": [{seeds}],
  "out_dir": "{}"{extra}
}}"#,
        out_dir.display()
    )
}

fn parse(cfg: &str) -> RunConfig {
    let parsed: RunConfig = serde_json::from_str(cfg).unwrap();
    parsed.validate().unwrap();
    parsed
}

#[test]
fn run_artifacts_are_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_a = parse(&config_json("nora", 400, "3", &out_a, ""));
    let cfg_b = parse(&config_json("nora", 400, "3", &out_b, ""));
    cmd_run(&cfg_a).unwrap();
    cmd_run(&cfg_b).unwrap();
    let csv_a = std::fs::read(out_a.join("episodes.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("episodes.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let sum_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let sum_b = std::fs::read(out_b.join("summary.json")).unwrap();
    assert_eq!(sum_a, sum_b);
}

#[test]
fn zero_reward_env_emits_all_zero_regret() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero");
    let cfg_text = format!(
        r#"{{
  "env": {{"preset": "random-tab", "overrides": {{"reward_sparsity": 1.0}}}},
  "algo": {{"algo": "douhua", "episodes": 60, "seed": 1, "snapshot_interval": 0}},
  "seeds": [1],
  "out_dir": "{}"
}}"#,
        out.display()
    );
    let cfg = parse(&cfg_text);
    cmd_run(&cfg).unwrap();
    let csv = std::fs::read_to_string(out.join("episodes.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cum_regret = line.split(',').nth(3).unwrap();
        assert_eq!(cum_regret.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn summary_contains_populated_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let cfg = parse(&config_json("nora", 500, "0", &out, ""));
    cmd_run(&cfg).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["exponent"]["slope"].is_number());
    assert_eq!(summary["exponent"]["valid"], serde_json::Value::Bool(true));
    assert!(summary["v_star"].as_f64().unwrap() > 4.9);
}

#[test]
fn sweep_single_seed_aggregate_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep1");
    let cfg = parse(&config_json("nora", 200, "7", &out, ""));
    cmd_sweep(&cfg).unwrap();
    let run_csv =
        std::fs::read_to_string(out.join("nora").join("seed-7").join("episodes.csv")).unwrap();
    let agg_csv = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let run_rows: Vec<Vec<String>> = run_csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    for (i, line) in agg_csv.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        // mean == lo == hi == the single run's value.
        let cum: f64 = run_rows[i][3].parse().unwrap();
        assert_eq!(fields[2].parse::<f64>().unwrap(), cum);
        assert_eq!(fields[3].parse::<f64>().unwrap(), cum);
        assert_eq!(fields[4].parse::<f64>().unwrap(), cum);
    }
}

#[test]
fn sweep_mean_column_matches_per_run_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep2");
    let cfg = parse(&config_json("nora", 150, "0, 1, 2", &out, ""));
    cmd_sweep(&cfg).unwrap();
    let mut per_seed: Vec<Vec<f64>> = Vec::new();
    for seed in [0, 1, 2] {
        let csv = std::fs::read_to_string(
            out.join("nora").join(format!("seed-{seed}")).join("episodes.csv"),
        )
        .unwrap();
        per_seed.push(
            csv.lines()
                .skip(1)
                .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
                .collect(),
        );
    }
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    for (i, line) in agg.lines().skip(1).enumerate() {
        let mean_col: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        let expected = (per_seed[0][i] + per_seed[1][i] + per_seed[2][i]) / 3.0;
        assert!((mean_col - expected).abs() < 1e-12);
    }
    // Sweep summary carries the recorded ordering.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep-summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["ordering_by_final_regret"][0], "nora");
}

#[test]
fn plot_rejects_empty_and_draws_constant_series() {
    let empty = "algo,t,cum_regret_mean,cum_regret_lo,cum_regret_hi,reward_mean,reward_lo,reward_hi,switches_mean,switches_lo,switches_hi\n";
    assert!(render(empty, PlotKind::Regret, false).is_err());

    let mut constant = String::from(
        "algo,t,cum_regret_mean,cum_regret_lo,cum_regret_hi,reward_mean,reward_lo,reward_hi,switches_mean,switches_lo,switches_hi\n",
    );
    for t in 1..=20 {
        constant.push_str(&format!("flat,{t},2.5,2.5,2.5,0,0,0,0,0,0\n"));
    }
    let svg = render(&constant, PlotKind::Regret, false).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("cumulative regret"));
}

#[test]
fn loglog_plot_annotates_sqrt_slope() {
    let mut agg = String::from(
        "algo,t,cum_regret_mean,cum_regret_lo,cum_regret_hi,reward_mean,reward_lo,reward_hi,switches_mean,switches_lo,switches_hi\n",
    );
    for t in 1..=2000 {
        let v = (t as f64).sqrt();
        agg.push_str(&format!("sqrt,{t},{v},{v},{v},0,0,0,0,0,0\n"));
    }
    let svg = render(&agg, PlotKind::Regret, true).unwrap();
    assert!(
        svg.contains("slope=0.50"),
        "missing slope annotation in {svg}"
    );
    assert!(svg.contains("log10(episode)"));
}

#[test]
fn gen_offline_roundtrips_through_run_config() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("off");
    let gen_cfg_text = format!(
        r#"{{
  "env": {{"preset": "chain-5"}},
  "algo": {{"algo": "noah-star", "episodes": 10, "seed": 0}},
  "seeds": [0],
  "out_dir": "{}",
  "offline": {{"generate": {{"mix_optimal": 0.5, "episodes": 40, "seed": 5}}}}
}}"#,
        dir.path().display()
    );
    let gen_cfg = parse(&gen_cfg_text);
    let csv_path = cmd_gen_offline(&gen_cfg, stem.to_str().unwrap()).unwrap();
    assert!(csv_path.exists());
    assert!(stem.with_extension("json").exists());

    // A hybrid run loading the dataset from disk.
    let out = dir.path().join("hybrid-out");
    let run_cfg_text = format!(
        r#"{{
  "env": {{"preset": "chain-5"}},
  "algo": {{"algo": "hybrid-nora", "episodes": 120, "seed": 0, "snapshot_interval": 0}},
  "seeds": [0],
  "out_dir": "{}",
  "offline": {{"path": "{}"}}
}}"#,
        out.display(),
        csv_path.display()
    );
    let run_cfg = parse(&run_cfg_text);
    cmd_run(&run_cfg).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["concentrability"]["overall"].is_number());
}

#[test]
fn plot_command_writes_svg_from_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plotrun");
    let cfg = parse(&config_json("nora", 120, "0, 1", &out, ""));
    cmd_sweep(&cfg).unwrap();
    let svg_path = out.join("regret.svg");
    cmd_plot(
        out.join("aggregate.csv").to_str().unwrap(),
        PlotKind::Regret,
        false,
        svg_path.to_str().unwrap(),
    )
    .unwrap();
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("</svg>"));
}

#[test]
fn env_loads_from_mdp_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("mdp.json");
    // Two states, two actions, H = 2; action 1 always pays 1.
    let spec = serde_json::json!({
        "n_states": 2,
        "n_actions": 2,
        "horizon": 2,
        "transitions": [
            [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]],
            [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
        ],
        "rewards": [
            [[0.0, 1.0], [0.0, 1.0]],
            [[0.0, 1.0], [0.0, 1.0]]
        ],
        "initial_state": 0
    });
    std::fs::write(&mdp_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = dir.path().join("file-env");
    let cfg_text = format!(
        r#"{{
  "env": {{"file": "{}"}},
  "algo": {{"algo": "nora", "episodes": 80, "seed": 0, "snapshot_interval": 0}},
  "seeds": [0],
  "out_dir": "{}"
}}"#,
        mdp_path.display(),
        out.display()
    );
    let cfg = parse(&cfg_text);
    cmd_run(&cfg).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!((summary["v_star"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_acbench");
    // Missing config: exit 1.
    let status = Command::new(bin)
        .args(["run", "-c", "/nonexistent/cfg.json"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    // Malformed config: exit 1.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let status = Command::new(bin)
        .args(["run", "-c", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    // Empty seeds: config error.
    let empty_seeds = dir.path().join("seeds.json");
    std::fs::write(
        &empty_seeds,
        r#"{"env": {"preset": "chain-5"}, "algo": {"algo": "nora", "episodes": 5, "seed": 0}, "seeds": [], "out_dir": "/tmp/x"}"#,
    )
    .unwrap();
    let status = Command::new(bin)
        .args(["run", "-c", empty_seeds.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    // Unknown plot kind: exit 1.
    let status = Command::new(bin)
        .args(["plot", "-i", "x.csv", "-k", "bogus", "-o", "y.svg"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    // Healthy run: exit 0.
    let out = dir.path().join("ok-out");
    let good = dir.path().join("good.json");
    std::fs::write(&good, config_json("nora", 50, "0", &out, "")).unwrap();
    let status = Command::new(bin)
        .args(["run", "-c", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(out.join("episodes.csv").exists());
}

#[test]
fn out_dir_env_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let configured = dir.path().join("configured");
    let overridden = dir.path().join("overridden");
    let bin = env!("CARGO_BIN_EXE_acbench");
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, config_json("nora", 40, "0", &configured, "")).unwrap();
    let status = Command::new(bin)
        .args(["run", "-c", cfg_path.to_str().unwrap()])
        .env("ACBENCH_OUT", overridden.to_str().unwrap())
        .env("ACBENCH_JOBS", "1")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(overridden.join("episodes.csv").exists());
    assert!(!configured.exists());
}
