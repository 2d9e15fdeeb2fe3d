//! JSON run configuration: environment selection with overrides, algorithm
//! settings, seeds, offline-data sourcing, and emit flags.

use serde::{Deserialize, Serialize};

use acbench_core::algorithms::{Algo, AlgoConfig};
use acbench_core::envs::{build_env, preset, EnvConfig};
use acbench_core::mdp::{Env, MdpSpec};
use acbench_core::offline::{
    from_csv, generate_offline, optimal_mixture_table, OfflineDataset, OfflineSidecar,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub algo: AlgoConfig,
    /// Extra algorithms for sweeps; the primary `algo.algo` always runs.
    #[serde(default)]
    pub algos: Vec<Algo>,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    #[serde(default)]
    pub emit: EmitFlags,
    #[serde(default)]
    pub offline: Option<OfflineSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmitFlags {
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
    #[serde(default)]
    pub svg: bool,
}

fn yes() -> bool {
    true
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            svg: false,
        }
    }
}

/// Environment source: a named preset with field overrides, or an MDP spec
/// JSON document on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub overrides: Option<EnvOverrides>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnvOverrides {
    pub seed: Option<u64>,
    pub n_states: Option<usize>,
    pub n_actions: Option<usize>,
    pub horizon: Option<usize>,
    pub dim: Option<usize>,
    pub slip: Option<f64>,
    pub reward_sparsity: Option<f64>,
    pub dirichlet_alpha: Option<f64>,
    pub mu_concentration: Option<f64>,
    pub board_width: Option<usize>,
    pub board_height_cap: Option<usize>,
    pub n_pieces: Option<usize>,
    pub state_cap: Option<usize>,
}

impl EnvOverrides {
    fn apply(&self, cfg: &mut EnvConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(seed);
        set!(n_states);
        set!(n_actions);
        set!(horizon);
        set!(dim);
        set!(slip);
        set!(reward_sparsity);
        set!(dirichlet_alpha);
        set!(mu_concentration);
        set!(board_width);
        set!(board_height_cap);
        set!(n_pieces);
        set!(state_cap);
    }
}

impl EnvSpec {
    pub fn build(&self) -> Result<(Env, String), CliError> {
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("reading MDP spec {path}: {e}")))?;
            let env = MdpSpec::from_json(&text)
                .map_err(|e| CliError::Config(format!("MDP spec {path}: {e}")))?;
            return Ok((env, path.clone()));
        }
        let name = self
            .preset
            .as_deref()
            .ok_or_else(|| CliError::Config("env needs either `preset` or `file`".into()))?;
        let mut cfg =
            preset(name).map_err(|e| CliError::Config(format!("env preset: {e}")))?;
        if let Some(overrides) = &self.overrides {
            overrides.apply(&mut cfg);
        }
        let env = build_env(&cfg).map_err(|e| CliError::Config(format!("building env: {e}")))?;
        Ok((env, name.to_string()))
    }
}

/// Offline data source: a CSV (with its JSON sidecar next to it) or an
/// on-the-fly generation recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OfflineSpec {
    Path { path: String },
    Generate { generate: OfflineGen },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineGen {
    /// Weight on π* in the mix with the uniform policy.
    pub mix_optimal: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl OfflineSpec {
    pub fn load(&self, env: &Env) -> Result<OfflineDataset, CliError> {
        match self {
            OfflineSpec::Path { path } => {
                let csv = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("reading offline CSV {path}: {e}")))?;
                let sidecar_path = std::path::Path::new(path).with_extension("json");
                let sidecar_text = std::fs::read_to_string(&sidecar_path).map_err(|e| {
                    CliError::Config(format!("reading sidecar {}: {e}", sidecar_path.display()))
                })?;
                let sidecar: OfflineSidecar = serde_json::from_str(&sidecar_text)
                    .map_err(|e| CliError::Config(format!("sidecar: {e}")))?;
                from_csv(&csv, &sidecar)
                    .map_err(|e| CliError::Config(format!("offline CSV: {e}")))
            }
            OfflineSpec::Generate { generate } => {
                let mdp = env.tabular();
                let behavior = optimal_mixture_table(mdp, generate.mix_optimal)
                    .map_err(|e| CliError::Config(format!("behavior mixture: {e}")))?;
                let name = format!("optimal-mix-{}", generate.mix_optimal);
                generate_offline(
                    env,
                    &behavior,
                    &name,
                    1.0 - generate.mix_optimal,
                    generate.episodes,
                    generate.seed,
                )
                .map_err(|e| CliError::Runtime(format!("generating offline data: {e}")))
            }
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading config {path}: {e}")))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("parsing config {path}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds list must be nonempty".into()));
        }
        if self.algo.algo.needs_offline() && self.offline.is_none() && !self.algo.allow_empty_offline {
            return Err(CliError::Config(format!(
                "algorithm {} needs offline data (or allow_empty_offline)",
                self.algo.algo.name()
            )));
        }
        Ok(())
    }

    /// All algorithms of a sweep, primary first, de-duplicated.
    pub fn sweep_algos(&self) -> Vec<Algo> {
        let mut algos = vec![self.algo.algo];
        for a in &self.algos {
            if !algos.contains(a) {
                algos.push(*a);
            }
        }
        algos
    }

    /// Output directory, honoring the ACBENCH_OUT override.
    pub fn resolved_out_dir(&self) -> String {
        std::env::var("ACBENCH_OUT").unwrap_or_else(|_| self.out_dir.clone())
    }
}
