//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use ccm_core::coalition::{ProtocolMode, DEFAULT_MAX_BLOCK};
use ccm_core::heuristic::HeuristicConfig;
use ccm_core::model::ModelParams;
use ccm_core::mpc::MpcConfig;
use ccm_core::sim::{RunConfig, Strategy};
use serde::Deserialize;

use crate::Failure;

/// Every field is optional; absent ones fall back to the reference instance and defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub params: ModelParams,
    pub mpc: MpcConfig,
    pub heuristic: HeuristicConfig,
    pub strategy: Strategy,
    pub mode: ProtocolMode,
    pub total_days: usize,
    pub epoch_days: usize,
    pub max_block_size: usize,
    pub output_dir: PathBuf,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            params: ModelParams::reference(),
            mpc: MpcConfig::default(),
            heuristic: HeuristicConfig::default(),
            strategy: Strategy::Controlled,
            mode: ProtocolMode::WithRedistribution,
            total_days: 720,
            epoch_days: 30,
            max_block_size: DEFAULT_MAX_BLOCK,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn run_config(&self, strategy: Strategy) -> Result<RunConfig, Failure> {
        let cfg = RunConfig {
            params: self.params.clone(),
            mpc: self.mpc.clone(),
            heuristic: self.heuristic.clone(),
            strategy,
            mode: self.mode,
            total_days: self.total_days,
            epoch_days: self.epoch_days,
            max_block_size: self.max_block_size,
        };
        cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Parses `NxK` (regions by boats).
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (n, k) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("size {s:?} is not of the form NxK"))?;
    let n = n.trim().parse().map_err(|_| format!("bad region count in {s:?}"))?;
    let k = k.trim().parse().map_err(|_| format!("bad boat count in {s:?}"))?;
    if n == 0 || k == 0 {
        return Err(format!("size {s:?} must be positive"));
    }
    Ok((n, k))
}

/// The configured regions with `boats` boats cycling through the configured catchabilities.
pub fn resize_fleet(params: &ModelParams, regions: usize, boats: usize) -> Result<ModelParams, Failure> {
    if regions != params.n_regions() {
        return Err(Failure::Config(format!(
            "benchmark size asks for {regions} regions but the config has {}",
            params.n_regions()
        )));
    }
    let gammas = params.catchability();
    let cycled = (0..boats).map(|k| gammas[k % gammas.len()]).collect();
    ModelParams::new(
        params.inflow().to_vec(),
        params.survival().to_vec(),
        cycled,
        params.initial_stock().to_vec(),
    )
    .map_err(|e| Failure::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("4x12"), Ok((4, 12)));
        assert!(parse_size("4by12").is_err());
        assert!(parse_size("0x3").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"total_day": 3}"#).is_err());
        let c: ConfigFile = serde_json::from_str(r#"{"total_days": 3, "mpc": {"horizon": 5}}"#).unwrap();
        assert_eq!(c.total_days, 3);
        assert_eq!(c.mpc.horizon, 5);
        assert_eq!(c.params, ModelParams::reference());
    }

    #[test]
    fn fleet_resize_cycles_catchability() {
        let p = resize_fleet(&ModelParams::reference(), 4, 8).unwrap();
        assert_eq!(p.catchability()[6], 0.08);
        assert!(resize_fleet(&ModelParams::reference(), 3, 8).is_err());
    }
}
