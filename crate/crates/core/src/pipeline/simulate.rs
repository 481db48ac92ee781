use std::path::{Path, PathBuf};

use super::{load_config, write_text, PipelineError, Result, RunManifest};
use crate::sim::{self, GroundTruth, SimConfig};

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Simulates the configured experiment into `out`.
///
/// Besides the simulator files, writes the resolved `config.toml`.
pub fn simulate(args: &SimulateArgs) -> Result<RunManifest> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    run(&cfg, args.config.as_deref(), &args.out)
}

pub(super) fn run(
    cfg: &SimConfig,
    config_path: Option<&Path>,
    out_dir: &Path,
) -> Result<RunManifest> {
    cfg.validate()?;
    let mut manifest = RunManifest::new("simulate", Some(cfg.seed));
    if let Some(p) = config_path {
        manifest.config_file(p)?;
    }
    let out = sim::simulate(cfg)?;
    let pretrain = if cfg.n_pretrain_users > 0 {
        Some(sim::simulate_pretrain(cfg)?)
    } else {
        None
    };
    let truth = GroundTruth::build(cfg, &out)?;
    let paths = sim::write_outputs(out_dir, &out, &truth, pretrain.as_ref())
        .map_err(PipelineError::io(out_dir))?;
    write_text(out_dir, "config.toml", &cfg.to_toml())?;
    let mut names: Vec<String> = paths
        .iter()
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
        .collect();
    names.push("config.toml".into());
    manifest.param("users", cfg.n_users);
    manifest.param("pretrain_users", cfg.n_pretrain_users);
    manifest.param("events", out.events.len());
    manifest.param("bookings", out.outcomes.len());
    manifest.finish(out_dir, &names)
}
