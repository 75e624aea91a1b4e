use fedmf::datagen::generate_synthetic;
use fedmf::ingest::{write_csv, LabeledTable};

use crate::config::ExperimentConfig;
use crate::dataset::{shard_file_name, Manifest, MANIFEST_FILE, MANIFEST_VERSION};
use crate::error::{CliError, CliResult};
use crate::output::{create_dir, write_json};

/// Writes one CSV per client plus `manifest.json` into `cfg.out`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> CliResult<Manifest> {
    let spec = cfg
        .dataset
        .synthetic_spec(cfg.seed)
        .ok_or_else(|| CliError::config("generate needs a synthetic dataset"))?;
    let ds = generate_synthetic(&spec)?;
    create_dir(&cfg.out)?;
    let mut shards = Vec::with_capacity(ds.num_clients());
    for (i, shard) in ds.shards().iter().enumerate() {
        let name = shard_file_name(i);
        write_csv(cfg.out.join(&name), &LabeledTable::new(shard.clone(), None)?, None)?;
        shards.push(name);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        name: ds.name.clone(),
        num_clients: ds.num_clients(),
        rows_per_client: ds.shards().iter().map(|s| s.rows()).collect(),
        dim: ds.dim(),
        seed: spec.seed,
        spec,
        shards,
    };
    write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
