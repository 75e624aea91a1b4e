use std::path::{Path, PathBuf};

use fedmf::datagen::{generate_synthetic, partition, FederatedDataset, PartitionMode, SyntheticSpec};
use fedmf::ingest::{center_columns, load_csv, load_csv_with, load_libsvm, CsvOptions};
use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Index of the shard files written by `fedmf generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub num_clients: usize,
    pub rows_per_client: Vec<usize>,
    pub dim: usize,
    pub seed: u64,
    pub spec: SyntheticSpec,
    /// Shard file names, relative to the manifest.
    pub shards: Vec<String>,
}

pub fn shard_file_name(client: usize) -> String {
    format!("client_{client:03}.csv")
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|source| fedmf::Error::Io { path: path.to_path_buf(), source })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CliError::config(format!("unsupported manifest version {}", manifest.version)));
    }
    if manifest.shards.len() != manifest.num_clients || manifest.rows_per_client.len() != manifest.num_clients {
        return Err(CliError::config(format!("{}: shard list does not match num_clients", path.display())));
    }
    Ok(manifest)
}

fn load_manifest_dataset(path: &Path) -> CliResult<FederatedDataset> {
    let manifest = read_manifest(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut shards = Vec::with_capacity(manifest.num_clients);
    for (file, &rows) in manifest.shards.iter().zip(&manifest.rows_per_client) {
        let shard = load_csv(dir.join(file), false, ',')?.features;
        if shard.shape() != (rows, manifest.dim) {
            return Err(fedmf::Error::InvalidArgument(format!(
                "{file}: expected {rows}x{}, found {}x{}",
                manifest.dim,
                shard.rows(),
                shard.cols()
            ))
            .into());
        }
        shards.push(shard);
    }
    Ok(FederatedDataset::new(shards, manifest.name, PartitionMode::RowSplit)?)
}

/// Builds or loads the dataset a config describes.
pub fn load_dataset(cfg: &DatasetConfig, master_seed: u64) -> CliResult<FederatedDataset> {
    let maybe_center = |m, center| if center { center_columns(&m) } else { m };
    let ds = match cfg {
        DatasetConfig::Synthetic { .. } => {
            let spec = cfg.synthetic_spec(master_seed).expect("synthetic config");
            generate_synthetic(&spec)?
        }
        DatasetConfig::Csv {
            path,
            num_clients,
            partition: mode,
            has_label_column,
            delimiter,
            has_header,
            center,
        } => {
            let delimiter = u8::try_from(*delimiter).map_err(|_| CliError::config("csv delimiter must be a single-byte character"))?;
            let table = load_csv_with(
                path,
                CsvOptions {
                    has_label_column: *has_label_column,
                    delimiter,
                    has_header: *has_header,
                },
            )?;
            let features = maybe_center(table.features, *center);
            let mut ds = partition(&features, table.labels.as_deref(), *num_clients, *mode, master_seed)?;
            ds.name = path.display().to_string();
            ds
        }
        DatasetConfig::Libsvm {
            path,
            dim,
            num_clients,
            partition: mode,
            center,
        } => {
            let table = load_libsvm(path, *dim)?;
            let features = maybe_center(table.features, *center);
            let mut ds = partition(&features, table.labels.as_deref(), *num_clients, *mode, master_seed)?;
            ds.name = path.display().to_string();
            ds
        }
        DatasetConfig::Manifest { path } => load_manifest_dataset(path)?,
    };
    Ok(ds)
}
