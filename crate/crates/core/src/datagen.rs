//! Synthetic federated datasets `S = X + E` and row partitioning of any
//! matrix into client shards.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gaussian, orthonormalize, DenseMatrix};
use crate::rng::{self, TAG_NOISE, TAG_SHUFFLE, TAG_SIGNAL_LEFT, TAG_SIGNAL_RIGHT};

/// Parameters of a synthetic low-rank-plus-noise dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_clients: usize,
    pub rows_per_client: usize,
    pub dim: usize,
    pub true_rank: usize,
    /// Diagonal of `Σ_X`, one value per signal direction.
    pub signal_values: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 25 clients with 200 rows each, `d = 200`, five unit signal values.
    pub fn standard(noise_std: f64, seed: u64) -> Self {
        Self {
            num_clients: 25,
            rows_per_client: 200,
            dim: 200,
            true_rank: 5,
            signal_values: vec![1.0; 5],
            noise_std,
            seed,
        }
    }

    pub fn total_rows(&self) -> usize {
        self.num_clients * self.rows_per_client
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 || self.rows_per_client == 0 || self.dim == 0 {
            return Err(Error::invalid("num_clients, rows_per_client and dim must be positive"));
        }
        if self.true_rank == 0 || self.true_rank > self.total_rows().min(self.dim) {
            return Err(Error::invalid(format!(
                "true_rank {} must lie in 1..={}",
                self.true_rank,
                self.total_rows().min(self.dim)
            )));
        }
        if self.signal_values.len() != self.true_rank {
            return Err(Error::invalid(format!(
                "expected {} signal values, got {}",
                self.true_rank,
                self.signal_values.len()
            )));
        }
        if self.signal_values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("signal values must be finite and strictly positive"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        Ok(())
    }
}

/// How rows were assigned to clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    RowSplit,
    ByLabel,
    Random,
}

/// `N` client shards sharing a column dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    shards: Vec<DenseMatrix>,
    pub name: String,
    pub partition: PartitionMode,
}

impl FederatedDataset {
    pub fn new(shards: Vec<DenseMatrix>, name: impl Into<String>, partition: PartitionMode) -> Result<Self> {
        let d = shards
            .first()
            .ok_or_else(|| Error::invalid("a federated dataset needs at least one shard"))?
            .cols();
        if let Some(i) = shards.iter().position(|s| s.cols() != d) {
            return Err(Error::invalid(format!(
                "shard {i} has {} columns, expected {d}",
                shards[i].cols()
            )));
        }
        Ok(Self {
            shards,
            name: name.into(),
            partition,
        })
    }

    pub fn shards(&self) -> &[DenseMatrix] {
        &self.shards
    }

    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.shards[0].cols()
    }

    pub fn total_rows(&self) -> usize {
        self.shards.iter().map(DenseMatrix::rows).sum()
    }

    /// The global matrix `S`, shards stacked in client order.
    pub fn concatenated(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.shards).expect("shards share a column count")
    }
}

/// Builds `S = U_X Σ_X V_Xᵀ + E` and splits it row-wise into equal shards.
///
/// `U_X` (`n×r_*`) and `V_X` (`d×r_*`) come from orthonormalizing Gaussian
/// blocks, so only the columns that affect `X` are ever generated.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FederatedDataset> {
    spec.validate()?;
    let n = spec.total_rows();
    let (d, r) = (spec.dim, spec.true_rank);
    let left = orthonormalize(&gaussian(n, r, rng::derive_seed(spec.seed, &[TAG_SIGNAL_LEFT]))?)?;
    let right = orthonormalize(&gaussian(d, r, rng::derive_seed(spec.seed, &[TAG_SIGNAL_RIGHT]))?)?;
    let mut weighted = left;
    for i in 0..n {
        for (j, s) in spec.signal_values.iter().enumerate() {
            weighted.set(i, j, weighted.get(i, j) * s);
        }
    }
    let mut s = weighted.matmul(&right.transpose())?;
    if spec.noise_std > 0.0 {
        let noise = gaussian(n, d, rng::derive_seed(spec.seed, &[TAG_NOISE]))?;
        s.axpy(spec.noise_std, &noise)?;
    }
    let name = format!(
        "synthetic-N{}-n{}-d{}-r{}-noise{:e}",
        spec.num_clients, spec.rows_per_client, d, r, spec.noise_std
    );
    let mut ds = partition(&s, None, spec.num_clients, PartitionMode::RowSplit, spec.seed)?;
    ds.name = name;
    Ok(ds)
}

/// Near-equal contiguous split sizes; the first `n mod N` clients get one extra row.
fn split_sizes(n: usize, clients: usize) -> Vec<usize> {
    let (base, rem) = (n / clients, n % clients);
    (0..clients).map(|i| base + usize::from(i < rem)).collect()
}

/// Splits the rows of `rows` across `num_clients` shards.
///
/// * `RowSplit` keeps row order and cuts near-equal contiguous blocks.
/// * `ByLabel` sorts the distinct labels and sends the `k`-th one to client
///   `k mod N`, so equal labels always share a client.
/// * `Random` shuffles rows with `seed`, then cuts like `RowSplit`.
pub fn partition(
    rows: &DenseMatrix,
    labels: Option<&[i64]>,
    num_clients: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<FederatedDataset> {
    let n = rows.rows();
    if num_clients == 0 {
        return Err(Error::invalid("num_clients must be at least 1"));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} rows", l.len())));
        }
    }
    let groups: Vec<Vec<usize>> = match mode {
        PartitionMode::RowSplit | PartitionMode::Random => {
            if n < num_clients {
                return Err(Error::invalid(format!("cannot split {n} rows across {num_clients} clients")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            if mode == PartitionMode::Random {
                let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[TAG_SHUFFLE]));
                order.shuffle(&mut rng);
            }
            let mut start = 0;
            split_sizes(n, num_clients)
                .into_iter()
                .map(|len| {
                    let g = order[start..start + len].to_vec();
                    start += len;
                    g
                })
                .collect()
        }
        PartitionMode::ByLabel => {
            let labels = labels.ok_or_else(|| Error::invalid("by-label partition needs labels"))?;
            let mut by_label: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                by_label.entry(l).or_default().push(i);
            }
            if by_label.len() < num_clients {
                return Err(Error::invalid(format!(
                    "by-label partition needs at least {num_clients} distinct labels, found {}",
                    by_label.len()
                )));
            }
            let mut groups = vec![Vec::new(); num_clients];
            for (k, idx) in by_label.into_values().enumerate() {
                groups[k % num_clients].extend(idx);
            }
            for g in &mut groups {
                g.sort_unstable();
            }
            groups
        }
    };
    let shards = groups.iter().map(|g| rows.select_rows(g)).collect();
    FederatedDataset::new(shards, "partitioned", mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::singular_values;
    use proptest::prelude::*;

    #[test]
    fn noiseless_standard_spectrum() {
        let ds = generate_synthetic(&SyntheticSpec::standard(0.0, 11)).unwrap();
        assert_eq!(ds.num_clients(), 25);
        assert!(ds.shards().iter().all(|s| s.shape() == (200, 200)));
        let s = singular_values(&ds.concatenated());
        assert!(s.values()[..5].iter().all(|&v| v >= 0.999));
        assert!(s.tail(5).iter().all(|&v| v <= 1e-10), "sigma_6 = {:e}", s.sigma(6));
    }

    #[test]
    fn rank_one_frobenius() {
        let spec = SyntheticSpec {
            num_clients: 3,
            rows_per_client: 10,
            dim: 8,
            true_rank: 1,
            signal_values: vec![7.0],
            noise_std: 0.0,
            seed: 4,
        };
        let s = generate_synthetic(&spec).unwrap().concatenated();
        assert!((s.frobenius() - 7.0).abs() <= 1e-9);
    }

    #[test]
    fn noise_floor_in_range() {
        for seed in [1, 2, 3] {
            let ds = generate_synthetic(&SyntheticSpec::standard(1e-6, seed)).unwrap();
            let s6 = singular_values(&ds.concatenated()).sigma(6);
            assert!((1e-7..=1e-4).contains(&s6), "seed {seed}: sigma_6 = {s6:e}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SyntheticSpec {
            num_clients: 2,
            rows_per_client: 4,
            dim: 3,
            true_rank: 2,
            signal_values: vec![2.0, 1.0],
            noise_std: 0.1,
            seed: 9,
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let good = SyntheticSpec::standard(0.0, 1);
        assert!(generate_synthetic(&SyntheticSpec { true_rank: 6, ..good.clone() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { signal_values: vec![1.0, 1.0, 1.0, 1.0, 0.0], ..good.clone() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { noise_std: -1.0, ..good.clone() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { num_clients: 0, ..good }).is_err());
    }

    #[test]
    fn row_split_keeps_order() {
        let m = DenseMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let ds = partition(&m, None, 2, PartitionMode::RowSplit, 0).unwrap();
        assert_eq!(ds.shards()[0], m.row_block(0, 5));
        assert_eq!(ds.shards()[1], m.row_block(5, 10));
        let ds = partition(&m, None, 3, PartitionMode::RowSplit, 0).unwrap();
        let sizes: Vec<usize> = ds.shards().iter().map(DenseMatrix::rows).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
    }

    #[test]
    fn by_label_groups_labels() {
        let m = DenseMatrix::from_fn(4, 1, |i, _| i as f64);
        let ds = partition(&m, Some(&[0, 0, 1, 1]), 2, PartitionMode::ByLabel, 0).unwrap();
        assert_eq!(ds.shards()[0].as_slice(), &[0.0, 1.0]);
        assert_eq!(ds.shards()[1].as_slice(), &[2.0, 3.0]);
        assert!(partition(&m, Some(&[0, 0, 0, 0]), 2, PartitionMode::ByLabel, 0).is_err());
        assert!(partition(&m, None, 2, PartitionMode::ByLabel, 0).is_err());
    }

    #[test]
    fn concatenation_preserves_spectrum() {
        let m = gaussian(30, 6, 3).unwrap();
        let ds = partition(&m, None, 4, PartitionMode::Random, 8).unwrap();
        let a = singular_values(&m);
        let b = singular_values(&ds.concatenated());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-9 * a.max());
        }
    }

    fn sorted_rows(m: &DenseMatrix) -> Vec<Vec<u64>> {
        let mut rows: Vec<Vec<u64>> = (0..m.rows()).map(|i| m.row(i).iter().map(|x| x.to_bits()).collect()).collect();
        rows.sort();
        rows
    }

    proptest! {
        #[test]
        fn partition_preserves_row_multiset(
            n in 4usize..40,
            clients in 1usize..5,
            mode in prop_oneof![Just(PartitionMode::RowSplit), Just(PartitionMode::ByLabel), Just(PartitionMode::Random)],
            seed in any::<u64>(),
        ) {
            let m = gaussian(n, 3, seed).unwrap();
            let labels: Vec<i64> = (0..n as i64).map(|i| i % 5).collect();
            let clients = clients.min(n);
            let ds = partition(&m, Some(&labels), clients, mode, seed).unwrap();
            prop_assert_eq!(ds.num_clients(), clients);
            prop_assert_eq!(ds.total_rows(), n);
            prop_assert_eq!(sorted_rows(&ds.concatenated()), sorted_rows(&m));
        }
    }
}
