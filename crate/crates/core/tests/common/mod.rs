//! Instance builders and independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::fmt::Write as _;

use fedmf::datagen::{generate_synthetic, FederatedDataset, SyntheticSpec};
use fedmf::federation::{phi_block, ClientState};
use fedmf::matrix::{gaussian, orthonormalize, DenseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed of the two-level dataset used by the statistical checks, fixed
/// before any of them was run.
pub const TWO_LEVEL_SEED: u64 = 2024;

/// 25 clients × 200 rows, `d = 200`, five unit signal values, noise 1e-6.
pub fn two_level_dataset() -> FederatedDataset {
    generate_synthetic(&SyntheticSpec::standard(1e-6, TWO_LEVEL_SEED)).expect("valid spec")
}

pub fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius() / b.frobenius()
}

/// `d×r` matrix with singular values spread geometrically over
/// `[1, √kappa_sq]`, so `κ²(V) = kappa_sq` exactly up to round-off.
pub fn conditioned_v(d: usize, r: usize, kappa_sq: f64, seed: u64) -> DenseMatrix {
    let q = orthonormalize(&gaussian(d, r, seed).unwrap()).unwrap();
    let w = orthonormalize(&gaussian(r, r, seed ^ 0xabcd).unwrap()).unwrap();
    let top = kappa_sq.sqrt();
    let sig: Vec<f64> = (0..r)
        .map(|k| if r == 1 { 1.0 } else { top.powf(k as f64 / (r - 1) as f64) })
        .collect();
    q.matmul(&DenseMatrix::from_diag(&sig)).unwrap().matmul(&w.transpose()).unwrap()
}

/// Centralized `(SᵀS)^α SᵀΦ`, forming the `d×d` Gram explicitly.
pub fn central_power(clients: &[ClientState], alpha: usize, r: usize, seed: u64) -> DenseMatrix {
    let s = DenseMatrix::vstack(&clients.iter().map(|c| c.shard.clone()).collect::<Vec<_>>()).unwrap();
    let phi = DenseMatrix::vstack(&clients.iter().map(|c| phi_block(c, r, seed).unwrap()).collect::<Vec<_>>()).unwrap();
    let st = s.transpose();
    let gram = st.matmul(&s).unwrap();
    let mut v = st.matmul(&phi).unwrap();
    for _ in 0..alpha {
        v = gram.matmul(&v).unwrap();
    }
    v
}

/// Sparse binary features in libsvm text, shaped like a web-page keyword
/// table: about a dozen active features per row, feature popularity
/// decaying as a power law, labels mostly `-1`.
pub fn sparse_binary_libsvm(rows: usize, dim: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let popularity: Vec<f64> = (0..dim).map(|j| 0.4 / (1.0 + j as f64).powf(0.8)).collect();
    let mut out = String::new();
    for _ in 0..rows {
        let label = if rng.random::<f64>() < 0.03 { "+1" } else { "-1" };
        out.push_str(label);
        for (j, &p) in popularity.iter().enumerate() {
            if rng.random::<f64>() < p {
                write!(out, " {}:1", j + 1).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
