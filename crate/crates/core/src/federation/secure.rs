use crate::error::{Error, Result};
use crate::matrix::{gaussian, DenseMatrix};
use crate::rng::{self, TAG_MASK};

/// One server-side summation over per-client `d×r` contributions.
///
/// Every ordered pair `i < j` shares a mask `M_ij = scale · G_ij` where
/// `G_ij` is a Gaussian matrix from a seed both clients derive from
/// `mask_seed`. Client `i` uploads `V^i + Σ_{j>i} M_ij − Σ_{j<i} M_ji`, so
/// the masks cancel in the sum. `scale` defaults to the smallest power of
/// two at or above the largest contribution entry, which keeps cancellation
/// error near machine precision relative to the data.
#[derive(Debug, Clone)]
pub struct AggregationRound {
    contributions: Vec<DenseMatrix>,
    mask_seed: u64,
    mask_scale: f64,
}

impl AggregationRound {
    pub fn new(contributions: Vec<DenseMatrix>, mask_seed: u64) -> Result<Self> {
        let shape = contributions
            .first()
            .ok_or_else(|| Error::invalid("aggregation round needs at least one contribution"))?
            .shape();
        if let Some(i) = contributions.iter().position(|c| c.shape() != shape) {
            return Err(Error::invalid(format!(
                "contribution {i} has shape {:?}, expected {shape:?}",
                contributions[i].shape()
            )));
        }
        let max = contributions.iter().map(DenseMatrix::max_abs).fold(0.0, f64::max);
        let mask_scale = if max > 0.0 { 2f64.powi(max.log2().ceil() as i32) } else { 1.0 };
        Ok(Self {
            contributions,
            mask_seed,
            mask_scale,
        })
    }

    /// Overrides the mask magnitude; `0.0` disables masking.
    pub fn with_mask_scale(mut self, scale: f64) -> Self {
        self.mask_scale = scale;
        self
    }

    pub fn contributions(&self) -> &[DenseMatrix] {
        &self.contributions
    }

    pub fn mask_scale(&self) -> f64 {
        self.mask_scale
    }

    pub fn num_clients(&self) -> usize {
        self.contributions.len()
    }

    /// Seed of the mask shared by clients `i < j`.
    pub fn pair_seed(&self, i: usize, j: usize) -> u64 {
        debug_assert!(i < j);
        rng::derive_seed(self.mask_seed, &[TAG_MASK, i as u64, j as u64])
    }

    fn pair_mask(&self, i: usize, j: usize) -> DenseMatrix {
        let (r, c) = self.contributions[0].shape();
        gaussian(r, c, self.pair_seed(i, j))
            .expect("contribution shapes are positive")
            .scaled(self.mask_scale)
    }
}

/// What each client actually sends. With one client there is nobody to pair
/// with, so the single contribution passes through unmasked.
pub fn masked_uploads(round: &AggregationRound) -> Vec<DenseMatrix> {
    let n = round.num_clients();
    let mut uploads = round.contributions.clone();
    if round.mask_scale == 0.0 {
        return uploads;
    }
    for i in 0..n {
        for j in i + 1..n {
            let m = round.pair_mask(i, j);
            uploads[i].axpy(1.0, &m).expect("equal shapes");
            uploads[j].axpy(-1.0, &m).expect("equal shapes");
        }
    }
    uploads
}

/// Server-side sum of the masked uploads, taken in client-id order.
pub fn secure_aggregate(round: &AggregationRound) -> DenseMatrix {
    sum_in_order(&masked_uploads(round))
}

pub(crate) fn sum_in_order(parts: &[DenseMatrix]) -> DenseMatrix {
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc.axpy(1.0, p).expect("equal shapes");
    }
    acc
}
