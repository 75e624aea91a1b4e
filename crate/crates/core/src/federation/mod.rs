//! Simulated N-client / one-server federation: distributed randomized power
//! iteration with masked aggregation, plus communication and flop accounting.
//!
//! Rounds are barrier-synchronized. Client work inside a round may run on a
//! rayon pool, but the server always sums contributions in client-id order,
//! so results do not depend on scheduling.

mod secure;

use rayon::prelude::*;
use serde::Serialize;

pub use secure::{masked_uploads, secure_aggregate, AggregationRound};

use crate::datagen::FederatedDataset;
use crate::error::{Error, Result};
use crate::matrix::{gaussian, AtomicFlops, DenseMatrix};
use crate::rng::{self, TAG_MASK, TAG_PHI};

/// One client's private data and randomness.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub shard: DenseMatrix,
    /// Root of every random quantity the client draws (`Φ^i`, `U_0^i`).
    pub rng_seed: u64,
    pub local_u: Option<DenseMatrix>,
}

/// Clients for every shard, with seeds derived from `master_seed`.
pub fn clients_from_dataset(ds: &FederatedDataset, master_seed: u64) -> Vec<ClientState> {
    ds.shards()
        .iter()
        .enumerate()
        .map(|(id, shard)| ClientState {
            id,
            shard: shard.clone(),
            rng_seed: rng::derive_seed(master_seed, &[id as u64]),
            local_u: None,
        })
        .collect()
}

fn check_clients(clients: &[ClientState]) -> Result<usize> {
    let d = clients
        .first()
        .ok_or_else(|| Error::invalid("federation needs at least one client"))?
        .shard
        .cols();
    if let Some((i, c)) = clients.iter().enumerate().find(|(i, c)| c.id != *i) {
        return Err(Error::invalid(format!("client at position {i} has id {}", c.id)));
    }
    if let Some(c) = clients.iter().find(|c| c.shard.cols() != d) {
        return Err(Error::invalid(format!(
            "client {} shard has {} columns, expected {d}",
            c.id,
            c.shard.cols()
        )));
    }
    Ok(d)
}

/// Running totals of communication and computation; every counter only grows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CostLedger {
    floats_communicated: u64,
    server_flops: u64,
    client_flops: Vec<u64>,
    aggregation_rounds: u64,
}

impl CostLedger {
    pub fn new(num_clients: usize) -> Self {
        Self {
            client_flops: vec![0; num_clients],
            ..Self::default()
        }
    }

    pub fn floats_communicated(&self) -> u64 {
        self.floats_communicated
    }

    pub fn server_flops(&self) -> u64 {
        self.server_flops
    }

    pub fn client_flops(&self) -> &[u64] {
        &self.client_flops
    }

    pub fn aggregation_rounds(&self) -> u64 {
        self.aggregation_rounds
    }

    pub fn add_floats(&mut self, floats: u64) {
        self.floats_communicated += floats;
    }

    pub fn add_server_flops(&mut self, flops: u64) {
        self.server_flops += flops;
    }

    pub fn add_client_flops(&mut self, client: usize, flops: u64) {
        self.client_flops[client] += flops;
    }

    /// Adds another ledger's counters to this one.
    pub fn absorb(&mut self, other: &CostLedger) {
        assert_eq!(self.client_flops.len(), other.client_flops.len(), "ledgers for different federations");
        self.floats_communicated += other.floats_communicated;
        self.server_flops += other.server_flops;
        self.aggregation_rounds += other.aggregation_rounds;
        for (a, b) in self.client_flops.iter_mut().zip(&other.client_flops) {
            *a += b;
        }
    }
}

/// Uploads plus server-side summation; records `N·d·r` floats upstream and
/// `N·d·r` server additions.
fn aggregate_round(
    contributions: Vec<DenseMatrix>,
    mask_seed: u64,
    secure: bool,
    ledger: &mut CostLedger,
) -> Result<DenseMatrix> {
    let floats = contributions.iter().map(|c| c.as_slice().len() as u64).sum::<u64>();
    let mut round = AggregationRound::new(contributions, mask_seed)?;
    if !secure {
        round = round.with_mask_scale(0.0);
    }
    let v = secure_aggregate(&round);
    ledger.add_floats(floats);
    ledger.add_server_flops(floats);
    ledger.aggregation_rounds += 1;
    Ok(v)
}

/// Sends `v` to `num_clients` clients, recording `N·d·r` floats downstream.
pub fn broadcast(v: &DenseMatrix, num_clients: usize, ledger: &mut CostLedger) -> Vec<DenseMatrix> {
    ledger.add_floats((num_clients * v.as_slice().len()) as u64);
    vec![v.clone(); num_clients]
}

#[derive(Debug, Clone, Copy)]
pub struct PowerInitOptions {
    /// Mask uploads; when off, the server sums raw contributions.
    pub secure: bool,
    /// Run client work of each round on the rayon pool.
    pub parallel: bool,
}

impl Default for PowerInitOptions {
    fn default() -> Self {
        Self {
            secure: true,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerInitOutput {
    /// `(SᵀS)^α SᵀΦ`, shape `d×r`.
    pub v: DenseMatrix,
    pub ledger: CostLedger,
}

/// Client `i`'s block `Φ^i` (`n_i×r`) for the draw `seed`.
pub fn phi_block(client: &ClientState, r: usize, seed: u64) -> Result<DenseMatrix> {
    gaussian(client.shard.rows(), r, rng::derive_seed(client.rng_seed, &[TAG_PHI, seed]))
}

/// `Sᵀ W` evaluated as `(Wᵀ S)ᵀ`, whose inner loop runs along rows of `S`.
fn shard_t_times(shard: &DenseMatrix, w: &DenseMatrix, flops: &AtomicFlops) -> Result<DenseMatrix> {
    Ok(w.t_matmul_counted(shard, flops)?.transpose())
}

fn map_clients<T: Send>(
    clients: &[ClientState],
    parallel: bool,
    f: impl Fn(&ClientState) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        clients.par_iter().map(f).collect()
    } else {
        clients.iter().map(f).collect()
    }
}

/// Distributed randomized power iteration.
///
/// Round 0 aggregates `V = Σ_i S^iᵀ Φ^i`; each of the `α` further rounds
/// aggregates `Σ_i S^iᵀ (S^i V)`. Products run right to left, so nothing
/// larger than `max(n_i, d)×r` is formed. Every round is one upload and one
/// broadcast, `2·N·d·r` floats.
pub fn power_init(
    clients: &[ClientState],
    alpha: usize,
    r: usize,
    seed: u64,
    options: PowerInitOptions,
) -> Result<PowerInitOutput> {
    let d = check_clients(clients)?;
    if r == 0 {
        return Err(Error::invalid("rank r must be at least 1"));
    }
    let n = clients.len();
    let mut ledger = CostLedger::new(n);
    let counters: Vec<AtomicFlops> = (0..n).map(|_| AtomicFlops::new()).collect();
    let mask_seed = |round: usize| rng::derive_seed(seed, &[TAG_MASK, round as u64]);

    let contributions = map_clients(clients, options.parallel, |c| {
        let phi = phi_block(c, r, seed)?;
        shard_t_times(&c.shard, &phi, &counters[c.id])
    })?;
    let mut v = aggregate_round(contributions, mask_seed(0), options.secure, &mut ledger)?;
    let mut copies = broadcast(&v, n, &mut ledger);

    for round in 1..=alpha {
        let contributions = map_clients(clients, options.parallel, |c| {
            let local_v = &copies[c.id];
            let sv = c.shard.matmul_t_counted(&local_v.transpose(), &counters[c.id])?;
            shard_t_times(&c.shard, &sv, &counters[c.id])
        })?;
        v = aggregate_round(contributions, mask_seed(round), options.secure, &mut ledger)?;
        copies = broadcast(&v, n, &mut ledger);
    }
    debug_assert_eq!(v.shape(), (d, r));
    for (i, c) in counters.iter().enumerate() {
        ledger.add_client_flops(i, c.get());
    }
    Ok(PowerInitOutput { v, ledger })
}
