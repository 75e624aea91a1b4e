//! `fedmf run`: one federated run per `(α, r, momentum, trial)` grid cell.

use std::fmt::Write as _;
use std::time::Instant;

use fedmf::bounds::eps_min;
use fedmf::datagen::FederatedDataset;
use fedmf::federation::{CostLedger, PowerInitOptions};
use fedmf::matrix::singular_values;
use fedmf::resampler::{ResampleMode, ResamplePolicy};
use fedmf::rng::derive_seed;
use fedmf::solver::{federated_solve, Momentum, RunRecord, SolveMode};
use serde::Serialize;

use crate::config::{momentum_name, ExperimentConfig};
use crate::dataset::load_dataset;
use crate::error::CliResult;
use crate::output::{create_dir, finite, write_json, write_text};

/// Floor of the `log10_error` column.
pub const LOG10_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, Serialize)]
pub struct DrawSummary {
    pub seed: u64,
    /// `null` when the draw was rank-deficient.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerSummary {
    pub floats_communicated: u64,
    pub aggregation_rounds: u64,
    pub server_flops: u64,
    pub client_flops_total: u64,
    pub client_flops: Vec<u64>,
}

impl From<&CostLedger> for LedgerSummary {
    fn from(l: &CostLedger) -> Self {
        Self {
            floats_communicated: l.floats_communicated(),
            aggregation_rounds: l.aggregation_rounds(),
            server_flops: l.server_flops(),
            client_flops_total: l.client_flops().iter().sum(),
            client_flops: l.client_flops().to_vec(),
        }
    }
}

/// Deterministic per-cell results; wall time lives in a separate file.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub cell: String,
    pub dataset: String,
    pub num_clients: usize,
    pub total_rows: usize,
    pub dim: usize,
    pub alpha: usize,
    pub rank: usize,
    pub momentum: &'static str,
    pub mode: SolveMode,
    pub trial: usize,
    pub base_seed: u64,
    pub resample: ResampleMode,
    pub iterations: usize,
    pub kappa: Option<f64>,
    pub kappa_sq: Option<f64>,
    pub draws: Vec<DrawSummary>,
    pub best_draw: usize,
    pub frobenius_sq: f64,
    pub eps_min: f64,
    pub final_loss: f64,
    pub final_error: f64,
    pub exact_error: f64,
    pub relative_final_error: f64,
    pub ledger: LedgerSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellTiming {
    pub cell: String,
    pub wall_seconds: f64,
}

pub fn cell_name(alpha: usize, rank: usize, momentum: Momentum, trial: usize) -> String {
    format!("a{alpha}_r{rank}_{}_t{trial:03}", momentum_name(momentum))
}

/// Seed shared by every cell of one trial, so cells differing only in
/// `α`, `r` or momentum see the same `Φ` draws.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[trial as u64])
}

pub fn log10_error(loss: f64) -> f64 {
    let err = 2.0 * loss;
    if err > 0.0 {
        err.log10().max(LOG10_FLOOR)
    } else {
        LOG10_FLOOR
    }
}

fn trajectory_csv(trajectory: &[f64]) -> String {
    let mut out = String::from("iteration,global_loss,log10_error\n");
    for (t, &loss) in trajectory.iter().enumerate() {
        writeln!(out, "{t},{loss:?},{:?}", log10_error(loss)).unwrap();
    }
    out
}

fn summarize(cfg: &ExperimentConfig, ds: &FederatedDataset, scale: f64, floor: f64, cell: &Cell, rec: &RunRecord) -> RunSummary {
    let kappa = finite(rec.kappa);
    RunSummary {
        cell: cell.name.clone(),
        dataset: ds.name.clone(),
        num_clients: ds.num_clients(),
        total_rows: ds.total_rows(),
        dim: ds.dim(),
        alpha: cell.alpha,
        rank: cell.rank,
        momentum: momentum_name(cell.momentum),
        mode: cfg.solver.mode,
        trial: cell.trial,
        base_seed: cell.base_seed,
        resample: cfg.resample,
        iterations: rec.trajectory.len() - 1,
        kappa,
        kappa_sq: kappa.map(|k| k * k),
        draws: rec.draws.iter().map(|d| DrawSummary { seed: d.seed, kappa: finite(d.kappa) }).collect(),
        best_draw: rec.draws.iter().position(|d| d.kappa == rec.kappa).unwrap_or(0),
        frobenius_sq: scale,
        eps_min: floor,
        final_loss: *rec.trajectory.last().expect("non-empty trajectory"),
        final_error: rec.final_error,
        exact_error: rec.exact_error,
        relative_final_error: if scale > 0.0 { rec.final_error / scale } else { 0.0 },
        ledger: LedgerSummary::from(&rec.ledger),
    }
}

struct Cell {
    name: String,
    alpha: usize,
    rank: usize,
    momentum: Momentum,
    trial: usize,
    base_seed: u64,
}

fn grid(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for trial in 0..cfg.trials {
        for &alpha in &cfg.alpha.to_vec() {
            for &rank in &cfg.rank.to_vec() {
                for &momentum in &cfg.momentum.to_vec() {
                    cells.push(Cell {
                        name: cell_name(alpha, rank, momentum, trial),
                        alpha,
                        rank,
                        momentum,
                        trial,
                        base_seed: trial_seed(cfg.seed, trial),
                    });
                }
            }
        }
    }
    cells
}

/// Runs the whole grid, writing `<cell>.csv`, `<cell>.json` and
/// `<cell>.timing.json` per cell under `cfg.out`.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<Vec<RunSummary>> {
    let ds = load_dataset(&cfg.dataset, cfg.seed)?;
    cfg.check_ranks(ds.total_rows(), ds.dim())?;
    let s = ds.concatenated();
    let scale = s.frobenius_sq();
    let spectrum = singular_values(&s);
    drop(s);
    create_dir(&cfg.out)?;
    let options = PowerInitOptions { parallel: cfg.parallel, ..Default::default() };
    let mut outputs = Vec::new();
    for cell in grid(cfg) {
        let start = Instant::now();
        let policy = ResamplePolicy { mode: cfg.resample, base_seed: cell.base_seed };
        let solver = cfg.solver.solver_config(cell.momentum);
        let rec = federated_solve(&ds, cell.alpha, cell.rank, &solver, cfg.solver.mode, &policy, options)?;
        let summary = summarize(cfg, &ds, scale, eps_min(&spectrum, cell.rank), &cell, &rec);
        write_text(&cfg.out.join(format!("{}.csv", cell.name)), &trajectory_csv(&rec.trajectory))?;
        write_json(&cfg.out.join(format!("{}.json", cell.name)), &summary)?;
        let timing = CellTiming { cell: cell.name.clone(), wall_seconds: start.elapsed().as_secs_f64() };
        write_json(&cfg.out.join(format!("{}.timing.json", cell.name)), &timing)?;
        outputs.push(summary);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log10_clamps() {
        assert_eq!(log10_error(0.0), LOG10_FLOOR);
        assert_eq!(log10_error(1e-40), LOG10_FLOOR);
        assert!((log10_error(0.5) - 0.0).abs() < 1e-15);
        assert!((log10_error(50.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cell_names_are_unique_across_the_grid() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"alpha": [0, 1], "rank": [2, 3], "momentum": ["none", "nesterov"], "trials": 3}"#).unwrap();
        let cells = grid(&cfg);
        assert_eq!(cells.len(), 24);
        let mut names: Vec<_> = cells.iter().map(|c| c.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 24);
        assert!(cells.iter().filter(|c| c.trial == 1).all(|c| c.base_seed == trial_seed(0, 1)));
    }

    #[test]
    fn csv_has_header_and_one_row_per_iterate() {
        let text = trajectory_csv(&[2.0, 0.5, 0.0]);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines, ["iteration,global_loss,log10_error", "0,2.0,0.6020599913279624", "1,0.5,0.0", "2,0.0,-30.0"]);
    }
}
