//! `fedmf bounds`: closed-form bounds evaluated on a dataset's spectrum.

use fedmf::bounds::{eps_min, excess_eps, high_probability_bound, FrobeniusBoundVariant};
use fedmf::matrix::singular_values;
use fedmf::resampler::{kappa_p_bound, m_for_probability, BoundInputs, KappaBoundVariant, KappaPBound};
use fedmf::Spectrum;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dataset::load_dataset;
use crate::error::CliResult;
use crate::output::{create_dir, finite, write_json};

pub const BOUNDS_FILE: &str = "bounds.json";

/// Relative tolerance for the reported numerical rank.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct KappaEntry {
    pub kappa_sq: Option<f64>,
    pub signal_term: Option<f64>,
    pub tail_term: Option<f64>,
    pub signal_dominates: bool,
}

impl From<KappaPBound> for KappaEntry {
    fn from(b: KappaPBound) -> Self {
        Self {
            kappa_sq: finite(b.kappa_sq()),
            signal_term: finite(b.signal_term),
            tail_term: finite(b.tail_term),
            signal_dominates: b.signal_dominates(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorEntry {
    pub value: Option<f64>,
    pub excess: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Variants<T> {
    pub derivation: T,
    pub headline: T,
}

/// Bounds at one `(r, α)`. Entries are `null` where `σ_r = 0` leaves a
/// bound undefined.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsEntry {
    pub rank: usize,
    pub alpha: usize,
    pub eps_min: f64,
    pub kappa_bound: Option<Variants<KappaEntry>>,
    pub error_bound: Option<Variants<ErrorEntry>>,
    /// Excess error with `r` taken as the true rank.
    pub excess_eps: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub dataset: String,
    pub num_clients: usize,
    pub total_rows: usize,
    pub dim: usize,
    pub frobenius_sq: f64,
    pub numerical_rank: usize,
    pub singular_values: Vec<f64>,
    pub p_kappa: f64,
    pub p_error: f64,
    pub target_probability: f64,
    pub m_for_probability: usize,
    pub entries: Vec<BoundsEntry>,
}

fn entry(spectrum: &Spectrum, rank: usize, alpha: usize, d: usize, cfg: &ExperimentConfig) -> BoundsEntry {
    let inputs = BoundInputs { spectrum: spectrum.clone(), r: rank, alpha, d, p: cfg.bounds.p_kappa };
    let kappa = kappa_p_bound(&inputs, KappaBoundVariant::Derivation).and_then(|derivation| {
        Ok(Variants {
            derivation: KappaEntry::from(derivation),
            headline: KappaEntry::from(kappa_p_bound(&inputs, KappaBoundVariant::Headline)?),
        })
    });
    let error = |variant| {
        high_probability_bound(spectrum, rank, alpha, cfg.bounds.p_error, variant).map(|b| ErrorEntry {
            value: finite(b.value()),
            excess: finite(b.excess),
        })
    };
    let error = error(FrobeniusBoundVariant::Derivation).and_then(|derivation| {
        Ok(Variants {
            derivation,
            headline: error(FrobeniusBoundVariant::Headline)?,
        })
    });
    let note = kappa.as_ref().err().or(error.as_ref().err()).map(|e| e.to_string());
    BoundsEntry {
        rank,
        alpha,
        eps_min: eps_min(spectrum, rank),
        kappa_bound: kappa.ok(),
        error_bound: error.ok(),
        excess_eps: excess_eps(spectrum, rank, alpha).ok().and_then(finite),
        note,
    }
}

/// Writes `bounds.json` under `cfg.out`.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> CliResult<BoundsReport> {
    let ds = load_dataset(&cfg.dataset, cfg.seed)?;
    cfg.check_ranks(ds.total_rows(), ds.dim())?;
    let s = ds.concatenated();
    let spectrum = singular_values(&s);
    let mut entries = Vec::new();
    for &rank in &cfg.rank.to_vec() {
        for &alpha in &cfg.alpha.to_vec() {
            entries.push(entry(&spectrum, rank, alpha, ds.dim(), cfg));
        }
    }
    let report = BoundsReport {
        dataset: ds.name.clone(),
        num_clients: ds.num_clients(),
        total_rows: ds.total_rows(),
        dim: ds.dim(),
        frobenius_sq: s.frobenius_sq(),
        numerical_rank: spectrum.rank(RANK_TOLERANCE),
        singular_values: spectrum.values().to_vec(),
        p_kappa: cfg.bounds.p_kappa,
        p_error: cfg.bounds.p_error,
        target_probability: cfg.bounds.target_probability,
        m_for_probability: m_for_probability(cfg.bounds.target_probability)?,
        entries,
    };
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join(BOUNDS_FILE), &report)?;
    Ok(report)
}
