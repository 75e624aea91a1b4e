//! Closed-form error quantities for rank-`r` reconstructions through a
//! power-initialized `V`, and a Monte-Carlo coverage check for the
//! high-probability bound.

use serde::{Deserialize, Serialize};

use crate::datagen::FederatedDataset;
use crate::error::{Error, Result};
use crate::federation::{clients_from_dataset, power_init, PowerInitOptions};
use crate::matrix::{singular_values, top_right_singular_vectors, DenseMatrix, Spectrum};
use crate::resampler::{check_probability, sigma_r};
use crate::solver::exact_solution;

/// Relative slack (times `‖S‖²_F`) granted to measured errors when they are
/// compared with a bound. Errors are sums of squared residuals whose entries
/// carry cancellation error of order `ε·|S_ij|`; once a bound sits within
/// this distance of the spectral floor, floating point cannot resolve the
/// difference.
pub const ROUNDOFF_ALLOWANCE: f64 = 1e-12;

/// `ε_min = Σ_{i>r} σ_i²`, the smallest error any rank-`r` factorization
/// can reach.
pub fn eps_min(spectrum: &Spectrum, r: usize) -> f64 {
    spectrum.tail(r).iter().map(|s| s * s).sum()
}

/// `‖S − S V_* V_*ᵀ‖²_F` with `V_*` the top-`r` right singular vectors: the
/// Eckart–Young floor evaluated through an actual projection.
pub fn eckart_young_residual(s: &DenseMatrix, r: usize) -> Result<f64> {
    let v = top_right_singular_vectors(s, r)?;
    let u = exact_solution(s, &v)?;
    Ok(s.sub(&u.matmul(&v.transpose())?)?.frobenius_sq())
}

/// Published forms of the high-probability bound's multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrobeniusBoundVariant {
    /// `2r·p⁻²·(ln p⁻¹ + r ln 2)`
    #[default]
    Derivation,
    /// `2r·p⁻¹·(ln p⁻² + r ln 2)`
    Headline,
}

/// `eps_min + excess`, kept apart because the excess is often far below
/// the resolution of `eps_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrobeniusBound {
    pub eps_min: f64,
    pub excess: f64,
}

impl FrobeniusBound {
    pub fn value(&self) -> f64 {
        self.eps_min + self.excess
    }
}

/// `σ_i²·(σ²_max − σ_i²)/σ_r²·(σ_i/σ_r)^{4α}`
fn tail_weight(spectrum: &Spectrum, s_r: f64, alpha: usize, i: usize) -> f64 {
    let smax2 = spectrum.max() * spectrum.max();
    let si = spectrum.sigma(i);
    si * si * (smax2 - si * si) / (s_r * s_r) * (si / s_r).powi(4 * alpha as i32)
}

/// With probability at least `1 − 2p` over the Gaussian draw,
/// `min_U ‖S − U Vᵀ‖²_F` is below
/// `Σ_{i>r} σ_i² (1 + c(p, r)·(σ²_max − σ_i²)/σ_r²·(σ_i/σ_r)^{4α})`.
pub fn high_probability_bound(
    spectrum: &Spectrum,
    r: usize,
    alpha: usize,
    p: f64,
    variant: FrobeniusBoundVariant,
) -> Result<FrobeniusBound> {
    check_probability(p)?;
    let s_r = sigma_r(spectrum, r)?;
    let rf = r as f64;
    let c = match variant {
        FrobeniusBoundVariant::Derivation => 2.0 * rf / (p * p) * ((1.0 / p).ln() + std::f64::consts::LN_2 * rf),
        FrobeniusBoundVariant::Headline => 2.0 * rf / p * ((1.0 / (p * p)).ln() + std::f64::consts::LN_2 * rf),
    };
    let excess = (r + 1..=spectrum.len()).map(|i| c * tail_weight(spectrum, s_r, alpha, i)).sum();
    Ok(FrobeniusBound {
        eps_min: eps_min(spectrum, r),
        excess,
    })
}

/// Excess error `ε` at the true rank `r_*`:
/// `Σ_{i>r_*} σ_i²·32 ln 4·r_*(r_*+1)·(σ²_max − σ_i²)/σ_{r_*}²·(σ_i/σ_{r_*})^{4α}`.
pub fn excess_eps(spectrum: &Spectrum, r_star: usize, alpha: usize) -> Result<f64> {
    let s_r = sigma_r(spectrum, r_star)?;
    let rf = r_star as f64;
    let c = 32.0 * 4f64.ln() * rf * (rf + 1.0);
    Ok((r_star + 1..=spectrum.len()).map(|i| c * tail_weight(spectrum, s_r, alpha, i)).sum())
}

/// A measured error next to every bound that applies to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub eps_min: f64,
    pub measured_error: f64,
    pub high_probability_bound: f64,
    pub excess_eps: f64,
    /// `measured ≥ eps_min − 1e-9·scale`
    pub above_floor: bool,
    /// `measured < bound + ROUNDOFF_ALLOWANCE·scale`
    pub within_bound: bool,
    /// `measured ≤ eps_min + excess_eps + ROUNDOFF_ALLOWANCE·scale`
    pub within_excess_eps: bool,
}

/// `scale` is `‖S‖²_F`.
pub fn error_report(spectrum: &Spectrum, measured: f64, r: usize, alpha: usize, p: f64, scale: f64) -> Result<ErrorReport> {
    let bound = high_probability_bound(spectrum, r, alpha, p, FrobeniusBoundVariant::Derivation)?;
    let eps = excess_eps(spectrum, r, alpha)?;
    let slack = ROUNDOFF_ALLOWANCE * scale;
    Ok(ErrorReport {
        eps_min: bound.eps_min,
        measured_error: measured,
        high_probability_bound: bound.value(),
        excess_eps: eps,
        above_floor: measured >= bound.eps_min - 1e-9 * scale,
        within_bound: measured < bound.value() + slack,
        within_excess_eps: measured <= bound.eps_min + eps + slack,
    })
}

/// Outcome of [`verify_bound_coverage`].
#[derive(Debug, Clone)]
pub struct Coverage {
    pub bound: FrobeniusBound,
    /// Measured error of the exact solution, one per trial.
    pub errors: Vec<f64>,
    pub hits: usize,
    pub scale: f64,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.hits as f64 / self.errors.len() as f64
    }
}

/// Fresh Gaussian draw per trial (seed `base_seed + j`), power
/// initialization, closed-form `U`, and a count of trials whose global error
/// falls under the high-probability bound (with [`ROUNDOFF_ALLOWANCE`]).
pub fn verify_bound_coverage(
    dataset: &FederatedDataset,
    r: usize,
    alpha: usize,
    p: f64,
    trials: usize,
    base_seed: u64,
) -> Result<Coverage> {
    if trials < 50 {
        return Err(Error::invalid(format!("coverage estimates need at least 50 trials, got {trials}")));
    }
    let s = dataset.concatenated();
    let spectrum = singular_values(&s);
    let bound = high_probability_bound(&spectrum, r, alpha, p, FrobeniusBoundVariant::Derivation)?;
    let scale = s.frobenius_sq();
    let limit = bound.value() + ROUNDOFF_ALLOWANCE * scale;
    let clients = clients_from_dataset(dataset, base_seed);
    let mut errors = Vec::with_capacity(trials);
    for j in 0..trials {
        let v = power_init(&clients, alpha, r, base_seed.wrapping_add(j as u64), PowerInitOptions::default())?.v;
        let vt = v.transpose();
        let mut err = 0.0;
        for c in &clients {
            let u = exact_solution(&c.shard, &v)?;
            err += c.shard.sub(&u.matmul(&vt)?)?.frobenius_sq();
        }
        errors.push(err);
    }
    let hits = errors.iter().filter(|&&e| e < limit).count();
    Ok(Coverage {
        bound,
        errors,
        hits,
        scale,
    })
}
