//! Multiple Gaussian draws for the power initialization, keeping the
//! best-conditioned `V`, and the closed-form condition-number bound that
//! tells how many draws are worth paying for.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{power_init, ClientState, CostLedger, PowerInitOptions};
use crate::matrix::{condition_number, DenseMatrix, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Exactly `m` draws, keep the best.
    FixedM(usize),
    /// Enough draws that one lands under the bound with probability `P`.
    TargetProbability(f64),
    /// Draw until `κ(V) ≤ kappa_target`, failing after `max_draws`.
    Threshold { kappa_target: f64, max_draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplePolicy {
    pub mode: ResampleMode,
    /// Draw `j` uses seed `base_seed + j`.
    pub base_seed: u64,
}

impl ResamplePolicy {
    /// One draw at `seed`.
    pub fn single(seed: u64) -> Self {
        Self {
            mode: ResampleMode::FixedM(1),
            base_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ResampleMode::FixedM(0) => Err(Error::invalid("fixed_m needs m >= 1")),
            ResampleMode::TargetProbability(p) => m_for_probability(p).map(|_| ()),
            ResampleMode::Threshold { kappa_target, max_draws } => {
                if !(kappa_target > 1.0) {
                    return Err(Error::invalid(format!("kappa_target must exceed 1, got {kappa_target}")));
                }
                if max_draws == 0 {
                    return Err(Error::invalid("max_draws must be at least 1"));
                }
                Ok(())
            }
            ResampleMode::FixedM(_) => Ok(()),
        }
    }
}

/// Smallest `m` with `1 − 2^{−m} ≥ P`, that is `⌈−log₂(1 − P)⌉`.
pub fn m_for_probability(p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok((-(1.0 - p).log2()).ceil().max(1.0) as usize)
}

/// Seed and condition number of one draw; `κ = ∞` for a rank-deficient `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub seed: u64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct ResampleOutput {
    pub v: DenseMatrix,
    pub draws: Vec<Draw>,
    /// Index into `draws` of the returned `V`.
    pub best: usize,
    /// Communication and computation of every draw.
    pub ledger: CostLedger,
}

impl ResampleOutput {
    pub fn kappa(&self) -> f64 {
        self.draws[self.best].kappa
    }
}

/// `κ(V)`, or infinity when `V` is numerically rank-deficient.
pub fn kappa_or_inf(v: &DenseMatrix) -> f64 {
    condition_number(v).unwrap_or(f64::INFINITY)
}

/// Runs [`power_init`] once per draw and keeps the lowest `κ(V)`.
///
/// The server evaluates `κ(V)` after each draw; its cost is booked as the
/// leading-order `2·d·r²` of the triangular factorization. Ties keep the
/// earliest draw.
pub fn resample_phi(
    clients: &[ClientState],
    alpha: usize,
    r: usize,
    policy: &ResamplePolicy,
    options: PowerInitOptions,
) -> Result<ResampleOutput> {
    policy.validate()?;
    let (budget, target) = match policy.mode {
        ResampleMode::FixedM(m) => (m, None),
        ResampleMode::TargetProbability(p) => (m_for_probability(p)?, None),
        ResampleMode::Threshold { kappa_target, max_draws } => (max_draws, Some(kappa_target)),
    };
    let mut ledger: Option<CostLedger> = None;
    let mut draws = Vec::with_capacity(budget);
    let mut best: Option<(usize, DenseMatrix)> = None;
    for j in 0..budget {
        let seed = policy.base_seed.wrapping_add(j as u64);
        let out = power_init(clients, alpha, r, seed, options)?;
        let (d, r) = out.v.shape();
        let kappa = kappa_or_inf(&out.v);
        let ledger = ledger.get_or_insert_with(|| CostLedger::new(clients.len()));
        ledger.absorb(&out.ledger);
        ledger.add_server_flops(2 * (d * r * r) as u64);
        draws.push(Draw { seed, kappa });
        if best.as_ref().is_none_or(|(b, _)| kappa < draws[*b].kappa) {
            best = Some((j, out.v));
        }
        if target.is_some_and(|t| kappa <= t) {
            break;
        }
    }
    let (best, v) = best.expect("at least one draw");
    if let Some(t) = target {
        if !(draws[best].kappa <= t) {
            return Err(Error::ThresholdUnmet {
                target: t,
                draws: draws.len(),
                best_kappa: draws[best].kappa,
            });
        }
    }
    Ok(ResampleOutput {
        v,
        draws,
        best,
        ledger: ledger.expect("at least one draw"),
    })
}

/// Which published form of the condition-number bound to evaluate. They
/// differ in the exponent of `σ_{r+1}/σ_r` in the second term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBoundVariant {
    /// Exponent `2(2α+1)` on both ratio terms.
    #[default]
    Derivation,
    /// Exponent `2α` on the tail ratio.
    Headline,
}

#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub spectrum: Spectrum,
    pub r: usize,
    pub alpha: usize,
    pub d: usize,
    pub p: f64,
}

impl BoundInputs {
    pub(crate) fn check(&self) -> Result<(f64, f64)> {
        check_probability(self.p)?;
        sigma_r(&self.spectrum, self.r).map(|s| (s, self.spectrum.sigma(self.r + 1)))
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")))
    }
}

/// `σ_r`, rejecting `r = 0`, `r` past the spectrum, and `σ_r = 0`.
pub(crate) fn sigma_r(spectrum: &Spectrum, r: usize) -> Result<f64> {
    if r == 0 || r > spectrum.len() {
        return Err(Error::invalid(format!("r = {r} outside 1..={}", spectrum.len())));
    }
    let s = spectrum.sigma(r);
    if s <= 0.0 {
        return Err(Error::RankDeficient {
            sigma_min: s,
            sigma_max: spectrum.max(),
        });
    }
    Ok(s)
}

/// `κ_p²` split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaPBound {
    /// `9r²(σ_max/σ_r)^{2(2α+1)} / p²`
    pub signal_term: f64,
    /// `4r(d + ln(2/p))(σ_{r+1}/σ_r)^e / p²`
    pub tail_term: f64,
}

impl KappaPBound {
    pub fn kappa_sq(&self) -> f64 {
        self.signal_term + self.tail_term
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_sq().sqrt()
    }

    pub fn signal_dominates(&self) -> bool {
        self.signal_term >= self.tail_term
    }
}

/// With probability at least `1 − 3p`, `κ(V)² < κ_p²`.
pub fn kappa_p_bound(inputs: &BoundInputs, variant: KappaBoundVariant) -> Result<KappaPBound> {
    let (s_r, s_next) = inputs.check()?;
    let r = inputs.r as f64;
    let p = inputs.p;
    let signal_exp = 2 * (2 * inputs.alpha as i32 + 1);
    let tail_exp = match variant {
        KappaBoundVariant::Derivation => signal_exp,
        KappaBoundVariant::Headline => 2 * inputs.alpha as i32,
    };
    let ratio_max = inputs.spectrum.max() / s_r;
    let ratio_tail = s_next / s_r;
    Ok(KappaPBound {
        signal_term: 9.0 * r * r * ratio_max.powi(signal_exp) / (p * p),
        tail_term: 4.0 * r * (inputs.d as f64 + (2.0 / p).ln()) * ratio_tail.powi(tail_exp) / (p * p),
    })
}
