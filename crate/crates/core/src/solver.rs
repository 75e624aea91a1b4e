//! Local solvers for `U` with `V` fixed: gradient descent (optionally with
//! Nesterov momentum and an L2 ridge), the closed-form minimizer, and the
//! end-to-end federated run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::FederatedDataset;
use crate::error::{Error, Result};
use crate::federation::{clients_from_dataset, ClientState, CostLedger, PowerInitOptions};
use crate::matrix::{gaussian, pinv_gram, singular_values, AtomicFlops, DenseMatrix, FlopCounter, NoFlops};
use crate::resampler::{resample_phi, Draw, ResamplePolicy};
use crate::rng::{self, TAG_U0};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `γ = 1/L`, with `L` including the ridge weight.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Momentum {
    #[default]
    None,
    /// Gradient at `y_t = U_t + β_t(U_t − U_{t−1})`, `β_t = t/(t+3)`.
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub iterations: usize,
    pub step_size: StepSize,
    pub momentum: Momentum,
    pub ridge: f64,
    /// Record `F(U_t)` for `t = 0..=T`.
    pub record_trajectory: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            step_size: StepSize::Auto,
            momentum: Momentum::None,
            ridge: 0.0,
            record_trajectory: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(g) = self.step_size {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::invalid(format!("step size must be positive, got {g}")));
            }
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge weight must be non-negative, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Smoothness `L = σ²_max(V)` and strong convexity `μ = σ²_min(V)` of `F(·, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureBounds {
    pub l: f64,
    pub mu: f64,
}

impl CurvatureBounds {
    /// `κ²(V) = L/μ`; infinite when `μ = 0`.
    pub fn kappa_sq(&self) -> f64 {
        if self.mu > 0.0 {
            self.l / self.mu
        } else {
            f64::INFINITY
        }
    }
}

pub fn curvature(v: &DenseMatrix) -> CurvatureBounds {
    let s = singular_values(v);
    let smin = if v.rows() >= v.cols() { *s.values().last().expect("non-empty") } else { 0.0 };
    CurvatureBounds {
        l: s.max() * s.max(),
        mu: smin * smin,
    }
}

fn check_shapes(s: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix) -> Result<()> {
    if u.rows() != s.rows() || v.rows() != s.cols() || u.cols() != v.cols() {
        return Err(Error::invalid(format!(
            "incompatible shapes: S {}x{}, U {}x{}, V {}x{}",
            s.rows(),
            s.cols(),
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

/// `U Vᵀ − S`, given `Vᵀ`.
fn residual(s: &DenseMatrix, u: &DenseMatrix, vt: &DenseMatrix, flops: &dyn FlopCounter) -> Result<DenseMatrix> {
    let mut r = u.matmul_counted(vt, flops)?;
    r.axpy(-1.0, s)?;
    Ok(r)
}

/// `∇_U F = (U Vᵀ − S) V + λ U`.
pub fn grad_u(u: &DenseMatrix, v: &DenseMatrix, s: &DenseMatrix, ridge: f64) -> Result<DenseMatrix> {
    check_shapes(s, u, v)?;
    let vt = v.transpose();
    grad_with(s, u, &vt, ridge, &NoFlops).map(|(g, _)| g)
}

/// Gradient and the residual it was built from.
fn grad_with(
    s: &DenseMatrix,
    u: &DenseMatrix,
    vt: &DenseMatrix,
    ridge: f64,
    flops: &dyn FlopCounter,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let r = residual(s, u, vt, flops)?;
    let mut g = r.matmul_t_counted(vt, flops)?;
    if ridge > 0.0 {
        g.axpy(ridge, u)?;
    }
    Ok((g, r))
}

/// `F(U, V) = ½‖S − U Vᵀ‖²_F`.
pub fn objective(s: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix) -> Result<f64> {
    check_shapes(s, u, v)?;
    Ok(0.5 * residual(s, u, &v.transpose(), &NoFlops)?.frobenius_sq())
}

#[derive(Debug, Clone)]
pub struct DescentOutput {
    pub u: DenseMatrix,
    /// `F(U_t)` for `t = 0..=T` when recording is on, else empty.
    pub trajectory: Vec<f64>,
}

/// Client `id`'s starting point: i.i.d. standard normal entries.
pub fn initial_u(client: &ClientState, r: usize) -> Result<DenseMatrix> {
    gaussian(client.shard.rows(), r, rng::derive_seed(client.rng_seed, &[TAG_U0]))
}

/// `T` gradient steps on `F(·, V)` from `u0`.
///
/// Each step costs two products, `4·n·d·r` flops, which is what `flops`
/// receives. Recording the trajectory reuses the residual of plain steps;
/// with momentum the loss at `U_t` needs its own product, which is treated
/// as instrumentation and not booked.
pub fn local_descent(
    s: &DenseMatrix,
    v: &DenseMatrix,
    u0: DenseMatrix,
    config: &SolverConfig,
    flops: &dyn FlopCounter,
) -> Result<DescentOutput> {
    config.validate()?;
    check_shapes(s, &u0, v)?;
    let gamma = match config.step_size {
        StepSize::Fixed(g) => g,
        StepSize::Auto => {
            let l = curvature(v).l + config.ridge;
            if l <= 0.0 {
                return Err(Error::invalid("automatic step size needs L > 0"));
            }
            1.0 / l
        }
    };
    let vt = v.transpose();
    let record = config.record_trajectory;
    let mut trajectory = Vec::with_capacity(if record { config.iterations + 1 } else { 0 });
    let loss = |u: &DenseMatrix| residual(s, u, &vt, &NoFlops).map(|r| 0.5 * r.frobenius_sq());

    let mut u = u0;
    match config.momentum {
        Momentum::None => {
            for _ in 0..config.iterations {
                let (g, r) = grad_with(s, &u, &vt, config.ridge, flops)?;
                if record {
                    trajectory.push(0.5 * r.frobenius_sq());
                }
                u.axpy(-gamma, &g)?;
            }
        }
        Momentum::Nesterov => {
            let mut prev = u.clone();
            for t in 0..config.iterations {
                if record {
                    trajectory.push(loss(&u)?);
                }
                let beta = t as f64 / (t as f64 + 3.0);
                let mut y = u.clone();
                if beta > 0.0 {
                    y.axpy(beta, &u.sub(&prev)?)?;
                }
                let (g, _) = grad_with(s, &y, &vt, config.ridge, flops)?;
                y.axpy(-gamma, &g)?;
                prev = std::mem::replace(&mut u, y);
            }
        }
    }
    if record {
        trajectory.push(loss(&u)?);
    }
    Ok(DescentOutput { u, trajectory })
}

/// `Û = S V (VᵀV)†`, the minimizer of `F(·, V)`.
pub fn exact_solution(s: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    exact_solution_counted(s, v, &NoFlops)
}

fn exact_solution_counted(s: &DenseMatrix, v: &DenseMatrix, flops: &dyn FlopCounter) -> Result<DenseMatrix> {
    if v.rows() != s.cols() {
        return Err(Error::invalid(format!("S has {} columns but V has {} rows", s.cols(), v.rows())));
    }
    let sv = s.matmul_t_counted(&v.transpose(), flops)?;
    let gram = v.t_matmul_counted(v, flops)?;
    sv.matmul_counted(&pinv_gram(&gram)?, flops)
}

/// `S V (VᵀV + λI)⁻¹`, the minimizer of `F(·, V) + ½λ‖U‖²_F`.
pub fn exact_solution_ridge(s: &DenseMatrix, v: &DenseMatrix, ridge: f64) -> Result<DenseMatrix> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::invalid(format!("ridge weight must be non-negative, got {ridge}")));
    }
    if v.rows() != s.cols() {
        return Err(Error::invalid(format!("S has {} columns but V has {} rows", s.cols(), v.rows())));
    }
    let mut gram = v.gram();
    for k in 0..gram.rows() {
        gram.set(k, k, gram.get(k, k) + ridge);
    }
    s.matmul(v)?.matmul(&pinv_gram(&gram)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Local gradient descent per client.
    #[default]
    Descent,
    /// Closed-form minimizer per client.
    Exact,
}

/// Everything one federated run produces.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// `Σ_i F^i(U_t^i, V)` for `t = 0..=T`; a single entry in exact mode.
    pub trajectory: Vec<f64>,
    /// `κ(V)` of the kept draw.
    pub kappa: f64,
    pub draws: Vec<Draw>,
    pub ledger: CostLedger,
    /// `‖S − U Vᵀ‖²_F` with the returned `U`.
    pub final_error: f64,
    /// `‖S − Û Vᵀ‖²_F` with the closed-form minimizer for the same `V`.
    pub exact_error: f64,
    pub u_blocks: Vec<DenseMatrix>,
    pub v: DenseMatrix,
}

/// Power initialization (with resampling) followed by independent local
/// solves. Client seeds derive from `policy.base_seed`.
pub fn federated_solve(
    dataset: &FederatedDataset,
    alpha: usize,
    r: usize,
    config: &SolverConfig,
    mode: SolveMode,
    policy: &ResamplePolicy,
    options: PowerInitOptions,
) -> Result<RunRecord> {
    config.validate()?;
    let clients = clients_from_dataset(dataset, policy.base_seed);
    let init = resample_phi(&clients, alpha, r, policy, options)?;
    let v = init.v;
    let mut ledger = init.ledger;
    let vt = v.transpose();

    struct ClientResult {
        u: DenseMatrix,
        trajectory: Vec<f64>,
        exact_error: f64,
        flops: u64,
    }
    let solve_one = |c: &ClientState| -> Result<ClientResult> {
        let counter = AtomicFlops::new();
        let exact = exact_solution_counted(&c.shard, &v, if mode == SolveMode::Exact { &counter } else { &NoFlops })?;
        let exact_error = residual(&c.shard, &exact, &vt, &NoFlops)?.frobenius_sq();
        let (u, trajectory) = match mode {
            SolveMode::Exact => (exact, vec![0.5 * exact_error]),
            SolveMode::Descent => {
                let out = local_descent(&c.shard, &v, initial_u(c, r)?, config, &counter)?;
                (out.u, out.trajectory)
            }
        };
        Ok(ClientResult {
            u,
            trajectory,
            exact_error,
            flops: counter.get(),
        })
    };
    let results: Vec<ClientResult> = if options.parallel {
        clients.par_iter().map(solve_one).collect::<Result<_>>()?
    } else {
        clients.iter().map(solve_one).collect::<Result<_>>()?
    };

    let steps = results[0].trajectory.len();
    let trajectory = (0..steps).map(|t| results.iter().map(|c| c.trajectory[t]).sum()).collect();
    let mut final_error = 0.0;
    for (c, res) in clients.iter().zip(&results) {
        ledger.add_client_flops(c.id, res.flops);
        final_error += match mode {
            SolveMode::Exact => res.exact_error,
            SolveMode::Descent => residual(&c.shard, &res.u, &vt, &NoFlops)?.frobenius_sq(),
        };
    }
    Ok(RunRecord {
        trajectory,
        kappa: init.draws[init.best].kappa,
        draws: init.draws,
        ledger,
        final_error,
        exact_error: results.iter().map(|c| c.exact_error).sum(),
        u_blocks: results.into_iter().map(|c| c.u).collect(),
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, partition, PartitionMode, SyntheticSpec};
    use crate::matrix::{condition_number, orthonormalize};

    fn instance(n: usize, d: usize, r: usize, seed: u64) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        (gaussian(n, d, seed).unwrap(), gaussian(d, r, seed + 1).unwrap(), gaussian(n, r, seed + 2).unwrap())
    }

    #[test]
    fn curvature_examples() {
        let q = orthonormalize(&gaussian(7, 3, 1).unwrap()).unwrap();
        let c = curvature(&q);
        assert!((c.l - 1.0).abs() < 1e-12 && (c.mu - 1.0).abs() < 1e-12);
        let c = curvature(&DenseMatrix::embed_diag(5, 2, &[2.0, 1.0]));
        assert!((c.l - 4.0).abs() < 1e-14 && (c.mu - 1.0).abs() < 1e-14);
        let v = gaussian(30, 4, 5).unwrap();
        let k = condition_number(&v).unwrap();
        assert!((curvature(&v).kappa_sq() - k * k).abs() <= 1e-8 * k * k);
    }

    #[test]
    fn gradient_at_zero_and_optimum() {
        let (s, v, _) = instance(6, 4, 3, 10);
        let g = grad_u(&DenseMatrix::zeros(6, 3), &v, &s, 0.0).unwrap();
        assert!(g.add(&s.matmul(&v).unwrap()).unwrap().frobenius() <= 1e-12);
        let u_hat = exact_solution(&s, &v).unwrap();
        let g = grad_u(&u_hat, &v, &s, 0.0).unwrap();
        assert!(g.frobenius() <= 1e-8 * s.frobenius() * curvature(&v).l);
        assert!(grad_u(&gaussian(5, 3, 1).unwrap(), &v, &s, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (s, v, u) = instance(6, 4, 3, 100 + 3 * seed);
            let ridge = if seed % 2 == 0 { 0.0 } else { 0.3 };
            let f = |u: &DenseMatrix| objective(&s, u, &v).unwrap() + 0.5 * ridge * u.frobenius_sq();
            let g = grad_u(&u, &v, &s, ridge).unwrap();
            let h = 1e-6;
            for i in 0..6 {
                for j in 0..3 {
                    let mut up = u.clone();
                    up.set(i, j, u.get(i, j) + h);
                    let mut um = u.clone();
                    um.set(i, j, u.get(i, j) - h);
                    let fd = (f(&up) - f(&um)) / (2.0 * h);
                    let scale = g.get(i, j).abs().max(1e-3);
                    assert!((fd - g.get(i, j)).abs() <= 1e-5 * scale, "({i},{j}): fd {fd} vs {}", g.get(i, j));
                }
            }
        }
    }

    #[test]
    fn orthonormal_v_converges_in_one_step() {
        let s = gaussian(8, 6, 3).unwrap();
        let v = orthonormalize(&gaussian(6, 2, 4).unwrap()).unwrap();
        let cfg = SolverConfig { iterations: 1, step_size: StepSize::Fixed(1.0), ..Default::default() };
        let out = local_descent(&s, &v, gaussian(8, 2, 5).unwrap(), &cfg, &NoFlops).unwrap();
        let best = objective(&s, &exact_solution(&s, &v).unwrap(), &v).unwrap();
        assert!(out.trajectory[1] - best <= 1e-10);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let (s, v, u) = instance(5, 4, 2, 8);
        for momentum in [Momentum::None, Momentum::Nesterov] {
            let cfg = SolverConfig { iterations: 0, momentum, ..Default::default() };
            let out = local_descent(&s, &v, u.clone(), &cfg, &NoFlops).unwrap();
            assert_eq!(out.u, u);
            assert_eq!(out.trajectory.len(), 1);
        }
    }

    #[test]
    fn plain_descent_is_monotone_and_counts_flops() {
        let (s, v, u) = instance(12, 9, 3, 20);
        let cfg = SolverConfig { iterations: 50, ..Default::default() };
        let counter = AtomicFlops::new();
        let out = local_descent(&s, &v, u, &cfg, &counter).unwrap();
        assert_eq!(out.trajectory.len(), 51);
        for w in out.trajectory.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert_eq!(counter.get(), 4 * 50 * 12 * 9 * 3);
    }

    #[test]
    fn ridge_descent_reaches_ridge_solution() {
        let (s, v, u) = instance(10, 6, 2, 30);
        let cfg = SolverConfig { iterations: 3000, ridge: 0.5, record_trajectory: false, ..Default::default() };
        let out = local_descent(&s, &v, u, &cfg, &NoFlops).unwrap();
        let target = exact_solution_ridge(&s, &v, 0.5).unwrap();
        assert!(out.u.sub(&target).unwrap().frobenius() <= 1e-8 * target.frobenius());
        assert!(out.trajectory.is_empty());
    }

    #[test]
    fn exact_solution_properties() {
        let s = gaussian(9, 7, 2).unwrap();
        let q = orthonormalize(&gaussian(7, 3, 3).unwrap()).unwrap();
        let u = exact_solution(&s, &q).unwrap();
        assert!(u.sub(&s.matmul(&q).unwrap()).unwrap().frobenius() <= 1e-12 * s.frobenius());
        let v = gaussian(7, 3, 4).unwrap();
        let u_hat = exact_solution(&s, &v).unwrap();
        let best = objective(&s, &u_hat, &v).unwrap();
        for k in 0..20 {
            let mut p = u_hat.clone();
            p.axpy(1e-3, &gaussian(9, 3, 50 + k).unwrap()).unwrap();
            assert!(objective(&s, &p, &v).unwrap() >= best - 1e-9 * best);
        }
    }

    #[test]
    fn noiseless_exact_run_recovers() {
        let spec = SyntheticSpec { num_clients: 5, rows_per_client: 40, dim: 30, ..SyntheticSpec::standard(0.0, 5) };
        let ds = generate_synthetic(&spec).unwrap();
        let cfg = SolverConfig::default();
        let rec = federated_solve(&ds, 0, 5, &cfg, SolveMode::Exact, &ResamplePolicy::single(1), PowerInitOptions::default()).unwrap();
        let norm = ds.concatenated().frobenius_sq();
        assert!(rec.final_error <= 1e-16 * norm, "{:e}", rec.final_error / norm);
    }

    #[test]
    fn descent_run_is_block_additive_and_accounted() {
        let s = gaussian(48, 10, 9).unwrap();
        let ds = partition(&s, None, 4, PartitionMode::RowSplit, 0).unwrap();
        let (t, alpha, r) = (7u64, 1u64, 3u64);
        let cfg = SolverConfig { iterations: t as usize, ..Default::default() };
        let rec = federated_solve(&ds, alpha as usize, r as usize, &cfg, SolveMode::Descent, &ResamplePolicy::single(2), PowerInitOptions::default()).unwrap();
        let u = DenseMatrix::vstack(&rec.u_blocks).unwrap();
        let global = 0.5 * s.sub(&u.matmul(&rec.v.transpose()).unwrap()).unwrap().frobenius_sq();
        let last = *rec.trajectory.last().unwrap();
        assert!((last - global).abs() <= 1e-10 * global);
        assert!((rec.final_error - 2.0 * global).abs() <= 1e-10 * global);
        for &f in rec.ledger.client_flops() {
            assert_eq!(f, (4 * t + 4 * alpha + 2) * 12 * 10 * r);
        }
        let par = federated_solve(&ds, alpha as usize, r as usize, &cfg, SolveMode::Descent, &ResamplePolicy::single(2), PowerInitOptions { parallel: true, ..Default::default() }).unwrap();
        assert_eq!(par.u_blocks, rec.u_blocks);
    }
}
