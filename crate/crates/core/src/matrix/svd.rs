use serde::{Deserialize, Serialize};

use super::qr::HouseholderQr;
use super::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const RANK_TOLERANCE: f64 = 1e-12;

/// Singular values sorted in non-increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("spectrum values must be finite and non-negative"));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("spectrum values must be non-increasing"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    /// `σ_i` with 1-based `i`; zero past the end of the spectrum.
    pub fn sigma(&self, i: usize) -> f64 {
        assert!(i >= 1, "singular values are 1-indexed");
        self.0.get(i - 1).copied().unwrap_or(0.0)
    }

    /// `σ_{r+1}, σ_{r+2}, …`
    pub fn tail(&self, r: usize) -> &[f64] {
        &self.0[r.min(self.0.len())..]
    }

    /// Numerical rank at relative tolerance `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        let cutoff = tol * self.max();
        self.0.iter().take_while(|&&s| s > cutoff).count()
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Spectrum::new(v)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Self {
        s.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided (Hestenes) Jacobi: rotates column pairs of `cols` until they are
/// mutually orthogonal; `right` accumulates the rotations when present.
fn one_sided_jacobi(cols: &mut [Vec<f64>], mut right: Option<&mut [Vec<f64>]>) {
    let n = cols.len();
    let tol = f64::EPSILON * (cols.first().map_or(1, Vec::len) as f64).sqrt();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                apply_rotation(cols, p, q, c, s);
                if let Some(r) = right.as_deref_mut() {
                    apply_rotation(r, p, q, c, s);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

fn apply_rotation(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Triangular factor whose singular values equal those of `m`, and whether
/// `m` was transposed to get a tall input.
fn triangular_core(m: &DenseMatrix) -> (HouseholderQr, bool) {
    if m.rows() >= m.cols() {
        (HouseholderQr::new(m), false)
    } else {
        (HouseholderQr::new(&m.transpose()), true)
    }
}

fn columns(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

/// Singular values of `m`, descending.
///
/// The matrix is first reduced to a square triangular factor by Householder
/// QR (of `m` or `mᵀ`, whichever is tall), then the factor's columns are
/// orthogonalized by one-sided Jacobi. Singular values come out with
/// absolute accuracy of order `ε·σ_max`, so exact zeros stay near machine
/// precision instead of `√ε·σ_max` as with a Gram-matrix route.
pub fn singular_values(m: &DenseMatrix) -> Spectrum {
    let (qr, _) = triangular_core(m);
    let mut cols = columns(&qr.r());
    one_sided_jacobi(&mut cols, None);
    let mut values: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Spectrum(values)
}

/// Top-`k` right singular vectors of `m` as the columns of a `cols×k` matrix.
pub fn top_right_singular_vectors(m: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let p = m.rows().min(m.cols());
    if k == 0 || k > p {
        return Err(Error::invalid(format!("requested {k} singular vectors of a rank-{p} shape")));
    }
    let (qr, transposed) = triangular_core(m);
    let r = qr.r();
    let mut cols = columns(&r);
    let mut w: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            e
        })
        .collect();
    one_sided_jacobi(&mut cols, Some(&mut w));
    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    if !transposed {
        // m = Q R and R W = U Σ, so the right singular vectors are W's columns.
        return Ok(DenseMatrix::from_fn(m.cols(), k, |i, j| w[order[j]][i]));
    }
    // mᵀ = Q R, so m = Rᵀ Qᵀ and the right singular vectors of m are
    // Q times the left singular vectors of R.
    let q = qr.thin_q_cols();
    let mut out = DenseMatrix::zeros(m.cols(), k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let sigma = norms[src];
        if sigma == 0.0 {
            return Err(Error::RankDeficient {
                sigma_min: 0.0,
                sigma_max: norms[order[0]],
            });
        }
        for (l, &u) in cols[src].iter().enumerate() {
            let coef = u / sigma;
            for i in 0..m.cols() {
                out.set(i, j, out.get(i, j) + coef * q[l][i]);
            }
        }
    }
    Ok(out)
}

/// `κ(M) = σ_max / σ_min`.
///
/// Fails with [`Error::RankDeficient`] when `σ_min ≤ 1e-12·σ_max`.
pub fn condition_number(m: &DenseMatrix) -> Result<f64> {
    let s = singular_values(m);
    let sigma_max = s.max();
    let sigma_min = *s.values().last().expect("non-empty spectrum");
    if sigma_min <= RANK_TOLERANCE * sigma_max || sigma_max == 0.0 {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    Ok(sigma_max / sigma_min)
}
