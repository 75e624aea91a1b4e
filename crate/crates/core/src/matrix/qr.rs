use super::DenseMatrix;
use crate::error::{Error, Result};

const RANK_TOLERANCE: f64 = 1e-12;

/// Householder QR of a tall matrix held column by column.
pub(crate) struct HouseholderQr {
    m: usize,
    /// Reflector `k` acts on rows `k..m`.
    reflectors: Vec<(Vec<f64>, f64)>,
    /// Upper-triangular factor, `n×n`, columns stored contiguously.
    r_cols: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HouseholderQr {
    pub(crate) fn new(a: &DenseMatrix) -> Self {
        let (m, n) = a.shape();
        debug_assert!(m >= n);
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let x = &cols[k][k..];
            let norm = dot(x, x).sqrt();
            if norm == 0.0 {
                reflectors.push((vec![0.0; m - k], 0.0));
                continue;
            }
            let alpha = if x[0] > 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm2 = dot(&v, &v);
            let tau = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            for col in cols.iter_mut().skip(k + 1) {
                let tail = &mut col[k..];
                let w = tau * dot(&v, tail);
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= w * vi;
                }
            }
            cols[k][k] = alpha;
            for t in &mut cols[k][k + 1..] {
                *t = 0.0;
            }
            reflectors.push((v, tau));
        }
        let r_cols = cols.into_iter().map(|mut c| {
            c.truncate(n);
            c
        });
        Self {
            m,
            reflectors,
            r_cols: r_cols.collect(),
        }
    }

    pub(crate) fn r_diag(&self) -> Vec<f64> {
        self.r_cols.iter().enumerate().map(|(k, c)| c[k]).collect()
    }

    /// `R` as a row-major `n×n` matrix.
    pub(crate) fn r(&self) -> DenseMatrix {
        let n = self.r_cols.len();
        DenseMatrix::from_fn(n, n, |i, j| self.r_cols[j][i])
    }

    /// Thin `Q` (`m×n`), columns stored contiguously.
    pub(crate) fn thin_q_cols(&self) -> Vec<Vec<f64>> {
        let n = self.r_cols.len();
        let mut q: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; self.m];
                e[j] = 1.0;
                e
            })
            .collect();
        for (k, (v, tau)) in self.reflectors.iter().enumerate().rev() {
            if *tau == 0.0 {
                continue;
            }
            for col in q.iter_mut() {
                let tail = &mut col[k..];
                let w = tau * dot(v, tail);
                for (t, vi) in tail.iter_mut().zip(v) {
                    *t -= w * vi;
                }
            }
        }
        q
    }
}

/// Orthonormal basis of the column span of a tall, full-column-rank matrix.
///
/// Householder QR with the sign convention `R_kk > 0`, so an input that is
/// already orthonormal comes back unchanged up to round-off.
pub fn orthonormalize(m: &DenseMatrix) -> Result<DenseMatrix> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::invalid(format!("orthonormalize needs rows >= cols, got {rows}x{cols}")));
    }
    let qr = HouseholderQr::new(m);
    let diag = qr.r_diag();
    let sigma_max = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let sigma_min = diag.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
    if sigma_min <= RANK_TOLERANCE * m.frobenius() {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let q_cols = qr.thin_q_cols();
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| {
        let sign = if diag[j] < 0.0 { -1.0 } else { 1.0 };
        sign * q_cols[j][i]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gaussian;

    fn orth_error(q: &DenseMatrix) -> f64 {
        q.gram().sub(&DenseMatrix::identity(q.cols())).unwrap().frobenius()
    }

    fn projector(q: &DenseMatrix) -> DenseMatrix {
        q.matmul(&q.transpose()).unwrap()
    }

    /// Classical Gram–Schmidt, the independent oracle for span preservation.
    fn classical_gram_schmidt(m: &DenseMatrix) -> DenseMatrix {
        let (rows, cols) = m.shape();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for j in 0..cols {
            let a = m.column(j);
            let mut v = a.clone();
            for b in &basis {
                let proj = dot(&a, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            basis.push(v.iter().map(|x| x / norm).collect());
        }
        DenseMatrix::from_fn(rows, cols, |i, j| basis[j][i])
    }

    #[test]
    fn orthonormal_input_is_returned() {
        let q = orthonormalize(&gaussian(9, 4, 3).unwrap()).unwrap();
        let again = orthonormalize(&q).unwrap();
        assert!(again.sub(&q).unwrap().frobenius() < 1e-13);
    }

    #[test]
    fn span_matches_gram_schmidt() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let q = orthonormalize(&m).unwrap();
        let diff = projector(&q).sub(&projector(&classical_gram_schmidt(&m))).unwrap();
        assert!(diff.frobenius() <= 1e-10);
    }

    #[test]
    fn random_tall_is_orthonormal() {
        let m = gaussian(20, 5, 8).unwrap();
        let q = orthonormalize(&m).unwrap();
        assert!(orth_error(&q) <= 1e-10 * 5f64.sqrt());
        let diff = projector(&q).sub(&projector(&classical_gram_schmidt(&m))).unwrap();
        assert!(diff.frobenius() <= 1e-10);
    }

    #[test]
    fn rank_deficient_and_wide_inputs_fail() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(orthonormalize(&m), Err(Error::RankDeficient { .. })));
        assert!(orthonormalize(&gaussian(2, 3, 1).unwrap()).is_err());
    }

    #[test]
    fn r_factor_reproduces_input() {
        let m = gaussian(12, 4, 21).unwrap();
        let qr = HouseholderQr::new(&m);
        let q_cols = qr.thin_q_cols();
        let q = DenseMatrix::from_fn(12, 4, |i, j| q_cols[j][i]);
        let back = q.matmul(&qr.r()).unwrap();
        assert!(back.sub(&m).unwrap().frobenius() < 1e-13 * m.frobenius().max(1.0) * 10.0);
    }
}
