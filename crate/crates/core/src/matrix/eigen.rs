use super::DenseMatrix;
use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues `λ ≤ τ·λ_max` are treated as zero by [`pinv_gram`].
pub const PINV_RELATIVE_THRESHOLD: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEigResult {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: DenseMatrix,
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps over all `(p, q)` pairs annihilating `a_pq` with a plane rotation
/// until `off(A) ≤ 1e-12·‖A‖_F` (at most 100 sweeps). Input asymmetry up to
/// `1e-9·‖A‖_F` is tolerated; the symmetric part is decomposed.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEigResult> {
    let asym = a
        .asymmetry()
        .ok_or_else(|| Error::invalid(format!("sym_eig needs a square matrix, got {}x{}", a.rows(), a.cols())))?;
    let norm = a.frobenius();
    if asym > SYMMETRY_TOLERANCE * norm {
        return Err(Error::invalid(format!(
            "sym_eig input is not symmetric (‖A − Aᵀ‖_F = {asym:e}, ‖A‖_F = {norm:e})"
        )));
    }
    let n = a.rows();
    let mut m = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = DenseMatrix::identity(n);

    if norm > 0.0 {
        let target = OFF_DIAGONAL_TOLERANCE * norm;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&m) <= target {
                break;
            }
            for p in 0..n.saturating_sub(1) {
                for q in p + 1..n {
                    rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m.get(y, y).total_cmp(&m.get(x, x)));
    let eigenvalues = order.iter().map(|&k| m.get(k, k)).collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m.get(i, j) * m.get(i, j);
            }
        }
    }
    acc.sqrt()
}

fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = m.rows();
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = m.get(k, p);
        let akq = m.get(k, q);
        m.set(k, p, c * akp - s * akq);
        m.set(k, q, s * akp + c * akq);
    }
    let data = m.as_mut_slice();
    for k in 0..n {
        let apk = data[p * n + k];
        let aqk = data[q * n + k];
        data[p * n + k] = c * apk - s * aqk;
        data[q * n + k] = s * apk + c * aqk;
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD (Gram) matrix.
///
/// Eigenvalues at or below `PINV_RELATIVE_THRESHOLD · λ_max` (and any
/// negative round-off) are dropped.
pub fn pinv_gram(g: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eig(g)?;
    let n = g.rows();
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let mut out = DenseMatrix::zeros(n, n);
    if lambda_max <= 0.0 {
        return Ok(out);
    }
    let cutoff = PINV_RELATIVE_THRESHOLD * lambda_max;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= cutoff {
            continue;
        }
        let inv = 1.0 / lambda;
        let q = eig.eigenvectors.column(k);
        for i in 0..n {
            let qi = q[i] * inv;
            for j in 0..n {
                out.set(i, j, out.get(i, j) + qi * q[j]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gaussian;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let g = gaussian(n, n, seed).unwrap();
        g.add(&g.transpose()).unwrap()
    }

    fn reconstruct(e: &SymEigResult) -> DenseMatrix {
        let q = &e.eigenvectors;
        let n = q.rows();
        DenseMatrix::from_fn(n, n, |i, j| (0..n).map(|k| q.get(i, k) * e.eigenvalues[k] * q.get(j, k)).sum())
    }

    #[test]
    fn diagonal_and_two_by_two() {
        let e = sym_eig(&DenseMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 2.0, 1.0]);
        let e = sym_eig(&DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_eig(&a).is_err());
        assert!(sym_eig(&gaussian(2, 3, 1).unwrap()).is_err());
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for (n, seed) in [(10, 1), (33, 2), (64, 3)] {
            let a = random_symmetric(n, seed);
            let e = sym_eig(&a).unwrap();
            let err = reconstruct(&e).sub(&a).unwrap().frobenius();
            assert!(err <= 1e-9 * a.frobenius(), "n={n} err={err:e}");
            let qtq = e.eigenvectors.gram();
            let orth = qtq.sub(&DenseMatrix::identity(n)).unwrap().frobenius();
            assert!(orth <= 1e-10 * (n as f64).sqrt(), "n={n} orth={orth:e}");
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            for k in 0..n {
                let q = DenseMatrix::new(n, 1, e.eigenvectors.column(k)).unwrap();
                let resid = a.matmul(&q).unwrap().sub(&q.scaled(e.eigenvalues[k])).unwrap().frobenius();
                assert!(resid <= 1e-9 * a.frobenius());
            }
        }
    }

    #[test]
    fn pinv_examples() {
        let i3 = DenseMatrix::identity(3);
        let p = pinv_gram(&i3).unwrap();
        assert!(p.sub(&i3).unwrap().frobenius() < 1e-14);
        let p = pinv_gram(&DenseMatrix::from_diag(&[4.0, 0.0])).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.0, 0.0, 0.0]);
        assert_eq!(pinv_gram(&DenseMatrix::zeros(2, 2)).unwrap(), DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn pinv_penrose_identities() {
        for (d, r, seed) in [(12, 4, 5), (40, 32, 6), (9, 9, 7)] {
            let v = gaussian(d, r, seed).unwrap();
            let g = v.gram();
            let gp = pinv_gram(&g).unwrap();
            let scale = g.frobenius();
            let ggg = g.matmul(&gp).unwrap().matmul(&g).unwrap();
            assert!(ggg.sub(&g).unwrap().frobenius() <= 1e-8 * scale);
            let gpggp = gp.matmul(&g).unwrap().matmul(&gp).unwrap();
            assert!(gpggp.sub(&gp).unwrap().frobenius() <= 1e-8 * gp.frobenius());
            let ggp = g.matmul(&gp).unwrap();
            assert!(ggp.asymmetry().unwrap() <= 1e-8 * ggp.frobenius());
            let gpg = gp.matmul(&g).unwrap();
            assert!(gpg.asymmetry().unwrap() <= 1e-8 * gpg.frobenius());
        }
    }

    #[test]
    fn pinv_rank_deficient_gram() {
        // rank 2 Gram in 4 dimensions
        let v = gaussian(2, 4, 9).unwrap();
        let g = v.gram();
        let gp = pinv_gram(&g).unwrap();
        let ggg = g.matmul(&gp).unwrap().matmul(&g).unwrap();
        assert!(ggg.sub(&g).unwrap().frobenius() <= 1e-8 * g.frobenius());
    }
}
