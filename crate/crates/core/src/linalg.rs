//! Dense linear algebra helpers: symmetric eigendecomposition (cyclic Jacobi
//! for small matrices, tridiagonal QR above that), numerical rank, and a handful of small matrix utilities shared
//! by the metric and theory modules.

use nalgebra::{DMatrix, DVector};

use crate::error::MatInfoError;

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Largest dimension handled by Jacobi; bigger inputs go through
/// Householder tridiagonalization and implicit QR.
pub const JACOBI_MAX_DIM: usize = 96;

/// Entry-wise asymmetry accepted by [`sym_eigendecompose`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Eigendecomposition of a symmetric matrix.
///
/// `eigenvalues` are sorted in descending order and column `k` of `basis`
/// is the unit eigenvector for `eigenvalues[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub sweeps: usize,
}

impl Spectrum {
    /// `basis · diag(f(λ)) · basisᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let mut scaled = self.basis.clone();
        for k in 0..n {
            let w = f(self.eigenvalues[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        scaled * self.basis.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.apply(|x| x)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Largest absolute difference between `a[(i, j)]` and `a[(j, i)]`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Up to [`JACOBI_MAX_DIM`] rows this uses cyclic Jacobi rotations; larger
/// matrices use tridiagonal QR and report `sweeps = 0`.
/// The input is symmetrized first. Sweeps visit the strict upper triangle in
/// row-major order, so the result is a deterministic function of the input.
/// Iteration stops once the off-diagonal Frobenius norm drops below
/// `1e-12 · N · max(1, ‖A‖_F / N)`; unit-diagonal grams have `‖A‖_F ≤ N`, so
/// for them the threshold is exactly `1e-12 · N`.
pub fn sym_eigendecompose(a: &DMatrix<f64>) -> Result<Spectrum, MatInfoError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(MatInfoError::NotSquare(a.nrows(), a.ncols()));
    }
    if n == 0 {
        return Err(MatInfoError::Empty);
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(MatInfoError::NonFinite);
    }
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(MatInfoError::NotSymmetric(asym));
    }

    if n > JACOBI_MAX_DIM {
        return Ok(tridiagonal_eigendecompose(symmetrize(a)));
    }

    // Row-major working copies; the inner loops touch rows p and q of both.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    // vt holds Vᵀ: row k is the k-th eigenvector.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }

    let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * n as f64 * (fro / n as f64).max(1.0);

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m, n);
        if off < tol {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(MatInfoError::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                if t == 0.0 {
                    continue;
                }
                rotated = true;
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Columns p and q (all rows), then rows p and q (all columns).
                for k in 0..n {
                    let kp = m[k * n + p];
                    let kq = m[k * n + q];
                    m[k * n + p] = c * kp - s * kq;
                    m[k * n + q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let pk = m[p * n + k];
                    let qk = m[q * n + k];
                    m[p * n + k] = c * pk - s * qk;
                    m[q * n + k] = s * pk + c * qk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;

                let (head, tail) = vt.split_at_mut(q * n);
                let vp = &mut head[p * n..p * n + n];
                let vq = &mut tail[..n];
                for k in 0..n {
                    let a = vp[k];
                    let b = vq[k];
                    vp[k] = c * a - s * b;
                    vq[k] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| m[i * n + i]));
    let mut basis = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            basis[(r, col)] = vt[i * n + r];
        }
    }
    Ok(Spectrum {
        eigenvalues,
        basis,
        sweeps,
    })
}

fn tridiagonal_eigendecompose(a: DMatrix<f64>) -> Spectrum {
    let n = a.nrows();
    let e = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]).then(i.cmp(&j)));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| e.eigenvalues[i]));
    let mut basis = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        basis.set_column(col, &e.eigenvectors.column(i));
    }
    Spectrum {
        eigenvalues,
        basis,
        sweeps: 0,
    }
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[i * n + j] * m[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Thin singular value decomposition `A = U · diag(σ) · Vᵀ`, with `σ` sorted
/// in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided (Hestenes) Jacobi SVD. Works on the tall orientation, so a wide
/// input is transposed internally.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (r, c) = a.shape();
    if r < c {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    let (m, n) = (r, c);
    // Column-major working copy: column j is w[j*m..(j+1)*m].
    let mut w: Vec<f64> = a.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..m {
                    let x = w[p * m + k];
                    let y = w[q * m + k];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for k in 0..m {
                    let x = w[p * m + k];
                    let y = w[q * m + k];
                    w[p * m + k] = cs * x - sn * y;
                    w[q * m + k] = sn * x + cs * y;
                }
                for k in 0..n {
                    let x = v[p * n + k];
                    let y = v[q * n + k];
                    v[p * n + k] = cs * x - sn * y;
                    v[q * n + k] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| w[j * m..(j + 1) * m].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let mut u = DMatrix::zeros(m, n);
    let mut vm = DMatrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    for (col, &j) in order.iter().enumerate() {
        let s = norms[j];
        sv.push(s);
        if s > 0.0 {
            for k in 0..m {
                u[(k, col)] = w[j * m + k] / s;
            }
        }
        for k in 0..n {
            vm[(k, col)] = v[j * n + k];
        }
    }
    Svd {
        u,
        singular_values: sv,
        v: vm,
    }
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    svd(a).singular_values
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    rank_from_singular_values(&singular_values(a), rel_tol)
}

pub fn rank_from_singular_values(sv: &[f64], rel_tol: f64) -> usize {
    let Some(&smax) = sv.first() else { return 0 };
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Moore–Penrose pseudoinverse; singular values at or below `rel_tol · σ_max`
/// are treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(c, r);
    if r == 0 || c == 0 {
        return out;
    }
    let d = svd(a);
    let cut = rel_tol * d.singular_values[0];
    for (k, &s) in d.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += (d.v.column(k) * d.u.column(k).transpose()) / s;
        }
    }
    out
}

/// Entrywise product of two equally shaped matrices.
pub fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.component_mul(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn check_invariants(a: &DMatrix<f64>, s: &Spectrum) {
        let n = a.nrows();
        let gram = s.basis.transpose() * &s.basis;
        assert!((gram - DMatrix::identity(n, n)).norm() < 1e-8);
        assert!((s.reconstruct() - a).norm() < 1e-8);
        for w in s.eigenvalues.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn identity_spectrum() {
        let a = DMatrix::<f64>::identity(3, 3);
        let s = sym_eigendecompose(&a).unwrap();
        assert_eq!(s.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);
        check_invariants(&a, &s);
    }

    #[test]
    fn rank_one_two_by_two() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let s = sym_eigendecompose(&a).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1], 0.0, epsilon = 1e-14);
        check_invariants(&a, &s);
    }

    #[test]
    fn equicorrelation_half() {
        let mut a = DMatrix::from_element(4, 4, 0.5);
        a.fill_diagonal(1.0);
        let s = sym_eigendecompose(&a).unwrap();
        let expected = [2.5, 0.5, 0.5, 0.5];
        for (got, want) in s.eigenvalues.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        check_invariants(&a, &s);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            sym_eigendecompose(&a),
            Err(MatInfoError::NotSymmetric(_))
        ));
    }

    #[test]
    fn deterministic_and_matches_reference() {
        let n = 12;
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 / 5.0 - 1.0);
        let a = &b * b.transpose();
        let s1 = sym_eigendecompose(&a).unwrap();
        let s2 = sym_eigendecompose(&a).unwrap();
        assert_eq!(s1, s2);
        check_invariants(&a, &s1);

        let mut reference: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in s1.eigenvalues.iter().zip(reference) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn large_degenerate_gram_uses_tridiagonal_path() {
        let n = 160;
        let z = DMatrix::from_fn(5, n, |i, j| ((i * 31 + j * 17) % 13) as f64 / 6.0 - 1.0);
        let a = z.transpose() * &z;
        let s = sym_eigendecompose(&a).unwrap();
        assert_eq!(s.sweeps, 0);
        check_invariants(&a, &s);
        let mut small = DMatrix::zeros(5, 5);
        small.copy_from(&(&z * z.transpose()));
        let mut reference: Vec<f64> = sym_eigendecompose(&small).unwrap().eigenvalues.iter().copied().collect();
        reference.resize(n, 0.0);
        for (x, y) in s.eigenvalues.iter().zip(reference) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = pseudo_inverse(&a, 1e-10);
        let apa = &a * &p * &a;
        assert!((apa - &a).norm() < 1e-10);
        assert_eq!(numerical_rank(&a, 1e-9), 1);
    }

    #[test]
    fn svd_reconstructs_wide_rank_deficient() {
        let n = 22;
        let b = DMatrix::from_fn(3, 1, |i, _| [0.3, -1.2, 0.7][i]);
        let c = DMatrix::from_fn(1, n, |_, j| ((j * 5) % 7) as f64 - 3.0);
        let a = &b * &c;
        let d = svd(&a);
        let rebuilt = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.singular_values.clone())) * d.v.transpose();
        assert!((rebuilt - &a).norm() < 1e-10);
        assert_eq!(rank_from_singular_values(&d.singular_values, 1e-9), 1);
        let p = pseudo_inverse(&a, 1e-10);
        assert!((&a * &p * &a - &a).norm() < 1e-10);
        assert!((&p * &a * &p - &p).norm() < 1e-10);
    }
}
