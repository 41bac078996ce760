//! Matrix information quantities over cosine gram matrices.
//!
//! For a unit-diagonal PSD matrix `K` of size `N`, the spectrum of `K / N`
//! is a probability vector (its trace is 1), and the matrix entropy is the
//! Shannon entropy of that vector in nats. Mutual information combines three
//! such entropies through the Hadamard product, and the two ratios (MIR and
//! HDR) normalize it to `[0, 1]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::MatInfoError;
use crate::linalg::{self, Spectrum};

/// Column norms at or below this are treated as zero.
pub const ZERO_NORM_TOL: f64 = 1e-12;
/// Allowed negative eigenvalue, scaled by `N`.
pub const PSD_SLACK: f64 = 1e-9;
/// Denominators at or below this make MIR/HDR undefined.
pub const UNDEFINED_TOL: f64 = 1e-9;
/// Eigenvalue floor (on the `K / N` scale) applied inside gradients.
pub const GRADIENT_FLOOR: f64 = 1e-8;

const DIAGONAL_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-12;

/// A `d × N` embedding matrix whose columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self, MatInfoError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(MatInfoError::Empty);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MatInfoError::NonFinite);
        }
        Ok(Self(data))
    }

    /// Builds a feature matrix from sample rows (`N × d`), transposing them
    /// into columns.
    pub fn from_rows(rows: &DMatrix<f64>) -> Result<Self, MatInfoError> {
        Self::new(rows.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Returns a copy with the column mean subtracted from every column.
    pub fn centered(&self) -> Self {
        let mean = self.0.column_mean();
        let mut out = self.0.clone();
        for mut col in out.column_iter_mut() {
            col -= &mean;
        }
        Self(out)
    }
}

/// Symmetric, unit-diagonal similarity matrix with entries in `[-1, 1]`.
///
/// Positive semidefiniteness is checked when a spectral quantity is taken,
/// since it needs an eigendecomposition anyway.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self, MatInfoError> {
        let (r, c) = data.shape();
        if r != c {
            return Err(MatInfoError::NotSquare(r, c));
        }
        if r == 0 {
            return Err(MatInfoError::Empty);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MatInfoError::NonFinite);
        }
        let asym = linalg::max_asymmetry(&data);
        if asym > linalg::SYMMETRY_TOL {
            return Err(MatInfoError::NotSymmetric(asym));
        }
        let data = linalg::symmetrize(&data);
        for i in 0..r {
            let v = data[(i, i)];
            if (v - 1.0).abs() > DIAGONAL_TOL {
                return Err(MatInfoError::NotUnitDiagonal { index: i, value: v });
            }
        }
        for j in 0..r {
            for i in 0..r {
                let v = data[(i, j)];
                if v.abs() > 1.0 + RANGE_TOL {
                    return Err(MatInfoError::OutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        Ok(Self(data))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// The rank-one all-ones matrix.
    pub fn ones(n: usize) -> Self {
        Self(DMatrix::from_element(n, n, 1.0))
    }

    /// Equicorrelation matrix: unit diagonal, constant off-diagonal `alpha`.
    pub fn equicorrelation(alpha: f64, n: usize) -> Result<Self, MatInfoError> {
        let mut m = DMatrix::from_element(n, n, alpha);
        m.fill_diagonal(1.0);
        Self::new(m)
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Entrywise product. The result is again a valid gram matrix (Schur
    /// product theorem); PSD-ness is re-checked by any spectral consumer.
    pub fn hadamard(&self, other: &GramMatrix) -> Result<GramMatrix, MatInfoError> {
        if self.size() != other.size() {
            return Err(MatInfoError::SizeMismatch(self.size(), other.size()));
        }
        Ok(GramMatrix(self.0.component_mul(&other.0)))
    }

    /// `P K Pᵀ` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> GramMatrix {
        let n = self.size();
        assert_eq!(perm.len(), n, "permutation length");
        GramMatrix(DMatrix::from_fn(n, n, |i, j| self.0[(perm[i], perm[j])]))
    }

    pub fn spectrum(&self) -> Result<Spectrum, MatInfoError> {
        linalg::sym_eigendecompose(&self.0)
    }
}

/// Scalar bundle for one pair of grams. `mir`/`hdr` are `None` when their
/// denominator entropy vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoMetrics {
    pub h1: f64,
    pub h2: f64,
    pub h_joint: f64,
    pub mi: f64,
    pub mir: Option<f64>,
    pub hdr: Option<f64>,
}

impl InfoMetrics {
    /// Assembles the bundle from the three entropies.
    pub fn from_entropies(h1: f64, h2: f64, h_joint: f64) -> Self {
        let mi = h1 + h2 - h_joint;
        Self {
            h1,
            h2,
            h_joint,
            mi,
            mir: ratio(mi, h1.min(h2)),
            hdr: ratio((h1 - h2).abs(), h1.max(h2)),
        }
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > UNDEFINED_TOL).then(|| num / den)
}

/// Cosine gram `G(Z) = Ẑᵀ Ẑ` of the columns of `z`.
pub fn gram(z: &FeatureMatrix) -> Result<GramMatrix, MatInfoError> {
    let m = z.as_matrix();
    let mut normalized = m.clone();
    for (j, mut col) in normalized.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm <= ZERO_NORM_TOL {
            return Err(MatInfoError::ZeroColumn(j));
        }
        col /= norm;
    }
    let mut k = normalized.tr_mul(&normalized);
    k = linalg::symmetrize(&k);
    let n = k.nrows();
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = k[(i, j)].clamp(-1.0, 1.0);
        }
        k[(i, i)] = 1.0;
    }
    Ok(GramMatrix(k))
}

/// Entropy of a normalized spectrum `λ / n`, with negative eigenvalues
/// clamped to zero and `0 · log 0 = 0`.
pub fn entropy_from_eigenvalues(eigenvalues: &[f64], n: usize) -> f64 {
    let scale = 1.0 / n as f64;
    eigenvalues
        .iter()
        .map(|&l| l.max(0.0) * scale)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

fn checked_spectrum(k: &DMatrix<f64>) -> Result<Spectrum, MatInfoError> {
    let s = linalg::sym_eigendecompose(k)?;
    let min = s.min_eigenvalue();
    if min < -PSD_SLACK * k.nrows() as f64 {
        return Err(MatInfoError::NotPsd(min));
    }
    Ok(s)
}

/// Matrix entropy `-tr((K/N) log(K/N))` of any symmetric PSD matrix, using
/// its row count as `N`. Callers that hold a [`GramMatrix`] should use
/// [`matrix_entropy`].
pub fn symmetric_entropy(k: &DMatrix<f64>) -> Result<f64, MatInfoError> {
    let s = checked_spectrum(k)?;
    Ok(entropy_from_eigenvalues(s.eigenvalues.as_slice(), k.nrows()))
}

/// Value and gradient `∂H/∂K` of [`symmetric_entropy`]. The gradient floors
/// the normalized eigenvalues at [`GRADIENT_FLOOR`] so the logarithm stays
/// bounded.
pub fn symmetric_entropy_with_gradient(
    k: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>), MatInfoError> {
    let s = checked_spectrum(k)?;
    let n = k.nrows() as f64;
    let value = entropy_from_eigenvalues(s.eigenvalues.as_slice(), k.nrows());
    let grad = s.apply(|l| -((l / n).max(GRADIENT_FLOOR).ln() + 1.0) / n);
    Ok((value, linalg::symmetrize(&grad)))
}

pub fn matrix_entropy(k: &GramMatrix) -> Result<f64, MatInfoError> {
    symmetric_entropy(k.as_matrix())
}

pub fn matrix_mutual_information(k1: &GramMatrix, k2: &GramMatrix) -> Result<f64, MatInfoError> {
    Ok(info_metrics(k1, k2)?.mi)
}

pub fn mir(k1: &GramMatrix, k2: &GramMatrix) -> Result<Option<f64>, MatInfoError> {
    Ok(info_metrics(k1, k2)?.mir)
}

/// Entropy difference ratio. Only the two scalar entropies enter, so the
/// grams may differ in size.
pub fn hdr(k1: &GramMatrix, k2: &GramMatrix) -> Result<Option<f64>, MatInfoError> {
    let h1 = matrix_entropy(k1)?;
    let h2 = matrix_entropy(k2)?;
    Ok(ratio((h1 - h2).abs(), h1.max(h2)))
}

/// All of H₁, H₂, H(K₁⊙K₂), MI, MIR and HDR from three eigendecompositions.
pub fn info_metrics(k1: &GramMatrix, k2: &GramMatrix) -> Result<InfoMetrics, MatInfoError> {
    let joint = k1.hadamard(k2)?;
    let h1 = matrix_entropy(k1)?;
    let h2 = matrix_entropy(k2)?;
    let hj = matrix_entropy(&joint)?;
    Ok(InfoMetrics::from_entropies(h1, h2, hj))
}

/// `exp(H(K))`, a smooth surrogate for the rank of the underlying features.
pub fn effective_rank(k: &GramMatrix) -> Result<f64, MatInfoError> {
    Ok(matrix_entropy(k)?.exp())
}

/// `∂H/∂K = -(1/N) · U · diag(log λ' + 1) · Uᵀ` with `λ'` the eigenvalues
/// of `K / N` floored at [`GRADIENT_FLOOR`].
pub fn entropy_gradient(k: &GramMatrix) -> Result<DMatrix<f64>, MatInfoError> {
    Ok(symmetric_entropy_with_gradient(k.as_matrix())?.1)
}

/// Gradients of `MI(K₁, K₂)` with respect to both arguments, chained through
/// the Hadamard product.
pub fn mutual_information_gradient(
    k1: &GramMatrix,
    k2: &GramMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>), MatInfoError> {
    let joint = k1.hadamard(k2)?;
    let g1 = entropy_gradient(k1)?;
    let g2 = entropy_gradient(k2)?;
    let gj = entropy_gradient(&joint)?;
    let d1 = g1 - gj.component_mul(k2.as_matrix());
    let d2 = g2 - gj.component_mul(k1.as_matrix());
    Ok((d1, d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn feat(rows: usize, cols: usize, data: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn gram_of_orthonormal_columns_is_identity() {
        let g = gram(&feat(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(g, GramMatrix::identity(2));
    }

    #[test]
    fn gram_off_diagonal_cosine() {
        // columns (1,0) and (1,1)
        let g = gram(&feat(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(g.as_matrix()[(0, 1)], 0.5_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.as_matrix()[(1, 0)], 0.70710678, epsilon = 1e-8);
    }

    #[test]
    fn gram_rejects_zero_column() {
        let z = feat(2, 3, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0]);
        assert_eq!(gram(&z), Err(MatInfoError::ZeroColumn(1)));
    }

    #[test]
    fn entropy_of_identity_and_ones() {
        assert_abs_diff_eq!(
            matrix_entropy(&GramMatrix::identity(2)).unwrap(),
            2.0_f64.ln(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(matrix_entropy(&GramMatrix::ones(3)).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_of_etf_gram() {
        let k = GramMatrix::equicorrelation(-1.0 / 9.0, 10).unwrap();
        assert_abs_diff_eq!(matrix_entropy(&k).unwrap(), 9.0_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(effective_rank(&k).unwrap(), 9.0, epsilon = 1e-10);
    }

    #[test]
    fn entropy_rejects_indefinite() {
        // equicorrelation below -1/(C-1) has a negative eigenvalue
        let k = GramMatrix::equicorrelation(-0.6, 3).unwrap();
        assert!(matches!(matrix_entropy(&k), Err(MatInfoError::NotPsd(_))));
    }

    #[test]
    fn mutual_information_examples() {
        let i4 = GramMatrix::identity(4);
        assert_abs_diff_eq!(
            matrix_mutual_information(&i4, &i4).unwrap(),
            4.0_f64.ln(),
            epsilon = 1e-13
        );

        let k1 = GramMatrix::equicorrelation(0.3, 4).unwrap();
        assert_abs_diff_eq!(
            matrix_mutual_information(&k1, &GramMatrix::ones(4)).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        let etf = GramMatrix::equicorrelation(-1.0 / 9.0, 10).unwrap();
        // closed form: 2 log 9 - [(2 - 1/9) log 9 - (8/9) log 8]
        let expected = 2.0 * 9f64.ln() - ((2.0 - 1.0 / 9.0) * 9f64.ln() - 8.0 / 9.0 * 8f64.ln());
        assert_abs_diff_eq!(expected, 2.0925285456, epsilon = 1e-9);
        assert_abs_diff_eq!(
            matrix_mutual_information(&etf, &etf).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn size_mismatch_is_reported() {
        assert_eq!(
            matrix_mutual_information(&GramMatrix::identity(2), &GramMatrix::identity(3)),
            Err(MatInfoError::SizeMismatch(2, 3))
        );
    }

    #[test]
    fn ratio_examples() {
        let i3 = GramMatrix::identity(3);
        assert_abs_diff_eq!(mir(&i3, &i3).unwrap().unwrap(), 1.0, epsilon = 1e-13);

        let etf = GramMatrix::equicorrelation(-1.0 / 9.0, 10).unwrap();
        assert_abs_diff_eq!(mir(&etf, &etf).unwrap().unwrap(), 0.9523507825, epsilon = 1e-9);

        assert_eq!(mir(&i3, &GramMatrix::ones(3)).unwrap(), None);

        let k = GramMatrix::equicorrelation(0.2, 5).unwrap();
        assert_eq!(hdr(&k, &k).unwrap(), Some(0.0));
        assert_abs_diff_eq!(
            hdr(&GramMatrix::identity(4), &GramMatrix::ones(4)).unwrap().unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            hdr(&GramMatrix::identity(2), &GramMatrix::identity(4)).unwrap().unwrap(),
            0.5,
            epsilon = 1e-13
        );
    }

    #[test]
    fn gradient_at_identity() {
        let d = 5;
        let g = entropy_gradient(&GramMatrix::identity(d)).unwrap();
        let c = -((1.0 / d as f64).ln() + 1.0) / d as f64;
        assert!((g - DMatrix::identity(d, d) * c).norm() < 1e-13);
    }

    #[test]
    fn constructor_validation() {
        let bad_diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.9]);
        assert!(matches!(
            GramMatrix::new(bad_diag),
            Err(MatInfoError::NotUnitDiagonal { index: 1, .. })
        ));
        let out_of_range = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            GramMatrix::new(out_of_range),
            Err(MatInfoError::OutOfRange { .. })
        ));
        // small drift is absorbed by symmetrization
        let drift = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3 + 1e-11, 1.0]);
        let g = GramMatrix::new(drift).unwrap();
        assert_eq!(g.as_matrix()[(0, 1)], g.as_matrix()[(1, 0)]);
    }
}
