//! Neural Collapse constructions, closed-form MIR/HDR values, and numerical
//! checkers for the regression-error bounds that relate HDR to
//! approximation quality.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::NcError;
use crate::linalg;
use crate::matinfo::{self, FeatureMatrix, InfoMetrics};
use crate::seed::SeedStream;

/// Relative singular-value cutoff used to define numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Relative singular-value cutoff of the least-squares pseudoinverse.
pub const PINV_TOL: f64 = 1e-10;
/// Slack granted to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-8;
const UNIT_NORM_TOL: f64 = 1e-9;

/// Global mean, centered class means and class counts of a labelled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub global_mean: DVector<f64>,
    /// `d × C`; column `c` is `μ_c − μ_G`.
    pub centered_class_means: DMatrix<f64>,
    pub counts: Vec<usize>,
}

/// Labels are 0-based, `labels[i] < classes`.
pub fn class_statistics(
    z: &FeatureMatrix,
    labels: &[usize],
    classes: usize,
) -> Result<ClassStats, NcError> {
    let m = z.as_matrix();
    if labels.len() != m.ncols() {
        return Err(NcError::ShapeMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            m.ncols()
        )));
    }
    check_labels(labels, classes)?;
    let d = m.nrows();
    let mut sums = DMatrix::zeros(d, classes);
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        let mut col = sums.column_mut(y);
        col += m.column(i);
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(NcError::EmptyClass(c));
    }
    let global_mean = m.column_mean();
    let mut centered = sums;
    for (c, mut col) in centered.column_iter_mut().enumerate() {
        col /= counts[c] as f64;
        col -= &global_mean;
    }
    Ok(ClassStats {
        global_mean,
        centered_class_means: centered,
        counts,
    })
}

fn check_labels(labels: &[usize], classes: usize) -> Result<(), NcError> {
    match labels.iter().position(|&y| y >= classes) {
        Some(index) => Err(NcError::LabelOutOfRange {
            index,
            label: labels[index],
            classes,
        }),
        None => Ok(()),
    }
}

/// `C` unit vectors in `R^d` with pairwise cosine `-1/(C-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtfFrame {
    /// `d × C`, unit columns.
    pub vectors: DMatrix<f64>,
}

impl EtfFrame {
    pub fn classes(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Normalized columns of `I_C − 11ᵀ/C`, expressed in an orthonormal (Helmert)
/// basis of the sum-zero subspace and zero-padded to `d` dimensions.
pub fn simplex_etf(classes: usize, dim: usize) -> Result<EtfFrame, NcError> {
    if classes < 2 {
        return Err(NcError::DegenerateClassCount(classes));
    }
    if dim + 1 < classes {
        return Err(NcError::DimensionTooSmall {
            dim,
            classes,
            needed: classes - 1,
        });
    }
    // Row k of the Helmert basis: (1, …, 1, −k, 0, …) / √(k(k+1)), k ones.
    let mut h = DMatrix::zeros(dim, classes);
    for k in 1..classes {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for c in 0..k {
            h[(k - 1, c)] = scale;
        }
        h[(k - 1, k)] = -(k as f64) * scale;
    }
    for mut col in h.column_iter_mut() {
        let n = col.norm();
        col /= n;
    }
    Ok(EtfFrame { vectors: h })
}

/// Eigenvalues of `ℰ(α) = (1−α)I + α11ᵀ` in descending order.
pub fn equicorrelation_spectrum(alpha: f64, classes: usize) -> Vec<f64> {
    assert!(classes >= 1, "equicorrelation size must be positive");
    let single = 1.0 + (classes as f64 - 1.0) * alpha;
    let repeated = 1.0 - alpha;
    let mut out = vec![repeated; classes - 1];
    out.push(single);
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// MIR between the head gram and the class-mean gram under exact collapse:
/// `1/(C−1) + (C−2)log(C−2) / ((C−1)log(C−1))`.
pub fn nc_theoretical_mir(classes: usize) -> Result<f64, NcError> {
    if classes <= 2 {
        return Err(NcError::DegenerateClassCount(classes));
    }
    let c = classes as f64;
    Ok(1.0 / (c - 1.0) + xlogx(c - 2.0) / ((c - 1.0) * (c - 1.0).ln()))
}

/// HDR under exact collapse (the two grams coincide).
pub fn nc_theoretical_hdr(classes: usize) -> Result<f64, NcError> {
    if classes <= 2 {
        return Err(NcError::DegenerateClassCount(classes));
    }
    Ok(0.0)
}

/// Metrics between `G(Wᵀ)` (head rows) and `G(M)` (centered class means).
pub fn nc_alignment_metrics(head: &DMatrix<f64>, stats: &ClassStats) -> Result<InfoMetrics, NcError> {
    let (c, d) = head.shape();
    let m = &stats.centered_class_means;
    if m.shape() != (d, c) {
        return Err(NcError::ShapeMismatch(format!(
            "head is {c}x{d} but class means are {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let gw = matinfo::gram(&FeatureMatrix::new(head.transpose())?)?;
    let gm = matinfo::gram(&FeatureMatrix::new(m.clone())?)?;
    Ok(matinfo::info_metrics(&gw, &gm)?)
}

/// `[w_{y_1} ⋯ w_{y_N}]`: the head row of each sample's class, as columns.
pub fn selected_head_columns(head: &DMatrix<f64>, labels: &[usize]) -> Result<FeatureMatrix, NcError> {
    check_labels(labels, head.nrows())?;
    let d = head.ncols();
    let out = DMatrix::from_fn(d, labels.len(), |r, i| head[(labels[i], r)]);
    Ok(FeatureMatrix::new(out)?)
}

/// Metrics between the sample gram `G(Z₁)` and the gram `G(Z₂)` of the
/// per-sample head rows.
pub fn nc_feature_metrics(
    z: &FeatureMatrix,
    labels: &[usize],
    head: &DMatrix<f64>,
) -> Result<InfoMetrics, NcError> {
    if head.ncols() != z.dim() {
        return Err(NcError::ShapeMismatch(format!(
            "head has {} columns but features have dimension {}",
            head.ncols(),
            z.dim()
        )));
    }
    if labels.len() != z.samples() {
        return Err(NcError::ShapeMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            z.samples()
        )));
    }
    let z2 = selected_head_columns(head, labels)?;
    let g1 = matinfo::gram(z)?;
    let g2 = matinfo::gram(&z2)?;
    Ok(matinfo::info_metrics(&g1, &g2)?)
}

/// Same as [`nc_feature_metrics`] with the batch mean removed from the
/// features first.
pub fn nc_feature_metrics_centered(
    z: &FeatureMatrix,
    labels: &[usize],
    head: &DMatrix<f64>,
) -> Result<InfoMetrics, NcError> {
    nc_feature_metrics(&z.centered(), labels, head)
}

/// A batch in exact Neural Collapse: `per_class` copies of each ETF vector
/// (class-major order), zero global mean, and head `W = ETFᵀ`.
#[derive(Debug, Clone)]
pub struct CollapsedBatch {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub head: DMatrix<f64>,
}

pub fn exact_collapse_batch(classes: usize, per_class: usize, dim: usize) -> Result<CollapsedBatch, NcError> {
    let etf = simplex_etf(classes, dim)?;
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();
    let features = DMatrix::from_fn(dim, n, |r, i| etf.vectors[(r, labels[i])]);
    Ok(CollapsedBatch {
        features: FeatureMatrix::new(features)?,
        labels,
        head: etf.vectors.transpose(),
    })
}

/// Result of an affine least-squares fit `Y ≈ W·Z + b·1ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// Attained `‖Y − (W Z + b 1ᵀ)‖_F`.
    pub residual: f64,
}

/// Minimum-norm affine least squares via centering and an SVD
/// pseudoinverse.
pub fn least_squares_affine(zin: &FeatureMatrix, y: &DMatrix<f64>) -> Result<AffineFit, NcError> {
    let z = zin.as_matrix();
    if z.ncols() != y.ncols() {
        return Err(NcError::ShapeMismatch(format!(
            "inputs have {} columns, targets {}",
            z.ncols(),
            y.ncols()
        )));
    }
    let zbar = z.column_mean();
    let ybar = y.column_mean();
    let mut zc = z.clone();
    for mut col in zc.column_iter_mut() {
        col -= &zbar;
    }
    let mut yc = y.clone();
    for mut col in yc.column_iter_mut() {
        col -= &ybar;
    }
    let weight = &yc * linalg::pseudo_inverse(&zc, PINV_TOL);
    let bias = &ybar - &weight * &zbar;
    let mut resid = y - &weight * z;
    for mut col in resid.column_iter_mut() {
        col -= &bias;
    }
    Ok(AffineFit {
        weight,
        bias,
        residual: resid.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundKind {
    /// Regression onto a second representation costs at most the first
    /// representation's error plus `‖W₁*‖_F` times the cross-regression error.
    Transfer,
    /// Cross-regression error is bounded below by the tail singular values.
    TailSingular,
    /// Tail singular mass is bounded above by the rank ratio.
    RankRatio,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Transfer => "transfer",
            BoundKind::TailSingular => "tail-singular",
            BoundKind::RankRatio => "rank-ratio",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundContext {
    pub rank_z1: Option<usize>,
    pub rank_z2: Option<usize>,
    /// Named intermediate quantities (residuals, norms, secondary sides).
    pub terms: Vec<(&'static str, f64)>,
    /// Singular values of `Z₁/√N` where they enter the bound.
    pub singular_values: Vec<f64>,
}

impl BoundContext {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

/// Both sides of one bound, oriented so that `holds` means the theorem is
/// satisfied: `holds ⇔ lhs ≥ rhs − 1e-8`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub context: BoundContext,
}

impl BoundReport {
    fn new(kind: BoundKind, lhs: f64, rhs: f64, context: BoundContext) -> Self {
        Self {
            kind,
            lhs,
            rhs,
            holds: lhs >= rhs - BOUND_SLACK,
            context,
        }
    }
}

fn same_samples(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<(), NcError> {
    if a.samples() != b.samples() {
        return Err(NcError::ShapeMismatch(format!(
            "Z1 has {} samples, Z2 has {}",
            a.samples(),
            b.samples()
        )));
    }
    Ok(())
}

/// `min‖Y − (W Z₁ + b)‖ + ‖W₁*‖_F · min‖Z₁ − (H Z₂ + η)‖ ≥ min‖Y − (W Z₂ + b)‖`.
pub fn check_transfer_bound(
    z1: &FeatureMatrix,
    z2: &FeatureMatrix,
    y: &DMatrix<f64>,
) -> Result<BoundReport, NcError> {
    same_samples(z1, z2)?;
    let fit1 = least_squares_affine(z1, y)?;
    let fit2 = least_squares_affine(z2, y)?;
    let cross = least_squares_affine(z2, z1.as_matrix())?;
    let w1_norm = fit1.weight.norm();
    let lhs = fit1.residual + w1_norm * cross.residual;
    let context = BoundContext {
        terms: vec![
            ("residual_y_on_z1", fit1.residual),
            ("residual_y_on_z2", fit2.residual),
            ("residual_z1_on_z2", cross.residual),
            ("w1_frobenius", w1_norm),
        ],
        ..Default::default()
    };
    Ok(BoundReport::new(BoundKind::Transfer, lhs, fit2.residual, context))
}

struct TailTerms {
    rank1: usize,
    rank2: usize,
    sigma: Vec<f64>,
    tail: f64,
}

fn tail_terms(z1: &FeatureMatrix, z2: &FeatureMatrix) -> Result<TailTerms, NcError> {
    same_samples(z1, z2)?;
    let n = z1.samples() as f64;
    let rank1 = linalg::numerical_rank(z1.as_matrix(), RANK_TOL);
    let rank2 = linalg::numerical_rank(z2.as_matrix(), RANK_TOL);
    if rank1 <= rank2 {
        return Err(NcError::Inapplicable(format!(
            "rank(Z1) = {rank1} does not exceed rank(Z2) = {rank2}"
        )));
    }
    let sigma: Vec<f64> = linalg::singular_values(z1.as_matrix())
        .into_iter()
        .map(|s| s / n.sqrt())
        .collect();
    // 1-based indices rank2+2 ..= rank1
    let tail = sigma
        .iter()
        .enumerate()
        .filter(|(j, _)| *j + 1 >= rank2 + 2 && *j < rank1)
        .map(|(_, s)| s * s)
        .sum();
    Ok(TailTerms {
        rank1,
        rank2,
        sigma,
        tail,
    })
}

/// `(1/N) min‖Z₁ − (H Z₂ + η)‖² ≥ Σ_{j=rank(Z₂)+2}^{rank(Z₁)} σ_j²`.
pub fn check_tail_singular_bound(z1: &FeatureMatrix, z2: &FeatureMatrix) -> Result<BoundReport, NcError> {
    let t = tail_terms(z1, z2)?;
    let cross = least_squares_affine(z2, z1.as_matrix())?;
    let lhs = cross.residual * cross.residual / z1.samples() as f64;
    let context = BoundContext {
        rank_z1: Some(t.rank1),
        rank_z2: Some(t.rank2),
        terms: vec![("residual_z1_on_z2", cross.residual)],
        singular_values: t.sigma,
    };
    Ok(BoundReport::new(BoundKind::TailSingular, lhs, t.tail, context))
}

/// For unit-norm columns of `Z₁`:
/// `Σ tail σ_j² ≤ (r₁ − r₂ − 1)/r₁ ≤ 1 − r₂/r₁`.
///
/// The report's `lhs`/`rhs` carry the first inequality; the second one and
/// the Frobenius identity `Σ σ_j² = 1` are in the context terms, and
/// `holds` requires both inequalities.
pub fn check_rank_ratio_bound(z1: &FeatureMatrix, z2: &FeatureMatrix) -> Result<BoundReport, NcError> {
    for (index, col) in z1.as_matrix().column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(NcError::ColumnsNotNormalized { index, norm });
        }
    }
    let t = tail_terms(z1, z2)?;
    let frobenius: f64 = t.sigma.iter().map(|s| s * s).sum();
    let r1 = t.rank1 as f64;
    let r2 = t.rank2 as f64;
    let middle = (r1 - r2 - 1.0) / r1;
    let outer = 1.0 - r2 / r1;
    let context = BoundContext {
        rank_z1: Some(t.rank1),
        rank_z2: Some(t.rank2),
        terms: vec![
            ("frobenius_sum", frobenius),
            ("rank_ratio_middle", middle),
            ("rank_ratio_outer", outer),
        ],
        singular_values: t.sigma,
    };
    let mut report = BoundReport::new(BoundKind::RankRatio, middle, t.tail, context);
    report.holds &= outer >= middle - BOUND_SLACK;
    Ok(report)
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random `rows × cols` matrix of rank `rank` (almost surely).
fn low_rank(rng: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    if rank == 0 {
        return DMatrix::zeros(rows, cols);
    }
    gaussian(rng, rows, rank) * gaussian(rng, rank, cols)
}

/// `(Z₁, Z₂, Y)` with `d, d′ ≤ 16`, `N ≤ 64`; Z₂ is a noisy linear image of Z₁
/// or an independent draw, Y a noisy linear function of Z₁.
pub fn random_transfer_instance(rng: &mut impl Rng) -> (FeatureMatrix, FeatureMatrix, DMatrix<f64>) {
    let n = rng.random_range(4..=64);
    let d1 = rng.random_range(1..=16);
    let d2 = rng.random_range(1..=16);
    let k = rng.random_range(1..=6);
    let r1 = rng.random_range(1..=d1.min(n));
    let z1 = low_rank(rng, d1, n, r1);
    let z2 = if rng.random_bool(0.5) {
        let noise: f64 = rng.random_range(0.0..1.0);
        gaussian(rng, d2, d1) * &z1 + gaussian(rng, d2, n) * noise
    } else {
        gaussian(rng, d2, n)
    };
    let noise: f64 = rng.random_range(0.0..2.0);
    let y = gaussian(rng, k, d1) * &z1 + gaussian(rng, k, n) * noise;
    (
        FeatureMatrix::new(z1).expect("finite"),
        FeatureMatrix::new(z2).expect("finite"),
        y,
    )
}

/// `(Z₁, Z₂)` with `rank(Z₁) > rank(Z₂)`; Z₂ optionally shares row space
/// with Z₁ so the cross-regression is not always trivial.
pub fn random_rank_pair(rng: &mut impl Rng, unit_columns: bool) -> (FeatureMatrix, FeatureMatrix) {
    let n = rng.random_range(4..=64);
    let d1 = rng.random_range(2..=16);
    let r1 = rng.random_range(2..=d1.min(n));
    let r2 = rng.random_range(0..r1);
    let d2 = rng.random_range(r2.max(1)..=16);
    let basis = gaussian(rng, r1, n);
    let mut z1 = gaussian(rng, d1, r1) * &basis;
    let z2 = if r2 > 0 && rng.random_bool(0.5) {
        let shared = basis.rows(0, r2).into_owned();
        gaussian(rng, d2, r2) * shared
    } else {
        low_rank(rng, d2, n, r2)
    };
    if unit_columns {
        for mut col in z1.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
    }
    (
        FeatureMatrix::new(z1).expect("finite"),
        FeatureMatrix::new(z2).expect("finite"),
    )
}

/// Outcome of a seeded random sweep over all three bound checkers.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BoundSweep {
    pub trials: usize,
    pub transfer_held: usize,
    pub tail_held: usize,
    pub ratio_held: usize,
    /// Largest deviation of `Σσ²` from 1 across the rank-ratio instances.
    pub max_frobenius_error: f64,
    pub violations: Vec<BoundReport>,
}

impl BoundSweep {
    pub fn held(&self) -> usize {
        self.transfer_held + self.tail_held + self.ratio_held
    }

    pub fn total(&self) -> usize {
        3 * self.trials
    }
}

pub fn verify_bounds(seed: u64, trials: usize) -> Result<BoundSweep, NcError> {
    let streams = SeedStream::new(seed);
    let mut rng_transfer = streams.rng("bounds/transfer");
    let mut rng_tail = streams.rng("bounds/tail");
    let mut rng_ratio = streams.rng("bounds/ratio");
    let mut sweep = BoundSweep {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let (z1, z2, y) = random_transfer_instance(&mut rng_transfer);
        let r = check_transfer_bound(&z1, &z2, &y)?;
        tally(&mut sweep.transfer_held, &mut sweep.violations, r);

        let (z1, z2) = random_rank_pair(&mut rng_tail, false);
        let r = check_tail_singular_bound(&z1, &z2)?;
        tally(&mut sweep.tail_held, &mut sweep.violations, r);

        let (z1, z2) = random_rank_pair(&mut rng_ratio, true);
        let r = check_rank_ratio_bound(&z1, &z2)?;
        let fro = r.context.term("frobenius_sum").unwrap_or(f64::NAN);
        sweep.max_frobenius_error = sweep.max_frobenius_error.max((fro - 1.0).abs());
        tally(&mut sweep.ratio_held, &mut sweep.violations, r);
    }
    Ok(sweep)
}

fn tally(held: &mut usize, violations: &mut Vec<BoundReport>, report: BoundReport) {
    if report.holds {
        *held += 1;
    } else {
        violations.push(report);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn class_stats_two_symmetric_classes() {
        let z = FeatureMatrix::new(DMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0]))
            .unwrap();
        let s = class_statistics(&z, &[0, 0, 1, 1], 2).unwrap();
        assert_abs_diff_eq!(s.global_mean.norm(), 0.0);
        assert_eq!(s.centered_class_means.column(0).as_slice(), &[1.0, 0.0]);
        assert_eq!(s.centered_class_means.column(1).as_slice(), &[-1.0, 0.0]);
        assert_eq!(s.counts, vec![2, 2]);
    }

    #[test]
    fn class_stats_single_class_and_errors() {
        let z = FeatureMatrix::new(DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 4.0])).unwrap();
        let s = class_statistics(&z, &[0, 0, 0], 1).unwrap();
        assert_abs_diff_eq!(s.centered_class_means.norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            class_statistics(&z, &[0, 3, 0], 2),
            Err(NcError::LabelOutOfRange { index: 1, label: 3, .. })
        ));
        assert_eq!(class_statistics(&z, &[0, 0, 0], 2), Err(NcError::EmptyClass(1)));
    }

    #[test]
    fn etf_cosines() {
        for (c, cos) in [(2usize, -1.0), (3, -0.5), (10, -1.0 / 9.0)] {
            let f = simplex_etf(c, c + 2).unwrap();
            let g = f.vectors.tr_mul(&f.vectors);
            for i in 0..c {
                assert_abs_diff_eq!(g[(i, i)], 1.0, epsilon = 1e-12);
                for j in 0..c {
                    if i != j {
                        assert_abs_diff_eq!(g[(i, j)], cos, epsilon = 1e-12);
                    }
                }
            }
        }
        assert!(simplex_etf(5, 3).is_err());
        assert!(simplex_etf(5, 4).is_ok());
    }

    #[test]
    fn equicorrelation_spectrum_examples() {
        assert_eq!(equicorrelation_spectrum(0.0, 4), vec![1.0; 4]);
        let s = equicorrelation_spectrum(-1.0 / 9.0, 10);
        for v in &s[..9] {
            assert_abs_diff_eq!(*v, 10.0 / 9.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s[9], 0.0, epsilon = 1e-15);
        let s = equicorrelation_spectrum(1.0 / 81.0, 10);
        assert_abs_diff_eq!(s[0], 1.1111111111, epsilon = 1e-9);
        assert_abs_diff_eq!(s[1], 0.9876543210, epsilon = 1e-9);
    }

    #[test]
    fn theoretical_values() {
        assert_abs_diff_eq!(nc_theoretical_mir(3).unwrap(), 0.5, epsilon = 1e-15);
        // 1/9 + 8 log 8 / (9 log 9)
        assert_abs_diff_eq!(nc_theoretical_mir(10).unwrap(), 0.95235078254, epsilon = 1e-10);
        assert_abs_diff_eq!(nc_theoretical_mir(100).unwrap(), 0.99781293577, epsilon = 1e-10);
        assert_eq!(nc_theoretical_hdr(3).unwrap(), 0.0);
        assert_eq!(nc_theoretical_hdr(10).unwrap(), 0.0);
        assert_eq!(nc_theoretical_hdr(2), Err(NcError::DegenerateClassCount(2)));
        assert_eq!(nc_theoretical_mir(2), Err(NcError::DegenerateClassCount(2)));
    }

    #[test]
    fn alignment_on_etf_head() {
        let etf = simplex_etf(10, 12).unwrap();
        let stats = ClassStats {
            global_mean: DVector::zeros(12),
            centered_class_means: etf.vectors.clone() * 3.0,
            counts: vec![1; 10],
        };
        let m = nc_alignment_metrics(&etf.vectors.transpose(), &stats).unwrap();
        assert_abs_diff_eq!(m.mir.unwrap(), nc_theoretical_mir(10).unwrap(), epsilon = 1e-8);
        assert_abs_diff_eq!(m.hdr.unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn alignment_rank_one_means_hdr_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = gaussian(&mut rng, 6, 8);
        let dir = gaussian(&mut rng, 8, 1);
        let means = DMatrix::from_fn(8, 6, |r, c| dir[(r, 0)] * (1.0 + c as f64));
        let stats = ClassStats {
            global_mean: DVector::zeros(8),
            centered_class_means: means,
            counts: vec![1; 6],
        };
        let m = nc_alignment_metrics(&w, &stats).unwrap();
        assert!(m.hdr.unwrap() > 1.0 - 1e-6, "hdr = {:?}", m.hdr);

        let same = ClassStats {
            centered_class_means: w.transpose(),
            ..stats
        };
        assert_abs_diff_eq!(nc_alignment_metrics(&w, &same).unwrap().hdr.unwrap(), 0.0);
    }

    #[test]
    fn feature_metrics_single_class_batch_is_undefined() {
        let etf = simplex_etf(4, 4).unwrap();
        let z = FeatureMatrix::new(DMatrix::from_fn(4, 5, |r, _| etf.vectors[(r, 2)])).unwrap();
        let m = nc_feature_metrics(&z, &[2; 5], &etf.vectors.transpose()).unwrap();
        assert_eq!(m.mir, None);
    }

    #[test]
    fn least_squares_identity_and_constant_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = FeatureMatrix::new(gaussian(&mut rng, 3, 10)).unwrap();
        let fit = least_squares_affine(&z, z.as_matrix()).unwrap();
        assert!(fit.residual < 1e-10);
        assert!((&fit.weight - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);

        let y = DMatrix::from_fn(2, 10, |r, _| r as f64 + 0.5);
        let fit = least_squares_affine(&z, &y).unwrap();
        assert!(fit.residual < 1e-10);
        assert!(fit.weight.norm() < 1e-10);
    }

    #[test]
    fn rank_ratio_arithmetic() {
        // rank 8 vs rank 3
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z1 = gaussian(&mut rng, 8, 30);
        for mut c in z1.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let z2 = low_rank(&mut rng, 5, 30, 3);
        let r = check_rank_ratio_bound(&FeatureMatrix::new(z1).unwrap(), &FeatureMatrix::new(z2).unwrap()).unwrap();
        assert_eq!(r.context.rank_z1, Some(8));
        assert_eq!(r.context.rank_z2, Some(3));
        assert_abs_diff_eq!(r.lhs, 0.5);
        assert_abs_diff_eq!(r.context.term("rank_ratio_outer").unwrap(), 0.625);
        assert_abs_diff_eq!(r.context.term("frobenius_sum").unwrap(), 1.0, epsilon = 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn rank_ratio_rejects_unnormalized() {
        let z1 = FeatureMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        let z2 = FeatureMatrix::new(DMatrix::zeros(1, 2)).unwrap();
        assert!(matches!(
            check_rank_ratio_bound(&z1, &z2),
            Err(NcError::ColumnsNotNormalized { index: 0, .. })
        ));
    }

    #[test]
    fn tail_bound_inapplicable_when_ranks_tie() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z1 = FeatureMatrix::new(gaussian(&mut rng, 3, 10)).unwrap();
        let z2 = FeatureMatrix::new(gaussian(&mut rng, 3, 10)).unwrap();
        assert!(matches!(
            check_tail_singular_bound(&z1, &z2),
            Err(NcError::Inapplicable(_))
        ));
    }

    #[test]
    fn tail_bound_adjacent_ranks_is_empty_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z1 = FeatureMatrix::new(low_rank(&mut rng, 6, 20, 4)).unwrap();
        let z2 = FeatureMatrix::new(low_rank(&mut rng, 6, 20, 3)).unwrap();
        let r = check_tail_singular_bound(&z1, &z2).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert!(r.holds);
    }
}
