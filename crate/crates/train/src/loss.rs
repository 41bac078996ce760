//! Losses with analytic gradients.
//!
//! All batch inputs are `B × k` with one sample per row. The information
//! losses build cosine grams over rows, so `G(f)` here is `G(fᵀ)` in the
//! column convention of `infoplay_core`.

use infoplay_core::matinfo::symmetric_entropy_with_gradient;
use nalgebra::{DMatrix, DVector};

use crate::error::TrainError;

const TARGET_TOL: f64 = 1e-9;
/// Rows with a smaller norm are rejected by the information losses.
pub const ZERO_ROW_TOL: f64 = 1e-12;
/// Floor applied to fairness-loss histograms.
pub const HIST_FLOOR: f64 = 1e-6;

pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

pub fn one_hot(labels: &[usize], classes: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        out[(i, y)] = 1.0;
    }
    out
}

/// Mean cross-entropy `−Σ p log softmax(z)` and its gradient `(softmax − p)/B`.
pub fn cross_entropy(target: &DMatrix<f64>, logits: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>), TrainError> {
    if target.shape() != logits.shape() {
        return Err(TrainError::ShapeMismatch(format!(
            "targets {:?} vs logits {:?}",
            target.shape(),
            logits.shape()
        )));
    }
    let b = logits.nrows();
    if b == 0 {
        return Ok((0.0, logits.clone()));
    }
    for (row, r) in target.row_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > TARGET_TOL || r.iter().any(|&p| p < 0.0) {
            return Err(TrainError::InvalidTarget { row, sum });
        }
    }
    let mut total = 0.0;
    let mut grad = DMatrix::zeros(b, logits.ncols());
    for i in 0..b {
        let row = logits.row(i);
        let m = row.max();
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        for c in 0..logits.ncols() {
            let logp = row[c] - lse;
            let p = target[(i, c)];
            if p > 0.0 {
                total -= p * logp;
            }
            grad[(i, c)] = (logp.exp() - p) / b as f64;
        }
    }
    Ok((total / b as f64, grad))
}

/// `y′ = (1 − ε)·y + ε/C`.
pub fn smooth_labels(y: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>, TrainError> {
    if !(0.0..1.0).contains(&eps) {
        return Err(TrainError::BadEps(eps));
    }
    let c = y.ncols() as f64;
    Ok(y.map(|v| (1.0 - eps) * v + eps / c))
}

/// Value of an information loss and its gradients with respect to both
/// inputs.
#[derive(Debug, Clone)]
pub struct AuxLoss {
    pub value: f64,
    pub d_f: DMatrix<f64>,
    pub d_v: DMatrix<f64>,
}

struct RowGram {
    unit: DMatrix<f64>,
    norms: Vec<f64>,
    k: DMatrix<f64>,
}

impl RowGram {
    fn new(z: &DMatrix<f64>) -> Result<Self, TrainError> {
        let mut unit = z.clone();
        let mut norms = Vec::with_capacity(z.nrows());
        for (i, mut row) in unit.row_iter_mut().enumerate() {
            let n = row.norm();
            if n <= ZERO_ROW_TOL {
                return Err(TrainError::ZeroRow(i));
            }
            row /= n;
            norms.push(n);
        }
        let k = &unit * unit.transpose();
        let k = (&k + k.transpose()) * 0.5;
        Ok(Self { unit, norms, k })
    }

    /// Pulls `∂L/∂K` back through `K = ẐẐᵀ` and the row normalization.
    fn pull_back(&self, dk: &DMatrix<f64>) -> DMatrix<f64> {
        let d_unit = (dk + dk.transpose()) * &self.unit;
        let mut out = d_unit.clone();
        for i in 0..out.nrows() {
            let u = self.unit.row(i);
            let g = d_unit.row(i);
            let proj = u.dot(&g);
            let n = self.norms[i];
            for j in 0..out.ncols() {
                out[(i, j)] = (g[j] - u[j] * proj) / n;
            }
        }
        out
    }
}

fn check_pair(f: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<(), TrainError> {
    if f.nrows() != v.nrows() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} feature rows vs {} head rows",
            f.nrows(),
            v.nrows()
        )));
    }
    if f.nrows() < 2 {
        return Err(TrainError::BatchTooSmall(f.nrows()));
    }
    Ok(())
}

/// `MI(G(f), G(V))` and its gradients.
pub fn mi_aux_loss(f: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<AuxLoss, TrainError> {
    check_pair(f, v)?;
    let gf = RowGram::new(f)?;
    let gv = RowGram::new(v)?;
    let joint = gf.k.component_mul(&gv.k);
    let (h1, d1) = symmetric_entropy_with_gradient(&gf.k)?;
    let (h2, d2) = symmetric_entropy_with_gradient(&gv.k)?;
    let (hj, dj) = symmetric_entropy_with_gradient(&joint)?;
    let dk1 = d1 - dj.component_mul(&gv.k);
    let dk2 = d2 - dj.component_mul(&gf.k);
    Ok(AuxLoss {
        value: h1 + h2 - hj,
        d_f: gf.pull_back(&dk1),
        d_v: gv.pull_back(&dk2),
    })
}

/// `|H(G(f)) − H(G(V))|` with the subgradient `sign(0) = 0`.
pub fn hdr_aux_loss(f: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<AuxLoss, TrainError> {
    check_pair(f, v)?;
    let gf = RowGram::new(f)?;
    let gv = RowGram::new(v)?;
    let (h1, d1) = symmetric_entropy_with_gradient(&gf.k)?;
    let (h2, d2) = symmetric_entropy_with_gradient(&gv.k)?;
    let diff = h1 - h2;
    let s = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    Ok(AuxLoss {
        value: diff.abs(),
        d_f: gf.pull_back(&(d1 * s)),
        d_v: gv.pull_back(&(d2 * -s)),
    })
}

/// Confidence-masked pseudo-label loss on the strong view.
#[derive(Debug, Clone)]
pub struct UnlabeledLoss {
    pub value: f64,
    /// Gradient with respect to the strong-view logits.
    pub d_strong: DMatrix<f64>,
    pub mask: Vec<bool>,
    pub pseudo_labels: Vec<usize>,
    pub mask_fraction: f64,
    pub weak_probs: DMatrix<f64>,
    pub strong_probs: DMatrix<f64>,
}

/// `(1/μB) Σ 1(max qᵢ > τ)·CE(onehot(argmax qᵢ), softmax(strongᵢ))`; the
/// weak view is treated as a constant.
pub fn ssl_unlabeled_loss(
    weak_logits: &DMatrix<f64>,
    strong_logits: &DMatrix<f64>,
    tau: f64,
) -> Result<UnlabeledLoss, TrainError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(TrainError::config("tau", format!("{tau} is outside (0, 1)")));
    }
    if weak_logits.shape() != strong_logits.shape() {
        return Err(TrainError::ShapeMismatch("weak and strong views differ in shape".into()));
    }
    let n = weak_logits.nrows();
    let q = softmax_rows(weak_logits);
    let big_q = softmax_rows(strong_logits);
    let pseudo_labels = crate::mlp::argmax_rows(&q);
    let mask: Vec<bool> = (0..n).map(|i| q[(i, pseudo_labels[i])] > tau).collect();
    let mut value = 0.0;
    let mut d_strong = DMatrix::zeros(n, strong_logits.ncols());
    let passed = mask.iter().filter(|&&m| m).count();
    if n > 0 {
        let scale = 1.0 / n as f64;
        for i in (0..n).filter(|&i| mask[i]) {
            let row = strong_logits.row(i);
            let m = row.max();
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            value -= (row[pseudo_labels[i]] - lse) * scale;
            for c in 0..strong_logits.ncols() {
                let target = if c == pseudo_labels[i] { 1.0 } else { 0.0 };
                d_strong[(i, c)] = (big_q[(i, c)] - target) * scale;
            }
        }
    }
    Ok(UnlabeledLoss {
        value,
        d_strong,
        mask,
        pseudo_labels,
        mask_fraction: if n == 0 { 0.0 } else { passed as f64 / n as f64 },
        weak_probs: q,
        strong_probs: big_q,
    })
}

#[derive(Debug, Clone)]
pub struct FairnessLoss {
    pub value: f64,
    pub d_p1: DVector<f64>,
    pub d_p2: DVector<f64>,
}

fn check_distribution(name: &str, x: &DVector<f64>, classes: usize) -> Result<(), TrainError> {
    if x.len() != classes {
        return Err(TrainError::ShapeMismatch(format!("{name} has length {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) || x.sum() <= 0.0 {
        return Err(TrainError::DegenerateHistogram(format!("{name} = {x:?}")));
    }
    Ok(())
}

/// `L_f = −H(SumNorm(p₁/h₁), SumNorm(p₂/h₂))` with `H(a, b) = −Σ a log b`.
/// Histogram entries are floored at [`HIST_FLOOR`].
pub fn ssl_fairness_loss(
    p1: &DVector<f64>,
    p2: &DVector<f64>,
    hist1: &DVector<f64>,
    hist2: &DVector<f64>,
) -> Result<FairnessLoss, TrainError> {
    let c = p1.len();
    check_distribution("p1", p1, c)?;
    check_distribution("p2", p2, c)?;
    for (name, h) in [("hist1", hist1), ("hist2", hist2)] {
        if h.len() != c || h.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TrainError::DegenerateHistogram(format!("{name} = {h:?}")));
        }
    }
    let h1 = hist1.map(|v| v.max(HIST_FLOOR));
    let h2 = hist2.map(|v| v.max(HIST_FLOOR));
    let x1 = p1.component_div(&h1);
    let x2 = p2.component_div(&h2);
    let (s1, s2) = (x1.sum(), x2.sum());
    let a = &x1 / s1;
    let b = &x2 / s2;
    let log_b = b.map(f64::ln);
    let value = a.dot(&log_b);
    // Through SumNorm: ∂L/∂x = (g − ⟨g, a⟩)/S.
    let ga = log_b;
    let gb = a.component_div(&b);
    let dx1 = ga.add_scalar(-ga.dot(&a)) / s1;
    let dx2 = gb.add_scalar(-gb.dot(&b)) / s2;
    Ok(FairnessLoss {
        value,
        d_p1: dx1.component_div(&h1),
        d_p2: dx2.component_div(&h2),
    })
}

/// Chains `∂L/∂p̄` into logits, where `p̄` is the mean softmax over the
/// selected rows.
pub fn mean_softmax_backward(probs: &DMatrix<f64>, rows: &[usize], d_mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(probs.nrows(), probs.ncols());
    if rows.is_empty() {
        return out;
    }
    let scale = 1.0 / rows.len() as f64;
    for &i in rows {
        let q = probs.row(i);
        let inner: f64 = (0..q.len()).map(|c| q[c] * d_mean[c]).sum();
        for c in 0..q.len() {
            out[(i, c)] = scale * q[c] * (d_mean[c] - inner);
        }
    }
    out
}
