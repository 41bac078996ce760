//! Training harnesses: supervised and semi-supervised loops with periodic
//! information-metric logging, checkpoint interpolation, magnitude pruning
//! with masked fine-tuning, and the modular-addition run.

use infoplay_core::matinfo::{self, FeatureMatrix, InfoMetrics};
use infoplay_core::nctheory;
use infoplay_core::SeedStream;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{fingerprint, AuxConfig, AuxMode, GrokConfig, SslConfig, SupervisedConfig};
use crate::data::{self, Dataset, Split, SslBatch, Strength};
use crate::error::TrainError;
use crate::loss;
use crate::mlp::{argmax_rows, ArchDescriptor, Forward, Gradients, Mlp};
use crate::optim::scheduled_lr;
use crate::record::{Accum, MetricRecord, Trajectory};

const EVAL_CHUNK: usize = 1024;

/// Endless shuffled pass over a fixed index pool.
struct Sampler {
    pool: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(mut pool: Vec<usize>, mut rng: ChaCha8Rng) -> Self {
        pool.shuffle(&mut rng);
        Self { pool, cursor: 0, rng }
    }

    fn next(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor == self.pool.len() {
                self.pool.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.pool[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// The fixed metric batch: `size` class-balanced test samples.
pub fn probe_batch(data: &Dataset, seed: u64, size: usize) -> Vec<usize> {
    data.probe_indices(Split::Test, size, &mut SeedStream::new(seed).rng("probe"))
}

/// Mean hard-label cross-entropy and accuracy over `indices`.
pub fn split_stats(model: &Mlp, data: &Dataset, indices: &[usize]) -> Result<(f64, f64), TrainError> {
    if indices.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let fwd = model.forward(&data.batch(chunk))?;
        let labels = data.labels_of(chunk);
        let (l, _) = loss::cross_entropy(&loss::one_hot(&labels, data.classes), &fwd.logits)?;
        loss_sum += l * chunk.len() as f64;
        correct += argmax_rows(&fwd.logits).iter().zip(&labels).filter(|(p, y)| p == y).count();
    }
    let n = indices.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

pub fn accuracy(model: &Mlp, data: &Dataset, split: Split) -> Result<f64, TrainError> {
    Ok(split_stats(model, data, &data.indices(split))?.1)
}

fn nonzero_rows(m: &DMatrix<f64>) -> Vec<usize> {
    (0..m.nrows()).filter(|&i| m.row(i).norm() > loss::ZERO_ROW_TOL).collect()
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Raw and centered metrics between `G(f)` on the probe and the gram of the
/// matching head rows. Probe samples whose feature vector is exactly zero
/// are left out.
pub fn probe_metrics(
    model: &Mlp,
    inputs: &DMatrix<f64>,
    labels: &[usize],
) -> Result<(Option<InfoMetrics>, Option<InfoMetrics>), TrainError> {
    let f = model.forward(inputs)?.features;
    let rows = nonzero_rows(&f);
    if rows.len() < 2 {
        return Ok((None, None));
    }
    let z = FeatureMatrix::new(select_rows(&f, &rows).transpose())?;
    let y: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    let head = &model.head().weight;
    let raw = nctheory::nc_feature_metrics(&z, &y, head).ok();
    let centered = nctheory::nc_feature_metrics_centered(&z, &y, head).ok();
    Ok((raw, centered))
}

struct Evaluator<'a> {
    data: &'a Dataset,
    fit: Vec<usize>,
    test: Vec<usize>,
    probe_inputs: DMatrix<f64>,
    probe_labels: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    fn new(data: &'a Dataset, fit_split: Split, probe: &[usize]) -> Self {
        Self {
            data,
            fit: data.indices(fit_split),
            test: data.indices(Split::Test),
            probe_inputs: data.batch(probe),
            probe_labels: data.labels_of(probe),
        }
    }

    fn record(&self, model: &Mlp, step: usize, lr: f64) -> Result<MetricRecord, TrainError> {
        let (train_loss, train_acc) = split_stats(model, self.data, &self.fit)?;
        let (_, test_acc) = split_stats(model, self.data, &self.test)?;
        let (info, centered) = probe_metrics(model, &self.probe_inputs, &self.probe_labels)?;
        Ok(MetricRecord {
            step,
            lr,
            train_loss,
            train_acc,
            test_acc,
            info,
            centered,
            mask_fraction: None,
            aux_loss: None,
        })
    }
}

/// Applies an MI or HDR term on the given feature rows. Returns the raw
/// auxiliary value and adds its weighted gradients into `d_features` and,
/// unless detached, into the head rows of `grads`.
struct AuxTerm {
    value: f64,
    d_features: DMatrix<f64>,
    d_head_rows: Option<(Vec<usize>, DMatrix<f64>)>,
}

fn aux_term(aux: &AuxConfig, fwd: &Forward, head: &DMatrix<f64>, rows: &[usize], labels: &[usize]) -> Result<Option<AuxTerm>, TrainError> {
    let rows: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&i| fwd.features.row(i).norm() > loss::ZERO_ROW_TOL)
        .collect();
    if rows.len() < 2 {
        return Ok(None);
    }
    let f = select_rows(&fwd.features, &rows);
    let sel: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    let v = DMatrix::from_fn(sel.len(), head.ncols(), |r, c| head[(sel[r], c)]);
    // Minimizing −λ·MI or +λ·|ΔH|.
    let (a, weight) = match aux.mode {
        AuxMode::Mi => (loss::mi_aux_loss(&f, &v)?, -aux.lambda),
        AuxMode::Hdr => (loss::hdr_aux_loss(&f, &v)?, aux.lambda),
        AuxMode::None => return Ok(None),
    };
    let mut d_features = DMatrix::zeros(fwd.features.nrows(), fwd.features.ncols());
    for (r, &i) in rows.iter().enumerate() {
        for c in 0..f.ncols() {
            d_features[(i, c)] = weight * a.d_f[(r, c)];
        }
    }
    let d_head_rows = (!aux.detach_head).then(|| (sel, a.d_v * weight));
    Ok(Some(AuxTerm {
        value: a.value,
        d_features,
        d_head_rows,
    }))
}

fn add_into(acc: &mut [f64], g: &Gradients) {
    for (a, b) in acc.iter_mut().zip(g.flatten()) {
        *a += b;
    }
}

fn apply_update(
    model: &mut Mlp,
    opt: &mut crate::optim::Optimizer,
    mut grads: Vec<f64>,
    mask: Option<&[bool]>,
    lr: f64,
    step: usize,
) -> Result<(), TrainError> {
    if let Some(keep) = mask {
        for (g, &k) in grads.iter_mut().zip(keep) {
            if !k {
                *g = 0.0;
            }
        }
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteLoss(step));
    }
    let mut params = model.flat_params();
    opt.step(&mut params, &grads, lr)?;
    model.set_flat_params(&params)
}

fn init_model(arch: &ArchDescriptor, seed: u64, init: Option<&Checkpoint>) -> Result<Mlp, TrainError> {
    match init {
        Some(ck) => {
            if &ck.arch != arch {
                return Err(TrainError::ArchMismatch(format!("{:?} vs {:?}", ck.arch, arch)));
            }
            ck.model()
        }
        None => Mlp::new(arch, &mut SeedStream::new(seed).rng("init")),
    }
}

pub fn train_supervised(cfg: &SupervisedConfig) -> Result<Trajectory, TrainError> {
    train_supervised_from(cfg, None, None)
}

/// Value and flat gradient of one training objective, plus the logged
/// auxiliary quantities.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub grads: Vec<f64>,
    pub aux_value: Option<f64>,
    pub mask_fraction: Option<f64>,
}

fn aux_signed(aux: &AuxConfig, value: f64) -> f64 {
    match aux.mode {
        AuxMode::Mi => -aux.lambda * value,
        _ => aux.lambda * value,
    }
}

/// `CE(smooth(y), logits)`, minus `λ·MI` or plus `λ·|ΔH|` when the
/// auxiliary term is active. Samples with all-zero features are left out of
/// the auxiliary term.
pub fn supervised_objective(
    model: &Mlp,
    x: &DMatrix<f64>,
    labels: &[usize],
    smoothing: f64,
    aux: &AuxConfig,
) -> Result<Objective, TrainError> {
    let fwd = model.forward(x)?;
    let target = loss::smooth_labels(&loss::one_hot(labels, model.classes()), smoothing)?;
    let (ce, d_logits) = loss::cross_entropy(&target, &fwd.logits)?;
    let mut value = ce;
    let mut term = None;
    if aux.active() {
        let all: Vec<usize> = (0..labels.len()).collect();
        term = aux_term(aux, &fwd, &model.head().weight, &all, labels)?;
        if let Some(t) = &term {
            value += aux_signed(aux, t.value);
        }
    }
    let mut grads = model.backward(&fwd, &d_logits, term.as_ref().map(|t| &t.d_features))?;
    if let Some((rows, dv)) = term.as_ref().and_then(|t| t.d_head_rows.as_ref()) {
        grads.add_head_rows(rows, dv);
    }
    Ok(Objective {
        value,
        grads: grads.flatten(),
        aux_value: term.map(|t| t.value),
        mask_fraction: None,
    })
}

/// Supervised loop starting from `init` (fresh seeded init when `None`).
/// Parameters whose `mask` entry is `false` receive no gradient.
pub fn train_supervised_from(
    cfg: &SupervisedConfig,
    init: Option<&Checkpoint>,
    mask: Option<&[bool]>,
) -> Result<Trajectory, TrainError> {
    cfg.validate()?;
    let data = cfg.data.build(cfg.seed)?;
    let arch = ArchDescriptor::mlp(data.dim(), &cfg.hidden, data.classes);
    let mut model = init_model(&arch, cfg.seed, init)?;
    if let Some(m) = mask {
        if m.len() != model.param_count() {
            return Err(TrainError::ShapeMismatch("mask length".into()));
        }
    }
    let mut opt = cfg.optim.build(model.param_count());
    let order = SeedStream::new(cfg.order_seed.unwrap_or(cfg.seed));
    let mut sampler = Sampler::new(data.indices(Split::Train), order.rng("order"));
    let augment_streams = order.child("augment");
    let probe = probe_batch(&data, cfg.seed, cfg.probe_size);
    let eval = Evaluator::new(&data, Split::Train, &probe);
    let lr0 = cfg.optim.lr();
    let mut records = Vec::new();
    let mut aux_acc = Accum::default();

    for step in 0..=cfg.steps {
        let lr = scheduled_lr(cfg.schedule, step, cfg.steps, lr0);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let mut r = eval.record(&model, step, lr)?;
            r.aux_loss = aux_acc.take();
            records.push(r);
        }
        if step == cfg.steps {
            break;
        }
        let idx = sampler.next(cfg.batch_size);
        let mut x = data.batch(&idx);
        if cfg.augment {
            x = data::augment(&x, Strength::Weak, &augment_streams, step as u64);
        }
        let obj = supervised_objective(&model, &x, &data.labels_of(&idx), cfg.label_smoothing, &cfg.aux)?;
        if !obj.value.is_finite() {
            return Err(TrainError::NonFiniteLoss(step));
        }
        if let Some(v) = obj.aux_value {
            aux_acc.push(v);
        }
        apply_update(&mut model, &mut opt, obj.grads, mask, lr, step)?;
    }

    Ok(Trajectory {
        fingerprint: fingerprint(cfg)?,
        records,
        checkpoint: Checkpoint::from_model(&model, cfg.steps as u64, &sampler.rng),
    })
}

fn class_histogram(labels: impl Iterator<Item = usize>, classes: usize) -> DVector<f64> {
    let mut h = DVector::zeros(classes);
    let mut n = 0.0;
    for y in labels {
        h[y] += 1.0;
        n += 1.0;
    }
    if n > 0.0 {
        h /= n;
    }
    h
}

fn column_mean(m: &DMatrix<f64>, rows: &[usize]) -> DVector<f64> {
    let mut out = DVector::zeros(m.ncols());
    for &i in rows {
        out += m.row(i).transpose();
    }
    if !rows.is_empty() {
        out /= rows.len() as f64;
    }
    out
}

/// Weights of the semi-supervised objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslTerms {
    pub tau: f64,
    pub lambda_u: f64,
    pub lambda_f: f64,
    pub aux: AuxConfig,
}

/// Exponential moving averages of the weak-view mean prediction and of the
/// weak-view pseudo-label histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessState {
    pub p: DVector<f64>,
    pub hist: DVector<f64>,
}

impl FairnessState {
    pub fn uniform(classes: usize) -> Self {
        let u = DVector::from_element(classes, 1.0 / classes as f64);
        Self { p: u.clone(), hist: u }
    }

    pub fn update(&mut self, weak_probs: &DMatrix<f64>, decay: f64) {
        let all: Vec<usize> = (0..weak_probs.nrows()).collect();
        let pseudo = argmax_rows(weak_probs);
        let c = weak_probs.ncols();
        self.p = &self.p * decay + column_mean(weak_probs, &all) * (1.0 - decay);
        self.hist = &self.hist * decay + class_histogram(pseudo.into_iter(), c) * (1.0 - decay);
    }
}

/// `CE_labeled + λ_u·L_u + λ_f·L_f`, adjusted by the auxiliary term on the
/// weak-view features of mask-passing samples paired with the head rows of
/// their pseudo-labels. `L_f` compares the EMA state against the strong-view
/// mean prediction and argmax histogram of the mask-passing samples.
pub fn ssl_objective(
    model: &Mlp,
    batch: &SslBatch,
    terms: &SslTerms,
    state: &FairnessState,
) -> Result<Objective, TrainError> {
    let c = model.classes();
    let fl = model.forward(&batch.labeled)?;
    let (ce, d_logits_l) = loss::cross_entropy(&loss::one_hot(&batch.labels, c), &fl.logits)?;
    let fw = model.forward(&batch.unlabeled_weak)?;
    let fs = model.forward(&batch.unlabeled_strong)?;
    let un = loss::ssl_unlabeled_loss(&fw.logits, &fs.logits, terms.tau)?;
    let mut value = ce + terms.lambda_u * un.value;
    let mut d_strong = un.d_strong.clone() * terms.lambda_u;

    let n = un.mask.len();
    let passed: Vec<usize> = (0..n).filter(|&i| un.mask[i]).collect();
    if terms.lambda_f != 0.0 && !passed.is_empty() {
        let p2 = column_mean(&un.strong_probs, &passed);
        let strong_pred = argmax_rows(&un.strong_probs);
        let h2 = class_histogram(passed.iter().map(|&i| strong_pred[i]), c);
        let fair = loss::ssl_fairness_loss(&state.p, &p2, &state.hist, &h2)?;
        value += terms.lambda_f * fair.value;
        d_strong += loss::mean_softmax_backward(&un.strong_probs, &passed, &(fair.d_p2 * terms.lambda_f));
    }

    let mut term = None;
    if terms.aux.active() {
        term = aux_term(&terms.aux, &fw, &model.head().weight, &passed, &un.pseudo_labels)?;
        match &term {
            Some(t) => value += aux_signed(&terms.aux, t.value),
            None => log::warn!("fewer than 2 samples passed the mask; auxiliary term skipped"),
        }
    }

    let mut grads = vec![0.0; model.param_count()];
    add_into(&mut grads, &model.backward(&fl, &d_logits_l, None)?);
    add_into(&mut grads, &model.backward(&fs, &d_strong, None)?);
    if let Some(t) = &term {
        let zeros = DMatrix::zeros(fw.logits.nrows(), c);
        let mut g = model.backward(&fw, &zeros, Some(&t.d_features))?;
        if let Some((rows, dv)) = &t.d_head_rows {
            g.add_head_rows(rows, dv);
        }
        add_into(&mut grads, &g);
    }
    Ok(Objective {
        value,
        grads,
        aux_value: term.map(|t| t.value),
        mask_fraction: Some(un.mask_fraction),
    })
}

/// FreeMatch-style loop with a fixed threshold; see [`ssl_objective`].
pub fn train_semisupervised(cfg: &SslConfig) -> Result<Trajectory, TrainError> {
    cfg.validate()?;
    let base = cfg.data.build(cfg.seed)?;
    let data = data::ssl_split(&base, cfg.labels_per_class, cfg.unlabeled, cfg.seed)?;
    let c = data.classes;
    let arch = ArchDescriptor::mlp(data.dim(), &cfg.hidden, c);
    let streams = SeedStream::new(cfg.seed);
    let mut model = Mlp::new(&arch, &mut streams.rng("init"))?;
    let mut opt = cfg.optim.build(model.param_count());
    let mut labeled = Sampler::new(data.indices(Split::Labeled), streams.rng("order/labeled"));
    let mut unlabeled = Sampler::new(data.indices(Split::Unlabeled), streams.rng("order/unlabeled"));
    let augment_streams = streams.child("augment");
    let probe = probe_batch(&data, cfg.seed, cfg.probe_size);
    let eval = Evaluator::new(&data, Split::Labeled, &probe);
    let lr0 = cfg.optim.lr();
    let terms = SslTerms {
        tau: cfg.tau,
        lambda_u: cfg.lambda_u,
        lambda_f: cfg.lambda_f,
        aux: cfg.aux,
    };
    let mut state = FairnessState::uniform(c);
    let mut records = Vec::new();
    let (mut aux_acc, mut mask_acc) = (Accum::default(), Accum::default());
    let mu_b = cfg.mu * cfg.batch_size;

    for step in 0..=cfg.steps {
        let lr = scheduled_lr(cfg.schedule, step, cfg.steps, lr0);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let mut r = eval.record(&model, step, lr)?;
            r.aux_loss = aux_acc.take();
            r.mask_fraction = mask_acc.take();
            records.push(r);
        }
        if step == cfg.steps {
            break;
        }
        let li = labeled.next(cfg.batch_size);
        let ui = unlabeled.next(mu_b);
        let call = 3 * step as u64;
        let xu = data.batch(&ui);
        let batch = SslBatch {
            labeled: data::augment(&data.batch(&li), Strength::Weak, &augment_streams, call),
            labels: data.labels_of(&li),
            unlabeled_weak: data::augment(&xu, Strength::Weak, &augment_streams, call + 1),
            unlabeled_strong: data::augment(&xu, Strength::Strong, &augment_streams, call + 2),
            mu: cfg.mu,
        };
        let weak_probs = loss::softmax_rows(&model.forward(&batch.unlabeled_weak)?.logits);
        state.update(&weak_probs, cfg.ema_decay);
        let obj = ssl_objective(&model, &batch, &terms, &state)?;
        if !obj.value.is_finite() {
            return Err(TrainError::NonFiniteLoss(step));
        }
        if let Some(v) = obj.aux_value {
            aux_acc.push(v);
        }
        if let Some(m) = obj.mask_fraction {
            mask_acc.push(m);
        }
        apply_update(&mut model, &mut opt, obj.grads, None, lr, step)?;
    }

    Ok(Trajectory {
        fingerprint: fingerprint(cfg)?,
        records,
        checkpoint: Checkpoint::from_model(&model, cfg.steps as u64, &labeled.rng),
    })
}

/// `(1 − ω)·A + ω·B`, returning exact copies at `ω ∈ {0, 1}`.
pub fn interpolate_checkpoints(a: &Checkpoint, b: &Checkpoint, omega: f64) -> Result<Checkpoint, TrainError> {
    if a.arch != b.arch {
        return Err(TrainError::ArchMismatch(format!("{:?} vs {:?}", a.arch, b.arch)));
    }
    if omega == 0.0 {
        return Ok(a.clone());
    }
    if omega == 1.0 {
        return Ok(b.clone());
    }
    let params = a
        .params
        .iter()
        .zip(&b.params)
        .map(|(x, y)| (1.0 - omega) * x + omega * y)
        .collect();
    Ok(Checkpoint {
        arch: a.arch.clone(),
        params,
        step: 0,
        rng: a.rng,
    })
}

/// Evaluates the linear path at `steps` evenly spaced weights in `[0, 1]`.
pub fn interpolation_sweep(
    a: &Checkpoint,
    b: &Checkpoint,
    steps: usize,
    data: &Dataset,
    probe: &[usize],
) -> Result<Vec<(f64, MetricRecord)>, TrainError> {
    if steps < 2 {
        return Err(TrainError::config("steps", "need at least 2 grid points"));
    }
    let eval = Evaluator::new(data, Split::Train, probe);
    (0..steps)
        .map(|i| {
            let omega = if i == steps - 1 {
                1.0
            } else {
                i as f64 / (steps - 1) as f64
            };
            let model = interpolate_checkpoints(a, b, omega)?.model()?;
            Ok((omega, eval.record(&model, i, 0.0)?))
        })
        .collect()
}

/// Largest drop of test accuracy below the straight line joining the two
/// endpoint accuracies, as a fraction; never negative.
pub fn accuracy_barrier(points: &[(f64, MetricRecord)]) -> f64 {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return 0.0;
    };
    let (a0, a1) = (first.1.test_acc, last.1.test_acc);
    points
        .iter()
        .map(|(w, r)| (1.0 - w) * a0 + w * a1 - r.test_acc)
        .fold(0.0, f64::max)
}

/// Pruning mask; `keep[i]` is `false` for removed parameters. `sparsity` is
/// the removed fraction of the eligible pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub keep: Vec<bool>,
    pub sparsity: f64,
}

/// Zeroes the `⌊sparsity·P⌋` smallest-magnitude eligible entries, where `P`
/// is the number of eligible entries; ties go to the lower index.
pub fn prune_lowest(values: &[f64], eligible: &[bool], sparsity: f64) -> Result<PruneMask, TrainError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(TrainError::BadSparsity(sparsity));
    }
    if values.len() != eligible.len() {
        return Err(TrainError::ShapeMismatch("eligibility mask length".into()));
    }
    let mut pool: Vec<usize> = (0..values.len()).filter(|&i| eligible[i]).collect();
    let k = (sparsity * pool.len() as f64).floor() as usize;
    pool.sort_by(|&i, &j| values[i].abs().total_cmp(&values[j].abs()).then(i.cmp(&j)));
    let mut keep = vec![true; values.len()];
    for &i in &pool[..k] {
        keep[i] = false;
    }
    Ok(PruneMask {
        keep,
        sparsity: if pool.is_empty() {
            0.0
        } else {
            k as f64 / pool.len() as f64
        },
    })
}

/// One-shot global magnitude pruning over all weight matrices (biases are
/// never pruned).
pub fn magnitude_prune(ckpt: &Checkpoint, sparsity: f64) -> Result<(Checkpoint, PruneMask), TrainError> {
    let model = ckpt.model()?;
    let mask = prune_lowest(&ckpt.params, &model.weight_positions(), sparsity)?;
    let mut out = ckpt.clone();
    for (p, &k) in out.params.iter_mut().zip(&mask.keep) {
        if !k {
            *p = 0.0;
        }
    }
    Ok((out, mask))
}

#[derive(Debug, Clone)]
pub struct PruneReport {
    pub acc_before: f64,
    /// Right after pruning, before fine-tuning.
    pub acc_pruned: f64,
    pub acc_after: f64,
    /// Metrics between the probe-feature grams of the dense model and of the
    /// fine-tuned pruned model.
    pub info_before_vs_after: Option<InfoMetrics>,
    pub mask: PruneMask,
    pub finetune: Trajectory,
}

/// Metrics between `G(f_a)` and `G(f_b)` over the probe rows that are
/// non-zero under both models.
pub fn feature_pair_metrics(a: &Mlp, b: &Mlp, inputs: &DMatrix<f64>) -> Result<Option<InfoMetrics>, TrainError> {
    let fa = a.forward(inputs)?.features;
    let fb = b.forward(inputs)?.features;
    let rows: Vec<usize> = (0..fa.nrows())
        .filter(|&i| fa.row(i).norm() > loss::ZERO_ROW_TOL && fb.row(i).norm() > loss::ZERO_ROW_TOL)
        .collect();
    if rows.len() < 2 {
        return Ok(None);
    }
    let ga = matinfo::gram(&FeatureMatrix::new(select_rows(&fa, &rows).transpose())?)?;
    let gb = matinfo::gram(&FeatureMatrix::new(select_rows(&fb, &rows).transpose())?)?;
    Ok(Some(matinfo::info_metrics(&ga, &gb)?))
}

/// Prunes `ckpt`, fine-tunes with `cfg` (its `steps` are the fine-tune
/// steps) keeping pruned entries at zero, and compares against the dense
/// model on the probe batch of `cfg`.
pub fn prune_and_finetune(ckpt: &Checkpoint, sparsity: f64, cfg: &SupervisedConfig) -> Result<PruneReport, TrainError> {
    cfg.validate()?;
    let data = cfg.data.build(cfg.seed)?;
    let dense = ckpt.model()?;
    let acc_before = accuracy(&dense, &data, Split::Test)?;
    let (pruned, mask) = magnitude_prune(ckpt, sparsity)?;
    let acc_pruned = accuracy(&pruned.model()?, &data, Split::Test)?;
    let finetune = train_supervised_from(cfg, Some(&pruned), Some(&mask.keep))?;
    let tuned = finetune.checkpoint.model()?;
    let acc_after = accuracy(&tuned, &data, Split::Test)?;
    let probe = data.batch(&probe_batch(&data, cfg.seed, cfg.probe_size));
    Ok(PruneReport {
        acc_before,
        acc_pruned,
        acc_after,
        info_before_vs_after: feature_pair_metrics(&dense, &tuned, &probe)?,
        mask,
        finetune,
    })
}

/// Full-batch AdamW on modular addition, one record after every
/// `eval_every` epochs.
pub fn run_grokking(cfg: &GrokConfig) -> Result<Trajectory, TrainError> {
    cfg.validate()?;
    let data = data::make_modular_addition(cfg.modulus, cfg.train_frac, cfg.seed)?;
    let arch = ArchDescriptor::mlp(data.dim(), &cfg.hidden, data.classes);
    let streams = SeedStream::new(cfg.seed);
    let mut model = Mlp::new(&arch, &mut streams.rng("init"))?;
    let optim = cfg.optim();
    let mut opt = optim.build(model.param_count());
    let train = data.indices(Split::Train);
    let x = data.batch(&train);
    let target = loss::one_hot(&data.labels_of(&train), data.classes);
    let probe = probe_batch(&data, cfg.seed, cfg.probe_size);
    let eval = Evaluator::new(&data, Split::Train, &probe);
    let mut records = Vec::new();
    for epoch in 1..=cfg.epochs {
        let fwd = model.forward(&x)?;
        let (l, d_logits) = loss::cross_entropy(&target, &fwd.logits)?;
        if !l.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch - 1));
        }
        let grads = model.backward(&fwd, &d_logits, None)?;
        apply_update(&mut model, &mut opt, grads.flatten(), None, cfg.lr, epoch - 1)?;
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            records.push(eval.record(&model, epoch, cfg.lr)?);
        }
    }
    Ok(Trajectory {
        fingerprint: fingerprint(cfg)?,
        records,
        checkpoint: Checkpoint::from_model(&model, cfg.epochs as u64, &streams.rng("init")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prune_examples() {
        let m = prune_lowest(&[0.5, -0.1, 0.3], &[true; 3], 0.4).unwrap();
        assert_eq!(m.keep, vec![true, false, true]);
        let v: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 - 50.0).collect();
        let m = prune_lowest(&v, &[true; 100], 0.9).unwrap();
        assert_eq!(m.keep.iter().filter(|&&k| !k).count(), 90);
        let m = prune_lowest(&v, &[true; 100], 0.0).unwrap();
        assert!(m.keep.iter().all(|&k| k));
        assert!(matches!(prune_lowest(&v, &[true; 100], 1.0), Err(TrainError::BadSparsity(_))));
    }

    #[test]
    fn prune_ties_go_to_lower_index() {
        let m = prune_lowest(&[0.2, -0.2, 0.2, 1.0], &[true; 4], 0.5).unwrap();
        assert_eq!(m.keep, vec![false, false, true, true]);
    }

    #[test]
    fn sampler_covers_pool_each_epoch() {
        let mut s = Sampler::new((0..10).collect(), SeedStream::new(1).rng("s"));
        let mut first = s.next(10);
        first.sort();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
    }
}
