//! Mini-batch SGD with classical momentum, driven either by the one-cycle
//! policy or by plateau decay, under one of the transfer-learning modes.
//! The parameters from the epoch with the lowest validation loss are kept.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{
    eval_transform, images_to_tensor, random_augment, tta_predict, AugmentConfig, Image,
};
use crate::error::{Error, Result};
use crate::metrics::{mean_label_auc, per_label_sets, MeanAuc};
use crate::ndtensor::Tensor;
use crate::sched::{
    group_schedule, lr_find, one_cycle_lr, one_cycle_momentum, GroupPlan, GroupStep, LrFindConfig,
    LrFindResult, OneCyclePlan, PlateauDecay,
};
use crate::tinycnn::{ModelParams, N_GROUPS};

/// Momentum used with plateau-decay training and by the LR finder.
pub const REGULAR_MOMENTUM: f64 = 0.9;

/// Images with one 0/1 target per label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<Vec<f64>>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "Dataset",
                left: vec![images.len()],
                right: vec![labels.len()],
            });
        }
        let k = labels.first().map_or(0, Vec::len);
        if labels.iter().any(|l| l.len() != k) {
            return Err(Error::invalid("every row needs the same number of labels"));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    fn targets(&self, idx: &[usize]) -> Result<Tensor> {
        let k = self.n_labels();
        let data = idx
            .iter()
            .flat_map(|&i| self.labels[i].iter().copied())
            .collect();
        Tensor::new(vec![idx.len(), k], data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainMethod {
    Regular,
    OneCycle,
}

impl TrainMethod {
    pub fn name(self) -> &'static str {
        match self {
            TrainMethod::Regular => "regular",
            TrainMethod::OneCycle => "one_cycle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Self::Regular),
            "one_cycle" => Ok(Self::OneCycle),
            _ => Err(Error::invalid(format!("unknown training method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransferMode {
    None,
    FeatureExtractor,
    FineTuneAll,
    GradualUnfreeze,
}

impl TransferMode {
    pub const ALL: [TransferMode; 4] = [
        TransferMode::None,
        TransferMode::FeatureExtractor,
        TransferMode::FineTuneAll,
        TransferMode::GradualUnfreeze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransferMode::None => "none",
            TransferMode::FeatureExtractor => "feature_extractor",
            TransferMode::FineTuneAll => "fine_tune_all",
            TransferMode::GradualUnfreeze => "gradual_unfreeze",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown transfer mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub transfer_mode: TransferMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub seed: u64,
    /// Training-time augmentation; evaluation then uses the center crop.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: TrainMethod::OneCycle,
            transfer_mode: TransferMode::None,
            epochs: 20,
            batch_size: 16,
            max_lr: 1e-2,
            seed: 0,
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be >= 1"));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::invalid(format!(
                "max_lr must be positive, got {}",
                self.max_lr
            )));
        }
        if self.transfer_mode == TransferMode::GradualUnfreeze
            && self.method == TrainMethod::Regular
        {
            return Err(Error::invalid(
                "gradual_unfreeze is defined over one-cycle iterations; use method one_cycle",
            ));
        }
        Ok(())
    }
}

/// Per-iteration learning rates, freeze flags and momentum for a run.
#[derive(Debug, Clone)]
pub struct FreezePlan {
    mode: TransferMode,
    method: TrainMethod,
    one_cycle: Option<OneCyclePlan>,
    groups: Option<GroupPlan>,
}

impl FreezePlan {
    /// `regular_lr` is the current plateau-decay rate (ignored for one-cycle).
    pub fn step(&self, i: usize, regular_lr: f64) -> Result<GroupStep> {
        if let Some(gp) = &self.groups {
            return group_schedule(i, gp);
        }
        let (lr, momentum) = match (self.method, &self.one_cycle) {
            (TrainMethod::OneCycle, Some(p)) => (one_cycle_lr(i, p)?, one_cycle_momentum(i, p)?),
            _ => (regular_lr, REGULAR_MOMENTUM),
        };
        let frozen = match self.mode {
            TransferMode::FeatureExtractor => [true, true, false],
            _ => [false; N_GROUPS],
        };
        Ok(GroupStep {
            lr: [lr; N_GROUPS],
            frozen,
            momentum,
        })
    }

    pub fn mode(&self) -> TransferMode {
        self.mode
    }
}

/// Builds the freeze/learning-rate plan for a run of `max_iter` iterations and
/// applies the initial freeze flags to `model`.
pub fn apply_transfer_mode(
    model: &mut ModelParams,
    mode: TransferMode,
    method: TrainMethod,
    max_lr: f64,
    max_iter: usize,
) -> Result<FreezePlan> {
    if mode == TransferMode::GradualUnfreeze && method == TrainMethod::Regular {
        return Err(Error::invalid(
            "gradual_unfreeze is defined over one-cycle iterations; use method one_cycle",
        ));
    }
    let one_cycle = match method {
        TrainMethod::OneCycle => Some(OneCyclePlan::new(max_lr, max_iter)?),
        TrainMethod::Regular => None,
    };
    let groups = match mode {
        TransferMode::GradualUnfreeze => one_cycle.map(GroupPlan::new),
        _ => None,
    };
    let plan = FreezePlan {
        mode,
        method,
        one_cycle,
        groups,
    };
    model.set_frozen(plan.step(0, max_lr)?.frozen);
    Ok(plan)
}

/// Classical momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity(pub Vec<Vec<f64>>);

impl Velocity {
    pub fn zeros(model: &ModelParams) -> Self {
        Self(model.params().map(|p| vec![0.0; p.tensor.len()]).collect())
    }
}

/// `v <- momentum * v + grad; w <- w - lr_group * v`. Tensors in groups marked
/// frozen (or without a gradient) are left untouched, velocity included.
pub fn sgd_step(
    model: &mut ModelParams,
    grads: &[Option<Vec<f64>>],
    velocity: &mut Velocity,
    step: &GroupStep,
) -> Result<()> {
    let n = model.params().count();
    if grads.len() != n || velocity.0.len() != n {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            left: vec![n],
            right: vec![grads.len(), velocity.0.len()],
        });
    }
    let mut k = 0;
    for (gi, group) in model.groups.iter_mut().enumerate() {
        for p in &mut group.params {
            let (g, v) = (&grads[k], &mut velocity.0[k]);
            k += 1;
            if step.frozen[gi] {
                continue;
            }
            let Some(g) = g else { continue };
            let lr = step.lr[gi];
            for ((w, v), g) in p.tensor.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *v = step.momentum * *v + g;
                *w -= lr * *v;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Head-group learning rate at the last iteration of the epoch.
    pub lr: f64,
}

pub fn write_epoch_log(mut w: impl Write, rows: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,lr_snapshot")?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{:?},{:e}",
            r.epoch, r.train_loss, r.val_loss, r.lr
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub best_params: ModelParams,
    pub val_loss_curve: Vec<f64>,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Filled by callers that also score a held-out test set.
    pub test_auc: Option<f64>,
}

fn batch_tensor(
    data: &Dataset,
    idx: &[usize],
    augment: Option<(&AugmentConfig, &mut ChaCha8Rng)>,
) -> Result<Tensor> {
    let images: Vec<Image> = match augment {
        Some((cfg, rng)) => idx
            .iter()
            .map(|&i| random_augment(&data.images[i], cfg, rng))
            .collect::<Result<_>>()?,
        None => idx.iter().map(|&i| data.images[i].clone()).collect(),
    };
    images_to_tensor(&images)
}

fn eval_images(data: &Dataset, idx: &[usize], augment: Option<&AugmentConfig>) -> Result<Tensor> {
    let images: Vec<Image> = match augment {
        Some(cfg) => idx
            .iter()
            .map(|&i| eval_transform(&data.images[i], cfg))
            .collect::<Result<_>>()?,
        None => idx.iter().map(|&i| data.images[i].clone()).collect(),
    };
    images_to_tensor(&images)
}

const EVAL_BATCH: usize = 64;

/// Mean BCE over the whole set (center crop when `augment` is given).
pub fn evaluate_loss(
    model: &ModelParams,
    data: &Dataset,
    augment: Option<&AugmentConfig>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("evaluate_loss: empty dataset"));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in all.chunks(EVAL_BATCH) {
        let loss = model.loss(eval_images(data, chunk, augment)?, data.targets(chunk)?)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Per-row probabilities without augmentation (center crop when configured).
pub fn predict(
    model: &ModelParams,
    data: &Dataset,
    augment: Option<&AugmentConfig>,
) -> Result<Vec<Vec<f64>>> {
    let k = model.n_labels();
    let all: Vec<usize> = (0..data.len()).collect();
    let mut rows = Vec::with_capacity(data.len());
    for chunk in all.chunks(EVAL_BATCH) {
        let p = model.predict(&eval_images(data, chunk, augment)?)?;
        rows.extend(p.data().chunks(k).map(<[f64]>::to_vec));
    }
    Ok(rows)
}

/// Runs `model` on already-transformed images, one probability row each.
pub fn predict_images(model: &ModelParams, images: &[Image]) -> Result<Vec<Vec<f64>>> {
    let p = model.predict(&images_to_tensor(images)?)?;
    Ok(p.data()
        .chunks(model.n_labels())
        .map(<[f64]>::to_vec)
        .collect())
}

/// Per-row TTA probabilities.
pub fn predict_tta(
    model: &ModelParams,
    data: &Dataset,
    augment: &AugmentConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.images
        .iter()
        .map(|img| {
            tta_predict(|batch| predict_images(model, batch), img, augment, &mut rng)
                .map(|t| t.mean)
        })
        .collect()
}

/// Mean per-label AUC of `model` on `data`, with TTA when `tta_seed` is set.
pub fn evaluate_auc(
    model: &ModelParams,
    data: &Dataset,
    augment: Option<&AugmentConfig>,
    tta_seed: Option<u64>,
) -> Result<MeanAuc> {
    let rows = match (augment, tta_seed) {
        (Some(cfg), Some(seed)) => predict_tta(model, data, cfg, seed)?,
        _ => predict(model, data, augment)?,
    };
    let k = model.n_labels();
    let probs: Vec<f64> = rows.concat();
    let targets: Vec<f64> = data.labels.concat();
    mean_label_auc(&per_label_sets(&probs, &targets, k))
}

fn check_sets(model: &ModelParams, train_set: &Dataset, val_set: &Dataset) -> Result<()> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(
            "train and validation sets must be non-empty",
        ));
    }
    for d in [train_set, val_set] {
        if d.n_labels() != model.n_labels() {
            return Err(Error::ShapeMismatch {
                op: "labels vs head width",
                left: vec![d.n_labels()],
                right: vec![model.n_labels()],
            });
        }
    }
    Ok(())
}

/// Trains for `cfg.epochs` epochs and returns the best-validation-loss
/// parameters. Deterministic for a given seed.
pub fn train(
    model: &ModelParams,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    check_sets(model, train_set, val_set)?;
    let mut model = model.clone();
    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let max_iter = (cfg.epochs * batches_per_epoch).max(2);
    let plan = apply_transfer_mode(
        &mut model,
        cfg.transfer_mode,
        cfg.method,
        cfg.max_lr,
        max_iter,
    )?;
    let mut decay = PlateauDecay::new(cfg.max_lr);
    let mut velocity = Velocity::zeros(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut val_loss_curve = Vec::with_capacity(cfg.epochs);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        let mut last_lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let step = plan.step(iteration.min(max_iter), decay.lr())?;
            model.set_frozen(step.frozen);
            let x = batch_tensor(
                train_set,
                batch,
                cfg.augment.as_ref().map(|a| (a, &mut rng)),
            )?;
            let (loss, grads) = model.loss_and_grads(x, train_set.targets(batch)?)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss is {loss} at iteration {iteration} (epoch {epoch})"
                )));
            }
            sgd_step(&mut model, &grads, &mut velocity, &step)?;
            train_total += loss * batch.len() as f64;
            last_lr = step.lr[N_GROUPS - 1];
            iteration += 1;
        }
        let val_loss = evaluate_loss(&model, val_set, cfg.augment.as_ref())?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss is {val_loss} after epoch {epoch} (iteration {iteration})"
            )));
        }
        log::debug!("epoch {epoch}: val_loss {val_loss:.6}");
        val_loss_curve.push(val_loss);
        log.push(EpochLog {
            epoch,
            train_loss: train_total / train_set.len() as f64,
            val_loss,
            lr: last_lr,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            let mut snapshot = model.clone();
            snapshot.set_frozen([false; N_GROUPS]);
            best = Some((val_loss, epoch, snapshot));
        }
        if cfg.method == TrainMethod::Regular {
            decay.observe(val_loss);
        }
    }
    let (_, best_epoch, best_params) = best.expect("epochs >= 1");
    Ok(TrainResult {
        best_params,
        val_loss_curve,
        best_epoch,
        log,
        test_auc: None,
    })
}

/// LR range test on a copy of `model`, cycling through shuffled mini-batches
/// of `train_set`. Freeze flags follow the transfer mode's first iteration.
pub fn find_lr(
    model: &ModelParams,
    train_set: &Dataset,
    cfg: &TrainConfig,
    lr_cfg: &LrFindConfig,
) -> Result<LrFindResult> {
    if train_set.is_empty() {
        return Err(Error::invalid("find_lr: empty training set"));
    }
    let mut model = model.clone();
    // only the initial freeze flags matter here; gradual unfreezing needs a one-cycle plan
    let method = match cfg.transfer_mode {
        TransferMode::GradualUnfreeze => TrainMethod::OneCycle,
        _ => TrainMethod::Regular,
    };
    let plan = apply_transfer_mode(
        &mut model,
        cfg.transfer_mode,
        method,
        1.0,
        lr_cfg.n_steps.max(2),
    )?;
    let frozen = plan.step(0, 1.0)?.frozen;
    let mut velocity = Velocity::zeros(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    lr_find(lr_cfg, |lr| {
        if cursor + cfg.batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch = order[cursor..end].to_vec();
        cursor = end;
        let x = batch_tensor(
            train_set,
            &batch,
            cfg.augment.as_ref().map(|a| (a, &mut rng)),
        )?;
        let (loss, grads) = model.loss_and_grads(x, train_set.targets(&batch)?)?;
        if loss.is_finite() {
            let step = GroupStep {
                lr: [lr; N_GROUPS],
                frozen,
                momentum: REGULAR_MOMENTUM,
            };
            sgd_step(&mut model, &grads, &mut velocity, &step)?;
        }
        Ok(loss)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> Dataset {
        // positives: bright top half; negatives: bright bottom half
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let jitter = ((i as u64 * 31 + seed) % 40) as u8;
            images.push(Image::from_fn(16, 16, |r, _| {
                if (r < 8) == pos {
                    200 + jitter / 4
                } else {
                    20 + jitter
                }
            }));
            labels.push(vec![pos as u8 as f64]);
        }
        Dataset::new(images, labels).unwrap()
    }

    fn single_step(lr: f64, momentum: f64) -> GroupStep {
        GroupStep {
            lr: [lr; 3],
            frozen: [false; 3],
            momentum,
        }
    }

    fn grads_of(model: &ModelParams, value: f64) -> Vec<Option<Vec<f64>>> {
        model
            .params()
            .map(|p| Some(vec![value; p.tensor.len()]))
            .collect()
    }

    #[test]
    fn vanilla_sgd_step() {
        let mut m = ModelParams::build(16, 1, 0).unwrap();
        let before = m.clone();
        let mut v = Velocity::zeros(&m);
        let g = grads_of(&m, 0.5);
        sgd_step(&mut m, &g, &mut v, &single_step(0.1, 0.0)).unwrap();
        for (a, b) in m.params().zip(before.params()) {
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!(*x, y - 0.1 * 0.5);
            }
        }
    }

    #[test]
    fn momentum_recurrence_two_steps() {
        let mut m = ModelParams::build(16, 1, 0).unwrap();
        let before = m.clone();
        let mut v = Velocity::zeros(&m);
        let g = grads_of(&m, 1.0);
        for _ in 0..2 {
            sgd_step(&mut m, &g, &mut v, &single_step(0.1, 0.9)).unwrap();
        }
        let w0 = before.params().next().unwrap().tensor.data()[0];
        let w2 = m.params().next().unwrap().tensor.data()[0];
        assert!((w0 - w2 - (0.1 + 0.1 * 1.9)).abs() < 1e-15);
    }

    #[test]
    fn frozen_group_untouched() {
        let mut m = ModelParams::build(16, 1, 0).unwrap();
        let before = m.clone();
        let mut v = Velocity::zeros(&m);
        let step = GroupStep {
            lr: [0.1; 3],
            frozen: [true, false, true],
            momentum: 0.9,
        };
        let g = grads_of(&m, 1.0);
        sgd_step(&mut m, &g, &mut v, &step).unwrap();
        assert_eq!(m.groups[0], before.groups[0]);
        assert_eq!(m.groups[2], before.groups[2]);
        assert_ne!(m.groups[1], before.groups[1]);
    }

    #[test]
    fn gradual_unfreeze_needs_one_cycle() {
        let mut m = ModelParams::build(16, 1, 0).unwrap();
        assert!(apply_transfer_mode(
            &mut m,
            TransferMode::GradualUnfreeze,
            TrainMethod::Regular,
            0.1,
            100
        )
        .is_err());
        let cfg = TrainConfig {
            method: TrainMethod::Regular,
            transfer_mode: TransferMode::GradualUnfreeze,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn plan_modes() {
        let mut m = ModelParams::build(16, 1, 0).unwrap();
        let fe = apply_transfer_mode(
            &mut m,
            TransferMode::FeatureExtractor,
            TrainMethod::OneCycle,
            0.1,
            100,
        )
        .unwrap();
        assert_eq!(m.frozen(), [true, true, false]);
        assert_eq!(fe.step(70, 0.1).unwrap().frozen, [true, true, false]);
        let ft = apply_transfer_mode(
            &mut m,
            TransferMode::FineTuneAll,
            TrainMethod::OneCycle,
            0.1,
            100,
        )
        .unwrap();
        for i in [0, 13, 30, 99] {
            let s = ft.step(i, 0.1).unwrap();
            assert_eq!(s.frozen, [false; 3]);
            assert!(s.lr[0] == s.lr[1] && s.lr[1] == s.lr[2]);
        }
        let gu = apply_transfer_mode(
            &mut m,
            TransferMode::GradualUnfreeze,
            TrainMethod::OneCycle,
            0.1,
            1000,
        )
        .unwrap();
        assert_eq!(m.frozen(), [true, true, false]);
        let s = gu.step(500, 0.1).unwrap();
        assert_eq!(s.frozen, [false; 3]);
        assert_eq!(s.lr[1], s.lr[2] / 3.0);
        assert_eq!(s.lr[0], s.lr[2] / 9.0);
    }

    #[test]
    fn training_is_deterministic_and_picks_best_epoch() {
        let data = toy(24, 1);
        let val = toy(8, 2);
        let model = ModelParams::build(16, 1, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            max_lr: 0.05,
            seed: 9,
            ..Default::default()
        };
        let a = train(&model, &data, &val, &cfg).unwrap();
        let b = train(&model, &data, &val, &cfg).unwrap();
        assert_eq!(a, b);
        let argmin = a
            .val_loss_curve
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .unwrap()
            .0;
        assert_eq!(a.best_epoch, argmin);
        let reeval = evaluate_loss(&a.best_params, &val, None).unwrap();
        assert_eq!(reeval, a.val_loss_curve[a.best_epoch]);
    }

    #[test]
    fn nan_loss_names_iteration() {
        let data = toy(8, 1);
        let mut model = ModelParams::build(16, 1, 3).unwrap();
        model.groups[2].params[1].tensor.data_mut()[0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..Default::default()
        };
        let err = train(&model, &data, &data, &cfg).unwrap_err().to_string();
        assert!(err.contains("iteration 0"), "{err}");
    }

    #[test]
    fn epoch_log_csv() {
        let rows = [EpochLog {
            epoch: 0,
            train_loss: 0.5,
            val_loss: 0.25,
            lr: 0.01,
        }];
        let mut buf = Vec::new();
        write_epoch_log(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,val_loss,lr_snapshot\n0,0.5,0.25,1e-2\n"
        );
    }
}
