//! Learning-rate and momentum policies.
//!
//! Everything here is a pure function of the iteration index except
//! [`PlateauDecay`], which folds validation losses epoch by epoch, and
//! [`lr_find`], which drives a caller-supplied training step.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};

/// Cosine interpolation from `lr_start` (at 0) to `lr_end` (at `t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSegment {
    pub lr_start: f64,
    pub lr_end: f64,
    pub t: usize,
}

impl CosineSegment {
    pub fn new(lr_start: f64, lr_end: f64, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("cosine segment needs T >= 1"));
        }
        Ok(Self {
            lr_start,
            lr_end,
            t,
        })
    }
}

pub fn cosine(i: usize, seg: &CosineSegment) -> Result<f64> {
    if i > seg.t {
        return Err(Error::invalid(format!(
            "iteration {i} outside [0, {}]",
            seg.t
        )));
    }
    Ok(cosine_unchecked(i, seg.t, seg.lr_start, seg.lr_end))
}

fn cosine_unchecked(i: usize, t: usize, start: f64, end: f64) -> f64 {
    // Endpoints are returned verbatim so they are exact.
    if i == 0 {
        return start;
    }
    if i == t {
        return end;
    }
    end + (start - end) / 2.0 * (1.0 + (i as f64 * PI / t as f64).cos())
}

pub const ONE_CYCLE_WARMUP_DIV: f64 = 25.0;
pub const ONE_CYCLE_FINAL_DIV: f64 = 25_000.0;

/// Single rise-then-fall cycle over `max_iter` iterations, peaking at `cut`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneCyclePlan {
    pub max_lr: f64,
    pub max_iter: usize,
    pub cut: usize,
    pub m_high: f64,
    pub m_low: f64,
}

impl OneCyclePlan {
    /// `cut = ceil(0.3 * max_iter)`, momentum 0.95 -> 0.85 -> 0.95.
    pub fn new(max_lr: f64, max_iter: usize) -> Result<Self> {
        Self::with_momentum(max_lr, max_iter, 0.95, 0.85)
    }

    pub fn with_momentum(max_lr: f64, max_iter: usize, m_high: f64, m_low: f64) -> Result<Self> {
        if !(max_lr > 0.0 && max_lr.is_finite()) {
            return Err(Error::invalid(format!(
                "max_lr must be positive, got {max_lr}"
            )));
        }
        if max_iter < 2 {
            return Err(Error::invalid(format!(
                "one-cycle needs max_iter >= 2, got {max_iter}"
            )));
        }
        // integer form of ceil(0.3 * max_iter)
        let cut = (3 * max_iter).div_ceil(10);
        Ok(Self {
            max_lr,
            max_iter,
            cut,
            m_high,
            m_low,
        })
    }

    fn check(&self, i: usize) -> Result<()> {
        if i > self.max_iter {
            return Err(Error::invalid(format!(
                "iteration {i} outside [0, {}]",
                self.max_iter
            )));
        }
        Ok(())
    }
}

pub fn one_cycle_lr(i: usize, plan: &OneCyclePlan) -> Result<f64> {
    plan.check(i)?;
    let peak = plan.max_lr;
    Ok(if i < plan.cut {
        cosine_unchecked(i, plan.cut, peak / ONE_CYCLE_WARMUP_DIV, peak)
    } else {
        cosine_unchecked(
            i - plan.cut,
            plan.max_iter - plan.cut,
            peak,
            peak / ONE_CYCLE_FINAL_DIV,
        )
    })
}

pub fn one_cycle_momentum(i: usize, plan: &OneCyclePlan) -> Result<f64> {
    plan.check(i)?;
    Ok(if i < plan.cut {
        cosine_unchecked(i, plan.cut, plan.m_high, plan.m_low)
    } else {
        cosine_unchecked(
            i - plan.cut,
            plan.max_iter - plan.cut,
            plan.m_low,
            plan.m_high,
        )
    })
}

/// Relative improvement a validation loss must make over the best so far.
pub const PLATEAU_MARGIN: f64 = 1e-4;
/// Decay factor applied on each plateau.
pub const PLATEAU_FACTOR: f64 = 10.0;
/// The learning rate never drops below `max_lr / PLATEAU_FLOOR_DIV`.
pub const PLATEAU_FLOOR_DIV: f64 = 1000.0;

/// Step decay on validation-loss plateaus, one observation per epoch.
#[derive(Debug, Clone)]
pub struct PlateauDecay {
    max_lr: f64,
    lr: f64,
    best: f64,
}

impl PlateauDecay {
    pub fn new(max_lr: f64) -> Self {
        Self {
            max_lr,
            lr: max_lr,
            best: f64::INFINITY,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation loss and returns the rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        let improved = self.best.is_infinite() || val_loss < self.best * (1.0 - PLATEAU_MARGIN);
        if improved {
            self.best = val_loss;
        } else {
            self.lr = (self.lr / PLATEAU_FACTOR).max(self.max_lr / PLATEAU_FLOOR_DIV);
        }
        self.lr
    }
}

/// Learning rate in effect after each epoch's validation loss is seen.
pub fn regular_policy(validation_losses: &[f64], max_lr: f64) -> Result<Vec<f64>> {
    if !(max_lr > 0.0) {
        return Err(Error::invalid(format!(
            "max_lr must be positive, got {max_lr}"
        )));
    }
    let mut decay = PlateauDecay::new(max_lr);
    Ok(validation_losses
        .iter()
        .map(|&l| decay.observe(l))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrFindConfig {
    pub lr_min: f64,
    pub lr_max: f64,
    pub n_steps: usize,
    pub beta: f64,
    pub divergence: f64,
}

impl Default for LrFindConfig {
    fn default() -> Self {
        Self {
            lr_min: 1e-6,
            lr_max: 1.0,
            n_steps: 100,
            beta: 0.98,
            divergence: 4.0,
        }
    }
}

impl LrFindConfig {
    /// Learning rate used at `step`, geometric from `lr_min` (step 0) to
    /// `lr_max` (step `n_steps`).
    pub fn lr_at(&self, step: usize) -> f64 {
        if step == 0 {
            return self.lr_min;
        }
        if step == self.n_steps {
            return self.lr_max;
        }
        self.lr_min * (self.lr_max / self.lr_min).powf(step as f64 / self.n_steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrFindResult {
    pub max_lr: f64,
    pub lrs: Vec<f64>,
    pub raw_losses: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Step at which the sweep stopped (last recorded step).
    pub stopped_at: usize,
}

/// Learning-rate range test.
///
/// `step(lr)` must train on one mini-batch at `lr` and return its loss.
/// The loss is smoothed with a bias-corrected exponential average; the sweep
/// stops once the smoothed loss exceeds `divergence` times its best value (or
/// turns non-finite), and the rate at the smoothed minimum is returned.
pub fn lr_find(
    cfg: &LrFindConfig,
    mut step: impl FnMut(f64) -> Result<f64>,
) -> Result<LrFindResult> {
    if !(cfg.lr_min > 0.0 && cfg.lr_min < cfg.lr_max) || cfg.n_steps == 0 {
        return Err(Error::invalid(format!(
            "lr_find needs 0 < lr_min < lr_max and n_steps >= 1, got {cfg:?}"
        )));
    }
    let mut res = LrFindResult {
        max_lr: cfg.lr_min,
        lrs: Vec::new(),
        raw_losses: Vec::new(),
        smoothed: Vec::new(),
        stopped_at: 0,
    };
    let mut avg = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..=cfg.n_steps {
        let lr = cfg.lr_at(k);
        let loss = step(lr)?;
        if k == 0 && !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "lr_find: loss is {loss} at step 0; model or data is broken"
            )));
        }
        avg = cfg.beta * avg + (1.0 - cfg.beta) * loss;
        let smoothed = avg / (1.0 - cfg.beta.powi(k as i32 + 1));
        res.lrs.push(lr);
        res.raw_losses.push(loss);
        res.smoothed.push(smoothed);
        res.stopped_at = k;
        if !smoothed.is_finite() || (k > 0 && smoothed > cfg.divergence * best) {
            break;
        }
        if smoothed < best {
            best = smoothed;
            res.max_lr = lr;
        }
    }
    Ok(res)
}

/// Per-group learning-rate divisors, input side first: groups run at
/// 1/9, 1/3 and 1 times the base schedule.
pub const GROUP_DIVISORS: [f64; 3] = [9.0, 3.0, 1.0];
/// Fraction of `max_iter` each group stays frozen, input side first.
pub const UNFREEZE_FRACTIONS: [f64; 3] = [0.2, 0.1, 0.0];

/// One-cycle base schedule with discriminative rates and gradual unfreezing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPlan {
    pub base: OneCyclePlan,
    pub group_divisors: [f64; 3],
    pub unfreeze_at: [f64; 3],
}

impl GroupPlan {
    pub fn new(base: OneCyclePlan) -> Self {
        let m = base.max_iter as f64;
        Self {
            base,
            group_divisors: GROUP_DIVISORS,
            unfreeze_at: UNFREEZE_FRACTIONS.map(|f| f * m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStep {
    pub lr: [f64; 3],
    pub frozen: [bool; 3],
    pub momentum: f64,
}

pub fn group_schedule(i: usize, gplan: &GroupPlan) -> Result<GroupStep> {
    let base = one_cycle_lr(i, &gplan.base)?;
    let momentum = one_cycle_momentum(i, &gplan.base)?;
    let m = gplan.base.max_iter;
    // frozen while i < fraction * max_iter, evaluated in integers for the
    // default fractions so the flips land exactly on 10% / 20%
    let frozen = if gplan.unfreeze_at == UNFREEZE_FRACTIONS.map(|f| f * m as f64) {
        [5 * i < m, 10 * i < m, false]
    } else {
        gplan.unfreeze_at.map(|t| (i as f64) < t)
    };
    Ok(GroupStep {
        lr: gplan.group_divisors.map(|d| base / d),
        frozen,
        momentum,
    })
}

/// Writes `iteration,lr_g1,lr_g2,lr_g3,momentum,frozen_g1,frozen_g2,frozen_g3`.
pub fn write_schedule_csv(
    mut w: impl Write,
    steps: impl IntoIterator<Item = (usize, GroupStep)>,
) -> std::io::Result<()> {
    writeln!(
        w,
        "iteration,lr_g1,lr_g2,lr_g3,momentum,frozen_g1,frozen_g2,frozen_g3"
    )?;
    for (i, s) in steps {
        writeln!(
            w,
            "{i},{:e},{:e},{:e},{},{},{},{}",
            s.lr[0],
            s.lr[1],
            s.lr[2],
            s.momentum,
            s.frozen[0] as u8,
            s.frozen[1] as u8,
            s.frozen[2] as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let seg = CosineSegment::new(0.4, 0.1, 10).unwrap();
        assert_eq!(cosine(0, &seg).unwrap(), 0.4);
        assert_eq!(cosine(10, &seg).unwrap(), 0.1);
        assert!((cosine(5, &seg).unwrap() - 0.25).abs() < 1e-15);
        assert!(cosine(11, &seg).is_err());
        assert!(CosineSegment::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn one_cycle_landmarks() {
        let plan = OneCyclePlan::new(0.1, 500).unwrap();
        assert_eq!(plan.cut, 150);
        assert!(rel(one_cycle_lr(0, &plan).unwrap(), 0.1 / 25.0) < 1e-12);
        assert_eq!(one_cycle_lr(150, &plan).unwrap(), 0.1);
        assert!(rel(one_cycle_lr(500, &plan).unwrap(), 0.1 / 25000.0) < 1e-12);
        assert!(one_cycle_lr(501, &plan).is_err());
    }

    #[test]
    fn momentum_endpoints() {
        let plan = OneCyclePlan::new(0.1, 500).unwrap();
        assert_eq!(one_cycle_momentum(0, &plan).unwrap(), 0.95);
        assert_eq!(one_cycle_momentum(plan.cut, &plan).unwrap(), 0.85);
        assert_eq!(one_cycle_momentum(500, &plan).unwrap(), 0.95);
    }

    #[test]
    fn cut_is_exact_ceiling() {
        for (m, cut) in [
            (2, 1),
            (3, 1),
            (4, 2),
            (10, 3),
            (11, 4),
            (500, 150),
            (1000, 300),
        ] {
            assert_eq!(OneCyclePlan::new(1.0, m).unwrap().cut, cut, "max_iter {m}");
        }
        assert!(OneCyclePlan::new(1.0, 1).is_err());
        assert!(OneCyclePlan::new(0.0, 10).is_err());
    }

    #[test]
    fn regular_policy_cases() {
        let lrs = regular_policy(&[1.0, 0.8, 0.5, 0.1], 0.3).unwrap();
        assert!(lrs.iter().all(|&l| l == 0.3));
        let lrs = regular_policy(&[1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(lrs, vec![1.0, 0.1, 0.1 / 10.0]);
        let lrs = regular_policy(&[1.0; 6], 1.0).unwrap();
        assert_eq!(lrs[4], 1.0 / 1000.0);
        assert_eq!(lrs[5], 1.0 / 1000.0);
    }

    #[test]
    fn plateau_needs_relative_margin() {
        let lrs = regular_policy(&[1.0, 0.99995, 0.5], 1.0).unwrap();
        assert_eq!(lrs, vec![1.0, 0.1, 0.1]);
    }

    #[test]
    fn lr_find_geometric_endpoints() {
        let cfg = LrFindConfig::default();
        assert_eq!(cfg.lr_at(0), 1e-6);
        assert_eq!(cfg.lr_at(100), 1.0);
        let res = lr_find(&cfg, |_| Ok(1.0)).unwrap();
        assert_eq!(res.lrs.len(), 101);
        assert_eq!(res.lrs[0], 1e-6);
        assert_eq!(*res.lrs.last().unwrap(), 1.0);
    }

    #[test]
    fn lr_find_halts_on_divergence() {
        let cfg = LrFindConfig {
            n_steps: 50,
            ..Default::default()
        };
        // loss 1 until step 20, then explodes
        let mut k = 0;
        let res = lr_find(&cfg, |_| {
            let l = if k < 20 { 1.0 } else { 1e6 };
            k += 1;
            Ok(l)
        })
        .unwrap();
        // smoothed at step 20: (1-b^20 + (1-b) 1e6 b^0 ...); first step above 4x best
        let expected = res.smoothed.iter().position(|&s| s > 4.0).unwrap();
        assert_eq!(res.stopped_at, expected);
        assert_eq!(res.stopped_at, 20);
        assert!(res.max_lr <= cfg.lr_at(19));
    }

    #[test]
    fn lr_find_rejects_nan_start() {
        let cfg = LrFindConfig::default();
        assert!(lr_find(&cfg, |_| Ok(f64::NAN)).is_err());
        let bad = LrFindConfig {
            lr_min: 1.0,
            lr_max: 0.5,
            ..Default::default()
        };
        assert!(lr_find(&bad, |_| Ok(1.0)).is_err());
    }

    #[test]
    fn group_schedule_freezing() {
        let gp = GroupPlan::new(OneCyclePlan::new(0.01, 1000).unwrap());
        let s = group_schedule(50, &gp).unwrap();
        assert_eq!(s.frozen, [true, true, false]);
        let s = group_schedule(150, &gp).unwrap();
        assert_eq!(s.frozen, [true, false, false]);
        let s = group_schedule(500, &gp).unwrap();
        assert_eq!(s.frozen, [false, false, false]);
        assert_eq!(s.lr[1], s.lr[2] / 3.0);
        assert_eq!(s.lr[0], s.lr[2] / 9.0);
        assert!((s.lr[2] / s.lr[0] - 9.0).abs() < 1e-14);
    }

    #[test]
    fn schedule_csv_header_and_rows() {
        let gp = GroupPlan::new(OneCyclePlan::new(0.01, 10).unwrap());
        let rows = (0..=10).map(|i| (i, group_schedule(i, &gp).unwrap()));
        let mut buf = Vec::new();
        write_schedule_csv(&mut buf, rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert!(text.starts_with("iteration,lr_g1,lr_g2,lr_g3,momentum"));
    }
}
