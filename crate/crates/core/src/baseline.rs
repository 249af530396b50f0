//! Classical learners over radiomics features: penalized logistic regression
//! (lasso / ridge / elastic net) solved by monotone accelerated proximal
//! gradient, a CART random forest, and stratified-CV random-search tuning.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::ndtensor::sigmoid;

/// Row-major feature matrix.
pub type Rows = [Vec<f64>];

fn check_matrix(x: &Rows, y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "features/labels",
            left: vec![x.len()],
            right: vec![y.len()],
        });
    }
    let p = x.first().map_or(0, Vec::len);
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::ShapeMismatch {
                op: "feature row",
                left: vec![p],
                right: vec![row.len()],
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {i} holds {v}")));
        }
    }
    Ok(p)
}

/// Per-column affine map to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Rows) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::invalid(format!(
                "standardize needs >= 2 rows, got {}",
                x.len()
            )));
        }
        let n = x.len() as f64;
        let p = x[0].len();
        let mut mean = vec![0.0; p];
        for row in x {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    /// Zero-variance columns map to 0.
    pub fn transform(&self, x: &Rows) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

pub fn standardize(x: &Rows) -> Result<(Vec<Vec<f64>>, Scaler)> {
    let scaler = Scaler::fit(x)?;
    Ok((scaler.transform(x), scaler))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticNetConfig {
    pub lambda: f64,
    /// L1 share of the penalty: 1 = lasso, 0 = ridge.
    pub alpha: f64,
}

pub const EN_TOL: f64 = 1e-8;
pub const EN_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after every iteration (only kept when requested).
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &Rows) -> Vec<f64> {
        x.iter()
            .map(|row| sigmoid(self.intercept + dot(&self.weights, row)))
            .collect()
    }

    pub fn dump(&self) -> String {
        let mut s = format!("intercept {:?}\n", self.intercept);
        for (j, w) in self.weights.iter().enumerate() {
            let _ = writeln!(s, "w{j} {w:?}");
        }
        s
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean log-loss, written to stay finite for large margins.
fn log_loss(margin: f64, y: bool) -> f64 {
    // -log sigmoid(z) for y=1, -log(1 - sigmoid(z)) for y=0
    let z = if y { margin } else { -margin };
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a Rows,
    y: &'a [bool],
    l1: f64,
    l2: f64,
}

impl Problem<'_> {
    /// Smooth part: mean log-loss + l2/2 * |w|^2. Parameters are `[w.., b]`.
    fn smooth(&self, theta: &[f64]) -> f64 {
        let (w, b) = theta.split_at(theta.len() - 1);
        let n = self.x.len() as f64;
        let loss: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(row, &yi)| log_loss(b[0] + dot(w, row), yi))
            .sum::<f64>()
            / n;
        loss + 0.5 * self.l2 * dot(w, w)
    }

    fn smooth_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let p = theta.len() - 1;
        let (w, b) = theta.split_at(p);
        let n = self.x.len() as f64;
        let mut g = vec![0.0; p + 1];
        let mut loss = 0.0;
        for (row, &yi) in self.x.iter().zip(self.y) {
            let z = b[0] + dot(w, row);
            loss += log_loss(z, yi);
            let r = sigmoid(z) - if yi { 1.0 } else { 0.0 };
            g[..p]
                .iter_mut()
                .zip(row)
                .for_each(|(gj, xj)| *gj += r * xj);
            g[p] += r;
        }
        g.iter_mut().for_each(|v| *v /= n);
        for j in 0..p {
            g[j] += self.l2 * w[j];
        }
        (loss / n + 0.5 * self.l2 * dot(w, w), g)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        self.l1
            * theta[..theta.len() - 1]
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        self.smooth(theta) + self.penalty(theta)
    }

    fn prox(&self, v: &mut [f64], step: f64) {
        let p = v.len() - 1;
        let thr = step * self.l1;
        for vj in &mut v[..p] {
            *vj = vj.signum() * (vj.abs() - thr).max(0.0);
        }
    }
}

/// Minimizes `mean logistic loss + lambda * (alpha |w|_1 + (1 - alpha)/2 |w|_2^2)`
/// with an unpenalized intercept.
pub fn fit_logistic_en(x: &Rows, y: &[bool], cfg: &ElasticNetConfig) -> Result<LogisticModel> {
    fit_logistic_en_impl(x, y, cfg, false)
}

/// As [`fit_logistic_en`], also recording the objective after each iteration.
pub fn fit_logistic_en_traced(
    x: &Rows,
    y: &[bool],
    cfg: &ElasticNetConfig,
) -> Result<LogisticModel> {
    fit_logistic_en_impl(x, y, cfg, true)
}

fn fit_logistic_en_impl(
    x: &Rows,
    y: &[bool],
    cfg: &ElasticNetConfig,
    trace: bool,
) -> Result<LogisticModel> {
    let p = check_matrix(x, y)?;
    if x.is_empty() {
        return Err(Error::invalid("fit_logistic_en: no rows"));
    }
    if !(cfg.lambda >= 0.0) || !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(Error::invalid(format!("bad elastic-net config {cfg:?}")));
    }
    let prob = Problem {
        x,
        y,
        l1: cfg.lambda * cfg.alpha,
        l2: cfg.lambda * (1.0 - cfg.alpha),
    };
    let n = x.len() as f64;
    let ybar = y.iter().filter(|&&v| v).count() as f64 / n;
    let mut theta = vec![0.0; p + 1];
    theta[p] = if ybar > 0.0 && ybar < 1.0 {
        (ybar / (1.0 - ybar)).ln()
    } else {
        0.0
    };

    // Lipschitz bound of the smooth gradient gives the first step size.
    let frob: f64 = x.iter().map(|r| dot(r, r) + 1.0).sum::<f64>() / n;
    let mut step = 1.0 / (0.25 * frob + prob.l2).max(1e-12);

    let mut obj = prob.objective(&theta);
    let mut objective_trace = Vec::new();
    let mut extrap = theta.clone();
    let mut momentum = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < EN_MAX_ITER {
        iterations += 1;
        let (f_y, g_y) = prob.smooth_grad(&extrap);
        step *= 2.0;
        let candidate = loop {
            let mut z: Vec<f64> = extrap.iter().zip(&g_y).map(|(v, g)| v - step * g).collect();
            prob.prox(&mut z, step);
            let diff: Vec<f64> = z.iter().zip(&extrap).map(|(a, b)| a - b).collect();
            let bound = f_y + dot(&g_y, &diff) + dot(&diff, &diff) / (2.0 * step);
            if prob.smooth(&z) <= bound + 1e-15 * bound.abs() || step < 1e-20 {
                break z;
            }
            step /= 2.0;
        };
        let cand_obj = prob.objective(&candidate);
        let change = candidate
            .iter()
            .zip(&extrap)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        // monotone variant: only move to the candidate if it does not increase F
        let prev = theta.clone();
        if cand_obj <= obj {
            theta.clone_from(&candidate);
            obj = cand_obj;
        }
        if trace {
            objective_trace.push(obj);
        }
        if change < EN_TOL {
            converged = true;
            break;
        }
        let next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        for j in 0..=p {
            extrap[j] = theta[j]
                + (momentum / next) * (candidate[j] - theta[j])
                + ((momentum - 1.0) / next) * (theta[j] - prev[j]);
        }
        momentum = next;
    }

    Ok(LogisticModel {
        weights: theta[..p].to_vec(),
        intercept: theta[p],
        iterations,
        converged,
        objective_trace,
    })
}

/// Smallest lasso `lambda` (alpha = 1) for which all weights are zero:
/// `max_j |mean(x_j * (y - ybar))|`.
pub fn lasso_lambda_max(x: &Rows, y: &[bool]) -> f64 {
    let n = x.len() as f64;
    let ybar = y.iter().filter(|&&v| v).count() as f64 / n;
    let p = x.first().map_or(0, Vec::len);
    (0..p)
        .map(|j| {
            (x.iter()
                .zip(y)
                .map(|(r, &yi)| r[j] * (if yi { 1.0 } else { 0.0 } - ybar))
                .sum::<f64>()
                / n)
                .abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Defaults to `ceil(sqrt(p))` when `None`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TreeNode {
    Leaf {
        prob: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { prob, .. } => return *prob,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    fn dump_into(&self, out: &mut String, i: usize, indent: usize) {
        let pad = "  ".repeat(indent);
        match &self.nodes[i] {
            TreeNode::Leaf { prob, count } => {
                let _ = writeln!(out, "{pad}leaf p={prob:?} n={count}");
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let _ = writeln!(out, "{pad}x{feature} <= {threshold:?}");
                self.dump_into(out, *left, indent + 1);
                self.dump_into(out, *right, indent + 1);
            }
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a Rows,
    y: &'a [bool],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl TreeBuilder<'_> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            prob: pos as f64 / n as f64,
            count: n,
        });
        if depth >= self.max_depth || pos == 0 || pos == n || n < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, pos) else {
            return id;
        };
        // partition in place
        let mut split = 0;
        for k in 0..n {
            if self.x[idx[k]][feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, idx: &[usize], pos: usize) -> Option<(usize, f64)> {
        let n = idx.len();
        let p = self.x[0].len();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(&mut self.rng);
        features.truncate(self.mtry);
        features.sort_unstable();

        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in features {
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                left_pos += vals[k].1 as usize;
                let nl = k + 1;
                if vals[k].0 == vals[k + 1].0 || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let nr = n - nl;
                let child = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(pos - left_pos, nr))
                    / n as f64;
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, (vals[k].0 + vals[k + 1].0) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean over trees of the leaf positive fraction.
    pub fn predict_proba(&self, x: &Rows) -> Vec<f64> {
        let per_tree = self.predict_per_tree(x);
        (0..x.len())
            .map(|i| per_tree.iter().map(|t| t[i]).sum::<f64>() / self.trees.len() as f64)
            .collect()
    }

    /// `[tree][row]` leaf probabilities.
    pub fn predict_per_tree(&self, x: &Rows) -> Vec<Vec<f64>> {
        self.trees
            .iter()
            .map(|t| x.iter().map(|r| t.predict_one(r)).collect())
            .collect()
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {i}");
            t.dump_into(&mut s, 0, 1);
        }
        s
    }
}

/// Bootstrap-sampled CART trees with Gini splits on random feature subsets.
pub fn fit_forest(x: &Rows, y: &[bool], cfg: &ForestConfig) -> Result<Forest> {
    let p = check_matrix(x, y)?;
    if x.is_empty() || p == 0 {
        return Err(Error::invalid("fit_forest: empty feature matrix"));
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::invalid(format!("bad forest config {cfg:?}")));
    }
    let mtry = cfg
        .features_per_split
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(t as u64),
            );
            let mut idx: Vec<usize> = if cfg.bootstrap {
                (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            let mut b = TreeBuilder {
                x,
                y,
                max_depth: cfg.max_depth.unwrap_or(usize::MAX),
                min_leaf: cfg.min_leaf,
                mtry,
                rng,
                nodes: Vec::new(),
            };
            b.build(&mut idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest { trees })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Lasso,
    Ridge,
    ElasticNet,
    Forest,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Lasso,
        Family::Ridge,
        Family::ElasticNet,
        Family::Forest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lasso => "lasso",
            Family::Ridge => "ridge",
            Family::ElasticNet => "elastic_net",
            Family::Forest => "random_forest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidate {
    Logistic(ElasticNetConfig),
    Forest(ForestConfig),
}

impl Candidate {
    pub fn describe(&self) -> String {
        match self {
            Candidate::Logistic(c) => format!("logistic lambda={:e} alpha={}", c.lambda, c.alpha),
            Candidate::Forest(c) => format!(
                "forest n_trees={} max_depth={} min_leaf={}",
                c.n_trees,
                c.max_depth.map_or("none".into(), |d| d.to_string()),
                c.min_leaf
            ),
        }
    }

    /// Ordering used to break AUC ties: smaller lambda, smaller forest.
    fn size_key(&self) -> (f64, f64, f64) {
        match self {
            Candidate::Logistic(c) => (c.lambda, 0.0, 0.0),
            Candidate::Forest(c) => (
                c.n_trees as f64,
                c.max_depth.map_or(f64::INFINITY, |d| d as f64),
                -(c.min_leaf as f64),
            ),
        }
    }

    pub fn fit(&self, x: &Rows, y: &[bool]) -> Result<Classifier> {
        match self {
            Candidate::Logistic(cfg) => {
                let (xs, scaler) = standardize(x)?;
                Ok(Classifier::Logistic {
                    scaler,
                    model: fit_logistic_en(&xs, y, cfg)?,
                })
            }
            Candidate::Forest(cfg) => Ok(Classifier::Forest(fit_forest(x, y, cfg)?)),
        }
    }
}

/// A fitted baseline, ready to score raw (unstandardized) features.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Logistic {
        scaler: Scaler,
        model: LogisticModel,
    },
    Forest(Forest),
}

impl Classifier {
    pub fn predict_proba(&self, x: &Rows) -> Vec<f64> {
        match self {
            Classifier::Logistic { scaler, model } => model.predict_proba(&scaler.transform(x)),
            Classifier::Forest(f) => f.predict_proba(x),
        }
    }

    pub fn dump(&self) -> String {
        match self {
            Classifier::Logistic { scaler, model } => {
                let mut s = String::from("logistic\n");
                for (j, (m, sd)) in scaler.mean.iter().zip(&scaler.std).enumerate() {
                    let _ = writeln!(s, "scale{j} mean={m:?} std={sd:?}");
                }
                s + &model.dump()
            }
            Classifier::Forest(f) => format!("forest\n{}", f.dump()),
        }
    }
}

pub const LAMBDA_RANGE: (f64, f64) = (1e-5, 1e2);
pub const TREES_RANGE: (usize, usize) = (100, 500);
pub const DEPTH_RANGE: (usize, usize) = (2, 16);
pub const MIN_LEAF_RANGE: (usize, usize) = (1, 8);

/// Random-search draws for one family.
pub fn draw_candidates(family: Family, n: usize, seed: u64) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (LAMBDA_RANGE.0.ln(), LAMBDA_RANGE.1.ln());
    (0..n)
        .map(|i| {
            let lambda = rng.random_range(lo..=hi).exp();
            match family {
                Family::Lasso => Candidate::Logistic(ElasticNetConfig { lambda, alpha: 1.0 }),
                Family::Ridge => Candidate::Logistic(ElasticNetConfig { lambda, alpha: 0.0 }),
                Family::ElasticNet => Candidate::Logistic(ElasticNetConfig {
                    lambda,
                    alpha: rng.random_range(0.0..=1.0),
                }),
                Family::Forest => {
                    // depth draws: DEPTH_RANGE plus one slot meaning unbounded
                    let slots = DEPTH_RANGE.1 - DEPTH_RANGE.0 + 2;
                    let d = rng.random_range(0..slots);
                    Candidate::Forest(ForestConfig {
                        n_trees: rng.random_range(TREES_RANGE.0..=TREES_RANGE.1),
                        max_depth: (d + 1 < slots).then_some(DEPTH_RANGE.0 + d),
                        min_leaf: rng.random_range(MIN_LEAF_RANGE.0..=MIN_LEAF_RANGE.1),
                        features_per_split: None,
                        bootstrap: true,
                        seed: seed ^ (i as u64 + 1),
                    })
                }
            }
        })
        .collect()
}

/// Fold index per row; each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    if k < 2 || pos.len() < k || neg.len() < k {
        return Err(Error::invalid(format!(
            "stratified {k}-fold CV needs >= {k} rows per class, got {} positive / {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        for (j, i) in class.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    Ok(fold)
}

/// Mean validation AUC of a candidate over the given folds.
pub fn cv_auc(x: &Rows, y: &[bool], cand: &Candidate, folds: &[usize], k: usize) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..k {
        let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if folds[i] == f {
                xv.push(x[i].clone());
                yv.push(y[i]);
            } else {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
        }
        let model = cand.fit(&xt, &yt)?;
        total += auc(&model.predict_proba(&xv), &yv)?;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: Candidate,
    pub cv_auc: f64,
    pub scored: Vec<(Candidate, f64)>,
}

/// Stratified k-fold CV over explicit candidates; highest mean AUC wins, ties
/// go to the smaller model.
pub fn tune_candidates(
    x: &Rows,
    y: &[bool],
    candidates: &[Candidate],
    k: usize,
    seed: u64,
) -> Result<TuneResult> {
    check_matrix(x, y)?;
    if candidates.is_empty() {
        return Err(Error::invalid("tune: no candidates"));
    }
    let folds = stratified_folds(y, k, seed)?;
    let scored: Vec<(Candidate, f64)> = candidates
        .par_iter()
        .map(|c| cv_auc(x, y, c, &folds, k).map(|s| (*c, s)))
        .collect::<Result<_>>()?;
    let (best, cv) = scored
        .iter()
        .copied()
        .reduce(|a, b| {
            let better = b.1 > a.1
                || (b.1 == a.1
                    && b.0.size_key().partial_cmp(&a.0.size_key())
                        == Some(std::cmp::Ordering::Less));
            if better {
                b
            } else {
                a
            }
        })
        .expect("non-empty");
    Ok(TuneResult {
        best,
        cv_auc: cv,
        scored,
    })
}

/// Random search for one family.
pub fn tune(
    x: &Rows,
    y: &[bool],
    family: Family,
    n_draws: usize,
    k: usize,
    seed: u64,
) -> Result<TuneResult> {
    tune_candidates(x, y, &draw_candidates(family, n_draws, seed), k, seed)
}
