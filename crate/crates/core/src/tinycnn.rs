//! Desk-scale convolutional classifier split into three layer groups.
//!
//! ```text
//! group 1: conv 3x3x8  -> relu -> pool, conv 3x3x16 -> relu -> pool
//! group 2: conv 3x3x32 -> relu -> pool, conv 3x3x32 -> relu -> global average
//! group 3: dense head 32 -> n_labels -> sigmoid
//! ```
//!
//! Input batches are `[n, 1, h, w]` grayscale tensors scaled to `[0, 1]`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ndtensor::{Graph, NodeId, Tensor};

pub const N_GROUPS: usize = 3;
pub const MIN_IMAGE_SIZE: usize = 16;
const CONV_CHANNELS: [usize; 4] = [8, 16, 32, 32];
const KERNEL: usize = 3;
const HEAD_NAME: &str = "head";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

impl Param {
    fn is_head(&self) -> bool {
        self.name.starts_with(HEAD_NAME)
    }

    /// Fan-in used by the default initializer: `in * k * k` for kernels,
    /// `in` for dense weights.
    pub fn fan_in(&self) -> usize {
        let s = self.tensor.shape();
        match s.len() {
            4 => s[1] * s[2] * s[3],
            2 => s[0],
            _ => s[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGroup {
    /// 1 is closest to the image.
    pub index: usize,
    pub params: Vec<Param>,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub groups: [LayerGroup; N_GROUPS],
    n_labels: usize,
    image_size: usize,
}

impl ModelParams {
    /// Builds the architecture and applies [`ModelParams::init_default`].
    pub fn build(image_size: usize, n_labels: usize, seed: u64) -> Result<Self> {
        if image_size < MIN_IMAGE_SIZE {
            return Err(Error::invalid(format!(
                "image_size {image_size} < {MIN_IMAGE_SIZE}: pooling would underflow"
            )));
        }
        if n_labels == 0 {
            return Err(Error::invalid("n_labels must be at least 1"));
        }
        let conv = |i: usize, cin: usize, cout: usize| {
            vec![
                Param {
                    name: format!("conv{i}.weight"),
                    kind: ParamKind::Weight,
                    tensor: Tensor::zeros(&[cout, cin, KERNEL, KERNEL]),
                },
                Param {
                    name: format!("conv{i}.bias"),
                    kind: ParamKind::Bias,
                    tensor: Tensor::zeros(&[cout]),
                },
            ]
        };
        let c = CONV_CHANNELS;
        let g1 = [conv(1, 1, c[0]), conv(2, c[0], c[1])].concat();
        let g2 = [conv(3, c[1], c[2]), conv(4, c[2], c[3])].concat();
        let g3 = vec![
            Param {
                name: format!("{HEAD_NAME}.weight"),
                kind: ParamKind::Weight,
                tensor: Tensor::zeros(&[c[3], n_labels]),
            },
            Param {
                name: format!("{HEAD_NAME}.bias"),
                kind: ParamKind::Bias,
                tensor: Tensor::zeros(&[n_labels]),
            },
        ];
        let group = |index, params| LayerGroup {
            index,
            params,
            frozen: false,
        };
        let mut model = Self {
            groups: [group(1, g1), group(2, g2), group(3, g3)],
            n_labels,
            image_size,
        };
        model.init_default(seed);
        Ok(model)
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.groups.iter().flat_map(|g| g.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.groups.iter_mut().flat_map(|g| g.params.iter_mut())
    }

    /// `(group index 0..3, param)` in flat order.
    pub fn params_with_group(&self) -> impl Iterator<Item = (usize, &Param)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| g.params.iter().map(move |p| (gi, p)))
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.tensor.len()).sum()
    }

    pub fn head(&self) -> &[Param] {
        &self.groups[2].params
    }

    pub fn set_frozen(&mut self, frozen: [bool; N_GROUPS]) {
        for (g, f) in self.groups.iter_mut().zip(frozen) {
            g.frozen = f;
        }
    }

    pub fn frozen(&self) -> [bool; N_GROUPS] {
        [
            self.groups[0].frozen,
            self.groups[1].frozen,
            self.groups[2].frozen,
        ]
    }

    /// Scaled-uniform fan-in initialization: weights ~ U(-b, b) with
    /// `b = 1/sqrt(fan_in)`, biases zero.
    pub fn init_default(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.params_mut() {
            init_param(p, &mut rng);
        }
    }

    /// Re-draws only the head, leaving every other tensor as is.
    pub fn reinit_head(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.groups[2].params.iter_mut().filter(|p| p.is_head()) {
            init_param(p, &mut rng);
        }
    }

    /// Copies every non-head tensor from `source`. The head keeps its current
    /// (freshly initialized) values, so the source may have any label count.
    pub fn load_pretrained(&mut self, source: &ModelParams) -> Result<()> {
        let src: Vec<&Param> = source.params().filter(|p| !p.is_head()).collect();
        let dst_count = self.params().filter(|p| !p.is_head()).count();
        if src.len() != dst_count {
            return Err(Error::invalid(format!(
                "checkpoint has {} transferable tensors, model expects {dst_count}",
                src.len()
            )));
        }
        for (dst, src) in self.params_mut().filter(|p| !p.is_head()).zip(src) {
            if dst.name != src.name || dst.tensor.shape() != src.tensor.shape() {
                return Err(Error::CheckpointMismatch {
                    layer: dst.name.clone(),
                    expected: dst.tensor.shape().to_vec(),
                    found: src.tensor.shape().to_vec(),
                });
            }
            dst.tensor.data_mut().copy_from_slice(src.tensor.data());
        }
        Ok(())
    }

    /// Replaces every transferred (non-head) tensor with i.i.d. normal draws
    /// that share the tensor's empirical mean and standard deviation.
    pub fn reinit_moment_preserving(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.params_mut().filter(|p| !p.is_head()) {
            let (mean, std) = mean_std(p.tensor.data());
            let data = p.tensor.data_mut();
            if std > 0.0 {
                let normal = Normal::new(mean, std).expect("finite moments");
                data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            } else {
                data.fill(mean);
            }
        }
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        if s.len() != 4 || s[1] != 1 || s[2] < 8 || s[3] < 8 {
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: s.to_vec(),
                right: vec![0, 1, self.image_size, self.image_size],
            });
        }
        Ok(())
    }

    /// Records the forward pass on `g`. Parameters of frozen groups enter the
    /// graph without `requires_grad`. Returns the probability node and the
    /// parameter leaves in flat order.
    pub fn forward(
        &self,
        g: &mut Graph,
        batch: Tensor,
        track_grad: bool,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        self.check_input(&batch)?;
        let mut leaves = Vec::with_capacity(12);
        for group in &self.groups {
            for p in &group.params {
                let mut t = p.tensor.clone();
                t.set_requires_grad(track_grad && !group.frozen);
                leaves.push(g.leaf(t));
            }
        }
        let mut x = g.leaf(batch);
        for layer in 0..4 {
            let (w, b) = (leaves[2 * layer], leaves[2 * layer + 1]);
            x = g.conv2d(x, w)?;
            x = g.add_bias(x, b)?;
            x = g.relu(x);
            x = if layer < 3 {
                g.max_pool_2x2(x)?
            } else {
                g.global_avg_pool(x)?
            };
        }
        x = g.matmul(x, leaves[8])?;
        x = g.add_bias(x, leaves[9])?;
        Ok((g.sigmoid(x), leaves))
    }

    /// Per-label probabilities, shape `[n, n_labels]`.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (out, _) = self.forward(&mut g, batch.clone(), false)?;
        Ok(g.take(out))
    }

    /// Mean BCE on a batch plus gradients for every parameter in flat order
    /// (`None` for frozen groups).
    pub fn loss_and_grads(
        &self,
        batch: Tensor,
        targets: Tensor,
    ) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
        let mut g = Graph::new();
        let (probs, leaves) = self.forward(&mut g, batch, true)?;
        let y = g.leaf(targets);
        let loss = g.bce_loss(probs, y)?;
        let value = g.value(loss).item()?;
        g.backward(loss)?;
        let grads = leaves
            .iter()
            .map(|&id| g.value(id).grad().map(<[f64]>::to_vec))
            .collect();
        Ok((value, grads))
    }

    /// Mean BCE without gradients.
    pub fn loss(&self, batch: Tensor, targets: Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let (probs, _) = self.forward(&mut g, batch, false)?;
        let y = g.leaf(targets);
        let loss = g.bce_loss(probs, y)?;
        g.value(loss).item()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            entries: self
                .params()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                    values: p.tensor.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds a model from a checkpoint; the label count is taken from the
    /// stored head.
    pub fn from_checkpoint(ck: &Checkpoint, image_size: usize) -> Result<Self> {
        let head_bias = ck
            .entries
            .iter()
            .find(|e| e.name == format!("{HEAD_NAME}.bias"))
            .ok_or_else(|| Error::invalid("checkpoint has no head.bias tensor"))?;
        let mut model = Self::build(image_size, head_bias.values.len(), 0)?;
        if ck.entries.len() != model.params().count() {
            return Err(Error::invalid(format!(
                "checkpoint holds {} tensors, architecture has {}",
                ck.entries.len(),
                model.params().count()
            )));
        }
        for (p, e) in model.params_mut().zip(&ck.entries) {
            if p.name != e.name || p.tensor.shape() != e.shape.as_slice() {
                return Err(Error::CheckpointMismatch {
                    layer: p.name.clone(),
                    expected: p.tensor.shape().to_vec(),
                    found: e.shape.clone(),
                });
            }
            p.tensor.data_mut().copy_from_slice(&e.values);
        }
        Ok(model)
    }
}

fn init_param(p: &mut Param, rng: &mut ChaCha8Rng) {
    match p.kind {
        ParamKind::Bias => p.tensor.data_mut().fill(0.0),
        ParamKind::Weight => {
            let b = 1.0 / (p.fan_in() as f64).sqrt();
            p.tensor
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-b..=b));
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ordered list of named row-major tensors.
///
/// Text container, two lines per tensor:
///
/// ```text
/// smalldata-checkpoint v1
/// conv1.weight 8,1,3,3
/// 0.01 -0.2 ...
/// ```
///
/// Values use Rust's shortest round-trip float formatting, so save/load is
/// bit-exact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

const CHECKPOINT_MAGIC: &str = "smalldata-checkpoint v1";

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        for e in &self.entries {
            let shape: Vec<String> = e.shape.iter().map(usize::to_string).collect();
            writeln!(w, "{} {}", e.name, shape.join(","))?;
            let mut line = String::with_capacity(e.values.len() * 20);
            for (i, v) in e.values.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v:?}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(l))) if l.trim() == CHECKPOINT_MAGIC => {}
            _ => {
                return Err(parse_err(
                    1,
                    format!("expected `{CHECKPOINT_MAGIC}` header"),
                ))
            }
        }
        let mut entries = Vec::new();
        while let Some((i, header)) = lines.next() {
            let header = header.map_err(|e| Error::io(origin, e))?;
            if header.trim().is_empty() {
                continue;
            }
            let (name, shape) = header
                .split_once(' ')
                .ok_or_else(|| parse_err(i + 1, "expected `<name> <shape>`".into()))?;
            let shape: Vec<usize> = shape
                .split(',')
                .map(|d| d.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(i + 1, format!("bad shape: {e}")))?;
            let (j, body) = lines
                .next()
                .ok_or_else(|| parse_err(i + 2, format!("missing values for `{name}`")))?;
            let body = body.map_err(|e| Error::io(origin, e))?;
            let values: Vec<f64> = body
                .split_ascii_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(j + 1, format!("bad value: {e}")))?;
            if values.len() != shape.iter().product::<usize>() {
                return Err(parse_err(
                    j + 1,
                    format!("`{name}` has {} values for shape {shape:?}", values.len()),
                ));
            }
            entries.push(CheckpointEntry {
                name: name.to_string(),
                shape,
                values,
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f), path)
    }
}
