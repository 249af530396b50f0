//! Dataset ingestion, deterministic splits, balanced sampling and the
//! learning-curve and stage-wise experiment drivers.
//!
//! Tables written here:
//!
//! * split: `row,path,partition`
//! * results: `method,n_train,seed,status,test_auc,hyperparams,message`
//! * curve data: `method,n_train,n_runs,mean_auc,stderr`
//! * stage-wise report: `stage,option,mean_auc,n_sizes,winner,t,p`

pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{most_common_aspect, resize_width, AugmentConfig, Image};
use crate::baseline::{tune, Candidate, Classifier, Family};
use crate::error::{Error, Result};
use crate::metrics::{auc, paired_ttest};
use crate::radiomics::extract_features;
use crate::sched::{LrFindConfig, LrFindResult};
use crate::tinycnn::{Checkpoint, ModelParams};
use crate::trainer::{
    evaluate_auc, find_lr, train, Dataset, TrainConfig, TrainMethod, TrainResult, TransferMode,
};

// ---------------------------------------------------------------- config

/// Plain-text `key = value` configuration; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = parse_pair(line).map_err(|msg| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            })?;
            values.insert(k, v);
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Applies a `key=value` override, as given on the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = parse_pair(pair).map_err(Error::InvalidArgument)?;
        self.values.insert(k, v);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get_parsed(key).map(|v| v.unwrap_or(default))
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::invalid(format!("config key `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get_parsed(key)?
            .ok_or_else(|| Error::invalid(format!("missing config key `{key}`")))
    }

    /// Comma-separated list; `None` when the key is absent.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse().map_err(|e| {
                            Error::invalid(format!("config key `{key}` item `{s}`: {e}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

fn parse_pair(line: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| format!("expected `key = value`, got `{line}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in `{line}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub labels: Vec<bool>,
}

/// Image paths with one 0/1 value per named label.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub label_names: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// In-memory manifest; checks label widths and path uniqueness.
    pub fn from_rows(label_names: Vec<String>, rows: Vec<ManifestRow>) -> Result<Self> {
        if label_names.is_empty() {
            return Err(Error::invalid("manifest needs at least one label column"));
        }
        let mut seen = HashSet::new();
        for r in &rows {
            if r.labels.len() != label_names.len() {
                return Err(Error::invalid(format!(
                    "row `{}` has {} labels, expected {}",
                    r.path.display(),
                    r.labels.len(),
                    label_names.len()
                )));
            }
            if !seen.insert(&r.path) {
                return Err(Error::invalid(format!(
                    "duplicate path `{}`",
                    r.path.display()
                )));
            }
        }
        Ok(Self { label_names, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.label_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown label `{name}`; manifest has {:?}",
                    self.label_names
                ))
            })
    }
}

/// Reads a `path,label...` CSV. Paths are resolved against `image_root` and
/// each file must be openable.
pub fn ingest(manifest_path: &Path, image_root: &Path) -> Result<Manifest> {
    let file = File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "path" {
        return Err(Error::Parse {
            path: manifest_path.to_path_buf(),
            line: 1,
            msg: "header must be `path,<label>[,<label>...]`".into(),
        });
    }
    let label_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line()) as usize;
        let fail = |msg: String| Error::Parse {
            path: manifest_path.to_path_buf(),
            line,
            msg,
        };
        if rec.len() != header.len() {
            return Err(fail(format!(
                "expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let raw = &rec[0];
        if let Some(first) = seen.insert(raw.to_string(), line as u64) {
            return Err(fail(format!(
                "duplicate path `{raw}` (first on line {first})"
            )));
        }
        let labels = rec
            .iter()
            .skip(1)
            .zip(&label_names)
            .map(|(v, name)| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(fail(format!(
                    "label `{name}` must be 0 or 1, got `{other}`"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let path = image_root.join(raw);
        File::open(&path).map_err(|e| fail(format!("image `{}`: {e}", path.display())))?;
        rows.push(ManifestRow { path, labels });
    }
    Ok(Manifest { label_names, rows })
}

/// Loads an 8-bit grayscale image (PNG or PGM; colour inputs are converted).
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Image::new(h as usize, w as usize, img.into_raw())
}

/// Writes an image as 8-bit grayscale; the format follows the extension.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let buf = image::GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .expect("buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

// ---------------------------------------------------------------- splits

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.70, 0.10, 0.20);
pub const MIN_SPLIT_ROWS: usize = 10;

/// Disjoint, exhaustive train/validation/test row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn partition_of(&self, n_rows: usize) -> Vec<&'static str> {
        let mut out = vec![""; n_rows];
        for (name, idx) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for &i in idx {
                out[i] = name;
            }
        }
        out
    }
}

/// Seeded permutation cut at 70/10/20 (counts rounded to the nearest row).
pub fn split(manifest: &Manifest, seed: u64) -> Result<SplitPlan> {
    let n = manifest.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::invalid(format!(
            "split needs at least {MIN_SPLIT_ROWS} rows, manifest has {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (7 * n + 5) / 10;
    let n_val = (n + 5) / 10;
    let part = |range: std::ops::Range<usize>| {
        let mut v = perm[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitPlan {
        train: part(0..n_train),
        val: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
        seed,
    })
}

pub fn write_split_csv(w: impl Write, manifest: &Manifest, plan: &SplitPlan) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["row", "path", "partition"])?;
    for (i, part) in plan.partition_of(manifest.len()).into_iter().enumerate() {
        wtr.write_record([
            i.to_string(),
            manifest.rows[i].path.display().to_string(),
            part.to_string(),
        ])?;
    }
    wtr.flush()
        .map_err(|e| Error::io(Path::new("<split csv>"), e))?;
    Ok(())
}

// ---------------------------------------------------------------- sampling

/// SplitMix64 finalizer; derives independent sub-seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Row indices plus a note when the requested class balance was not met.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub warning: Option<String>,
}

fn warn(msg: String) -> Option<String> {
    log::warn!("{msg}");
    Some(msg)
}

fn balance_partition(
    manifest: &Manifest,
    idx: &[usize],
    label: usize,
    rng: &mut ChaCha8Rng,
    name: &str,
) -> Result<Sample> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| manifest.rows[i].labels[label]);
    if pos.is_empty() {
        return Err(Error::invalid(format!(
            "{name} partition has no positives for `{}`",
            manifest.label_names[label]
        )));
    }
    let mut warning = None;
    let mut chosen = pos.clone();
    if neg.len() < pos.len() {
        warning = warn(format!(
            "{name}: only {} negatives for {} positives; using all negatives",
            neg.len(),
            pos.len()
        ));
        chosen.extend(&neg);
    } else {
        chosen.extend(neg.choose_multiple(rng, pos.len()));
    }
    chosen.sort_unstable();
    Ok(Sample {
        indices: chosen,
        warning,
    })
}

/// Fixed validation and test sets for one experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedEval {
    pub val: Sample,
    pub test: Sample,
}

/// All positives of each evaluation partition plus as many sampled negatives.
pub fn make_balanced_eval(
    manifest: &Manifest,
    plan: &SplitPlan,
    label: usize,
    seed: u64,
) -> Result<BalancedEval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let val = balance_partition(manifest, &plan.val, label, &mut rng, "validation")?;
    let test = balance_partition(manifest, &plan.test, label, &mut rng, "test")?;
    Ok(BalancedEval { val, test })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    /// One named label, evaluated on balanced sets.
    Binary(String),
    /// Every manifest label, mean per-label AUC.
    MultiLabel,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Binary(l) => write!(f, "binary:{l}"),
            Task::MultiLabel => f.write_str("multi_label"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi_label" => Ok(Task::MultiLabel),
            _ => match s.strip_prefix("binary:") {
                Some(l) if !l.is_empty() => Ok(Task::Binary(l.to_string())),
                _ => Err(Error::invalid(format!(
                    "task must be `binary:<label>` or `multi_label`, got `{s}`"
                ))),
            },
        }
    }
}

/// Draws `n` training rows. Binary tasks with `balanced` take `n/2`
/// positives and the rest negatives, topping up from the other class when
/// one runs short.
pub fn sample_train(
    manifest: &Manifest,
    plan: &SplitPlan,
    label: Option<usize>,
    n: usize,
    seed: u64,
    balanced: bool,
) -> Result<Sample> {
    let avail = plan.train.len();
    if n > avail {
        return Err(Error::invalid(format!(
            "requested {n} training rows, partition has {avail}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, n as u64));
    let mut warning = None;
    let mut chosen: Vec<usize> = match (label, balanced) {
        (Some(l), true) => {
            let (pos, neg): (Vec<usize>, Vec<usize>) = plan
                .train
                .iter()
                .partition(|&&i| manifest.rows[i].labels[l]);
            let want_pos = n / 2;
            let n_pos = want_pos.min(pos.len()).max(n.saturating_sub(neg.len()));
            let n_neg = n - n_pos;
            if n_pos != want_pos {
                warning = warn(format!(
                    "n={n}: drew {n_pos} positives and {n_neg} negatives \
                     ({} positives, {} negatives available)",
                    pos.len(),
                    neg.len()
                ));
            }
            let mut v: Vec<usize> = pos.choose_multiple(&mut rng, n_pos).copied().collect();
            v.extend(neg.choose_multiple(&mut rng, n_neg));
            v
        }
        _ => plan.train.choose_multiple(&mut rng, n).copied().collect(),
    };
    chosen.sort_unstable();
    Ok(Sample {
        indices: chosen,
        warning,
    })
}

// ---------------------------------------------------------------- experiments

/// How a network's weights are initialised before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Init {
    Default,
    Pretrained,
    MomentPreserving,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::Default => "default",
            Init::Pretrained => "pretrained",
            Init::MomentPreserving => "moment",
        }
    }
}

/// One learner on a learning curve.
///
/// Text form: `cnn/<train method>/<transfer mode>/<init>` or
/// `radiomics/<family>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodSpec {
    Cnn {
        method: TrainMethod,
        transfer: TransferMode,
        init: Init,
    },
    Radiomics(Family),
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Cnn {
                method,
                transfer,
                init,
            } => write!(
                f,
                "cnn/{}/{}/{}",
                method.name(),
                transfer.name(),
                init.name()
            ),
            MethodSpec::Radiomics(fam) => write!(f, "radiomics/{}", fam.name()),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        match parts.as_slice() {
            ["cnn", m, t, i] => Ok(MethodSpec::Cnn {
                method: TrainMethod::parse(m)?,
                transfer: TransferMode::parse(t)?,
                init: match *i {
                    "default" => Init::Default,
                    "pretrained" => Init::Pretrained,
                    "moment" => Init::MomentPreserving,
                    other => return Err(Error::invalid(format!("unknown init `{other}`"))),
                },
            }),
            ["radiomics", fam] => Ok(MethodSpec::Radiomics(Family::parse(fam)?)),
            _ => Err(Error::invalid(format!(
                "method `{s}` must be cnn/<method>/<transfer>/<init> or radiomics/<family>"
            ))),
        }
    }
}

pub const DEFAULT_SIZES: [usize; 7] = [50, 100, 200, 400, 800, 1600, 2000];
pub const MIN_TRAIN_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` runs the LR finder once at the largest size.
    pub max_lr: Option<f64>,
    pub augment: Option<AugmentConfig>,
    /// Score the test set with test-time augmentation (needs `augment`).
    pub tta: bool,
}

impl Default for CnnSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            max_lr: None,
            augment: None,
            tta: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSettings {
    pub n_draws: usize,
    pub folds: usize,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            n_draws: 20,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub task: Task,
    pub sizes: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub source_checkpoint: Option<PathBuf>,
    /// Seeds the train/val/test split and the balanced evaluation sets.
    pub split_seed: u64,
    /// Class-balanced training draws for binary tasks.
    pub balanced_train: bool,
    pub cnn: CnnSettings,
    pub baseline: BaselineSettings,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            task: Task::MultiLabel,
            sizes: DEFAULT_SIZES.to_vec(),
            methods: Vec::new(),
            seeds: vec![0],
            source_checkpoint: None,
            split_seed: 0,
            balanced_train: true,
            cnn: CnnSettings::default(),
            baseline: BaselineSettings::default(),
        }
    }
}

impl ExperimentSpec {
    /// Reads the experiment keys of a [`KvConfig`]:
    /// `task`, `sizes`, `methods`, `seeds`, `source_checkpoint`,
    /// `split_seed`, `balanced_train`, `epochs`, `batch_size`, `max_lr`
    /// (`auto` for the LR finder), `augment` (`true`/`false`), `crop`,
    /// `flip_prob`, `max_rotation_deg`, `tta`, `n_draws`, `folds`.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let augment = if cfg.get_or("augment", false)? {
            let a = AugmentConfig::default();
            Some(AugmentConfig {
                flip_prob: cfg.get_or("flip_prob", a.flip_prob)?,
                max_rotation_deg: cfg.get_or("max_rotation_deg", a.max_rotation_deg)?,
                crop: cfg.require("crop")?,
            })
        } else {
            None
        };
        let max_lr = match cfg.get("max_lr") {
            None | Some("auto") => None,
            Some(_) => Some(cfg.require("max_lr")?),
        };
        Ok(Self {
            task: cfg.get_or("task", d.task)?,
            sizes: cfg.get_list("sizes")?.unwrap_or(d.sizes),
            methods: cfg.get_list("methods")?.unwrap_or_default(),
            seeds: cfg.get_list("seeds")?.unwrap_or(d.seeds),
            source_checkpoint: cfg.get("source_checkpoint").map(PathBuf::from),
            split_seed: cfg.get_or("split_seed", d.split_seed)?,
            balanced_train: cfg.get_or("balanced_train", d.balanced_train)?,
            cnn: CnnSettings {
                epochs: cfg.get_or("epochs", d.cnn.epochs)?,
                batch_size: cfg.get_or("batch_size", d.cnn.batch_size)?,
                max_lr,
                augment,
                tta: cfg.get_or("tta", augment.is_some())?,
            },
            baseline: BaselineSettings {
                n_draws: cfg.get_or("n_draws", d.baseline.n_draws)?,
                folds: cfg.get_or("folds", d.baseline.folds)?,
            },
        })
    }

    pub fn validate(&self, data: &ExperimentData) -> Result<()> {
        if self.methods.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("experiment needs methods, sizes and seeds"));
        }
        self.validate_methods(data)?;
        let n_train = (7 * data.manifest.len() + 5) / 10;
        for &n in &self.sizes {
            if !(MIN_TRAIN_SIZE..=n_train).contains(&n) {
                return Err(Error::invalid(format!(
                    "training size {n} outside [{MIN_TRAIN_SIZE}, {n_train}]"
                )));
            }
        }
        Ok(())
    }

    /// Task/method compatibility, without the size grid.
    pub fn validate_methods(&self, data: &ExperimentData) -> Result<()> {
        if let Task::Binary(l) = &self.task {
            data.manifest.label_index(l)?;
        }
        if self.cnn.tta && self.cnn.augment.is_none() {
            return Err(Error::invalid("tta needs augment settings"));
        }
        for m in &self.methods {
            match *m {
                MethodSpec::Radiomics(_) if self.task == Task::MultiLabel => {
                    return Err(Error::invalid(format!("{m} supports binary tasks only")));
                }
                MethodSpec::Cnn {
                    method,
                    transfer,
                    init,
                } => {
                    if transfer == TransferMode::GradualUnfreeze && method == TrainMethod::Regular {
                        return Err(Error::invalid(format!(
                            "{m}: gradual_unfreeze needs one_cycle"
                        )));
                    }
                    if transfer != TransferMode::None && init == Init::Default {
                        return Err(Error::invalid(format!(
                            "{m}: transfer modes need a pretrained or moment init"
                        )));
                    }
                    if init != Init::Default && self.source_checkpoint.is_none() {
                        return Err(Error::invalid(format!("{m} needs source_checkpoint")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Manifest plus its decoded, equally sized images.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub manifest: Manifest,
    pub images: Vec<Image>,
}

impl ExperimentData {
    pub fn new(manifest: Manifest, images: Vec<Image>) -> Result<Self> {
        if manifest.len() != images.len() {
            return Err(Error::invalid(format!(
                "{} manifest rows but {} images",
                manifest.len(),
                images.len()
            )));
        }
        if let Some(first) = images.first() {
            let dims = (first.height(), first.width());
            if let Some(i) = images
                .iter()
                .position(|im| (im.height(), im.width()) != dims)
            {
                return Err(Error::invalid(format!(
                    "image {} is {}x{}, expected {}x{}",
                    manifest.rows[i].path.display(),
                    images[i].height(),
                    images[i].width(),
                    dims.0,
                    dims.1
                )));
            }
        }
        Ok(Self { manifest, images })
    }

    /// Decodes every image and resizes it to `width` at the most common
    /// aspect ratio of the set.
    pub fn load(manifest: Manifest, width: usize) -> Result<Self> {
        let raw: Vec<Image> = manifest
            .rows
            .par_iter()
            .map(|r| load_image(&r.path))
            .collect::<Result<_>>()?;
        let aspect = most_common_aspect(raw.iter().map(|i| (i.height(), i.width())))
            .ok_or_else(|| Error::invalid("manifest has no images"))?;
        let images = raw
            .par_iter()
            .map(|i| resize_width(i, width, aspect))
            .collect::<Result<_>>()?;
        Self::new(manifest, images)
    }

    fn dataset(&self, idx: &[usize], label: Option<usize>) -> Result<Dataset> {
        let labels = idx
            .iter()
            .map(|&i| {
                let l = &self.manifest.rows[i].labels;
                match label {
                    Some(k) => vec![f64::from(u8::from(l[k]))],
                    None => l.iter().map(|&b| f64::from(u8::from(b))).collect(),
                }
            })
            .collect();
        Dataset::new(
            idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels,
        )
    }

    fn side(&self) -> usize {
        self.images.first().map_or(0, |i| i.height().min(i.width()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One (method, size, seed) cell of a learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub n_train: usize,
    pub seed: u64,
    pub status: CellStatus,
    pub test_auc: Option<f64>,
    pub hyperparams: String,
    pub message: String,
}

pub const RESULTS_HEADER: [&str; 7] = [
    "method",
    "n_train",
    "seed",
    "status",
    "test_auc",
    "hyperparams",
    "message",
];

impl ResultRow {
    fn key(&self) -> (String, usize, u64) {
        (self.method.clone(), self.n_train, self.seed)
    }

    fn record(&self) -> [String; 7] {
        [
            self.method.clone(),
            self.n_train.to_string(),
            self.seed.to_string(),
            match self.status {
                CellStatus::Ok => "ok".into(),
                CellStatus::Failed => "failed".into(),
            },
            self.test_auc.map_or(String::new(), |a| format!("{a:?}")),
            self.hyperparams.clone(),
            self.message.clone(),
        ]
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`", RESULTS_HEADER.join(",")),
        });
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line()) as usize;
            let fail = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let num = |i: usize| {
                rec[i]
                    .parse::<u64>()
                    .map_err(|e| fail(format!("{}: {e}", RESULTS_HEADER[i])))
            };
            Ok(ResultRow {
                method: rec[0].to_string(),
                n_train: num(1)? as usize,
                seed: num(2)?,
                status: match &rec[3] {
                    "ok" => CellStatus::Ok,
                    "failed" => CellStatus::Failed,
                    s => return Err(fail(format!("bad status `{s}`"))),
                },
                test_auc: match &rec[4] {
                    "" => None,
                    s => Some(s.parse().map_err(|e| fail(format!("test_auc: {e}")))?),
                },
                hyperparams: rec[5].to_string(),
                message: rec[6].to_string(),
            })
        })
        .collect()
}

/// Appends rows in cell order as they complete out of order.
struct OrderedWriter {
    out: Option<csv::Writer<BufWriter<File>>>,
    next: usize,
    pending: BTreeMap<usize, ResultRow>,
    path: PathBuf,
}

impl OrderedWriter {
    fn open(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => {
                let fresh = std::fs::metadata(p).map_or(true, |m| m.len() == 0);
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| Error::io(p, e))?;
                let mut w = csv::WriterBuilder::new()
                    .has_headers(false)
                    .from_writer(BufWriter::new(file));
                if fresh {
                    w.write_record(RESULTS_HEADER)?;
                    w.flush().map_err(|e| Error::io(p, e))?;
                }
                Some(w)
            }
            None => None,
        };
        Ok(Self {
            out,
            next: 0,
            pending: BTreeMap::new(),
            path: path.map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    fn push(&mut self, pos: usize, row: ResultRow) -> Result<()> {
        self.pending.insert(pos, row);
        while let Some(row) = self.pending.remove(&self.next) {
            if let Some(w) = self.out.as_mut() {
                w.write_record(row.record())?;
                w.flush().map_err(|e| Error::io(&self.path, e))?;
            }
            self.next += 1;
        }
        Ok(())
    }
}

/// Hyperparameters chosen once per method at the largest training size.
#[derive(Debug, Clone)]
enum Tuned {
    Cnn { max_lr: f64 },
    Radiomics(Candidate),
}

impl Tuned {
    fn describe(&self) -> String {
        match self {
            Tuned::Cnn { max_lr } => format!("max_lr={max_lr:e}"),
            Tuned::Radiomics(c) => c.describe(),
        }
    }
}

struct CurveContext<'a> {
    spec: &'a ExperimentSpec,
    data: &'a ExperimentData,
    plan: SplitPlan,
    label: Option<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    source: Option<ModelParams>,
    features: Option<Vec<Vec<f64>>>,
}

impl<'a> CurveContext<'a> {
    /// Split, evaluation sets, and whatever the given methods need loaded.
    fn build(
        spec: &'a ExperimentSpec,
        data: &'a ExperimentData,
        methods: &[MethodSpec],
    ) -> Result<Self> {
        let plan = split(&data.manifest, spec.split_seed)?;
        let label = match &spec.task {
            Task::Binary(l) => Some(data.manifest.label_index(l)?),
            Task::MultiLabel => None,
        };
        let (val, test) = match label {
            Some(l) => {
                let ev =
                    make_balanced_eval(&data.manifest, &plan, l, mix_seed(spec.split_seed, 1))?;
                (ev.val.indices, ev.test.indices)
            }
            None => (plan.val.clone(), plan.test.clone()),
        };

        let needs_source = methods
            .iter()
            .any(|m| matches!(m, MethodSpec::Cnn { init, .. } if *init != Init::Default));
        let source = match (&spec.source_checkpoint, needs_source) {
            (Some(p), true) => {
                let ck = Checkpoint::load(p)?;
                Some(ModelParams::from_checkpoint(&ck, data.side())?)
            }
            _ => None,
        };
        let features = if methods
            .iter()
            .any(|m| matches!(m, MethodSpec::Radiomics(_)))
        {
            Some(
                data.images
                    .par_iter()
                    .map(|im| extract_features(im).map(|f| f.0))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(CurveContext {
            spec,
            data,
            plan,
            label,
            val,
            test,
            source,
            features,
        })
    }
}

impl CurveContext<'_> {
    fn sample(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        sample_train(
            &self.data.manifest,
            &self.plan,
            self.label,
            n,
            seed,
            self.spec.balanced_train,
        )
        .map(|s| s.indices)
    }

    fn model_side(&self) -> usize {
        self.spec.cnn.augment.map_or(self.data.side(), |a| a.crop)
    }

    fn n_labels(&self) -> usize {
        self.label
            .map_or(self.data.manifest.label_names.len(), |_| 1)
    }

    fn init_model(&self, init: Init, seed: u64) -> Result<ModelParams> {
        let mut model = ModelParams::build(self.model_side(), self.n_labels(), seed)?;
        if init != Init::Default {
            let src = self
                .source
                .as_ref()
                .ok_or_else(|| Error::invalid("source checkpoint not loaded"))?;
            model.load_pretrained(src)?;
            if init == Init::MomentPreserving {
                model.reinit_moment_preserving(mix_seed(seed, 0x5eed));
            }
        }
        Ok(model)
    }

    fn train_config(
        &self,
        method: TrainMethod,
        transfer: TransferMode,
        max_lr: f64,
        seed: u64,
    ) -> TrainConfig {
        TrainConfig {
            method,
            transfer_mode: transfer,
            epochs: self.spec.cnn.epochs,
            batch_size: self.spec.cnn.batch_size,
            max_lr,
            seed,
            augment: self.spec.cnn.augment,
        }
    }

    fn tune(&self, m: &MethodSpec) -> Result<Tuned> {
        let n = *self.spec.sizes.iter().max().expect("validated");
        let seed = self.spec.seeds[0];
        self.tune_on(m, &self.sample(n, seed)?, seed)
    }

    fn tune_on(&self, m: &MethodSpec, idx: &[usize], seed: u64) -> Result<Tuned> {
        match *m {
            MethodSpec::Cnn {
                method,
                transfer,
                init,
            } => {
                if let Some(max_lr) = self.spec.cnn.max_lr {
                    return Ok(Tuned::Cnn { max_lr });
                }
                let found = self.lr_find(method, transfer, init, idx, seed)?;
                Ok(Tuned::Cnn {
                    max_lr: found.max_lr,
                })
            }
            MethodSpec::Radiomics(family) => {
                let (x, y) = self.feature_rows(idx)?;
                let b = &self.spec.baseline;
                Ok(Tuned::Radiomics(
                    tune(&x, &y, family, b.n_draws, b.folds, seed)?.best,
                ))
            }
        }
    }

    fn lr_find(
        &self,
        method: TrainMethod,
        transfer: TransferMode,
        init: Init,
        idx: &[usize],
        seed: u64,
    ) -> Result<LrFindResult> {
        let model = self.init_model(init, seed)?;
        let cfg = self.train_config(method, transfer, 1.0, seed);
        find_lr(
            &model,
            &self.data.dataset(idx, self.label)?,
            &cfg,
            &LrFindConfig::default(),
        )
    }

    fn feature_rows(&self, idx: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        let feats = self
            .features
            .as_ref()
            .ok_or_else(|| Error::invalid("features not extracted"))?;
        let label = self
            .label
            .ok_or_else(|| Error::invalid("radiomics needs a binary task"))?;
        Ok((
            idx.iter().map(|&i| feats[i].clone()).collect(),
            idx.iter()
                .map(|&i| self.data.manifest.rows[i].labels[label])
                .collect(),
        ))
    }

    fn run_cell(&self, m: &MethodSpec, tuned: &Tuned, n: usize, seed: u64) -> Result<f64> {
        let idx = self.sample(n, seed)?;
        Ok(self
            .fit_eval(m, tuned, &idx, seed, mix_seed(seed, n as u64))?
            .0)
    }

    /// Fits on `idx` and scores the fixed test set. `init_seed` drives the
    /// network initialisation, `train_seed` the batch order.
    fn fit_eval(
        &self,
        m: &MethodSpec,
        tuned: &Tuned,
        idx: &[usize],
        init_seed: u64,
        train_seed: u64,
    ) -> Result<(f64, Fitted)> {
        match (*m, tuned) {
            (
                MethodSpec::Cnn {
                    method,
                    transfer,
                    init,
                },
                Tuned::Cnn { max_lr },
            ) => {
                let model = self.init_model(init, init_seed)?;
                let cfg = self.train_config(method, transfer, *max_lr, train_seed);
                let train_set = self.data.dataset(idx, self.label)?;
                let val_set = self.data.dataset(&self.val, self.label)?;
                let mut res = train(&model, &train_set, &val_set, &cfg)?;
                let test_set = self.data.dataset(&self.test, self.label)?;
                let tta_seed = self
                    .spec
                    .cnn
                    .tta
                    .then_some(mix_seed(self.spec.split_seed, 0x77a));
                let a = evaluate_auc(
                    &res.best_params,
                    &test_set,
                    self.spec.cnn.augment.as_ref(),
                    tta_seed,
                )?
                .mean;
                res.test_auc = Some(a);
                Ok((a, Fitted::Cnn(Box::new(res))))
            }
            (MethodSpec::Radiomics(_), Tuned::Radiomics(cand)) => {
                let (x, y) = self.feature_rows(idx)?;
                let clf = cand.fit(&x, &y)?;
                let (xt, yt) = self.feature_rows(&self.test)?;
                Ok((auc(&clf.predict_proba(&xt), &yt)?, Fitted::Radiomics(clf)))
            }
            _ => unreachable!("tuning result matches method kind"),
        }
    }

    fn sample_or_all(&self, n: Option<usize>, seed: u64) -> Result<Vec<usize>> {
        match n {
            Some(n) => self.sample(n, seed),
            None => Ok(self.plan.train.clone()),
        }
    }
}

/// A fitted learner from [`run_single`].
#[derive(Debug, Clone)]
pub enum Fitted {
    Cnn(Box<TrainResult>),
    Radiomics(Classifier),
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub method: MethodSpec,
    pub n_train: usize,
    pub hyperparams: String,
    pub test_auc: f64,
    pub fitted: Fitted,
}

/// Trains `spec.methods[0]` once on `n_train` rows of the training partition
/// (all of it when `None`), tuning on that same draw, and scores the test set.
pub fn run_single(
    spec: &ExperimentSpec,
    data: &ExperimentData,
    n_train: Option<usize>,
    seed: u64,
) -> Result<SingleRun> {
    let m = *spec
        .methods
        .first()
        .ok_or_else(|| Error::invalid("no method given"))?;
    spec.validate_methods(data)?;
    let ctx = CurveContext::build(spec, data, &[m])?;
    let idx = ctx.sample_or_all(n_train, seed)?;
    let tuned = ctx.tune_on(&m, &idx, seed)?;
    let (test_auc, fitted) = ctx.fit_eval(&m, &tuned, &idx, seed, seed)?;
    Ok(SingleRun {
        method: m,
        n_train: idx.len(),
        hyperparams: tuned.describe(),
        test_auc,
        fitted,
    })
}

/// LR range test for the CNN `spec.methods[0]` on `n_train` training rows.
pub fn run_lr_find(
    spec: &ExperimentSpec,
    data: &ExperimentData,
    n_train: Option<usize>,
    seed: u64,
) -> Result<LrFindResult> {
    let m = *spec
        .methods
        .first()
        .ok_or_else(|| Error::invalid("no method given"))?;
    let MethodSpec::Cnn {
        method,
        transfer,
        init,
    } = m
    else {
        return Err(Error::invalid(format!(
            "lr-find needs a cnn method, got {m}"
        )));
    };
    spec.validate_methods(data)?;
    let ctx = CurveContext::build(spec, data, &[m])?;
    let idx = ctx.sample_or_all(n_train, seed)?;
    ctx.lr_find(method, transfer, init, &idx, seed)
}

/// Rows of one learning-curve run, in (method, size, seed) order.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRun {
    pub rows: Vec<ResultRow>,
    /// Cells computed by this call (the rest were already in the file).
    pub computed: usize,
}

/// Runs every (method, size, seed) cell not already present in
/// `results_path`, appending rows in a deterministic order. Failed cells are
/// recorded with their error and do not stop the run.
pub fn run_curve(
    spec: &ExperimentSpec,
    data: &ExperimentData,
    results_path: Option<&Path>,
) -> Result<CurveRun> {
    spec.validate(data)?;
    let existing = match results_path {
        Some(p) if p.exists() && std::fs::metadata(p).map_err(|e| Error::io(p, e))?.len() > 0 => {
            read_results(p)?
        }
        _ => Vec::new(),
    };
    let done: HashMap<_, _> = existing.iter().map(|r| (r.key(), r.clone())).collect();

    let mut cells = Vec::new();
    for m in &spec.methods {
        for &n in &spec.sizes {
            for &seed in &spec.seeds {
                cells.push((*m, n, seed));
            }
        }
    }
    let pending: Vec<(MethodSpec, usize, u64)> = cells
        .iter()
        .filter(|(m, n, s)| !done.contains_key(&(m.to_string(), *n, *s)))
        .copied()
        .collect();

    let mut methods: Vec<MethodSpec> = Vec::new();
    for (m, _, _) in &pending {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    let ctx = CurveContext::build(spec, data, &methods)?;

    let tuned: HashMap<MethodSpec, std::result::Result<Tuned, String>> = methods
        .par_iter()
        .map(|m| (*m, ctx.tune(m).map_err(|e| format!("tuning failed: {e}"))))
        .collect();

    let writer = Mutex::new(OrderedWriter::open(results_path)?);
    let fresh: Vec<ResultRow> = pending
        .par_iter()
        .enumerate()
        .map(|(pos, &(m, n, seed))| {
            let mut row = ResultRow {
                method: m.to_string(),
                n_train: n,
                seed,
                status: CellStatus::Failed,
                test_auc: None,
                hyperparams: String::new(),
                message: String::new(),
            };
            match &tuned[&m] {
                Ok(t) => {
                    row.hyperparams = t.describe();
                    match ctx.run_cell(&m, t, n, seed) {
                        Ok(a) => {
                            row.status = CellStatus::Ok;
                            row.test_auc = Some(a);
                        }
                        Err(e) => row.message = e.to_string(),
                    }
                }
                Err(e) => row.message = e.clone(),
            }
            if row.status == CellStatus::Failed {
                log::warn!("{} n={} seed={}: {}", row.method, n, seed, row.message);
            }
            writer.lock().expect("writer lock").push(pos, row.clone())?;
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let computed = fresh.len();
    let mut fresh = fresh.into_iter();
    let rows = cells
        .iter()
        .map(|(m, n, s)| match done.get(&(m.to_string(), *n, *s)) {
            Some(r) => r.clone(),
            None => fresh.next().expect("one fresh row per pending cell"),
        })
        .collect();
    Ok(CurveRun { rows, computed })
}

// ---------------------------------------------------------------- aggregation

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub method: String,
    pub n_train: usize,
    pub n_runs: usize,
    pub mean_auc: f64,
    /// Standard error of the mean (sample deviation); 0 for a single run.
    pub stderr: f64,
}

/// Mean and standard error of successful runs per (method, size), sorted by
/// method then size.
pub fn emit_curve_data(results: &[ResultRow]) -> Result<Vec<CurvePoint>> {
    if results.is_empty() {
        return Err(Error::invalid("no result rows to aggregate"));
    }
    let mut groups: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for r in results {
        if let (CellStatus::Ok, Some(a)) = (r.status, r.test_auc) {
            groups.entry((&r.method, r.n_train)).or_default().push(a);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((method, n_train), v)| {
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let stderr = if v.len() > 1 {
                (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
            } else {
                0.0
            };
            CurvePoint {
                method: method.to_string(),
                n_train,
                n_runs: v.len(),
                mean_auc: mean,
                stderr,
            }
        })
        .collect())
}

pub fn write_curve_csv(w: impl Write, points: &[CurvePoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["method", "n_train", "n_runs", "mean_auc", "stderr"])?;
    for p in points {
        wtr.write_record([
            p.method.clone(),
            p.n_train.to_string(),
            p.n_runs.to_string(),
            format!("{:?}", p.mean_auc),
            format!("{:?}", p.stderr),
        ])?;
    }
    wtr.flush()
        .map_err(|e| Error::io(Path::new("<curve csv>"), e))?;
    Ok(())
}

/// Mean AUC per training size for one method, in `sizes` order; sizes with
/// no successful run are an error.
pub fn curve_by_size(rows: &[ResultRow], method: &str, sizes: &[usize]) -> Result<Vec<f64>> {
    let pts = emit_curve_data(rows)?;
    sizes
        .iter()
        .map(|&n| {
            pts.iter()
                .find(|p| p.method == method && p.n_train == n)
                .map(|p| p.mean_auc)
                .ok_or_else(|| Error::invalid(format!("{method}: no successful run at n={n}")))
        })
        .collect()
}

// ---------------------------------------------------------------- stage-wise

/// Options compared at one stage, e.g. the training methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionScore {
    pub option: String,
    /// Mean AUC per training size; `None` if the option could not be run.
    pub curve: Option<Vec<f64>>,
    pub mean_auc: f64,
    /// Paired t-test of the winner against this option (absent for the winner).
    pub vs_winner: Option<crate::metrics::TTest>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: String,
    pub winner: String,
    pub scores: Vec<OptionScore>,
}

/// Compares stages in order, each time keeping the option with the highest
/// mean AUC over the size grid (first listed wins ties).
///
/// `evaluate(winners_so_far, option)` returns the option's per-size AUCs.
/// Options whose evaluation fails are reported and skipped; a stage with no
/// successful option is an error.
pub fn run_stagewise<F>(stages: &[Stage], mut evaluate: F) -> Result<Vec<StageReport>>
where
    F: FnMut(&[String], &str) -> Result<Vec<f64>>,
{
    let mut winners: Vec<String> = Vec::new();
    let mut reports = Vec::new();
    for stage in stages {
        if stage.options.is_empty() {
            return Err(Error::invalid(format!(
                "stage `{}` has no options",
                stage.name
            )));
        }
        let mut scores: Vec<OptionScore> = stage
            .options
            .iter()
            .map(|opt| match evaluate(&winners, opt) {
                Ok(curve) if !curve.is_empty() => OptionScore {
                    option: opt.clone(),
                    mean_auc: curve.iter().sum::<f64>() / curve.len() as f64,
                    curve: Some(curve),
                    vs_winner: None,
                    error: None,
                },
                Ok(_) => failed_option(opt, "empty curve".into()),
                Err(e) => failed_option(opt, e.to_string()),
            })
            .collect();
        let best = scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s.curve.is_some())
            .fold(None::<usize>, |acc, (i, s)| match acc {
                Some(j) if scores[j].mean_auc >= s.mean_auc => Some(j),
                _ => Some(i),
            })
            .ok_or_else(|| {
                Error::invalid(format!("stage `{}`: every option failed", stage.name))
            })?;
        let win_curve = scores[best].curve.clone().expect("winner has a curve");
        for (i, s) in scores.iter_mut().enumerate() {
            if i != best {
                if let Some(c) = &s.curve {
                    s.vs_winner = paired_ttest(&win_curve, c).ok();
                }
            }
        }
        let winner = scores[best].option.clone();
        log::info!("stage {}: winner {winner}", stage.name);
        winners.push(winner.clone());
        reports.push(StageReport {
            stage: stage.name.clone(),
            winner,
            scores,
        });
    }
    Ok(reports)
}

/// Options for the three standard stages. Stage two and three run only
/// when at least one source checkpoint is given; stage two uses the first.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOptions {
    pub methods: Vec<TrainMethod>,
    pub transfers: Vec<TransferMode>,
    pub sources: Vec<PathBuf>,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            methods: vec![TrainMethod::Regular, TrainMethod::OneCycle],
            transfers: vec![
                TransferMode::FeatureExtractor,
                TransferMode::FineTuneAll,
                TransferMode::GradualUnfreeze,
            ],
            sources: Vec::new(),
        }
    }
}

/// Training method (default init), then transfer mode (pretrained), then
/// source checkpoint, each scored by mean AUC over `base.sizes` and seeds.
pub fn run_stagewise_experiment(
    base: &ExperimentSpec,
    data: &ExperimentData,
    opts: &StageOptions,
) -> Result<Vec<StageReport>> {
    let mut stages = vec![Stage {
        name: "training_method".into(),
        options: opts.methods.iter().map(|m| m.name().to_string()).collect(),
    }];
    if !opts.sources.is_empty() {
        stages.push(Stage {
            name: "transfer_mode".into(),
            options: opts
                .transfers
                .iter()
                .map(|t| t.name().to_string())
                .collect(),
        });
        stages.push(Stage {
            name: "source".into(),
            options: opts
                .sources
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        });
    }
    run_stagewise(&stages, |prev, opt| {
        let (method, transfer, init, source) = match prev {
            [] => (
                TrainMethod::parse(opt)?,
                TransferMode::None,
                Init::Default,
                None,
            ),
            [m] => (
                TrainMethod::parse(m)?,
                TransferMode::parse(opt)?,
                Init::Pretrained,
                Some(opts.sources[0].clone()),
            ),
            [m, t, ..] => (
                TrainMethod::parse(m)?,
                TransferMode::parse(t)?,
                Init::Pretrained,
                Some(PathBuf::from(opt)),
            ),
        };
        let m = MethodSpec::Cnn {
            method,
            transfer,
            init,
        };
        let spec = ExperimentSpec {
            methods: vec![m],
            source_checkpoint: source,
            ..base.clone()
        };
        let run = run_curve(&spec, data, None)?;
        curve_by_size(&run.rows, &m.to_string(), &spec.sizes)
    })
}

fn failed_option(opt: &str, error: String) -> OptionScore {
    OptionScore {
        option: opt.to_string(),
        curve: None,
        mean_auc: f64::NAN,
        vs_winner: None,
        error: Some(error),
    }
}

pub fn write_stagewise_csv(w: impl Write, reports: &[StageReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["stage", "option", "mean_auc", "n_sizes", "winner", "t", "p"])?;
    for r in reports {
        for s in &r.scores {
            let (t, p) = s
                .vs_winner
                .as_ref()
                .map_or((String::new(), String::new()), |tt| {
                    (format!("{:?}", tt.t), format!("{:?}", tt.p))
                });
            wtr.write_record([
                r.stage.clone(),
                s.option.clone(),
                if s.curve.is_some() {
                    format!("{:?}", s.mean_auc)
                } else {
                    String::new()
                },
                s.curve.as_ref().map_or(0, Vec::len).to_string(),
                (s.option == r.winner).to_string(),
                t,
                p,
            ])?;
        }
    }
    wtr.flush()
        .map_err(|e| Error::io(Path::new("<stagewise csv>"), e))?;
    Ok(())
}
