//! Command-line front end. Settings come from a `key = value` file
//! (`--config`) with `--set key=value` and the named flags taking precedence.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smalldata::bench::{
    emit_curve_data, ingest, read_results, run_curve, run_lr_find, run_single,
    run_stagewise_experiment, split, write_curve_csv, write_split_csv, write_stagewise_csv,
    ExperimentData, ExperimentSpec, Fitted, KvConfig, Manifest, MethodSpec, StageOptions,
};
use smalldata::radiomics::{extract_features, write_feature_csv};
use smalldata::trainer::write_epoch_log;
use smalldata::{Error, Result};

#[derive(Parser)]
#[command(
    name = "smalldata",
    version,
    about = "Small-data CNN training and benchmarking"
)]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Manifest CSV (`path,<label>...`); same as `--set manifest=...`
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Directory image paths are relative to; same as `--set image_root=...`
    #[arg(long, global = true)]
    image_root: Option<PathBuf>,
    /// Output path; same as `--set out=...`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More logging (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest and print label counts
    Ingest,
    /// Write the 70/10/20 split as `row,path,partition`
    Split,
    /// LR range test for the first configured method; CSV `step,lr,loss,smoothed`
    LrFind,
    /// Train the first configured CNN method once and score the test set
    Train,
    /// Radiomics feature table, one row per image
    ExtractFeatures,
    /// Tune and fit the first configured radiomics method once
    Baseline,
    /// Learning curve over sizes x methods x seeds, appended to `results`
    Curve,
    /// Stage-wise comparison: training method, transfer mode, source
    Stagewise,
    /// Aggregate a results CSV into `method,n_train,n_runs,mean_auc,stderr`
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config(cli: &Cli) -> Result<KvConfig> {
    let mut cfg = match &cli.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::default(),
    };
    for (key, v) in [
        ("manifest", &cli.manifest),
        ("image_root", &cli.image_root),
        ("out", &cli.out),
    ] {
        if let Some(p) = v {
            cfg.set(key, p.display().to_string());
        }
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn manifest(cfg: &KvConfig) -> Result<Manifest> {
    let path: PathBuf = cfg.require("manifest")?;
    let root = cfg
        .get("image_root")
        .map(PathBuf::from)
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    ingest(&path, &root)
}

fn data(cfg: &KvConfig) -> Result<ExperimentData> {
    ExperimentData::load(manifest(cfg)?, cfg.get_or("width", 64)?)
}

/// `out` file, or stdout when unset.
fn output(cfg: &KvConfig, key: &str) -> Result<Box<dyn Write>> {
    Ok(match cfg.get(key) {
        Some(p) => {
            let p = Path::new(p);
            Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn spec(cfg: &KvConfig) -> Result<ExperimentSpec> {
    ExperimentSpec::from_config(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let n_train: Option<usize> = cfg.get_parsed("n_train")?;
    match cli.command {
        Command::Ingest => {
            let m = manifest(&cfg)?;
            println!("{} rows, {} labels", m.len(), m.label_names.len());
            for (k, name) in m.label_names.iter().enumerate() {
                let pos = m.rows.iter().filter(|r| r.labels[k]).count();
                println!("{name}: {pos} positive, {} negative", m.len() - pos);
            }
        }
        Command::Split => {
            let m = manifest(&cfg)?;
            let plan = split(&m, cfg.get_or("split_seed", 0)?)?;
            write_split_csv(output(&cfg, "out")?, &m, &plan)?;
        }
        Command::LrFind => {
            let res = run_lr_find(&spec(&cfg)?, &data(&cfg)?, n_train, seed)?;
            let mut w = csv::Writer::from_writer(output(&cfg, "out")?);
            w.write_record(["step", "lr", "loss", "smoothed"])?;
            for (k, ((lr, l), s)) in res
                .lrs
                .iter()
                .zip(&res.raw_losses)
                .zip(&res.smoothed)
                .enumerate()
            {
                w.write_record([
                    k.to_string(),
                    format!("{lr:e}"),
                    format!("{l:?}"),
                    format!("{s:?}"),
                ])?;
            }
            w.flush()
                .map_err(|e| io_err(Path::new("<lr-find csv>"), e))?;
            eprintln!(
                "max_lr = {:e} (stopped at step {})",
                res.max_lr, res.stopped_at
            );
        }
        Command::Train | Command::Baseline => {
            let spec = spec(&cfg)?;
            let want_cnn = matches!(cli.command, Command::Train);
            match spec.methods.first() {
                Some(m) if matches!(m, MethodSpec::Cnn { .. }) == want_cnn => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "`methods` must start with a {} method, got {other:?}",
                        if want_cnn { "cnn/..." } else { "radiomics/..." }
                    )))
                }
            }
            let run = run_single(&spec, &data(&cfg)?, n_train, seed)?;
            match (&run.fitted, cli.command) {
                (Fitted::Cnn(res), Command::Train) => {
                    if let Some(p) = cfg.get("checkpoint_out") {
                        res.best_params.to_checkpoint().save(Path::new(p))?;
                    }
                    if let Some(p) = cfg.get("log_out") {
                        let p = Path::new(p);
                        write_epoch_log(File::create(p).map_err(|e| io_err(p, e))?, &res.log)
                            .map_err(|e| io_err(p, e))?;
                    }
                    eprintln!("best epoch {}", res.best_epoch);
                }
                (Fitted::Radiomics(clf), Command::Baseline) => {
                    if let Some(p) = cfg.get("model_out") {
                        std::fs::write(p, clf.dump()).map_err(|e| io_err(Path::new(p), e))?;
                    }
                }
                _ => unreachable!("method kind checked above"),
            }
            println!(
                "{} n_train={} {} test_auc={:.6}",
                run.method, run.n_train, run.hyperparams, run.test_auc
            );
        }
        Command::ExtractFeatures => {
            let d = data(&cfg)?;
            let feats = d
                .images
                .iter()
                .map(extract_features)
                .collect::<Result<Vec<_>>>()?;
            let ids: Vec<String> = d
                .manifest
                .rows
                .iter()
                .map(|r| r.path.display().to_string())
                .collect();
            write_feature_csv(
                output(&cfg, "out")?,
                ids.iter().map(String::as_str).zip(&feats),
            )?;
        }
        Command::Curve => {
            let results: PathBuf = cfg.require("results")?;
            let run = run_curve(&spec(&cfg)?, &data(&cfg)?, Some(&results))?;
            eprintln!(
                "{} cells ({} computed, {} failed)",
                run.rows.len(),
                run.computed,
                run.rows.iter().filter(|r| r.test_auc.is_none()).count()
            );
            if let Some(p) = cfg.get("curve_out") {
                let p = Path::new(p);
                let f = File::create(p).map_err(|e| io_err(p, e))?;
                write_curve_csv(f, &emit_curve_data(&run.rows)?)?;
            }
        }
        Command::Stagewise => {
            let d = StageOptions::default();
            let opts = StageOptions {
                methods: list(
                    &cfg,
                    "stage_methods",
                    smalldata::trainer::TrainMethod::parse,
                )?
                .unwrap_or(d.methods),
                transfers: list(
                    &cfg,
                    "stage_transfers",
                    smalldata::trainer::TransferMode::parse,
                )?
                .unwrap_or(d.transfers),
                sources: cfg.get_list("stage_sources")?.unwrap_or_default(),
            };
            let reports = run_stagewise_experiment(&spec(&cfg)?, &data(&cfg)?, &opts)?;
            for r in &reports {
                eprintln!("{}: {}", r.stage, r.winner);
            }
            write_stagewise_csv(output(&cfg, "out")?, &reports)?;
        }
        Command::Report => {
            let results: PathBuf = cfg.require("results")?;
            write_curve_csv(
                output(&cfg, "out")?,
                &emit_curve_data(&read_results(&results)?)?,
            )?;
        }
    }
    Ok(())
}

fn list<T>(cfg: &KvConfig, key: &str, parse: fn(&str) -> Result<T>) -> Result<Option<Vec<T>>> {
    cfg.get(key)
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse)
                .collect()
        })
        .transpose()
}
