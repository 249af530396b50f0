//! Pretrains on 13 synthetic textures, then compares default initialisation,
//! transferred weights and moment-preserving re-initialisation on the
//! held-out texture at n_train = 50.
//!
//! cargo run --release --example texture_transfer -- [n_seeds]

use std::time::Instant;

use smalldata::bench::synth::{source_data, target_data};
use smalldata::bench::{run_curve, CnnSettings, ExperimentSpec, Init, MethodSpec, Task};
use smalldata::metrics::paired_ttest;
use smalldata::tinycnn::ModelParams;
use smalldata::trainer::{train, Dataset, TrainConfig, TrainMethod, TransferMode};

const SIZE: usize = 16;

fn main() -> smalldata::Result<()> {
    let n_seeds: u64 = std::env::args()
        .nth(1)
        .map_or(10, |s| s.parse().expect("seed count"));
    let t0 = Instant::now();

    let src = source_data(80, SIZE, 1)?;
    let to_ds = |range: std::ops::Range<usize>| {
        Dataset::new(
            src.images[range.clone()].to_vec(),
            src.manifest.rows[range]
                .iter()
                .map(|r| r.labels.iter().map(|&b| f64::from(u8::from(b))).collect())
                .collect(),
        )
    };
    let n = src.images.len();
    let model = ModelParams::build(SIZE, src.manifest.label_names.len(), 0)?;
    let cfg = TrainConfig {
        method: TrainMethod::OneCycle,
        epochs: 40,
        batch_size: 8,
        max_lr: 0.5,
        ..Default::default()
    };
    let pre = train(&model, &to_ds(0..n * 9 / 10)?, &to_ds(n * 9 / 10..n)?, &cfg)?;
    println!(
        "source: best val loss {:.4} at epoch {} ({:.1}s)",
        pre.val_loss_curve[pre.best_epoch],
        pre.best_epoch,
        t0.elapsed().as_secs_f64()
    );
    let dir = std::env::temp_dir().join("smalldata_texture_transfer");
    std::fs::create_dir_all(&dir).map_err(|e| smalldata::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let ck = dir.join("source.ckpt");
    pre.best_params.to_checkpoint().save(&ck)?;

    let target = target_data(200, 200, SIZE, 2)?;
    let cnn = |transfer, init| MethodSpec::Cnn {
        method: TrainMethod::OneCycle,
        transfer,
        init,
    };
    let methods = [
        cnn(TransferMode::None, Init::Default),
        cnn(TransferMode::FineTuneAll, Init::Pretrained),
        cnn(TransferMode::FineTuneAll, Init::MomentPreserving),
    ];
    let spec = ExperimentSpec {
        task: Task::Binary(target.manifest.label_names[0].clone()),
        sizes: vec![50],
        methods: methods.to_vec(),
        seeds: (0..n_seeds).collect(),
        source_checkpoint: Some(ck),
        cnn: CnnSettings {
            epochs: 20,
            batch_size: 10,
            max_lr: Some(0.1),
            ..Default::default()
        },
        ..Default::default()
    };
    let run = run_curve(&spec, &target, None)?;
    let per = |m: &MethodSpec| -> Vec<f64> {
        run.rows
            .iter()
            .filter(|r| r.method == m.to_string())
            .map(|r| r.test_auc.unwrap_or(f64::NAN))
            .collect()
    };
    for m in &methods {
        let v = per(m);
        println!(
            "{m:<42} mean test AUC {:.4}",
            v.iter().sum::<f64>() / v.len() as f64
        );
    }
    let t = paired_ttest(&per(&methods[1]), &per(&methods[0]))?;
    println!("pretrained vs default: t = {:.3}, p = {:.2e}", t.t, t.p);
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
