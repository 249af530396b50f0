//! Stage-wise selection on the synthetic texture task: pretrains a source
//! network, then picks the training method, the transfer mode and the
//! source checkpoint in turn by mean AUC over the size grid.
//!
//! cargo run --release --example stagewise

use smalldata::bench::synth::{source_data, target_data};
use smalldata::bench::Fitted;
use smalldata::bench::{
    run_single, run_stagewise_experiment, write_stagewise_csv, CnnSettings, ExperimentSpec, Init,
    MethodSpec, StageOptions, Task,
};
use smalldata::trainer::{TrainMethod, TransferMode};

fn main() -> smalldata::Result<()> {
    let dir = std::env::temp_dir().join("smalldata_stagewise");
    std::fs::create_dir_all(&dir).map_err(|e| smalldata::Error::Io {
        path: dir.clone(),
        source: e,
    })?;

    let scratch = MethodSpec::Cnn {
        method: TrainMethod::OneCycle,
        transfer: TransferMode::None,
        init: Init::Default,
    };
    let mut sources = Vec::new();
    for (k, epochs) in [(0, 4), (1, 30)] {
        let spec = ExperimentSpec {
            task: Task::MultiLabel,
            methods: vec![scratch],
            cnn: CnnSettings {
                epochs,
                batch_size: 8,
                max_lr: Some(0.5),
                ..Default::default()
            },
            ..Default::default()
        };
        let run = run_single(&spec, &source_data(40, 16, 1)?, None, k)?;
        let Fitted::Cnn(res) = run.fitted else {
            unreachable!("cnn method")
        };
        let path = dir.join(format!("source_{epochs}ep.ckpt"));
        res.best_params.to_checkpoint().save(&path)?;
        eprintln!("source {} mean AUC {:.3}", path.display(), run.test_auc);
        sources.push(path);
    }

    let target = target_data(200, 200, 16, 2)?;
    let base = ExperimentSpec {
        task: Task::Binary(target.manifest.label_names[0].clone()),
        sizes: vec![50, 100, 200],
        methods: Vec::new(),
        seeds: vec![0, 1],
        cnn: CnnSettings {
            epochs: 12,
            batch_size: 10,
            max_lr: Some(0.1),
            ..Default::default()
        },
        ..Default::default()
    };
    let opts = StageOptions {
        sources,
        ..Default::default()
    };
    let reports = run_stagewise_experiment(&base, &target, &opts)?;
    write_stagewise_csv(std::io::stdout().lock(), &reports)
}
