//! Learning curve on the synthetic texture task: a CNN from scratch against a
//! lasso radiomics baseline over several training sizes and seeds, written
//! to an append-only results table and aggregated into curve data.
//!
//! cargo run --release --example learning_curve -- [results.csv]

use std::path::PathBuf;

use smalldata::baseline::Family;
use smalldata::bench::synth::target_data;
use smalldata::bench::{
    emit_curve_data, run_curve, write_curve_csv, BaselineSettings, CnnSettings, ExperimentSpec,
    Init, MethodSpec, Task,
};
use smalldata::trainer::{TrainMethod, TransferMode};

fn main() -> smalldata::Result<()> {
    let results = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "learning_curve.csv".into()),
    );
    let data = target_data(250, 250, 16, 11)?;
    let spec = ExperimentSpec {
        task: Task::Binary(data.manifest.label_names[0].clone()),
        sizes: vec![50, 100, 200],
        methods: vec![
            MethodSpec::Cnn {
                method: TrainMethod::OneCycle,
                transfer: TransferMode::None,
                init: Init::Default,
            },
            MethodSpec::Radiomics(Family::Lasso),
        ],
        seeds: vec![0, 1, 2],
        cnn: CnnSettings {
            epochs: 10,
            batch_size: 10,
            max_lr: Some(0.1),
            ..Default::default()
        },
        baseline: BaselineSettings {
            n_draws: 6,
            folds: 4,
        },
        ..Default::default()
    };
    let run = run_curve(&spec, &data, Some(&results))?;
    eprintln!(
        "{} cells, {} computed now; rerun to see them skipped",
        run.rows.len(),
        run.computed
    );
    write_curve_csv(std::io::stdout().lock(), &emit_curve_data(&run.rows)?)
}
