//! LR range test on the synthetic texture task, printing the sweep and the
//! rate at the smoothed-loss minimum.
//!
//! cargo run --release --example lr_finder

use smalldata::bench::synth::target_data;
use smalldata::sched::LrFindConfig;
use smalldata::tinycnn::ModelParams;
use smalldata::trainer::{find_lr, Dataset, TrainConfig};

fn main() -> smalldata::Result<()> {
    let data = target_data(100, 100, 16, 3)?;
    let labels = data
        .manifest
        .rows
        .iter()
        .map(|r| vec![f64::from(u8::from(r.labels[0]))])
        .collect();
    let train = Dataset::new(data.images, labels)?;
    let model = ModelParams::build(16, 1, 0)?;
    let cfg = TrainConfig {
        batch_size: 16,
        ..Default::default()
    };
    let lr_cfg = LrFindConfig {
        lr_min: 1e-4,
        lr_max: 10.0,
        n_steps: 300,
        ..Default::default()
    };
    let res = find_lr(&model, &train, &cfg, &lr_cfg)?;
    println!("step,lr,loss,smoothed");
    for (k, lr) in res.lrs.iter().enumerate() {
        println!("{k},{lr:e},{:.5},{:.5}", res.raw_losses[k], res.smoothed[k]);
    }
    eprintln!(
        "max_lr = {:e}, stopped at step {}",
        res.max_lr, res.stopped_at
    );
    Ok(())
}
