//! Test-time augmentation: averages predictions over four random
//! flip/rotate/crop copies and the center crop.
//!
//! cargo run --example tta

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smalldata::augment::{eval_transform, tta_predict, AugmentConfig};
use smalldata::bench::synth::texture;
use smalldata::tinycnn::ModelParams;
use smalldata::trainer::predict_images;

fn main() -> smalldata::Result<()> {
    let model = ModelParams::build(20, 2, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = texture(3, 24, &mut rng);
    let cfg = AugmentConfig {
        crop: 20,
        ..Default::default()
    };
    let tta = tta_predict(|batch| predict_images(&model, batch), &img, &cfg, &mut rng)?;
    for (k, row) in tta.copies.iter().enumerate() {
        println!("copy {k}: {row:?}");
    }
    println!("mean:   {:?}", tta.mean);

    let id = AugmentConfig::identity(24);
    let single = predict_images(&model, &[eval_transform(&img, &id)?])?;
    let same = tta_predict(|batch| predict_images(&model, batch), &img, &id, &mut rng)?;
    println!(
        "identity transforms reproduce the single prediction: {}",
        same.mean == single[0]
    );
    Ok(())
}
