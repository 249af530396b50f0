//! Computes the 79-element GLCM/intensity descriptor for one sample of each
//! synthetic texture and prints a few named features.
//!
//! cargo run --example radiomics_features

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smalldata::bench::synth::{texture, N_TEXTURES};
use smalldata::radiomics::{extract_features, feature_names, glcm, glcm_stats, Angle};

fn main() -> smalldata::Result<()> {
    let names = feature_names();
    let show = [
        "glcm_d1_a0_contrast",
        "glcm_d2_a90_correlation",
        "glcm_d4_a45_homogeneity",
        "std",
        "entropy",
    ];
    let cols: Vec<usize> = show
        .iter()
        .map(|s| names.iter().position(|n| n == s).expect("known name"))
        .collect();
    println!("class {}", show.join(" "));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for class in 0..N_TEXTURES {
        let img = texture(class, 32, &mut rng);
        let f = extract_features(&img)?;
        let vals: Vec<String> = cols.iter().map(|&c| format!("{:.4}", f.0[c])).collect();
        println!("{class:>5} {}", vals.join(" "));
    }
    let m = glcm(&texture(0, 32, &mut rng), 1, Angle::Deg45, 8)?;
    println!(
        "8-level GLCM stats at offset 1, 45 degrees: {:?}",
        glcm_stats(&m)
    );
    Ok(())
}
