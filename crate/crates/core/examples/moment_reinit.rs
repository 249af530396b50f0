//! Replaces pretrained weights with normal draws matching each tensor's mean
//! and standard deviation, and reports how well the moments survive and how
//! little the new weights correlate with the old ones.
//!
//! cargo run --example moment_reinit

use smalldata::tinycnn::{mean_std, ModelParams};

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64;
    cov / (sa * sb)
}

fn main() -> smalldata::Result<()> {
    // stand-in for a trained network: shift and scale the default draws
    let mut source = ModelParams::build(32, 4, 1)?;
    for p in source.params_mut() {
        for v in p.tensor.data_mut() {
            *v = 0.02 + 3.0 * *v;
        }
    }
    let mut model = ModelParams::build(32, 4, 2)?;
    model.load_pretrained(&source)?;
    let before = model.clone();
    model.reinit_moment_preserving(7);

    println!(
        "{:<14} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "tensor", "n", "mean", "mean'", "std", "std'", "r"
    );
    // the head is freshly initialised and left alone
    let weights = before
        .params()
        .zip(model.params())
        .filter(|(p, _)| p.name.ends_with("weight") && !p.name.starts_with("head"));
    for (old, new) in weights {
        let (m0, s0) = mean_std(old.tensor.data());
        let (m1, s1) = mean_std(new.tensor.data());
        println!(
            "{:<14} {:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>8.4}",
            old.name,
            old.tensor.len(),
            m0,
            m1,
            s0,
            s1,
            correlation(old.tensor.data(), new.tensor.data())
        );
    }
    Ok(())
}
