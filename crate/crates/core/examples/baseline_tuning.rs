//! Radiomics baselines: random-search tuning of lasso, elastic-net and random
//! forest learners by stratified cross-validated AUC, then a held-out score.
//!
//! cargo run --release --example baseline_tuning

use smalldata::baseline::{tune, Family};
use smalldata::bench::synth::target_data;
use smalldata::metrics::auc;
use smalldata::radiomics::extract_features;

fn main() -> smalldata::Result<()> {
    let data = target_data(120, 120, 24, 5)?;
    let x: Vec<Vec<f64>> = data
        .images
        .iter()
        .map(|im| extract_features(im).map(|f| f.0))
        .collect::<smalldata::Result<_>>()?;
    let y: Vec<bool> = data.manifest.rows.iter().map(|r| r.labels[0]).collect();
    let (x_tr, x_te) = x.split_at(80);
    let (y_tr, y_te) = y.split_at(80);
    for family in [Family::Lasso, Family::ElasticNet, Family::Forest] {
        let t = tune(x_tr, y_tr, family, 10, 5, 0)?;
        let clf = t.best.fit(x_tr, y_tr)?;
        let test = auc(&clf.predict_proba(x_te), y_te)?;
        println!(
            "{:<14} cv AUC {:.4}  test AUC {:.4}  {}",
            family.name(),
            t.cv_auc,
            test,
            t.best.describe()
        );
    }
    Ok(())
}
