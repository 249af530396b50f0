//! ROC AUC with tied scores and a paired t-test between two learning curves.
//!
//! cargo run --example auc_ttest

use smalldata::metrics::{auc, paired_ttest, student_t_two_sided_p};

fn main() -> smalldata::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.7, 0.6, 0.6, 0.3, 0.1];
    let labels = [true, true, false, true, false, true, false, false];
    println!("AUC with ties = {}", auc(&scores, &labels)?);

    // mean AUC per training size for two methods
    let a = [0.71, 0.75, 0.80, 0.84, 0.88, 0.90, 0.91];
    let b = [0.66, 0.72, 0.75, 0.80, 0.84, 0.87, 0.89];
    let t = paired_ttest(&a, &b)?;
    println!("paired t = {:.4}, df = {}, p = {:.3e}", t.t, t.df, t.p);
    println!("identical curves: p = {}", paired_ttest(&a, &a)?.p);
    println!(
        "P(|T_5| > 2.571) = {:.5}",
        student_t_two_sided_p(2.571, 5.0)
    );
    Ok(())
}
