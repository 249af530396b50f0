//! Prints the per-iteration learning rates, momentum and freeze flags of the
//! one-cycle policy with discriminative rates and gradual unfreezing.
//!
//! cargo run --example one_cycle_schedule -- [max_iter] [max_lr] > schedule.csv

use smalldata::sched::{group_schedule, write_schedule_csv, GroupPlan, OneCyclePlan};

fn main() -> smalldata::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_iter: usize = args.next().map_or(500, |s| s.parse().expect("max_iter"));
    let max_lr: f64 = args.next().map_or(1e-2, |s| s.parse().expect("max_lr"));
    let plan = GroupPlan::new(OneCyclePlan::new(max_lr, max_iter)?);
    let steps = (0..=max_iter)
        .map(|i| group_schedule(i, &plan).map(|s| (i, s)))
        .collect::<smalldata::Result<Vec<_>>>()?;
    let peak = &steps[plan.base.cut].1;
    eprintln!(
        "peak at iteration {}: group rates {:?}",
        plan.base.cut, peak.lr
    );
    write_schedule_csv(std::io::stdout().lock(), steps).map_err(|e| smalldata::Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}
