//! Invariants checked over generated inputs.

use std::path::Path;

use proptest::prelude::*;

use smalldata::augment::{column_means, Image};
use smalldata::bench::{split, KvConfig, Manifest, ManifestRow};
use smalldata::metrics::{auc, paired_ttest};
use smalldata::radiomics::{glcm, Angle};
use smalldata::sched::{
    group_schedule, one_cycle_lr, one_cycle_momentum, GroupPlan, OneCyclePlan, PlateauDecay,
};

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(any::<bool>(), n - 2),
        )
            .prop_map(|(s, mut l)| {
                l.push(true);
                l.push(false);
                (s, l)
            })
    })
}

fn image() -> impl Strategy<Value = Image> {
    (2usize..12, 2usize..12).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<u8>(), h * w).prop_map(move |px| Image::new(h, w, px).unwrap())
    })
}

proptest! {
    #[test]
    fn auc_is_rank_based((scores, labels) in scored()) {
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let squashed: Vec<f64> = scores.iter().map(|s| s.tanh() * 3.0 + 1.0).collect();
        prop_assert!((auc(&squashed, &labels).unwrap() - a).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn one_cycle_stays_in_range(max_lr in 1e-5f64..10.0, m in 2usize..3000) {
        let plan = OneCyclePlan::new(max_lr, m).unwrap();
        for i in 0..=m {
            let lr = one_cycle_lr(i, &plan).unwrap();
            let mom = one_cycle_momentum(i, &plan).unwrap();
            prop_assert!(lr <= max_lr * (1.0 + 1e-12) && lr >= max_lr / 25_000.0 * (1.0 - 1e-12));
            prop_assert!((0.85 - 1e-12..=0.95 + 1e-12).contains(&mom));
        }
        prop_assert!(one_cycle_lr(m + 1, &plan).is_err());
    }

    #[test]
    fn unfreezing_is_monotone(m in 2usize..2000) {
        let plan = GroupPlan::new(OneCyclePlan::new(0.01, m).unwrap());
        let mut prev = [true, true, false];
        for i in 0..=m {
            let s = group_schedule(i, &plan).unwrap();
            for g in 0..3 {
                // once trainable, a group never freezes again
                prop_assert!(prev[g] || !s.frozen[g]);
            }
            prop_assert!(!s.frozen[2]);
            prop_assert!(s.frozen[1] <= s.frozen[0]);
            prev = s.frozen;
        }
    }

    #[test]
    fn plateau_decay_never_rises(losses in prop::collection::vec(0.0f64..2.0, 1..60)) {
        let mut d = PlateauDecay::new(0.1);
        let mut prev = d.lr();
        for l in losses {
            let lr = d.observe(l);
            prop_assert!(lr <= prev && lr >= 0.1 / 1000.0 * (1.0 - 1e-12));
            prev = lr;
        }
    }

    #[test]
    fn glcm_is_a_symmetric_distribution(img in image(), offset in 1usize..4, a in 0usize..3) {
        let angle = [Angle::Deg0, Angle::Deg45, Angle::Deg90][a];
        prop_assume!(offset < img.height().min(img.width()));
        let m = glcm(&img, offset, angle, 8).unwrap();
        prop_assert!((m.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..8 {
            for j in 0..8 {
                prop_assert_eq!(m.at(i, j), m.at(j, i));
            }
        }
    }

    #[test]
    fn geometric_identities(img in image()) {
        prop_assert_eq!(img.flip_horizontal().flip_horizontal(), img.clone());
        prop_assert_eq!(img.rotate(0.0), img.clone());
        let h = img.height();
        prop_assert_eq!(img.center_crop(h.min(img.width()), h.min(img.width())).unwrap().height(), h.min(img.width()));
    }

    #[test]
    fn identical_rows_average_to_themselves(row in prop::collection::vec(-1e3f64..1e3, 1..6), k in 1usize..8) {
        let rows = vec![row.clone(); k];
        prop_assert_eq!(column_means(&rows), row);
    }

    #[test]
    fn paired_ttest_is_antisymmetric(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30)
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = paired_ttest(&a, &b).unwrap();
        let ba = paired_ttest(&b, &a).unwrap();
        prop_assert!((ab.p - ba.p).abs() < 1e-15);
        prop_assert!((ab.t + ba.t).abs() < 1e-9 * ab.t.abs().max(1.0));
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }

    #[test]
    fn split_partitions_every_row(n in 10usize..300, seed in any::<u64>()) {
        let rows = (0..n)
            .map(|i| ManifestRow { path: format!("img{i}.png").into(), labels: vec![i % 3 == 0] })
            .collect();
        let m = Manifest::from_rows(vec!["x".into()], rows).unwrap();
        let plan = split(&m, seed).unwrap();
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.val).chain(&plan.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(plan.train.len(), (7 * n + 5) / 10);
        prop_assert_eq!(plan.val.len(), (n + 5) / 10);
        prop_assert_eq!(split(&m, seed).unwrap(), plan);
    }

    #[test]
    fn config_lines_round_trip(
        entries in prop::collection::btree_map("[a-z][a-z_]{0,8}", "[A-Za-z0-9./,-]{1,12}", 0..8)
    ) {
        let text: String = entries.iter().map(|(k, v)| format!("  {k} =  {v}\n# note\n")).collect();
        let cfg = KvConfig::parse(&text, Path::new("gen.cfg")).unwrap();
        for (k, v) in &entries {
            prop_assert_eq!(cfg.get(k), Some(v.as_str()));
        }
        prop_assert_eq!(cfg.keys().count(), entries.len());
    }
}
