//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure. `cargo test --test acceptance`; output is printed directly since
//! the target has no libtest harness.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use smalldata::augment::{tta_predict, AugmentConfig, Image, TTA_RANDOM_COPIES};
use smalldata::baseline::{fit_logistic_en, lasso_lambda_max, ElasticNetConfig, Family};
use smalldata::bench::synth::{source_data, target_data};
use smalldata::bench::{
    run_curve, BaselineSettings, CnnSettings, ExperimentSpec, Init, MethodSpec, Task,
};
use smalldata::metrics::{auc, paired_ttest, student_t_two_sided_p};
use smalldata::radiomics::{extract_features, glcm, ANGLES, N_FEATURES, OFFSETS};
use smalldata::sched::{group_schedule, one_cycle_lr, GroupPlan, OneCyclePlan};
use smalldata::tinycnn::{mean_std, ModelParams};
use smalldata::trainer::{
    predict_images, predict_tta, train, Dataset, TrainConfig, TrainMethod, TransferMode,
};

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn schedule_exactness() -> Outcome {
    let t0 = Instant::now();
    let max_lr = 0.37;
    for m in [10usize, 500, 10_000] {
        let plan = OneCyclePlan::new(max_lr, m).map_err(|e| e.to_string())?;
        let lr = |i| one_cycle_lr(i, &plan).unwrap();
        for (i, want) in [
            (0, max_lr / 25.0),
            (plan.cut, max_lr),
            (m, max_lr / 25_000.0),
        ] {
            check(rel(lr(i), want) <= 1e-9, || {
                format!("m={m}: lr({i}) = {} != {want}", lr(i))
            })?;
        }
        let curve: Vec<f64> = (0..=m).map(lr).collect();
        let peak = (0..=m)
            .max_by(|&a, &b| curve[a].total_cmp(&curve[b]))
            .unwrap();
        check(peak == plan.cut, || {
            format!("m={m}: peak at {peak}, cut {}", plan.cut)
        })?;
        check(curve[..=peak].windows(2).all(|w| w[1] >= w[0]), || {
            format!("m={m}: rise not monotone")
        })?;
        check(curve[peak..].windows(2).all(|w| w[1] <= w[0]), || {
            format!("m={m}: fall not monotone")
        })?;
    }
    let dt = t0.elapsed();
    check(dt < Duration::from_secs(1), || format!("took {dt:?}"))?;
    Ok(format!(
        "landmarks within 1e-9 for m in {{10, 500, 10000}}, {dt:.1?}"
    ))
}

fn group_plan() -> Outcome {
    let m = 1000;
    let plan = GroupPlan::new(OneCyclePlan::new(0.01, m).unwrap());
    let steps: Vec<_> = (0..=m).map(|i| group_schedule(i, &plan).unwrap()).collect();
    let flips = |g: usize| -> Vec<usize> {
        (1..=m)
            .filter(|&i| steps[i].frozen[g] != steps[i - 1].frozen[g])
            .collect()
    };
    check(steps[0].frozen == [true, true, false], || {
        format!("start {:?}", steps[0].frozen)
    })?;
    check(
        flips(0) == [200] && flips(1) == [100] && flips(2).is_empty(),
        || {
            format!(
                "flips g1 {:?} g2 {:?} g3 {:?}",
                flips(0),
                flips(1),
                flips(2)
            )
        },
    )?;
    for (i, s) in steps.iter().enumerate() {
        check(s.lr[0] == s.lr[2] / 9.0 && s.lr[1] == s.lr[2] / 3.0, || {
            format!("iteration {i}: lrs {:?}", s.lr)
        })?;
    }
    Ok("unfreeze at 100 (group 2) and 200 (group 1), lr 1:3:9 at all 1001 iterations".into())
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let net = general_position_net(&mut r, 1e-3);
        let e = net.max_grad_error(1e-5);
        check(e < 1e-4, || format!("net {k}: relative error {e:e}"))?;
        worst = worst.max(e);
    }
    let dt = t0.elapsed();
    check(dt < Duration::from_secs(120), || format!("took {dt:?}"))?;
    Ok(format!(
        "100 nets, max relative error {worst:.2e}, {dt:.1?}"
    ))
}

fn glcm_oracle() -> Outcome {
    let mut r = rng(4);
    for k in 0..200 {
        let img = random_image(&mut r, 16, 7);
        for offset in OFFSETS {
            for angle in ANGLES {
                let got = glcm(&img, offset, angle, 32).map_err(|e| e.to_string())?;
                check(got.p == brute_glcm(&img, offset, angle, 32), || {
                    format!(
                        "image {k} ({}x{}) offset {offset} {angle:?}",
                        img.height(),
                        img.width()
                    )
                })?;
            }
        }
        let n = extract_features(&img).map_err(|e| e.to_string())?.0.len();
        check(n == 79 && N_FEATURES == 79, || {
            format!("feature length {n}")
        })?;
    }
    Ok("200 images x 12 configs identical to pair enumeration, 79 features".into())
}

fn auc_oracle() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for k in 0..500 {
        let n = r.random_range(2..=200);
        let n_pos = r.random_range(1..n);
        let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        labels.rotate_left(r.random_range(0..n));
        // few distinct values forces many ties
        let distinct = r.random_range(1..=n.min(20));
        let scores: Vec<f64> = (0..n)
            .map(|_| r.random_range(0..distinct) as f64 * 0.1)
            .collect();
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pair_auc(&scores, &labels);
        worst = worst.max((got - want).abs());
        check((got - want).abs() <= 1e-12, || {
            format!("set {k}: {got} vs {want}")
        })?;
    }
    Ok(format!("500 tied sets, max |diff| {worst:.1e}"))
}

fn lasso_kkt() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let p = r.random_range(1..=30);
        let n = r.random_range(30..=200);
        let truth: Vec<f64> = (0..p)
            .map(|j| {
                if j % 3 == 0 {
                    r.random_range(-2.0..2.0)
                } else {
                    0.0
                }
            })
            .collect();
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        let y: Vec<bool> = x
            .iter()
            .map(|row: &Vec<f64>| {
                let z: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
                r.random::<f64>() < 1.0 / (1.0 + (-z).exp())
            })
            .collect();
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            continue;
        }
        let lmax = lasso_lambda_max(&x, &y);
        let lambda = lmax * r.random_range(0.02..0.9);
        let model = fit_logistic_en(&x, &y, &ElasticNetConfig { lambda, alpha: 1.0 })
            .map_err(|e| e.to_string())?;
        let g = logistic_grad(&x, &y, &model.weights, model.intercept);
        for (j, &w) in model.weights.iter().enumerate() {
            let slack = if w == 0.0 {
                (g[j].abs() - lambda).max(0.0)
            } else {
                (g[j] + lambda * w.signum()).abs()
            };
            worst = worst.max(slack);
            check(slack <= 1e-6, || {
                format!("problem {k} (n={n}, p={p}) coef {j}: w={w}, violation {slack:e}")
            })?;
        }
        check(g[p].abs() <= 1e-6, || {
            format!("problem {k}: intercept gradient {}", g[p])
        })?;
        for scale in [1.0 + 1e-6, 1.01, 3.0] {
            let m = fit_logistic_en(
                &x,
                &y,
                &ElasticNetConfig {
                    lambda: lmax * scale,
                    alpha: 1.0,
                },
            )
            .map_err(|e| e.to_string())?;
            check(m.weights.iter().all(|&w| w == 0.0), || {
                format!("problem {k}: lambda = {scale} x max gives {:?}", m.weights)
            })?;
        }
    }
    Ok(format!(
        "50 problems, max KKT violation {worst:.1e}, all-zero above threshold"
    ))
}

fn ttest_accuracy() -> Outcome {
    let mut worst: f64 = 0.0;
    for df in [1.0, 5.0, 30.0] {
        for k in 1..=60 {
            let t = k as f64 * 0.25;
            for t in [t, -t] {
                let got = student_t_two_sided_p(t, df);
                let want = t_two_sided_quadrature(t, df);
                worst = worst.max((got - want).abs());
                check((got - want).abs() <= 1e-9, || {
                    format!("df {df} t {t}: {got} vs {want}")
                })?;
            }
        }
    }
    let a = [0.71, 0.74, 0.69, 0.80, 0.77];
    let same = paired_ttest(&a, &a).map_err(|e| e.to_string())?;
    check(same.p == 1.0, || {
        format!("identical samples p = {}", same.p)
    })?;
    Ok(format!(
        "df 1/5/30 max |diff| {worst:.1e}, identical samples p = 1"
    ))
}

/// The pretrained source model and per-method target AUCs, shared by
/// criteria 8 and 9.
struct TransferRun {
    source: ModelParams,
    aucs: [Vec<f64>; 3],
    elapsed: Duration,
    seeds: usize,
}

const TEX: usize = 16;
const SEEDS: u64 = 10;

fn transfer_run(dir: &Path) -> Result<TransferRun, String> {
    let t0 = Instant::now();
    let src = source_data(80, TEX, 1).map_err(|e| e.to_string())?;
    let n = src.images.len();
    let ds = |range: std::ops::Range<usize>| {
        Dataset::new(
            src.images[range.clone()].to_vec(),
            src.manifest.rows[range]
                .iter()
                .map(|r| r.labels.iter().map(|&b| f64::from(u8::from(b))).collect())
                .collect(),
        )
        .unwrap()
    };
    let model =
        ModelParams::build(TEX, src.manifest.label_names.len(), 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        method: TrainMethod::OneCycle,
        epochs: 40,
        batch_size: 8,
        max_lr: 0.5,
        ..Default::default()
    };
    let pre =
        train(&model, &ds(0..n * 9 / 10), &ds(n * 9 / 10..n), &cfg).map_err(|e| e.to_string())?;
    let ck = dir.join("source.ckpt");
    pre.best_params
        .to_checkpoint()
        .save(&ck)
        .map_err(|e| e.to_string())?;

    let target = target_data(200, 200, TEX, 2).map_err(|e| e.to_string())?;
    let methods =
        [Init::Default, Init::Pretrained, Init::MomentPreserving].map(|init| MethodSpec::Cnn {
            method: TrainMethod::OneCycle,
            transfer: if init == Init::Default {
                TransferMode::None
            } else {
                TransferMode::FineTuneAll
            },
            init,
        });
    let spec = ExperimentSpec {
        task: Task::Binary(target.manifest.label_names[0].clone()),
        sizes: vec![50],
        methods: methods.to_vec(),
        seeds: (0..SEEDS).collect(),
        source_checkpoint: Some(ck),
        cnn: CnnSettings {
            epochs: 20,
            batch_size: 10,
            max_lr: Some(0.1),
            ..Default::default()
        },
        ..Default::default()
    };
    let run = run_curve(&spec, &target, None).map_err(|e| e.to_string())?;
    let per = |m: &MethodSpec| -> Result<Vec<f64>, String> {
        run.rows
            .iter()
            .filter(|r| r.method == m.to_string())
            .map(|r| {
                r.test_auc
                    .ok_or_else(|| format!("{} seed {} failed: {}", r.method, r.seed, r.message))
            })
            .collect()
    };
    Ok(TransferRun {
        source: pre.best_params,
        aucs: [per(&methods[0])?, per(&methods[1])?, per(&methods[2])?],
        elapsed: t0.elapsed(),
        seeds: SEEDS as usize,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn transfer_direction(run: &Result<TransferRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let [default, pretrained, _] = &run.aucs;
    let t = paired_ttest(pretrained, default).map_err(|e| e.to_string())?;
    let (md, mp) = (mean(default), mean(pretrained));
    let budget = Duration::from_secs(15 * 60);
    let msg = format!(
        "{} seeds: pretrained {mp:.3} vs default {md:.3}, p = {:.1e}, {:.0?}",
        run.seeds, t.p, run.elapsed
    );
    check(
        run.seeds >= 10 && mp > md && t.p < 0.05 && run.elapsed < budget,
        || msg.clone(),
    )?;
    Ok(msg)
}

fn moment_reinit(run: &Result<TransferRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let mut re = run.source.clone();
    re.reinit_moment_preserving(11);
    let mut checked = 0;
    for (old, new) in run.source.params().zip(re.params()) {
        let (a, b) = (old.tensor.data(), new.tensor.data());
        if a.len() < 1024 {
            continue;
        }
        checked += 1;
        let ((m0, s0), (m1, s1)) = (mean_std(a), mean_std(b));
        // the mean of a zero-centred tensor is measured against its spread
        let mean_err = (m1 - m0).abs() / m0.abs().max(s0);
        let std_err = (s1 - s0).abs() / s0;
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - m0) * (y - m1))
            .sum::<f64>()
            / a.len() as f64;
        let corr = cov / (s0 * s1);
        check(
            mean_err <= 0.05 && std_err <= 0.05 && corr.abs() < 0.1,
            || {
                format!(
                    "{}: mean err {mean_err:.3}, std err {std_err:.3}, r {corr:.3}",
                    old.name
                )
            },
        )?;
    }
    check(checked > 0, || "no tensor with >= 1024 elements".into())?;
    let (mp, mm) = (mean(&run.aucs[1]), mean(&run.aucs[2]));
    let order = if mp >= mm { "holds" } else { "does not hold" };
    println!("    info: standard transfer {mp:.3} vs moment-preserving {mm:.3}; standard >= moment {order}");
    Ok(format!("{checked} tensors within 5%, |r| < 0.1"))
}

fn tta_identity() -> Outcome {
    let model = ModelParams::build(TEX, 2, 9).map_err(|e| e.to_string())?;
    let mut r = rng(10);
    let images: Vec<Image> = (0..12).map(|_| random_image(&mut r, TEX, TEX)).collect();
    let data = Dataset::new(images.clone(), vec![vec![0.0, 1.0]; images.len()])
        .map_err(|e| e.to_string())?;
    let single = predict_images(&model, &images).map_err(|e| e.to_string())?;
    let tta =
        predict_tta(&model, &data, &AugmentConfig::identity(TEX), 5).map_err(|e| e.to_string())?;
    check(single == tta, || {
        "identity TTA differs from single prediction".into()
    })?;

    // real transforms: exactly five inputs, mean of exactly those five rows
    let cfg = AugmentConfig {
        flip_prob: 0.5,
        max_rotation_deg: 10.0,
        crop: 12,
    };
    let mut rr = ChaCha8Rng::seed_from_u64(1);
    for img in &images {
        let mut calls = Vec::new();
        let out = tta_predict(
            |batch| {
                calls.push(batch.len());
                predict_images(&model, batch)
            },
            img,
            &cfg,
            &mut rr,
        )
        .map_err(|e| e.to_string())?;
        check(
            calls == [TTA_RANDOM_COPIES + 1] && out.copies.len() == 5,
            || format!("calls {calls:?}"),
        )?;
        for (j, &m) in out.mean.iter().enumerate() {
            let want = out.copies.iter().map(|c| c[j]).sum::<f64>() / 5.0;
            check((m - want).abs() <= 1e-15, || format!("mean {m} vs {want}"))?;
        }
    }
    Ok("identity TTA bit-exact; augmented TTA averages 5 copies".into())
}

fn curve_determinism(dir: &Path) -> Outcome {
    let data = target_data(60, 60, TEX, 7).map_err(|e| e.to_string())?;
    let spec = ExperimentSpec {
        task: Task::Binary(data.manifest.label_names[0].clone()),
        sizes: vec![50, 80],
        methods: vec![
            MethodSpec::Cnn {
                method: TrainMethod::OneCycle,
                transfer: TransferMode::None,
                init: Init::Default,
            },
            MethodSpec::Radiomics(Family::Lasso),
            MethodSpec::Radiomics(Family::Forest),
        ],
        seeds: vec![0, 1],
        cnn: CnnSettings {
            epochs: 3,
            batch_size: 10,
            max_lr: None,
            ..Default::default()
        },
        baseline: BaselineSettings {
            n_draws: 3,
            folds: 3,
        },
        ..Default::default()
    };
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    run_curve(&spec, &data, Some(&a)).map_err(|e| e.to_string())?;
    run_curve(&spec, &data, Some(&b)).map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    let first = read(&a)?;
    check(first == read(&b)?, || "fresh reruns differ".into())?;
    let again = run_curve(&spec, &data, Some(&a)).map_err(|e| e.to_string())?;
    check(again.computed == 0 && read(&a)? == first, || {
        "rerun into the same file changed it".into()
    })?;
    let lines = first.iter().filter(|&&c| c == b'\n').count();
    Ok(format!(
        "{} result lines byte-identical across runs",
        lines - 1
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |k: usize, name: &str, out: Outcome| match out {
        Ok(msg) => println!("criterion {k:>2} PASS  {name}: {msg}"),
        Err(msg) => {
            failed += 1;
            println!("criterion {k:>2} FAIL  {name}: {msg}");
        }
    };
    report(1, "schedule exactness", schedule_exactness());
    report(2, "group plan", group_plan());
    report(3, "gradient correctness", gradients());
    report(4, "GLCM oracle", glcm_oracle());
    report(5, "AUC oracle", auc_oracle());
    report(6, "lasso KKT", lasso_kkt());
    report(7, "t-test accuracy", ttest_accuracy());
    let transfer = transfer_run(dir.path());
    report(8, "transfer direction", transfer_direction(&transfer));
    report(9, "moment-preserving reinit", moment_reinit(&transfer));
    report(10, "TTA identity", tta_identity());
    report(11, "curve determinism", curve_determinism(dir.path()));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
