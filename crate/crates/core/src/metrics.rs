//! ROC AUC (Mann-Whitney with midranks), per-label mean AUC and the paired
//! two-sided t-test.

use crate::error::{Error, Result};

/// Scores with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "ScoredSet",
                left: vec![scores.len()],
                right: vec![labels.len()],
            });
        }
        Ok(Self { scores, labels })
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_neg(&self) -> usize {
        self.labels.len() - self.n_pos()
    }

    pub fn auc(&self) -> Result<f64> {
        auc(&self.scores, &self.labels)
    }
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "auc",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("auc: score {s}")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(format!(
            "auc needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based: the block covers start+1 ..= end
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_in_block = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += midrank * pos_in_block as f64;
        start = end;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanAuc {
    pub mean: f64,
    /// `None` for labels lacking one of the classes.
    pub per_label: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

/// Unweighted mean of per-label AUCs over labels that have both classes.
pub fn mean_label_auc(sets: &[ScoredSet]) -> Result<MeanAuc> {
    let mut per_label = Vec::with_capacity(sets.len());
    let mut skipped = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        if s.n_pos() == 0 || s.n_neg() == 0 {
            per_label.push(None);
            skipped.push(i);
        } else {
            per_label.push(Some(s.auc()?));
        }
    }
    let valid: Vec<f64> = per_label.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::invalid(
            "mean_label_auc: no label has both classes present",
        ));
    }
    Ok(MeanAuc {
        mean: valid.iter().sum::<f64>() / valid.len() as f64,
        per_label,
        skipped,
    })
}

/// Splits a `[n, k]` row-major probability matrix and 0/1 targets into one
/// scored set per label.
pub fn per_label_sets(probs: &[f64], targets: &[f64], n_labels: usize) -> Vec<ScoredSet> {
    (0..n_labels)
        .map(|k| ScoredSet {
            scores: probs.iter().skip(k).step_by(n_labels).copied().collect(),
            labels: targets
                .iter()
                .skip(k)
                .step_by(n_labels)
                .map(|&y| y > 0.5)
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    /// Differences had zero spread but a nonzero mean: `t` is infinite and
    /// `p` is reported as 0.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a - b` against zero mean.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "paired_ttest",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "paired_ttest needs n >= 2, got {n}"
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "paired_ttest: non-finite difference".into(),
        ));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                df,
                mean_diff: 0.0,
                degenerate: false,
            }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                df,
                mean_diff: mean,
                degenerate: true,
            }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(TTest {
        t,
        p: student_t_two_sided_p(t, df as f64),
        df,
        mean_diff: mean,
        degenerate: false,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    reg_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

const BETA_CF_EPS: f64 = 1e-15;
const BETA_CF_MAX_ITER: usize = 10_000;

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_CF_EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms), relative error around 1e-15.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_separated_and_tied() {
        let labels = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
    }

    #[test]
    fn auc_single_class_rejected() {
        let err = auc(&[0.1, 0.2], &[true, true]).unwrap_err().to_string();
        assert!(err.contains("both classes"), "{err}");
    }

    #[test]
    fn mean_auc_cases() {
        let a = ScoredSet::new(vec![0.1, 0.9], vec![false, true]).unwrap();
        let b = ScoredSet::new(vec![0.3, 0.3], vec![false, true]).unwrap();
        let skip = ScoredSet::new(vec![0.3, 0.4], vec![false, false]).unwrap();
        let m = mean_label_auc(&[a.clone(), b, skip.clone()]).unwrap();
        assert_eq!(m.mean, 0.75);
        assert_eq!(m.skipped, vec![2]);
        assert_eq!(mean_label_auc(&[a]).unwrap().mean, 1.0);
        assert!(mean_label_auc(&[skip]).is_err());
    }

    #[test]
    fn ttest_identical_and_symmetric() {
        let a = [0.7, 0.8, 0.75];
        let r = paired_ttest(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = paired_ttest(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn ttest_degenerate_shift() {
        let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.5, 1.5, 2.5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 0.0);
        assert!(r.t.is_infinite() && r.t > 0.0);
    }

    #[test]
    fn ttest_rejects_short_or_ragged() {
        assert!(paired_ttest(&[1.0], &[2.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn cauchy_tail_closed_form() {
        // df = 1: P(|T| >= t) = 1 - 2 atan(t) / pi
        for t in [0.1, 1.0, 3.0, 50.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!(
                (student_t_two_sided_p(t, 1.0) - exact).abs() < 1e-13,
                "t={t}"
            );
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!(ln_gamma(1.0).abs() < 1e-14);
    }
}
