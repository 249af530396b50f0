//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smalldata::augment::Image;
use smalldata::ndtensor::{Graph, NodeId, Tensor};
use smalldata::radiomics::Angle;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------ gradients

/// Relative error with an absolute floor for near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Distance of the recorded graph from the nearest ReLU or max-pool kink:
/// the smallest |ReLU input| and the smallest gap between the two largest
/// entries of any pooling window whose maximum is positive.
pub fn kink_margin(g: &Graph) -> f64 {
    let mut margin = f64::INFINITY;
    for (id, inputs) in g.topology() {
        match g.op_name(id) {
            "relu" => {
                for &v in g.value(inputs[0]).data() {
                    margin = margin.min(v.abs());
                }
            }
            "max_pool_2x2" => {
                for w in pool_windows(g.value(inputs[0])) {
                    let mut v = w.clone();
                    v.sort_by(|a, b| b.total_cmp(a));
                    if v[0] > 0.0 {
                        margin = margin.min(v[0] - v[1]);
                    }
                }
            }
            _ => {}
        }
    }
    margin
}

/// ReLU input signs and pooling argmaxes; equal patterns mean the network is
/// the same smooth function on the segment between two parameter values.
pub fn activation_pattern(g: &Graph) -> Vec<usize> {
    let mut pat = Vec::new();
    for (id, inputs) in g.topology() {
        match g.op_name(id) {
            "relu" => pat.extend(
                g.value(inputs[0])
                    .data()
                    .iter()
                    .map(|&v| usize::from(v > 0.0)),
            ),
            "max_pool_2x2" => pat.extend(pool_windows(g.value(inputs[0])).iter().map(|w| {
                let best = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if best > 0.0 {
                    w.iter().position(|&v| v == best).unwrap()
                } else {
                    // all-zero windows pass no gradient whichever entry wins
                    9
                }
            })),
            _ => {}
        }
    }
    pat
}

fn pool_windows(t: &Tensor) -> Vec<Vec<f64>> {
    let s = t.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let d = t.data();
    let mut out = Vec::new();
    for b in 0..n * c {
        for r in 0..h / 2 {
            for col in 0..w / 2 {
                let at = |dr: usize, dc: usize| d[b * h * w + (2 * r + dr) * w + 2 * col + dc];
                out.push(vec![at(0, 0), at(0, 1), at(1, 0), at(1, 1)]);
            }
        }
    }
    out
}

/// A random small convolutional net built directly on the tape.
#[derive(Debug, Clone)]
pub struct RandomNet {
    pub input: Tensor,
    pub targets: Tensor,
    /// conv weight, conv bias pairs, then head weight and head bias
    pub params: Vec<Tensor>,
    pub pool_after: Vec<bool>,
}

impl RandomNet {
    pub fn draw(r: &mut ChaCha8Rng) -> Self {
        let n = r.random_range(1..=3);
        let cin = r.random_range(1..=2);
        let (h, w) = (r.random_range(3..=8), r.random_range(3..=8));
        let n_conv = r.random_range(1..=2);
        let n_labels = r.random_range(1..=3);
        let uniform = |r: &mut ChaCha8Rng, len: usize, b: f64| -> Vec<f64> {
            (0..len).map(|_| r.random_range(-b..b)).collect()
        };
        let input = Tensor::new(vec![n, cin, h, w], uniform(r, n * cin * h * w, 1.0)).unwrap();
        let targets = Tensor::new(
            vec![n, n_labels],
            (0..n * n_labels)
                .map(|_| f64::from(u8::from(r.random_bool(0.5))))
                .collect(),
        )
        .unwrap();
        let mut params = Vec::new();
        let mut pool_after = Vec::new();
        let (mut c, mut hh, mut ww) = (cin, h, w);
        for _ in 0..n_conv {
            let cout = r.random_range(1..=4);
            let k = if r.random_bool(0.5) { 3 } else { 1 };
            let b = 1.5 / ((c * k * k) as f64).sqrt();
            params.push(
                Tensor::new(vec![cout, c, k, k], uniform(r, cout * c * k * k, b))
                    .unwrap()
                    .with_grad(),
            );
            params.push(
                Tensor::new(vec![cout], uniform(r, cout, 0.3))
                    .unwrap()
                    .with_grad(),
            );
            let pool = hh >= 2 && ww >= 2 && r.random_bool(0.6);
            if pool {
                hh /= 2;
                ww /= 2;
            }
            pool_after.push(pool);
            c = cout;
        }
        params.push(
            Tensor::new(vec![c, n_labels], uniform(r, c * n_labels, 1.5))
                .unwrap()
                .with_grad(),
        );
        params.push(
            Tensor::new(vec![n_labels], uniform(r, n_labels, 0.5))
                .unwrap()
                .with_grad(),
        );
        Self {
            input,
            targets,
            params,
            pool_after,
        }
    }

    /// Records the forward pass; returns the loss node and the parameter leaves.
    pub fn record(&self, g: &mut Graph) -> (NodeId, Vec<NodeId>) {
        let leaves: Vec<NodeId> = self.params.iter().map(|p| g.leaf(p.clone())).collect();
        let mut x = g.leaf(self.input.clone());
        for (i, &pool) in self.pool_after.iter().enumerate() {
            x = g.conv2d(x, leaves[2 * i]).unwrap();
            x = g.add_bias(x, leaves[2 * i + 1]).unwrap();
            x = g.relu(x);
            if pool {
                x = g.max_pool_2x2(x).unwrap();
            }
        }
        x = g.global_avg_pool(x).unwrap();
        let k = leaves.len();
        x = g.matmul(x, leaves[k - 2]).unwrap();
        x = g.add_bias(x, leaves[k - 1]).unwrap();
        let p = g.sigmoid(x);
        let y = g.leaf(self.targets.clone());
        (g.bce_loss(p, y).unwrap(), leaves)
    }

    pub fn loss(&self) -> f64 {
        let mut g = Graph::new();
        let (l, _) = self.record(&mut g);
        g.value(l).item().unwrap()
    }

    pub fn margin(&self) -> f64 {
        let mut g = Graph::new();
        self.record(&mut g);
        kink_margin(&g)
    }

    /// Max relative error between backprop and central differences over
    /// every parameter entry.
    pub fn max_grad_error(&self, h: f64) -> f64 {
        let mut g = Graph::new();
        let (loss, leaves) = self.record(&mut g);
        g.backward(loss).unwrap();
        let analytic: Vec<Vec<f64>> = leaves
            .iter()
            .map(|&l| g.value(l).grad().unwrap().to_vec())
            .collect();
        let mut worst: f64 = 0.0;
        for (t, grads) in analytic.iter().enumerate() {
            for (j, &a) in grads.iter().enumerate() {
                let mut plus = self.clone();
                plus.params[t].data_mut()[j] += h;
                let mut minus = self.clone();
                minus.params[t].data_mut()[j] -= h;
                let num = (plus.loss() - minus.loss()) / (2.0 * h);
                worst = worst.max(rel_err(a, num));
            }
        }
        worst
    }
}

/// A random net whose kink margin is comfortably above the perturbation size.
pub fn general_position_net(r: &mut ChaCha8Rng, min_margin: f64) -> RandomNet {
    loop {
        let net = RandomNet::draw(r);
        if net.margin() > min_margin {
            return net;
        }
    }
}

// ------------------------------------------------------------ images / GLCM

pub fn random_image(r: &mut ChaCha8Rng, max_side: usize, min_side: usize) -> Image {
    let h = r.random_range(min_side..=max_side);
    let w = r.random_range(min_side..=max_side);
    // mix full-range noise with few-level images so co-occurrences repeat
    let levels: u16 = *[2u16, 4, 17, 256].get(r.random_range(0..4)).unwrap();
    Image::from_fn(h, w, |_, _| {
        let v = r.random_range(0..levels);
        (v * (255 / (levels - 1).max(1))).min(255) as u8
    })
}

/// Symmetric normalized GLCM by explicit enumeration of ordered pixel pairs.
pub fn brute_glcm(img: &Image, offset: usize, angle: Angle, levels: usize) -> Vec<f64> {
    let (dr, dc): (i64, i64) = match angle {
        Angle::Deg0 => (0, offset as i64),
        Angle::Deg45 => (-(offset as i64), offset as i64),
        Angle::Deg90 => (-(offset as i64), 0),
    };
    let q = |v: u8| (v as usize * levels) / 256;
    let mut counts = vec![0u64; levels * levels];
    for r in 0..img.height() as i64 {
        for c in 0..img.width() as i64 {
            let (r2, c2) = (r + dr, c + dc);
            if r2 < 0 || c2 < 0 || r2 >= img.height() as i64 || c2 >= img.width() as i64 {
                continue;
            }
            let a = q(img.get(r as usize, c as usize));
            let b = q(img.get(r2 as usize, c2 as usize));
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

// ------------------------------------------------------------ AUC / t

/// Fraction of positive/negative pairs ranked correctly, ties counting half.
pub fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / den
}

fn ln_gamma_ref(x: f64) -> f64 {
    // Stirling series after shifting the argument up
    let mut shift = 0.0;
    let mut z = x;
    while z < 20.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z.powi(3)) + 1.0 / (1260.0 * z.powi(5))
        - 1.0 / (1680.0 * z.powi(7));
    shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// Two-sided Student-t tail `P(|T| > t)` by composite Gauss-Legendre
/// integration of the density over `[0, |t|]`.
pub fn t_two_sided_quadrature(t: f64, df: f64) -> f64 {
    let t = t.abs();
    let log_c = ln_gamma_ref((df + 1.0) / 2.0)
        - ln_gamma_ref(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (log_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    // 5-point Gauss-Legendre nodes/weights
    let nodes = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    let weights = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let panels = 4000;
    let width = t / panels as f64;
    let mut integral = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * width;
        for (x, w) in nodes.iter().zip(&weights) {
            integral += w * pdf(mid + x * width / 2.0) * width / 2.0;
        }
    }
    1.0 - 2.0 * integral
}

// ------------------------------------------------------------ logistic

/// Unpenalized logistic regression by Newton's method with an intercept.
pub fn newton_logistic(x: &[Vec<f64>], y: &[bool]) -> (Vec<f64>, f64) {
    let p = x[0].len();
    let n = x.len() as f64;
    let mut theta = vec![0.0; p + 1];
    for _ in 0..100 {
        let mut g = vec![0.0; p + 1];
        let mut hmat = vec![vec![0.0; p + 1]; p + 1];
        for (row, &yi) in x.iter().zip(y) {
            let mut z = theta[p];
            for j in 0..p {
                z += theta[j] * row[j];
            }
            let mu = 1.0 / (1.0 + (-z).exp());
            let r = mu - f64::from(u8::from(yi));
            let ext: Vec<f64> = row.iter().copied().chain([1.0]).collect();
            for a in 0..=p {
                g[a] += r * ext[a] / n;
                for b in 0..=p {
                    hmat[a][b] += mu * (1.0 - mu) * ext[a] * ext[b] / n;
                }
            }
        }
        let step = solve(hmat, g);
        let mut max_step: f64 = 0.0;
        for j in 0..=p {
            theta[j] -= step[j];
            max_step = max_step.max(step[j].abs());
        }
        if max_step < 1e-14 {
            break;
        }
    }
    (theta[..p].to_vec(), theta[p])
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Gradient of the mean logistic loss at `(w, b)`, `[dw.., db]`.
pub fn logistic_grad(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64) -> Vec<f64> {
    let p = w.len();
    let n = x.len() as f64;
    let mut g = vec![0.0; p + 1];
    for (row, &yi) in x.iter().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = 1.0 / (1.0 + (-z).exp()) - f64::from(u8::from(yi));
        for j in 0..p {
            g[j] += r * row[j] / n;
        }
        g[p] += r / n;
    }
    g
}
