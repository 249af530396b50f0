//! Reverse-mode differentiation on a hand-built graph: a 3x3 convolution,
//! ReLU, global average pooling, a dense layer and a BCE loss.
//!
//! cargo run --example autodiff

use smalldata::ndtensor::{Graph, Tensor};

fn main() -> smalldata::Result<()> {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(
        vec![1, 1, 4, 4],
        (0..16).map(|v| v as f64 / 16.0).collect(),
    )?);
    let w = g.leaf(
        Tensor::new(
            vec![2, 1, 3, 3],
            (0..18)
                .map(|v| ((v * 7) % 18) as f64 / 20.0 - 0.3)
                .collect(),
        )?
        .with_grad(),
    );
    let head = g.leaf(Tensor::new(vec![2, 1], vec![0.7, 0.4])?.with_grad());
    let y = g.leaf(Tensor::new(vec![1, 1], vec![1.0])?);

    let h = g.conv2d(x, w)?;
    let h = g.relu(h);
    let h = g.global_avg_pool(h)?;
    let logits = g.matmul(h, head)?;
    let p = g.sigmoid(logits);
    let loss = g.bce_loss(p, y)?;
    g.backward(loss)?;

    println!(
        "p = {:.6}, loss = {:.6}",
        g.value(p).item()?,
        g.value(loss).item()?
    );
    println!("dL/dhead = {:?}", g.value(head).grad().unwrap_or_default());
    let dw = g.value(w).grad().unwrap_or_default();
    println!("dL/dconv = {:?}", dw);
    Ok(())
}
