//! The frozen quantum layer as a tensor op: patch unfolding, per-window
//! expectations, worker-count invariance and the gradient w.r.t. its input.

use qcseis::autograd::{ops, Tensor};
use qcseis::qlayer::{QuantumLayer, QuantumLayerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = QuantumLayerConfig {
        n_circuits: 3,
        seed: 11,
        ..QuantumLayerConfig::default()
    };
    let mut layer = QuantumLayer::new(cfg)?;
    let shape = [2, 4, 8, 16];
    let n: usize = shape.iter().product();
    let x = Tensor::<f64>::param(&shape, (0..n).map(|i| ((i as f64) * 0.37).sin()).collect())?;

    let y = layer.forward(&x)?;
    println!("input {:?} -> output {:?} ({} circuits)", x.shape(), y.shape(), layer.n_outputs());
    let first = y.to_vec();

    for w in [1, 2, 8] {
        layer.set_workers(w);
        let same = layer.forward(&x)?.to_vec() == first;
        println!("workers {w}: bit-identical {same}");
    }

    ops::sum(&y).backward()?;
    let g = x.grad().expect("input gradient").to_vec();
    let nz = g.iter().filter(|v| **v != 0.0).count();
    println!("d sum / d input: {nz} of {} entries non-zero, max |g| {:.4}", g.len(), g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(())
}
