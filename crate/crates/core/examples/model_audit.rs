//! Parameter counts of the generator, discriminator and U-Net, quantum versus
//! classical twin, and a forward pass through each.

use qcseis::autograd::Tensor;
use qcseis::models::{Discriminator, Generator, NetConfig, Network, UNet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = NetConfig {
        blocks: 2,
        base_channels: 16,
        height: 32,
        width: 32,
        ..NetConfig::default()
    };
    println!("{:<14} {:>10} {:>10} {:>8}", "network", "quantum", "classical", "ratio");
    let row = |name: &str, q: usize, c: usize| println!("{name:<14} {q:>10} {c:>10} {:>8.4}", q as f64 / c as f64);
    let twin = |quantum| NetConfig { quantum, ..base.clone() };

    let (gq, gc) = (Generator::<f32>::new(&twin(true))?, Generator::<f32>::new(&twin(false))?);
    row("generator", gq.trainable_count(), gc.trainable_count());
    let (dq, dc) = (Discriminator::<f32>::new(&twin(true))?, Discriminator::<f32>::new(&twin(false))?);
    row("discriminator", dq.trainable_count(), dc.trainable_count());
    let unet = |quantum| NetConfig { blocks: 4, base_channels: 8, height: 64, width: 32, quantum, ..base.clone() };
    let (uq, uc) = (UNet::<f32>::new(&unet(true))?, UNet::<f32>::new(&unet(false))?);
    row("unet", uq.trainable_count(), uc.trainable_count());

    let x = Tensor::<f32>::new(&[2, 1, 32, 32], (0..2048).map(|i| ((i as f32) * 0.01).sin()).collect())?;
    let g = gq.forward(&x, false)?;
    println!("generator: {:?} -> {:?}, {} quantum pathways", x.shape(), g.output.shape(), g.pairs.len());
    let d = dq.forward(&g.output, false)?;
    println!("discriminator score shape {:?}", d.output.shape());
    let xu = Tensor::<f32>::new(&[2, 1, 64, 32], vec![0.1; 4096])?;
    println!("unet: {:?} -> {:?}", xu.shape(), uq.forward(&xu, false)?.output.shape());
    Ok(())
}
