//! Small QC-GAN run on synthetic randomly decimated gathers: 64 patches of
//! 32x32, two blocks of 16 channels, batch 8, lr 1e-4.
//!
//! `cargo run --release --example train_interpolation [epochs] [--classical]`

use std::time::Instant;

use qcseis::models::NetConfig;
use qcseis::seisdata::{DatasetSpec, Task};
use qcseis::trainer::{train_gan, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.iter().find_map(|a| a.parse().ok()).unwrap_or(20);
    let quantum = !args.iter().any(|a| a == "--classical");

    let train = DatasetSpec::for_task(Task::InterpolationRandom, 80, 32, 32, 0).make_file(0..64)?;
    let model = NetConfig {
        blocks: 2,
        base_channels: 16,
        height: 32,
        width: 32,
        quantum,
        ..NetConfig::default()
    };
    let cfg = TrainConfig {
        epochs,
        batch_size: 8,
        lr: Some(1e-4),
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let s = train_gan(&model, &cfg, &train, None, None)?;
    println!("epoch  mae      rmse     loss_g   loss_d   loss_com");
    for r in s.history.split("train") {
        println!(
            "{:5}  {:.5}  {:.5}  {:.4}  {:.4}  {:.4}",
            r.epoch,
            r.mae,
            r.rmse,
            r.loss_g.unwrap_or(f64::NAN),
            r.loss_d.unwrap_or(f64::NAN),
            r.loss_com.unwrap_or(f64::NAN),
        );
    }
    let rows: Vec<_> = s.history.split("train").collect();
    println!(
        "{} generator, final/first train MAE {:.3}, {:.1}s",
        if quantum { "quantum" } else { "classical" },
        rows[rows.len() - 1].mae / rows[0].mae,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
