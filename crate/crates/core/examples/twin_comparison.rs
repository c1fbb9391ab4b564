//! Quantum generator against its classical twin on the interpolation smoke
//! task: same data, budget and seeds. Reported, not gated.
//!
//! `cargo run --release --example twin_comparison [epochs]`

use qcseis::models::{Generator, NetConfig, Network};
use qcseis::seisdata::{DatasetSpec, Task};
use qcseis::trainer::{train_gan, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map_or(Ok(20), |a| a.parse())?;
    let spec = DatasetSpec::for_task(Task::InterpolationRandom, 80, 32, 32, 0);
    let train = spec.make_file(0..64)?;
    let val = spec.make_file(64..72)?;
    println!("variant    seed  params  first_mae  final_mae  ratio  val_mae");
    for seed in 0..3 {
        for quantum in [true, false] {
            let model = NetConfig {
                blocks: 2,
                base_channels: 16,
                height: 32,
                width: 32,
                quantum,
                seed,
                ..NetConfig::default()
            };
            let cfg = TrainConfig {
                epochs,
                batch_size: 8,
                lr: Some(1e-4),
                seed,
                ..TrainConfig::default()
            };
            let params = Generator::<f32>::new(&model)?.trainable_count();
            let s = train_gan(&model, &cfg, &train, Some(&val), None)?;
            let rows: Vec<_> = s.history.split("train").collect();
            let (a, b) = (rows[0].mae, rows[rows.len() - 1].mae);
            let v = s.history.split("val").last().map_or(f64::NAN, |r| r.mae);
            println!(
                "{:<9}  {seed:4}  {params:6}  {a:9.5}  {b:9.5}  {:5.3}  {v:7.5}",
                if quantum { "quantum" } else { "classical" },
                b / a
            );
        }
    }
    Ok(())
}
