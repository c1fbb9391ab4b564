//! QC-UNet low-frequency extrapolation on synthetic 7 Hz gathers.
//!
//! `cargo run --release --example train_lfe [epochs]`

use qcseis::models::NetConfig;
use qcseis::objectives::patch_band_energy;
use qcseis::seisdata::{DatasetSpec, Task};
use qcseis::trainer::{Family, Session, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map_or(Ok(20), |a| a.parse())?;
    let (t, s) = (128, 32);
    let spec = DatasetSpec::for_task(Task::Lfe, 80, t, s, 0);
    let train = spec.make_file(0..64)?;
    let val = spec.make_file(64..72)?;
    let model = NetConfig {
        base_channels: 8,
        height: t,
        width: s,
        ..NetConfig::default()
    };
    let cfg = TrainConfig {
        epochs,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut sess = Session::new(Family::Unet, &model, &cfg)?;
    sess.fit(&train, Some(&val), None, |e| {
        println!(
            "epoch {:2}  train L1 {:.5}  val mae {:.5}",
            e.epoch,
            e.train.mae,
            e.val.as_ref().map_or(f64::NAN, |v| v.mae)
        );
    })?;

    let pred = sess.predict_file(&val)?;
    let dt = val.dt;
    let (mut e_pred, mut e_in, mut e_label) = (0.0, 0.0, 0.0);
    for (p, pair) in pred.iter().zip(&val.patches) {
        e_pred += patch_band_energy(p, t, s, dt, 0.0, 5.0);
        e_in += patch_band_energy(&pair.degraded, t, s, dt, 0.0, 5.0);
        e_label += patch_band_energy(&pair.target, t, s, dt, 0.0, 5.0);
    }
    println!("0-5 Hz energy: prediction {e_pred:.4e}  input {e_in:.4e}  label {e_label:.4e}");
    println!("prediction/input = {:.2}", e_pred / e_in);
    Ok(())
}
