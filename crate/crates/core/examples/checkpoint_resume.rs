//! Save a training session mid-run, reload it and continue: the resumed run
//! ends on the same parameters as an uninterrupted one.

use qcseis::models::NetConfig;
use qcseis::seisdata::{DatasetSpec, Task};
use qcseis::trainer::{Family, Session, TrainConfig};

fn hex(h: [u8; 32]) -> String {
    h.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = DatasetSpec::for_task(Task::InterpolationRandom, 16, 16, 16, 2).make_file(0..12)?;
    let model = NetConfig {
        blocks: 2,
        base_channels: 4,
        height: 16,
        width: 16,
        ..NetConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        lr: Some(1e-3),
        ..TrainConfig::default()
    };

    let mut full = Session::new(Family::Gan, &model, &cfg)?;
    full.fit(&data, None, None, |_| {})?;

    let path = std::env::temp_dir().join("qcseis_resume_demo.qckp");
    let mut part = Session::new(Family::Gan, &model, &cfg)?;
    part.run_epoch(&data, None)?;
    part.save(&path)?;
    println!("saved epoch {} to {} ({} bytes)", part.epoch, path.display(), std::fs::metadata(&path)?.len());

    let mut resumed = Session::load(&path, Some(&model))?;
    println!("reloaded hash {} (saved {})", hex(resumed.param_hash()), hex(part.param_hash()));
    resumed.fit(&data, None, None, |e| println!("  resumed epoch {} train mae {:.5}", e.epoch, e.train.mae))?;
    println!("uninterrupted {}  resumed {}  equal {}", hex(full.param_hash()), hex(resumed.param_hash()), full.param_hash() == resumed.param_hash());

    let twin = NetConfig { quantum: false, ..model };
    match Session::load(&path, Some(&twin)) {
        Err(e) => println!("loading into the classical twin: {e}"),
        Ok(_) => println!("unexpected: classical twin accepted the checkpoint"),
    }
    Ok(())
}
