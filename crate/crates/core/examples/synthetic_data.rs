//! Synthetic gathers for each degradation regime, written to SEIS files and
//! read back bit-exactly.

use qcseis::objectives::patch_band_energy;
use qcseis::seisdata::{build_dataset, read_seis, snr_db, DatasetSpec, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("qcseis_synthetic_data");
    for task in Task::ALL {
        let spec = DatasetSpec::for_task(task, 20, 64, 32, 1);
        let sum = build_dataset(&spec, &dir.join(task.name()))?;
        let test = read_seis(&sum.files[2])?;
        let again = spec.make_file(18..20)?;
        let p = &test.patches[0];
        let missing = p.mask.iter().filter(|m| **m == 0).count();
        let extra = match task {
            Task::Denoise => format!("snr {:.2} dB", snr_db(&test.target_patch(0), &test.degraded_patch(0))),
            Task::Lfe => format!(
                "0-5 Hz energy label {:.3e} input {:.3e}",
                patch_band_energy(&p.target, test.t, test.s, test.dt, 0.0, 5.0),
                patch_band_energy(&p.degraded, test.t, test.s, test.dt, 0.0, 5.0)
            ),
            _ => format!("{missing} of {} traces dropped", p.mask.len()),
        };
        println!(
            "{:<22} splits {:?} bytes {:?} round trip exact {}  {extra}",
            task.name(),
            sum.counts,
            sum.bytes,
            test == again
        );
    }
    println!("files under {}", dir.display());
    Ok(())
}
