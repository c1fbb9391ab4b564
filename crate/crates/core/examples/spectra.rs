//! Amplitude spectrum and F-K panel of a synthetic gather.

use qcseis::objectives::{amplitude_spectrum, fk_spectrum};
use qcseis::seisdata::{synth_gather, GatherSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GatherSpec { t: 128, s: 32, ..GatherSpec::default() };
    let (gather, events) = synth_gather(&spec, 5)?;
    for e in &events {
        println!("event {e:?}");
    }
    let mid = gather.trace(spec.s / 2);
    let (f, m) = amplitude_spectrum(&mid, spec.dt);
    let peak = m.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    println!("middle trace: {} bins up to {:.1} Hz, peak {:.2} at {:.1} Hz", f.len(), f[f.len() - 1], peak.1, f[peak.0]);

    let data: Vec<f64> = gather.data.iter().map(|&v| v as f64).collect();
    let fk = fk_spectrum(&data, spec.t, spec.s, spec.dt, spec.dx);
    let nk = fk.wavenumbers.len();
    let (bi, _) = fk.magnitude_db.iter().enumerate().fold((0, f64::MIN), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    println!(
        "f-k panel {}x{}: peak at {:.1} Hz, k = {:+.5} 1/m",
        fk.frequencies.len(),
        nk,
        fk.frequencies[bi / nk],
        fk.wavenumbers[bi % nk]
    );
    Ok(())
}
