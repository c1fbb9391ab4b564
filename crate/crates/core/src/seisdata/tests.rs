use std::f64::consts::PI;

use super::*;
use crate::objectives::amplitude_spectrum;

fn patch_from(t: usize, s: usize, dt: f64, f: impl Fn(usize, usize) -> f64) -> SeismicPatch {
    let data = (0..t * s).map(|k| f(k / s, k % s) as f32).collect();
    SeismicPatch::new(t, s, dt, 25.0, data).unwrap()
}

fn energy(p: &SeismicPatch) -> f64 {
    p.data.iter().map(|v| (*v as f64).powi(2)).sum()
}

#[test]
fn ricker_peak_and_symmetry() {
    let w = ricker(7.0, 0.004, 0.3).unwrap();
    let c = w.len() / 2;
    assert_eq!(w[c], 1.0);
    for k in 1..=c {
        assert_eq!(w[c - k], w[c + k]);
    }
    assert!(ricker(7.0, 0.004, 0.1).is_err());
    assert!(ricker(0.0, 0.004, 1.0).is_err());
}

#[test]
fn ricker_dominant_frequency() {
    let dt = 0.002;
    let w = ricker(10.0, dt, 1.0).unwrap();
    let (f, m) = amplitude_spectrum(&w, dt);
    let k = m.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let df = f[1];
    assert!((f[k] - 10.0).abs() <= df, "peak at {} Hz", f[k]);
}

#[test]
fn flat_event_at_infinite_velocity() {
    let spec = GatherSpec {
        t: 64,
        s: 16,
        n_events: 1,
        velocity: [f64::INFINITY, f64::INFINITY],
        ..Default::default()
    };
    let (p, _) = synth_gather(&spec, 3).unwrap();
    for i in 0..p.t {
        let row = &p.data[i * p.s..(i + 1) * p.s];
        assert!(row.iter().all(|v| *v == row[0]));
    }
}

#[test]
fn synth_is_reproducible_and_normalized() {
    let spec = GatherSpec::default();
    let (a, ea) = synth_gather(&spec, 42).unwrap();
    let (b, eb) = synth_gather(&spec, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(ea, eb);
    let peak = a.data.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    assert!((peak - 1.0).abs() < 1e-6);
    assert!(a.data.iter().all(|v| v.is_finite()));
    let (c, _) = synth_gather(&spec, 43).unwrap();
    assert_ne!(a, c);
}

#[test]
fn apex_time_matches_t0() {
    let mut hits = 0;
    for seed in 0..20 {
        let spec = GatherSpec {
            n_events: 1,
            ..Default::default()
        };
        let (p, ev) = synth_gather(&spec, seed).unwrap();
        let t0 = ev[0].t0;
        if t0 > (p.t as f64 - 1.0) * p.dt {
            continue;
        }
        hits += 1;
        let apex = p.trace(0);
        let k = apex.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((k as f64 - t0 / p.dt).abs() <= 1.0, "seed {seed}: argmax {k}, t0/dt {}", t0 / p.dt);
    }
    assert!(hits > 5);
}

#[test]
fn synth_rejects_bad_specs() {
    assert!(synth_gather(&GatherSpec { n_events: 0, ..Default::default() }, 0).is_err());
    assert!(synth_gather(&GatherSpec { t: 7, ..Default::default() }, 0).is_err());
}

#[test]
fn random_mask_counts() {
    let p = patch_from(8, 10, 0.004, |i, j| (i * 10 + j) as f64 + 1.0);
    let (d, mask) = degrade_mask_random(&p, 0.3, 9).unwrap();
    assert_eq!(mask.iter().filter(|m| **m == 0).count(), 3);
    assert_eq!(mask.iter().map(|m| *m as usize).sum::<usize>(), 10 - 3);
    for i in 0..p.t {
        for j in 0..p.s {
            if mask[j] == 1 {
                assert_eq!(d.at(i, j).to_bits(), p.at(i, j).to_bits());
            } else {
                assert_eq!(d.at(i, j), 0.0);
            }
        }
    }
    let (_, m7) = degrade_mask_random(&p, 0.7, 9).unwrap();
    assert_eq!(m7.iter().filter(|m| **m == 0).count(), 7);
}

#[test]
fn regular_mask_pattern() {
    let p = patch_from(8, 9, 0.004, |_, j| j as f64 + 1.0);
    let (d, mask) = degrade_mask_regular(&p).unwrap();
    let dropped: Vec<usize> = (0..9).filter(|&j| mask[j] == 0).collect();
    assert_eq!(dropped, vec![2, 5, 8]);
    let (d2, mask2) = degrade_mask_regular(&d).unwrap();
    assert_eq!(d, d2);
    assert_eq!(mask, mask2);
    let q = patch_from(8, 8, 0.004, |_, _| 1.0);
    let (_, m) = degrade_mask_regular(&q).unwrap();
    assert_eq!(m.iter().filter(|v| **v == 1).count(), 6);
}

#[test]
fn regular_mask_on_six_traces() {
    let p = patch_from(8, 8, 0.004, |_, _| 1.0);
    let p6 = SeismicPatch {
        s: 6,
        data: p.data[..48].to_vec(),
        ..p
    };
    let (_, m) = degrade_mask_regular(&p6).unwrap();
    assert_eq!(m, vec![1, 1, 0, 1, 1, 0]);
}

#[test]
fn noise_statistics() {
    let p = patch_from(224, 128, 0.004, |i, j| ((i + j) as f64 * 0.1).sin());
    let n = degrade_noise(&p, 0.1, 5).unwrap();
    let diffs: Vec<f64> = p.data.iter().zip(&n.data).map(|(a, b)| *b as f64 - *a as f64).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
    assert!((sd - 0.1).abs() < 0.005, "{sd}");
    let z = degrade_noise(&p, 0.0, 5).unwrap();
    assert_eq!(z, p);
}

#[test]
fn noise_snr_on_unit_peak_gather() {
    let (g, _) = synth_gather(&GatherSpec { t: 224, s: 128, ..Default::default() }, 1).unwrap();
    let noisy = degrade_noise(&g, 0.1, 2).unwrap();
    let snr = snr_db(&g, &noisy);
    assert!(snr.is_finite());
    eprintln!("SNR of a synthetic unit-peak gather at sigma 0.1: {snr:.2} dB");
}

fn sinusoid(freq: f64) -> SeismicPatch {
    // 250 samples at 4 ms is exactly one second.
    patch_from(250, 8, 0.004, |i, j| (2.0 * PI * freq * i as f64 * 0.004 + j as f64).sin())
}

#[test]
fn bandpass_routes_sinusoids() {
    let seven = sinusoid(7.0);
    let (inp, lab) = bandpass_split(&seven, [5.0, 10.0], [0.0, 5.0], 1.0).unwrap();
    assert!(energy(&lab) <= 0.01 * energy(&seven));
    assert!((energy(&inp) / energy(&seven) - 1.0).abs() < 1e-4);
    let two = sinusoid(2.0);
    let (inp, lab) = bandpass_split(&two, [5.0, 10.0], [0.0, 5.0], 1.0).unwrap();
    assert!(energy(&inp) <= 0.01 * energy(&two));
    assert!((energy(&lab) / energy(&two) - 1.0).abs() < 1e-4);
}

#[test]
fn bandpass_energy_and_linearity() {
    let (g, _) = synth_gather(&GatherSpec { t: 128, s: 16, f0: [7.0, 7.0], ..Default::default() }, 8).unwrap();
    let (a, b) = bandpass_split(&g, [5.0, 10.0], [0.0, 5.0], 1.0).unwrap();
    assert!(energy(&a) + energy(&b) <= energy(&g) * (1.0 + 1e-6));
    let scaled = SeismicPatch {
        data: g.data.iter().map(|v| v * 0.5).collect(),
        ..g.clone()
    };
    let (sa, sb) = bandpass_split(&scaled, [5.0, 10.0], [0.0, 5.0], 1.0).unwrap();
    for (x, y) in a.data.iter().zip(&sa.data).chain(b.data.iter().zip(&sb.data)) {
        assert!((0.5 * x - y).abs() < 1e-6);
    }
    assert!(bandpass_split(&g, [5.0, 200.0], [0.0, 5.0], 1.0).is_err());
}

#[test]
fn band_gain_edges() {
    assert_eq!(band_gain(7.0, [5.0, 10.0], 1.0), 1.0);
    assert_eq!(band_gain(4.0, [5.0, 10.0], 1.0), 0.0);
    assert!((band_gain(5.0, [5.0, 10.0], 1.0) - 0.5).abs() < 1e-12);
    assert_eq!(band_gain(0.0, [0.0, 5.0], 1.0), 1.0);
    let f = 4.8;
    assert!((band_gain(f, [5.0, 10.0], 1.0) + band_gain(f, [0.0, 5.0], 1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn dataset_splits_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::for_task(Task::InterpolationRandom, 10, 16, 16, 4);
    let s1 = build_dataset(&spec, &dir.path().join("a")).unwrap();
    let s2 = build_dataset(&spec, &dir.path().join("b")).unwrap();
    assert_eq!(s1.counts, [8, 1, 1]);
    for k in 0..3 {
        assert_eq!(std::fs::read(&s1.files[k]).unwrap(), std::fs::read(&s2.files[k]).unwrap());
    }
    let test = read_seis(&s1.files[2]).unwrap();
    assert_eq!(test.len(), 1);
    for i in 0..test.len() {
        assert_eq!(regenerate_degraded(&test, i).unwrap(), test.patches[i].degraded);
    }
    let side = read_sidecar(&s1.sidecar).unwrap();
    assert_eq!(side.dataset, spec);
    assert_eq!(side.splits, [8, 1, 1]);
    assert_eq!(DatasetSpec::for_task(Task::Denoise, 100, 16, 16, 0).split_counts(), [80, 10, 10]);
}

#[test]
fn masked_consistency_for_both_interpolation_tasks() {
    for task in [Task::InterpolationRandom, Task::InterpolationRegular] {
        let spec = DatasetSpec::for_task(task, 10, 16, 16, 1);
        for i in 0..10 {
            let p = spec.make_pair(i).unwrap();
            for (k, (t, d)) in p.target.iter().zip(&p.degraded).enumerate() {
                let m = p.mask[k % 16];
                assert_eq!(*d, if m == 1 { *t } else { 0.0 });
            }
        }
    }
}

#[test]
fn lfe_pairs_are_band_limited() {
    let spec = DatasetSpec::for_task(Task::Lfe, 10, 128, 16, 2);
    let p = spec.make_pair(0).unwrap();
    let deg = SeismicPatch::new(128, 16, 0.004, 25.0, p.degraded.clone()).unwrap();
    let tgt = SeismicPatch::new(128, 16, 0.004, 25.0, p.target.clone()).unwrap();
    let low = |x: &SeismicPatch| (0..x.s).map(|j| crate::objectives::band_energy(&x.trace(j), x.dt, 0.0, 4.0)).sum::<f64>();
    assert!(low(&deg) < 1e-6 * low(&tgt).max(1e-12) + 1e-9);
    assert!(p.mask.iter().all(|m| *m == 1));
}

#[test]
fn seis_roundtrip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::for_task(Task::Denoise, 10, 8, 8, 5);
    let s = build_dataset(&spec, dir.path()).unwrap();
    let bytes = std::fs::read(&s.files[0]).unwrap();
    assert_eq!(&bytes[..4], b"SEIS");
    assert_eq!(bytes.len(), 4 + 4 + 8 + 4 + 4 + 8 + 8 + 1 + 8 * (2 * 64 * 4 + 8));
    let f = read_seis(&s.files[0]).unwrap();
    let again = dir.path().join("copy.seis");
    write_seis(&again, &f).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), bytes);

    let cut = dir.path().join("cut.seis");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let err = read_seis(&cut).unwrap_err().to_string();
    assert!(err.contains("patch 7 mask"), "{err}");
    let bad = dir.path().join("bad.seis");
    let mut b = bytes.clone();
    b[0] = b'X';
    std::fs::write(&bad, &b).unwrap();
    assert!(read_seis(&bad).unwrap_err().to_string().contains("magic"));
}

#[test]
fn dataset_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    assert!(build_dataset(&DatasetSpec::for_task(Task::Denoise, 9, 16, 16, 0), dir.path()).is_err());
    assert!(build_dataset(&DatasetSpec::for_task(Task::Denoise, 10, 7, 16, 0), dir.path()).is_err());
    assert_eq!("lfe".parse::<Task>().unwrap(), Task::Lfe);
    assert!("nope".parse::<Task>().is_err());
}
