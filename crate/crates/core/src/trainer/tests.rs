use super::*;
use crate::autograd::{Parameter, Tensor};
use crate::models::{NetConfig, Network};
use crate::seisdata::{DatasetSpec, SeisFile, Task};

fn file(task: Task, n: usize, h: usize, w: usize, seed: u64) -> SeisFile {
    let spec = DatasetSpec::for_task(task, n.max(10), h, w, seed);
    SeisFile {
        t: h,
        s: w,
        dt: spec.gather.dt,
        dx: spec.gather.dx,
        task,
        patches: (0..n).map(|i| spec.make_pair(i).unwrap()).collect(),
    }
}

fn small_model(quantum: bool) -> NetConfig {
    NetConfig {
        blocks: 2,
        base_channels: 4,
        height: 16,
        width: 16,
        quantum,
        ..NetConfig::default()
    }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 4,
        lr: Some(1e-3),
        workers: 1,
        ..TrainConfig::default()
    }
}

fn scalar_param(v: f64, g: f64) -> Parameter<f64> {
    let p = Parameter::trainable("p", Tensor::param(&[1], vec![v]).unwrap());
    let y = crate::autograd::ops::scale(&p.tensor, g);
    crate::autograd::ops::sum(&y).backward().unwrap();
    p
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let p = scalar_param(0.3, 0.0);
    let mut opt = Adam::new(0.1);
    let out = opt.step(&[&p], None);
    assert!(out.applied);
    assert_eq!(p.tensor.item(), 0.3);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let p = scalar_param(0.0, 1.0);
    let mut opt = Adam::new(0.1);
    opt.step(&[&p], None);
    assert!((p.tensor.item() + 0.1).abs() < 1e-6);
}

#[test]
fn adam_matches_scalar_reference() {
    let p = Parameter::trainable("p", Tensor::<f64>::param(&[1], vec![1.0]).unwrap());
    let mut opt = Adam::new(0.05);
    let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=10 {
        p.tensor.zero_grad();
        // f(x) = x^2
        let y = crate::autograd::ops::mul(&p.tensor, &p.tensor).unwrap();
        crate::autograd::ops::sum(&y).backward().unwrap();
        opt.step(&[&p], None);
        let g = 2.0 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        x -= 0.05 * mh / (vh.sqrt() + 1e-8);
        assert!((p.tensor.item() - x).abs() < 1e-7, "step {t}");
    }
}

#[test]
fn adam_skips_non_finite_gradient() {
    let p = scalar_param(0.5, f64::NAN);
    let mut opt = Adam::new(0.1);
    let out = opt.step(&[&p], None);
    assert!(!out.applied);
    assert_eq!(opt.skipped, 1);
    assert_eq!(opt.step, 0);
    assert_eq!(p.tensor.item(), 0.5);
}

#[test]
fn clipping_scales_to_bound() {
    let p = scalar_param(0.0, 10.0);
    let mut opt = Adam::new(0.1);
    let out = opt.step(&[&p], Some(1.0));
    assert!(out.clipped);
    assert_eq!(out.grad_norm, 10.0);
    // First-moment estimate reflects the clipped gradient.
    assert!((opt.m[0][0] - 0.1).abs() < 1e-12);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { batch_size: 1, ..TrainConfig::default() },
        TrainConfig { lr: Some(0.0), ..TrainConfig::default() },
        TrainConfig { clip_norm: Some(-1.0), ..TrainConfig::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(TrainError::Config(_))), "{c:?}");
    }
    let j = serde_json::json!({"epochs": 3, "bogus": 1});
    assert!(serde_json::from_value::<TrainConfig>(j).is_err());
}

#[test]
fn family_follows_task() {
    assert_eq!(Family::for_task(Task::Lfe), Family::Unet);
    assert_eq!(Family::for_task(Task::Denoise), Family::Gan);
    assert_eq!(Family::for_task(Task::InterpolationRandom), Family::Gan);
}

#[test]
fn history_csv_format() {
    let h = History {
        rows: vec![
            HistoryRow { epoch: 1, split: "train".into(), mae: 0.5, rmse: 0.25, loss_g: Some(1.5), loss_d: None, loss_com: Some(0.0) },
            HistoryRow { epoch: 1, split: "val".into(), mae: 0.125, rmse: 1.0, loss_g: None, loss_d: None, loss_com: None },
        ],
    };
    assert_eq!(
        h.to_csv_string(),
        "epoch,split,mae,rmse,loss_g,loss_d,loss_com\n1,train,0.5,0.25,1.5,,0\n1,val,0.125,1,,,\n"
    );
    assert_eq!(h.split("val").count(), 1);
}

#[test]
fn batches_drop_singletons_and_cover_rest() {
    let s = Session::new(Family::Gan, &small_model(false), &TrainConfig { batch_size: 4, ..small_train() }).unwrap();
    let b = s.epoch_batches(9);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
    let b = s.epoch_batches(10);
    assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 10);
    let mut all: Vec<usize> = b.concat();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
}

#[test]
fn gan_steps_are_deterministic() {
    let data = file(Task::InterpolationRandom, 8, 16, 16, 3);
    let hashes = || {
        let mut s = Session::new(Family::Gan, &small_model(true), &small_train()).unwrap();
        let batches = s.epoch_batches(data.len());
        let mut out = Vec::new();
        for k in 0..5 {
            s.step(&data, &batches[k % batches.len()]).unwrap();
            out.push(s.param_hash());
        }
        out
    };
    let a = hashes();
    assert_eq!(a, hashes());
    assert!(a.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn history_is_reproducible_and_files_written() {
    let train = file(Task::Denoise, 8, 16, 16, 1);
    let val = file(Task::Denoise, 4, 16, 16, 2);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let s = train_gan(&small_model(true), &small_train(), &train, Some(&val), Some(dir.path())).unwrap();
        for f in ["history.csv", "last.qckp", "best.qckp"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(csv, s.history.to_csv_string());
        csv
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.lines().count(), 1 + 2 * 2);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let train = file(Task::InterpolationRandom, 8, 16, 16, 4);
    let mut s = Session::new(Family::Gan, &small_model(true), &small_train()).unwrap();
    s.run_epoch(&train, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.qckp");
    s.save(&path).unwrap();
    let r = Session::load(&path, Some(&small_model(true))).unwrap();
    assert_eq!(r.param_hash(), s.param_hash());
    assert_eq!(r.epoch, 1);
    assert_eq!(r.history, s.history);
    assert_eq!(r.opts, s.opts);
    let probe = file(Task::InterpolationRandom, 3, 16, 16, 9);
    assert_eq!(r.predict_file(&probe).unwrap(), s.predict_file(&probe).unwrap());
    let (Nets::Gan { g: g1, .. }, Nets::Gan { g: g2, .. }) = (&s.nets, &r.nets) else { panic!() };
    for (a, b) in g1.quantum_layers().iter().zip(g2.quantum_layers()) {
        assert_eq!(a.circuits(), b.circuits());
    }
}

#[test]
fn resume_equals_continuation() {
    let train = file(Task::InterpolationRandom, 8, 16, 16, 5);
    let cfg = TrainConfig { epochs: 3, ..small_train() };
    let mut full = Session::new(Family::Gan, &small_model(true), &cfg).unwrap();
    full.fit(&train, None, None, |_| {}).unwrap();

    let mut part = Session::new(Family::Gan, &small_model(true), &cfg).unwrap();
    part.run_epoch(&train, None).unwrap();
    let ckpt = part.to_checkpoint();
    let mut resumed = Session::from_checkpoint(&ckpt, None).unwrap();
    resumed.fit(&train, None, None, |_| {}).unwrap();
    assert_eq!(resumed.param_hash(), full.param_hash());
    assert_eq!(resumed.history, full.history);
}

#[test]
fn truncated_checkpoint_names_the_entry() {
    let s = Session::new(Family::Unet, &NetConfig { height: 16, width: 16, base_channels: 4, n_qubits: 2, ..NetConfig::default() }, &small_train()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.qckp");
    s.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = Session::load(&path, None).err().unwrap().to_string();
    assert!(err.contains("truncated") && err.contains("entry"), "{err}");
    std::fs::write(&path, b"NOPE").unwrap();
    assert!(Session::load(&path, None).is_err());
}

#[test]
fn quantum_checkpoint_refuses_classical_twin() {
    let s = Session::new(Family::Gan, &small_model(true), &small_train()).unwrap();
    let err = Session::from_checkpoint(&s.to_checkpoint(), Some(&small_model(false))).err().unwrap();
    assert!(matches!(err, TrainError::Mismatch(_)));
}

#[test]
fn complementarity_bounded_and_disabled_exactly() {
    let train = file(Task::InterpolationRandom, 8, 16, 16, 6);
    let mut s = Session::new(Family::Gan, &small_model(true), &small_train()).unwrap();
    let st = s.run_epoch(&train, None).unwrap();
    assert!(st.steps.iter().all(|l| (0.0..=1.0).contains(&l.loss_com)));

    let mut cfg = small_train();
    cfg.loss.lambda_com = 0.0;
    let mut s = Session::new(Family::Unet, &NetConfig { height: 64, width: 16, base_channels: 4, n_qubits: 2, ..NetConfig::default() }, &cfg).unwrap();
    // Enough samples that the input band is populated.
    let lfe = file(Task::Lfe, 8, 64, 16, 7);
    let st = s.run_epoch(&lfe, None).unwrap();
    for l in &st.steps {
        // L1 alone: loss equals the step's mean absolute error.
        assert!((l.loss_g - l.abs_err / l.count as f64).abs() < 1e-6 * l.loss_g.max(1.0));
        assert!(l.loss_com > 0.0, "{l:?}");
    }
}

#[test]
fn empty_or_mismatched_data_is_rejected() {
    let empty = file(Task::InterpolationRandom, 0, 16, 16, 0);
    assert!(matches!(train_gan(&small_model(false), &small_train(), &empty, None, None), Err(TrainError::Config(_))));
    let lfe = file(Task::Lfe, 4, 16, 16, 0);
    assert!(train_gan(&small_model(false), &small_train(), &lfe, None, None).is_err());
    let wrong = file(Task::Denoise, 4, 32, 16, 0);
    assert!(matches!(
        train_gan(&small_model(false), &small_train(), &wrong, None, None),
        Err(TrainError::Mismatch(_))
    ));
}

