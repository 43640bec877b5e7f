use std::fs;

use spnet_core::model::SpNet;
use spnet_core::tensor::io as weights;
use spnet_harness::config::{AugmentConfig, RunConfig};
use spnet_harness::train::{train_toy, TrainReport, LOSS_LOG, REPORT_FILE, WEIGHTS_FILE};
use spnet_harness::{synth, HarnessError};

fn small_run(epochs: usize) -> RunConfig {
    let mut run = RunConfig::from_json(r#"{"model": {"input_size": 32}, "optimizer": {"lr": 0.003}}"#).unwrap();
    run.epochs = epochs;
    run
}

#[test]
fn schedule_divides_the_rate_every_interval() {
    let run = RunConfig::default();
    let lr = run.optimizer.lr;
    assert_eq!(run.optimizer.lr_at(0), lr);
    assert_eq!(run.optimizer.lr_at(59), lr);
    assert!((run.optimizer.lr_at(60) - lr / 10.0).abs() < 1e-18);
    assert!((run.optimizer.lr_at(130) - lr / 100.0).abs() < 1e-18);

    let mut run = small_run(3);
    run.optimizer.lr_decay_every_epochs = 2;
    let data = synth::generate(2, 32, 1);
    let trained = train_toy(&run, &data, None).unwrap();
    let lrs: Vec<f64> = trained.report.epochs.iter().map(|e| e.lr).collect();
    assert_eq!(lrs, [0.003, 0.003, 0.003 / 10.0]);
    assert_eq!(trained.report.epochs[0].epoch, 1);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let data = synth::generate(3, 32, 5);
    let mut run = small_run(4);
    run.augment = AugmentConfig { hflip: true, rotate: true, border_clip: true };
    let a = train_toy(&run, &data, None).unwrap();
    let b = train_toy(&run, &data, None).unwrap();
    assert_eq!(a.report, b.report);
    assert!(a.model.params().iter().zip(b.model.params().iter()).all(|((_, x), (_, y))| x == y));
    let c = train_toy(&run.clone().with_seed(6), &data, None).unwrap();
    assert_ne!(a.report.epochs, c.report.epochs);
}

#[test]
fn loss_goes_down_on_a_short_run() {
    let data = synth::generate(2, 32, 2);
    let trained = train_toy(&small_run(15), &data, None).unwrap();
    let r = &trained.report;
    assert!(r.final_loss < r.first_loss, "{} -> {}", r.first_loss, r.final_loss);
    assert_eq!(r.epochs.len(), 15);
    assert_eq!(r.samples, 2);
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth::generate(2, 32, 3);
    let run = small_run(2);
    let trained = train_toy(&run, &data, Some(dir.path())).unwrap();

    let log = fs::read_to_string(dir.path().join(LOSS_LOG)).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert_eq!(log.lines().next().unwrap(), "epoch,lr,mean_loss");

    let report: TrainReport = serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report, trained.report);

    let mut model = SpNet::new(run.model.clone()).unwrap();
    weights::load_into(model.params_mut(), dir.path().join(WEIGHTS_FILE)).unwrap();
    for ((_, a), (_, b)) in model.params().iter().zip(trained.model.params().iter()) {
        for (x, y) in a.value.data().iter().zip(b.value.data()) {
            assert_eq!(*x, f64::from(*y as f32));
        }
    }
}

#[test]
fn non_finite_input_stops_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = synth::generate(2, 32, 4);
    data[1].depth.data_mut()[17] = f64::NAN;
    let run = small_run(3);
    let err = train_toy(&run, &data, Some(dir.path())).err().expect("NaN input must fail");
    assert!(matches!(err, HarnessError::NonFinite { epoch: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(dir.path().join(WEIGHTS_FILE).exists());
    assert!(dir.path().join(LOSS_LOG).exists());
}

#[test]
fn invalid_runs_are_rejected() {
    let data = synth::generate(1, 32, 0);
    assert!(train_toy(&small_run(1), &[], None).is_err());
    let mut run = small_run(1);
    run.batch_size = 0;
    assert_eq!(train_toy(&run, &data, None).err().unwrap().exit_code(), 2);
    let run = small_run(1);
    let wrong_size = synth::generate(1, 64, 0);
    assert!(train_toy(&run, &wrong_size, None).is_err());
}
