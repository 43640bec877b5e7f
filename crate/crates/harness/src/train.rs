//! Toy training loop: Adam on the three-branch loss with step-decay schedule.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spnet_core::loss::total_loss;
use spnet_core::map::GrayMap;
use spnet_core::metrics::{mae, s_measure, EvalPair, ALPHA};
use spnet_core::model::{combine_specific_outputs, probabilities, SpNet};
use spnet_core::optim::Adam;
use spnet_core::tensor::{io as weights, precision, Graph, Tensor};

use crate::augment::augment;
use crate::config::RunConfig;
use crate::data::{stack, Sample};
use crate::{io, HarnessError, Result};

pub const LOSS_LOG: &str = "loss.csv";
pub const WEIGHTS_FILE: &str = "weights.salf";
pub const REPORT_FILE: &str = "train_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// One-based.
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

/// Which prediction map is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    Shared,
    /// Mean of the two modality-specific probability maps.
    CombinedSpecific,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingFit {
    pub mae: f64,
    pub s_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    pub epochs: Vec<EpochLog>,
    pub first_loss: f64,
    pub final_loss: f64,
    /// Fit of the shared map on the (unaugmented) training set.
    pub training_fit: TrainingFit,
}

pub struct Trained {
    pub model: SpNet,
    pub report: TrainReport,
}

fn batches(n: usize, batch_size: usize, order: &[usize]) -> Vec<Vec<usize>> {
    debug_assert_eq!(order.len(), n);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "lr", "mean_loss"])?;
    for e in log {
        w.write_record([e.epoch.to_string(), e.lr.to_string(), e.mean_loss.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Trains a fresh model. With `out`, writes the loss log, the final weights
/// and a JSON report there. A non-finite loss or gradient stops training; the
/// weights from before that step are written and `NonFinite` returned.
pub fn train_toy(run: &RunConfig, samples: &[Sample], out: Option<&Path>) -> Result<Trained> {
    run.validate()?;
    if samples.is_empty() {
        return Err(HarnessError::validation("training set is empty"));
    }
    precision::scoped(run.precision, || train_inner(run, samples, out))
}

fn train_inner(run: &RunConfig, samples: &[Sample], out: Option<&Path>) -> Result<Trained> {
    if let Some(dir) = out {
        io::create_dir(dir)?;
    }
    let mut model = SpNet::new(run.model.clone())?;
    let mut adam = Adam::new(run.optimizer.clone(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut log = Vec::with_capacity(run.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..run.epochs {
        let lr = run.optimizer.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in batches(samples.len(), run.batch_size, &order) {
            let items: Vec<Sample> = batch
                .iter()
                .map(|&i| if run.augment.any() { augment(&samples[i], &run.augment, &mut rng) } else { samples[i].clone() })
                .collect();
            let refs: Vec<&Sample> = items.iter().collect();
            let (rgb, depth, gt) = stack(&refs)?;

            let mut g = Graph::new();
            let (r, d) = (g.input(rgb), g.input(depth));
            let outputs = model.forward(&mut g, r, d)?;
            let loss = total_loss(&mut g, &outputs, &gt, &run.loss)?;
            let value = g.value(loss).item()?;
            let finite_grads = value.is_finite() && {
                model.params_mut().zero_grad();
                g.backward(loss, model.params_mut())?;
                model.params().ids().all(|id| model.params().grad(id).is_none_or(|gr| gr.iter().all(|v| v.is_finite())))
            };
            if !finite_grads {
                let what = if value.is_finite() { "gradient" } else { "loss" };
                if let Some(dir) = out {
                    weights::save(model.params(), dir.join(WEIGHTS_FILE))?;
                    write_loss_log(&dir.join(LOSS_LOG), &log)?;
                }
                return Err(HarnessError::NonFinite { what: what.into(), epoch: epoch + 1 });
            }
            adam.step(model.params_mut(), lr);
            loss_sum += value * batch.len() as f64;
        }
        let mean_loss = loss_sum / samples.len() as f64;
        if epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == run.epochs {
            info!("epoch {:>4}  lr {:.1e}  loss {:.6}", epoch + 1, lr, mean_loss);
        }
        log.push(EpochLog { epoch: epoch + 1, lr, mean_loss });
    }

    let preds = predict_maps(&model, samples, run.batch_size, OutputMap::Shared)?;
    let training_fit = fit(samples, &preds)?;
    let report = TrainReport {
        samples: samples.len(),
        first_loss: log[0].mean_loss,
        final_loss: log[log.len() - 1].mean_loss,
        epochs: log,
        training_fit,
    };
    if let Some(dir) = out {
        write_loss_log(&dir.join(LOSS_LOG), &report.epochs)?;
        weights::save(model.params(), dir.join(WEIGHTS_FILE))?;
        io::write_json(dir.join(REPORT_FILE), &report)?;
    }
    Ok(Trained { model, report })
}

/// Probability maps for `samples`, evaluated in consecutive batches of
/// `batch_size` (batch normalization uses the statistics of each batch).
pub fn predict_maps(model: &SpNet, samples: &[Sample], batch_size: usize, output: OutputMap) -> Result<Vec<GrayMap>> {
    let mut maps = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (rgb, depth, _) = stack(&refs)?;
        let out = model.predict(&rgb, &depth)?;
        let probs: Tensor = match output {
            OutputMap::Shared => probabilities(&out.s_shared),
            OutputMap::CombinedSpecific => match (&out.s_rgb, &out.s_depth) {
                (Some(r), Some(d)) => combine_specific_outputs(r, d)?,
                _ => return Err(HarnessError::validation("model has no modality-specific decoders to combine")),
            },
        };
        for n in 0..chunk.len() {
            maps.push(GrayMap::from_tensor_plane(&probs, n, 0));
        }
    }
    Ok(maps)
}

/// Mean MAE and S-measure of `preds` against the sample masks.
pub fn fit(samples: &[Sample], preds: &[GrayMap]) -> Result<TrainingFit> {
    let (mut m, mut s) = (0.0, 0.0);
    for (sample, pred) in samples.iter().zip(preds) {
        let pair = EvalPair::new(pred.clone(), GrayMap::from_tensor_plane(&sample.gt, 0, 0))?;
        m += mae(&pair);
        s += s_measure(&pair, ALPHA);
    }
    let n = samples.len() as f64;
    Ok(TrainingFit { mae: m / n, s_measure: s / n })
}
