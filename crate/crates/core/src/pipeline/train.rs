use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TransitionDataset;
use crate::error::{Error, Result};
use crate::fosae::{anneal_tau, save_checkpoint, CheckpointManifest, FosaeConfig, FosaeModel, Sampling};
use crate::nn::{mse, rng_from_seed, AdamConfig, AdamState, Graph, Tensor};
use crate::scalar::Scalar;

/// Observations per evaluation batch.
const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Use at most this many distinct training states.
    pub max_train_states: Option<usize>,
    /// Use at most this many distinct test states.
    pub max_test_states: Option<usize>,
    /// Write the best model here every time it improves.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop once the test per-object error falls to this value.
    pub stop_below_object_error: Option<f64>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

/// Metrics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub tau: f64,
    /// Mean training loss under Gumbel-Softmax sampling.
    pub train_loss: f64,
    /// Per-element squared error of the deterministic reconstruction.
    pub test_mse: f64,
    /// Squared error summed over each object's features, averaged over objects.
    pub test_object_error: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,tau,train_loss,test_mse,test_object_error,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.8},{:.8},{:.8},{:.3}",
            self.epoch, self.tau, self.train_loss, self.test_mse, self.test_object_error, self.seconds
        )
    }
}

/// Reconstruction quality of a model on a set of observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub mse: f64,
    pub object_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    /// Model at the epoch with the lowest test error.
    pub model: FosaeModel<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn best(&self) -> &EpochMetrics {
        &self.history[self.best_epoch]
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(EpochMetrics::CSV_HEADER);
        out.push('\n');
        for m in &self.history {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TrainError<T: Scalar> {
    /// The training loss became NaN; carries the best model seen before.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Option<Box<TrainOutcome<T>>>,
    },
    #[error(transparent)]
    Failed(#[from] Error),
}

/// Deterministic (argmax) reconstruction error over `states`.
pub fn evaluate<T: Scalar>(model: &FosaeModel<T>, data: &TransitionDataset, states: &[&[f32]]) -> Result<Reconstruction> {
    if states.is_empty() {
        return Ok(Reconstruction {
            mse: 0.0,
            object_error: 0.0,
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in states.chunks(EVAL_CHUNK) {
        let x = data.stack::<T>(chunk);
        let recon = model.reconstruct(&x)?;
        sum += mse(recon.data(), x.data()).to_f64_lossy() * x.len() as f64;
        count += x.len();
    }
    let mse = sum / count as f64;
    Ok(Reconstruction {
        mse,
        object_error: mse * model.config().num_features as f64,
    })
}

/// Minibatch Adam on the reconstruction loss, annealing the Gumbel-Softmax
/// temperature once per epoch. Trains on the distinct states of the
/// training pairs and selects the epoch with the lowest test error.
pub fn train<T: Scalar>(
    config: &FosaeConfig,
    data: &TransitionDataset,
    opts: &TrainOptions,
) -> std::result::Result<TrainOutcome<T>, TrainError<T>> {
    config.validate()?;
    let m = &data.manifest;
    if m.num_objects != config.num_objects || m.num_features != config.num_features {
        return Err(Error::dim(
            "train",
            &[m.num_objects, m.num_features],
            &[config.num_objects, config.num_features],
        )
        .into());
    }
    let mut train_states = data.distinct_states(data.train_pairs());
    let mut test_states = data.distinct_states(data.test_pairs());
    if let Some(k) = opts.max_train_states {
        train_states.truncate(k);
    }
    if let Some(k) = opts.max_test_states {
        test_states.truncate(k);
    }
    if train_states.is_empty() {
        return Err(Error::Validation("no training states".into()).into());
    }
    if test_states.is_empty() {
        test_states = train_states.clone();
    }

    let mut model = FosaeModel::<T>::new(config.clone())?;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut rng = rng_from_seed(config.seed ^ 0x5eed_f05a_e000_0001);
    let mut order: Vec<usize> = (0..train_states.len()).collect();
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, FosaeModel<T>)> = None;
    let mut batch_rows: Vec<&[f32]> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let tau = anneal_tau(epoch, config);
        let tau_t = T::from_f64_lossy(tau);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            batch_rows.clear();
            batch_rows.extend(idx.iter().map(|&i| train_states[i]));
            let x: Tensor<T> = data.stack(&batch_rows);
            let (att_noise, pn_noise) = model.sample_noise(idx.len(), &mut rng);
            let mut g = Graph::new();
            let vars = model.build(
                &mut g,
                &x,
                Sampling::Gumbel {
                    attention: &att_noise,
                    predicates: &pn_noise,
                    tau: tau_t,
                },
            )?;
            let loss = g.value(vars.loss).data()[0].to_f64_lossy();
            if !loss.is_finite() {
                return Err(diverged(epoch, best, history));
            }
            let mut grads = g.backward(vars.loss);
            let grads: Vec<Vec<T>> = vars
                .params
                .iter()
                .zip(model.params())
                .map(|(v, p)| grads.take(*v).unwrap_or_else(|| vec![T::zero(); p.len()]))
                .collect();
            if adam.step(model.params_mut(), &grads).is_err() {
                return Err(diverged(epoch, best, history));
            }
            loss_sum += loss;
            batches += 1;
        }
        let eval = evaluate(&model, data, &test_states)?;
        let metrics = EpochMetrics {
            epoch,
            tau,
            train_loss: loss_sum / batches.max(1) as f64,
            test_mse: eval.mse,
            test_object_error: eval.object_error,
            seconds: started.elapsed().as_secs_f64(),
        };
        if opts.verbose {
            eprintln!("{}", metrics.csv_row());
        }
        let improved = best
            .as_ref()
            .is_none_or(|(e, _)| metrics.test_mse < history[*e].test_mse);
        history.push(metrics);
        if improved {
            best = Some((epoch, model.clone()));
            if let Some(dir) = &opts.checkpoint_dir {
                let mut manifest = CheckpointManifest::for_model(&model, epoch);
                let last = history.last().expect("just pushed");
                manifest.metrics = serde_json::to_value(last)
                    .ok()
                    .and_then(|v| v.as_object().cloned())
                    .unwrap_or_default();
                save_checkpoint(dir, &model, &manifest)?;
            }
        }
        if let Some(limit) = opts.stop_below_object_error {
            if history.last().is_some_and(|m| m.test_object_error <= limit) {
                break;
            }
        }
    }
    let (best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

fn diverged<T: Scalar>(epoch: usize, best: Option<(usize, FosaeModel<T>)>, history: Vec<EpochMetrics>) -> TrainError<T> {
    TrainError::Diverged {
        epoch,
        last_good: best.map(|(best_epoch, model)| {
            Box::new(TrainOutcome {
                model,
                best_epoch,
                history,
            })
        }),
    }
}
