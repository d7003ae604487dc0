//! Mini-batch Adam training with early stopping on the validation loss.

use std::io::Write;
use std::time::Instant;

use cfisac_autodiff::{Adam, AdamConfig, Graph, Tensor};
use cfisac_core::channel::SensingResponse;
use cfisac_core::dataset::Dataset;
use cfisac_core::linalg::CVec;
use cfisac_core::metrics::RegimeSpec;
use cfisac_core::rng::{domain, stream};
use rand::seq::SliceRandom;

use crate::error::{Result, StcibError};
use crate::loss::{batch_loss, rates, BatchData, Penalty};
use crate::model::{encode_inputs, Model};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSpec {
    pub regime: RegimeSpec,
    pub penalty: Penalty,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
}

impl TrainSpec {
    pub fn new(regime: RegimeSpec, seed: u64) -> Self {
        Self {
            regime,
            penalty: Penalty::default(),
            batch: 100,
            max_epochs: 150,
            patience: 20,
            lr: 1e-4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.regime.validate()?;
        if self.batch == 0 {
            return Err(StcibError::Spec("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(StcibError::Spec(format!("learning rate {} is invalid", self.lr)));
        }
        if !(self.penalty.comm >= 0.0 && self.penalty.sensing >= 0.0 && self.penalty.margin >= 0.0) {
            return Err(StcibError::Spec("penalty weights and margin must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss,seconds")?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{:.10e},{:.10e},{:.6}",
                r.epoch, r.train_loss, r.val_loss, r.seconds
            )?;
        }
        Ok(())
    }
}

/// Mean loss of `model` on `f_hat` with parameters held constant.
pub fn mean_loss(
    model: &Model,
    f_hat: &[Vec<CVec>],
    sensing: &SensingResponse,
    spec: &TrainSpec,
    budget: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in f_hat.chunks(spec.batch) {
        let mut g = Graph::new();
        let p = model.bind(&mut g, false);
        let input = g.constant(encode_inputs(chunk, model.arch.antennas)?);
        let fw = model.forward(&mut g, &p, input, budget)?;
        let data = BatchData::new(&mut g, chunk, sensing)?;
        let r = rates(&mut g, &data, fw.output, spec.regime.kappa)?;
        let loss = batch_loss(&mut g, &r, &spec.regime, spec.penalty)?;
        total += g.value(loss).item() * chunk.len() as f64;
    }
    Ok(total / f_hat.len().max(1) as f64)
}

/// Loss and parameter gradients of one mini-batch.
pub fn batch_gradients(
    model: &Model,
    f_hat: &[Vec<CVec>],
    sensing: &SensingResponse,
    spec: &TrainSpec,
    budget: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, true);
    let input = g.constant(encode_inputs(f_hat, model.arch.antennas)?);
    let fw = model.forward(&mut g, &p, input, budget)?;
    let data = BatchData::new(&mut g, f_hat, sensing)?;
    let r = rates(&mut g, &data, fw.output, spec.regime.kappa)?;
    let loss = batch_loss(&mut g, &r, &spec.regime, spec.penalty)?;
    g.backward(loss)?;
    let grads = p
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((g.value(loss).item(), grads))
}

/// Train in place on the estimated channels of `train`, keeping the
/// parameters with the lowest validation loss.
pub fn train(model: &mut Model, train: &Dataset, val: &Dataset, spec: &TrainSpec) -> Result<TrainReport> {
    spec.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(StcibError::Spec("training and validation sets must be non-empty".into()));
    }
    let budget = train.config.power_budget();
    let mut adam = Adam::new(
        AdamConfig {
            lr: spec.lr,
            ..AdamConfig::default()
        },
        model.params.tensors(),
    );
    let initial_val_loss = mean_loss(model, &val.f_hat, &val.sensing, spec, budget)?;
    let mut best = (0, initial_val_loss, model.params.clone());
    let mut epochs = Vec::with_capacity(spec.max_epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=spec.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut stream(spec.seed, domain::SHUFFLE, epoch as u64));
        let mut sum = 0.0;
        for (b, idx) in order.chunks(spec.batch).enumerate() {
            let batch: Vec<Vec<CVec>> = idx.iter().map(|&i| train.f_hat[i].clone()).collect();
            let (loss, grads) = batch_gradients(model, &batch, &train.sensing, spec, budget)?;
            if !loss.is_finite() || grads.iter().any(|t| t.data().iter().any(|x| !x.is_finite())) {
                return Err(StcibError::NonFinite {
                    epoch,
                    batch: b,
                    lr: spec.lr,
                });
            }
            adam.step(model.params.tensors_mut(), &grads)?;
            sum += loss * idx.len() as f64;
        }
        let val_loss = mean_loss(model, &val.f_hat, &val.sensing, spec, budget)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: sum / train.len() as f64,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
        if val_loss < best.1 {
            best = (epoch, val_loss, model.params.clone());
        } else if epoch - best.0 >= spec.patience {
            break;
        }
    }
    model.params = best.2;
    Ok(TrainReport {
        epochs,
        best_epoch: best.0,
        best_val_loss: best.1,
        initial_val_loss,
    })
}
