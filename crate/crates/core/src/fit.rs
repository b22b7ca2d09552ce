//! Epoch loop with validation-best checkpointing.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::EegSegmentSet;
use crate::hostnet::ClassifierModel;
use crate::nn::{softmax_cross_entropy, Parameterized};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::{Error, Mode, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            weight_decay: 1e-3,
            learning_rate: 1e-3,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        let negative = |v: f64| v.is_nan() || v < 0.0;
        if negative(self.learning_rate) || negative(self.weight_decay) {
            return Err(Error::InvalidConfig(
                "learning rate and weight decay must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A segment set restricted to some indices.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub set: &'a EegSegmentSet,
    pub indices: &'a [usize],
}

impl<'a> DataView<'a> {
    pub fn new(set: &'a EegSegmentSet, indices: &'a [usize]) -> Self {
        Self { set, indices }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: Option<Evaluation>,
    pub best_model: ClassifierModel<T>,
}

/// Inference-mode loss, accuracy and predictions over a view.
pub fn evaluate<T: Real>(model: &mut ClassifierModel<T>, view: DataView<'_>, batch_size: usize) -> Result<Evaluation> {
    if view.indices.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    let mut predictions = Vec::with_capacity(view.indices.len());
    let mut labels = Vec::with_capacity(view.indices.len());
    for chunk in view.indices.chunks(batch_size.max(1)) {
        let (x, y) = view.set.batch::<T>(chunk)?;
        let logits = model.forward(&x, Mode::Eval)?;
        let (loss, _) = softmax_cross_entropy(&logits, &y)?;
        total += loss.as_f64() * chunk.len() as f64;
        let k = model.n_classes();
        for row in logits.data().chunks_exact(k) {
            let arg = row
                .iter()
                .enumerate()
                .fold(
                    (0, T::neg_infinity()),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0;
            predictions.push(arg);
        }
        labels.extend(y);
    }
    model.clear_cache();
    let accuracy = crate::metrics::accuracy(&predictions, &labels)?;
    Ok(Evaluation {
        loss: total / view.indices.len() as f64,
        accuracy,
        predictions,
    })
}

/// Trains for every configured epoch (no early stop), keeping the model with
/// the lowest validation loss; the earliest epoch wins ties. Train loss is
/// re-evaluated in inference mode after each epoch. The test view, if any,
/// is scored with the kept model.
pub fn fit<T: Real>(
    mut model: ClassifierModel<T>,
    train: DataView<'_>,
    val: DataView<'_>,
    test: Option<DataView<'_>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome<T>> {
    cfg.validate()?;
    if train.indices.is_empty() || val.indices.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let adam = cfg.adam();
    let mut state = AdamState::default();
    model.reseed_dropout(cfg.seed);
    let mut order = train.indices.to_vec();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ClassifierModel<T>)> = None;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.copy_from_slice(train.indices);
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train.set.batch::<T>(chunk)?;
            let logits = model.forward(&x, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y).map_err(|e| annotate(e, epoch, b))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch} batch {b}")));
            }
            model.backward(&grad)?;
            adam_step(&mut model.params_mut(), &mut state, &adam).map_err(|e| annotate(e, epoch, b))?;
        }
        let train_loss = evaluate(&mut model, train, cfg.batch_size)?.loss;
        let val_loss = evaluate(&mut model, val, cfg.batch_size)?.loss;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("evaluation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&record);
        epochs.push(record);
        if best.as_ref().is_none_or(|(_, l, _)| val_loss < *l) {
            best = Some((epoch, val_loss, model.clone()));
        }
    }
    let (best_epoch, _, mut best_model) = best.expect("at least one epoch");
    let test = test
        .map(|view| evaluate(&mut best_model, view, cfg.batch_size))
        .transpose()?;
    Ok(FitOutcome {
        epochs,
        best_epoch,
        test,
        best_model,
    })
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, batch {batch})")),
        e => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{filled_montage, generate_synthetic, SynthSpec};
    use crate::hostnet::{build_model, HostNetConfig};
    use alloc::vec;

    fn tiny_set() -> EegSegmentSet {
        let m = filled_montage("m", 2, 3, 6, &[]).unwrap();
        let mut s = SynthSpec::localized(&m, 2, 2).unwrap();
        s.time_points = 40;
        s.segments_per_class = 12;
        s.seed = 1;
        generate_synthetic(&s).unwrap()
    }

    fn host() -> HostNetConfig {
        HostNetConfig {
            n_temporal_filters: 4,
            temporal_kernel_len: 5,
            pool_len: 12,
            pool_stride: 6,
            dropout_p: 0.5,
            n_classes: 2,
        }
    }

    #[test]
    fn single_epoch_is_best() {
        let set = tiny_set();
        let idx: Vec<usize> = (0..24).collect();
        let model = build_model::<f32>(&host(), 6, 40, None, None, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = fit(
            model,
            DataView::new(&set, &idx[..16]),
            DataView::new(&set, &idx[16..20]),
            Some(DataView::new(&set, &idx[20..])),
            &cfg,
            |_| {},
        )
        .unwrap();
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.epochs.len(), 1);
        assert!(out.test.is_some());
    }

    #[test]
    fn frozen_optimizer_keeps_loss_constant() {
        let set = tiny_set();
        let idx: Vec<usize> = (0..24).collect();
        let model = build_model::<f64>(&host(), 6, 40, None, None, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            learning_rate: 0.0,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let out = fit(
            model,
            DataView::new(&set, &idx[..16]),
            DataView::new(&set, &idx[16..]),
            None,
            &cfg,
            |_| {},
        )
        .unwrap();
        for r in &out.epochs[1..] {
            assert!((r.train_loss - out.epochs[0].train_loss).abs() < 1e-6);
        }
    }

    #[test]
    fn best_epoch_is_first_minimum_and_runs_reproduce() {
        let set = tiny_set();
        let idx: Vec<usize> = (0..24).collect();
        let montage = filled_montage("m", 2, 3, 6, &[]).unwrap();
        let run = || {
            let model = build_model::<f64>(&host(), 6, 40, Some(&montage), Some(2), 3).unwrap();
            let cfg = TrainConfig {
                epochs: 6,
                batch_size: 8,
                learning_rate: 0.01,
                seed: 3,
                ..TrainConfig::default()
            };
            fit(
                model,
                DataView::new(&set, &idx[..16]),
                DataView::new(&set, &idx[16..]),
                None,
                &cfg,
                |_| {},
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.epochs, b.epochs);
        let min = a.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        let first = a.epochs.iter().position(|r| r.val_loss == min).unwrap();
        assert_eq!(a.best_epoch, first);
    }

    #[test]
    fn rejects_bad_config() {
        let set = tiny_set();
        let idx = vec![0, 1];
        let model = build_model::<f32>(&host(), 6, 40, None, None, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(fit(
            model,
            DataView::new(&set, &idx),
            DataView::new(&set, &idx),
            None,
            &cfg,
            |_| {}
        )
        .is_err());
    }
}
