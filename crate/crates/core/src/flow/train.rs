use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlowModel, FlowOptions, FlowRegistry};
use crate::embeddings::{split_speaker_disjoint, Dataset, Sex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Fraction of speakers held out for validation; 0 validates on the
    /// training data itself.
    pub validation_fraction: f64,
    /// Anneal the learning rate to zero along a half cosine.
    pub cosine_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: crate::DEFAULT_SEED,
            validation_fraction: 0.1,
            cosine_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decay rates must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean NLL; epoch 0 is the untrained model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub points: Vec<(usize, f64, f64)>,
    pub best_epoch: usize,
}

impl TrainingCurve {
    pub fn initial_val(&self) -> f64 {
        self.points[0].2
    }

    pub fn best_val(&self) -> f64 {
        self.points[self.best_epoch].2
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_nll,val_nll\n");
        for (e, t, v) in &self.points {
            let _ = writeln!(s, "{e},{t},{v}");
        }
        s
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
}

impl Adam {
    const EPS: f64 = 1e-8;

    fn new(n: usize, beta1: f64, beta2: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn pairs(ds: &Dataset) -> Vec<(&[f64], usize)> {
    ds.records().iter().map(|r| (r.vec.as_slice(), r.sex.class())).collect()
}

/// Maximum-likelihood training with Adam on shuffled minibatches.
///
/// Returns the parameters with the lowest validation NLL seen, the
/// untrained model included, so the result never validates worse than the
/// starting point.
pub fn train(
    kind: &str,
    ds: &Dataset,
    delta: f64,
    opts: &FlowOptions,
    cfg: &TrainConfig,
) -> Result<(FlowModel, TrainingCurve)> {
    cfg.validate()?;
    for sex in Sex::BOTH {
        if ds.count_sex(sex) == 0 {
            return Err(Error::Training(format!("no {} records; both classes are required", sex.label())));
        }
    }
    let transform = FlowRegistry::default().create(kind, ds.dim(), opts)?;
    let mut model = FlowModel::new(transform, delta)?;

    let (train_ds, val_ds) = if cfg.validation_fraction > 0.0 {
        split_speaker_disjoint(ds, 1.0 - cfg.validation_fraction, cfg.seed)
            .map_err(|e| Error::Training(format!("validation split: {e}")))?
    } else {
        (ds.clone(), ds.clone())
    };
    let train_set = pairs(&train_ds);
    let val_set = pairs(&val_ds);

    let mut curve = TrainingCurve::default();
    let init_val = model.nll(&val_set)?;
    curve.points.push((0, model.nll(&train_set)?, init_val));
    let mut best = (init_val, model.transform().params());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f10e);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut params = model.transform().params();
    let mut adam = Adam::new(params.len(), cfg.beta1, cfg.beta2);
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * steps_per_epoch) as f64;
    let mut step = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let (loss, grad) = model
                .nll_and_grad(&batch)
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
            epoch_loss += loss * batch.len() as f64;
            let lr = if cfg.cosine_decay {
                0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * step as f64 / total_steps).cos())
            } else {
                cfg.learning_rate
            };
            adam.step(&mut params, &grad, lr);
            step += 1;
            model
                .transform_mut()
                .set_params(&params)
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
        }
        let val = model.nll(&val_set)?;
        curve.points.push((epoch, epoch_loss / train_set.len() as f64, val));
        if val < best.0 {
            best = (val, params.clone());
            curve.best_epoch = epoch;
        }
    }
    model.transform_mut().set_params(&best.1)?;
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{generate_synthetic, SynthConfig};

    fn data() -> Dataset {
        generate_synthetic(&SynthConfig {
            dim: 4,
            speakers_per_sex: 20,
            utts_per_speaker: 5,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_epochs_is_config_error() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let e = train("linear", &data(), 10.0, &FlowOptions::default(), &cfg).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn single_class_is_training_error() {
        let ds = data().subset(|r| r.sex == Sex::M).unwrap();
        let e = train("linear", &ds, 10.0, &FlowOptions::default(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Training(_)));
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(train("cubic", &data(), 10.0, &FlowOptions::default(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 32,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let opts = FlowOptions {
            blocks: 2,
            hidden: 8,
            ..FlowOptions::default()
        };
        for kind in ["linear", "coupling"] {
            let (a, ca) = train(kind, &data(), 10.0, &opts, &cfg).unwrap();
            let (b, cb) = train(kind, &data(), 10.0, &opts, &cfg).unwrap();
            assert_eq!(a.transform().params(), b.transform().params());
            assert_eq!(ca, cb);
            assert_eq!(ca.points.len(), 6);
            assert!(ca.best_val() <= ca.initial_val());
            let last = ca.points.last().unwrap().1;
            assert!(last < ca.points[0].1, "{kind} made no progress: {ca:?}");
        }
    }
}
