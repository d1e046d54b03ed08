use std::f64::consts::PI;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{argmax, predict, EncoderParams, ForwardTrace};
use crate::error::{Error, Result};
use crate::geometry::{Dataset, PointCloud};
use crate::rng::{mix_seed, rng_from_seed, sample_rng, Rng};

/// Per-sample subsampling hook, called with the parameters as they are at
/// the current step.
pub trait TrainSampler {
    fn crop(&self, params: &EncoderParams, cloud: &PointCloud, rng: &mut Rng)
        -> Result<PointCloud>;

    /// Whether [`TrainSampler::crop_indices`] is implemented.
    fn uses_trace(&self) -> bool {
        false
    }

    /// The same selection as `crop`, as indices into the cloud, computed from
    /// a forward trace of the full cloud. Must consume `rng` exactly like
    /// `crop` does.
    fn crop_indices(&self, _trace: &ForwardTrace, _rng: &mut Rng) -> Result<Vec<usize>> {
        Err(Error::InvalidArgument(
            "sampler has no trace-based path".into(),
        ))
    }
}

impl<F> TrainSampler for F
where
    F: Fn(&EncoderParams, &PointCloud, &mut Rng) -> Result<PointCloud>,
{
    fn crop(
        &self,
        params: &EncoderParams,
        cloud: &PointCloud,
        rng: &mut Rng,
    ) -> Result<PointCloud> {
        self(params, cloud, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cosine-anneal the learning rate towards zero over the run.
    pub cosine: bool,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Random anisotropic scaling in `[2/3, 3/2]` per axis.
    pub augment_scale: bool,
    /// Random translation in `[-0.2, 0.2]` per axis.
    pub augment_translate: bool,
    /// Start from an all-zero output layer.
    pub zero_head: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 60,
            batch_size: 32,
            cosine: true,
            optimizer: Optimizer::Adam,
            seed: 0,
            augment_scale: false,
            augment_translate: false,
            zero_head: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine {
            0.5 * self.learning_rate * (1.0 + (PI * epoch as f64 / self.epochs as f64).cos())
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy (or
    /// training accuracy when no validation set is given). Ties go to the
    /// later epoch.
    pub params: EncoderParams,
    pub best_epoch: usize,
    /// Loss of the very first optimization step.
    pub first_step_loss: f64,
    pub history: Vec<EpochStats>,
}

struct Adam {
    m: EncoderParams,
    v: EncoderParams,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn augment(cloud: &PointCloud, config: &TrainConfig, rng: &mut Rng) -> Result<PointCloud> {
    if !config.augment_scale && !config.augment_translate {
        return Ok(cloud.clone());
    }
    let scale: [f64; 3] = if config.augment_scale {
        [0, 1, 2].map(|_| rng.gen_range(2.0 / 3.0..=1.5))
    } else {
        [1.0; 3]
    };
    let shift: [f64; 3] = if config.augment_translate {
        [0, 1, 2].map(|_| rng.gen_range(-0.2..=0.2))
    } else {
        [0.0; 3]
    };
    let pts: Vec<[f64; 3]> = (0..cloud.len())
        .map(|i| {
            let p = cloud.point(i);
            [0, 1, 2].map(|d| p[d] * scale[d] + shift[d])
        })
        .collect();
    PointCloud::from_f64(&pts)
}

fn accuracy(params: &EncoderParams, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for s in &data.samples {
        if predict(params, &s.cloud)?.0 == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Mini-batch training with cross-entropy loss.
///
/// Each sample of each epoch draws from its own RNG stream, so the result is
/// a pure function of the data, the config and the sampler.
pub fn train(
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
    sampler: Option<&dyn TrainSampler>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.num_classes() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least 2 classes".into(),
        ));
    }
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut params = EncoderParams::init(train_set.num_classes(), mix_seed(config.seed, 0xC0FFEE))?;
    if config.zero_head {
        params.zero_head();
    }
    let mut adam = Adam {
        m: params.zeros_like(),
        v: params.zeros_like(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = rng_from_seed(mix_seed(config.seed, 0x5EED));

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, EncoderParams)> = None;
    let mut first_step_loss = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = config.lr_at(epoch);
        let epoch_seed = mix_seed(config.seed, 1 + epoch as u64);
        let (mut loss_sum, mut correct) = (0.0, 0usize);

        for batch in order.chunks(config.batch_size) {
            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &idx in batch {
                let sample = &train_set.samples[idx];
                let mut rng = sample_rng(epoch_seed, idx as u64);
                let cloud = augment(&sample.cloud, config, &mut rng)?;
                let (loss, probs) = match sampler {
                    Some(s) if s.uses_trace() => {
                        let (trace, cache) = params.forward_cached(&cloud)?;
                        let rows = s.crop_indices(&trace, &mut rng)?;
                        params.backward(
                            &trace.per_point_features,
                            &cache,
                            Some(&rows),
                            sample.label,
                            scale,
                            &mut grads,
                        )?
                    }
                    Some(s) => {
                        let cropped = s.crop(&params, &cloud, &mut rng)?;
                        params.accumulate_grads(&cropped, sample.label, scale, &mut grads)?
                    }
                    None => params.accumulate_grads(&cloud, sample.label, scale, &mut grads)?,
                };
                batch_loss += loss;
                if argmax(&probs) == sample.label {
                    correct += 1;
                }
            }
            first_step_loss.get_or_insert(batch_loss * scale);
            loss_sum += batch_loss;
            match config.optimizer {
                Optimizer::Adam => adam.step(&mut params, &grads, lr),
                Optimizer::Sgd => {
                    for (p, g) in params.tensors_mut().zip(grads.tensors()) {
                        for (pi, gi) in p.iter_mut().zip(g) {
                            *pi -= lr * gi;
                        }
                    }
                }
            }
            if !params.is_finite() {
                return Err(Error::NumericOverflow {
                    layer: "parameters",
                });
            }
        }

        let train_accuracy = correct as f64 / train_set.len() as f64;
        let val_accuracy = val_set
            .filter(|v| !v.is_empty())
            .map(|v| accuracy(&params, v))
            .transpose()?;
        let score = val_accuracy.unwrap_or(train_accuracy);
        if best.as_ref().is_none_or(|(b, _, _)| score >= *b) {
            best = Some((score, epoch, params.clone()));
        }
        history.push(EpochStats {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / train_set.len() as f64,
            train_accuracy,
            val_accuracy,
        });
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch,
        first_step_loss: first_step_loss.unwrap_or(f64::NAN),
        history,
    })
}
