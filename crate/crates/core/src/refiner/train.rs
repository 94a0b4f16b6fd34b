use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossTerms, LossWeights};
use super::model::{refine, sequence_matrix, RefinerParams};
use crate::encoding::SceneEncoder;
use crate::exec::Execution;
use crate::geometry::{MotionSequence, PoseState, Skeleton, Vec3};
use crate::init::{initialize_motion, ConstantPose};
use crate::nn::{AdamW, AdamWConfig, Tensors};
use crate::scene::SceneModel;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Factor applied to the learning rate every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1800,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            lr_decay: 0.3,
            decay_every: 1000,
            batch_size: 16,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::InvalidArgument("learning rate, batch size and decay period must be positive".into()));
        }
        self.weights.validate()
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// One training pair: initialized frames, per-frame encoder input, and
/// ground-truth frames.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub id: u32,
    pub poses: Array2<f64>,
    pub scene: Array2<f64>,
    pub target: Array2<f64>,
}

impl TrainingSample {
    pub fn new(id: u32, init: &MotionSequence, target: &MotionSequence, scene: Array2<f64>) -> Result<Self> {
        if init.len() != target.len() || scene.nrows() != init.len() {
            return Err(Error::Shape(format!(
                "init {} frames, target {}, scene rows {}",
                init.len(),
                target.len(),
                scene.nrows()
            )));
        }
        Ok(TrainingSample { id, poses: sequence_matrix(init), scene, target: sequence_matrix(target) })
    }
}

/// Builds samples from ground-truth sequences: the initialization starts at
/// each sequence's first frame and aims at its goal.
pub fn prepare_samples(
    sequences: &[MotionSequence],
    scenes: &BTreeMap<String, SceneModel>,
    encoder: &SceneEncoder,
    xc: &ConstantPose,
    skeleton: &Skeleton,
    exec: Execution,
) -> Result<Vec<TrainingSample>> {
    exec.try_map(sequences, |seq| {
        let scene = scenes
            .get(&seq.scene_id)
            .ok_or_else(|| Error::InvalidArgument(format!("sequence {} refers to unknown scene {}", seq.id, seq.scene_id)))?;
        let init = initialize_motion(&seq.frames[0], seq.goal, seq.len(), xc, skeleton)?;
        let input = encoder.sequence_input(scene, skeleton, &init, Execution::Sequential)?;
        TrainingSample::new(seq.id, &init, seq, input)
    })
}

/// Loss terms and gradient summed over one sample.
pub fn sample_gradient(
    params: &RefinerParams,
    sample: &TrainingSample,
    weights: &LossWeights,
    skeleton: &Skeleton,
) -> Result<(LossTerms, usize, RefinerParams)> {
    let mask = vec![true; sample.poses.nrows()];
    let (y, cache) = params.forward_cached(&sample.poses.view(), &sample.scene.view(), &mask)?;
    let (terms, count, dy) = loss_and_grad(&y.view(), &sample.target.view(), &mask, weights, skeleton)?;
    let grad = params.backward(&sample.scene.view(), &cache, &dy.view());
    Ok((terms, count, grad))
}

#[derive(Clone, Debug)]
pub struct BatchGradient {
    /// Mean per-frame terms over the batch.
    pub terms: LossTerms,
    pub loss: f64,
    pub frames: usize,
    pub grad: RefinerParams,
}

/// Frame-weighted mean loss and gradient. Samples are reduced in id order
/// whatever order they arrive in, so the sums are reproducible bit for bit.
pub fn batch_gradient(
    params: &RefinerParams,
    batch: &[&TrainingSample],
    weights: &LossWeights,
    skeleton: &Skeleton,
    exec: Execution,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut batch = batch.to_vec();
    batch.sort_by_key(|s| s.id);
    let parts = exec.try_map(&batch, |s| sample_gradient(params, s, weights, skeleton))?;
    let mut iter = parts.into_iter();
    let (mut terms, mut frames, mut grad) = iter.next().expect("non-empty");
    for (t, c, g) in iter {
        terms.add(&t);
        frames += c;
        grad.add_assign(&g);
    }
    let inv = 1.0 / frames as f64;
    grad.scale(inv);
    let terms = terms.scaled(inv);
    Ok(BatchGradient { loss: terms.weighted(weights), terms, frames, grad })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub trans: f64,
    pub joint: f64,
    pub rot: f64,
    pub fk: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,loss,trans,joint,rot,fk";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:.9},{:.9},{:.9},{:.9},{:.9}",
            self.epoch, self.lr, self.loss, self.trans, self.joint, self.rot, self.fk
        )
    }
}

pub struct TrainOutcome {
    pub params: RefinerParams,
    pub log: Vec<EpochLog>,
}

/// AdamW over shuffled mini-batches; results depend only on the seed.
pub fn train(
    mut params: RefinerParams,
    samples: &[TrainingSample],
    config: &TrainConfig,
    skeleton: &Skeleton,
    exec: Execution,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut opt = AdamW::new(AdamWConfig { weight_decay: config.weight_decay, ..AdamWConfig::default() }, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut frames = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let step = match batch_gradient(&params, &batch, &config.weights, skeleton, exec) {
                Ok(s) if s.loss.is_finite() && s.grad.all_finite() => s,
                Ok(_) | Err(Error::NonFiniteLoss) => {
                    return Err(Error::Diverged { epoch, last_good: Box::new(params) });
                }
                Err(e) => return Err(e),
            };
            opt.update(&mut params, &step.grad, lr);
            if !params.all_finite() {
                return Err(Error::Diverged { epoch, last_good: Box::new(params) });
            }
            sum.add(&step.terms.scaled(step.frames as f64));
            frames += step.frames;
        }
        let mean = sum.scaled(1.0 / frames as f64);
        let entry = EpochLog {
            epoch,
            lr,
            loss: mean.weighted(&config.weights),
            trans: mean.trans,
            joint: mean.joint,
            rot: mean.rot,
            fk: mean.fk,
        };
        log::debug!("epoch {epoch} lr {lr:e} loss {:.6}", entry.loss);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

/// Initialize, encode every frame, refine.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    params: &RefinerParams,
    encoder: &SceneEncoder,
    xc: &ConstantPose,
    skeleton: &Skeleton,
    x0: &PoseState,
    goal: Vec3,
    scene: &SceneModel,
    frames: usize,
    exec: Execution,
) -> Result<MotionSequence> {
    if encoder.kind != params.config.encoder {
        return Err(Error::InvalidArgument(format!(
            "encoder `{}` does not match the model's `{}`",
            encoder.kind, params.config.encoder
        )));
    }
    let mut init = initialize_motion(x0, goal, frames, xc, skeleton)?;
    init.scene_id = scene.id().to_string();
    let input = encoder.sequence_input(scene, skeleton, &init, exec)?;
    refine(params, &init, &input.view(), &vec![true; frames])
}

/// Refines every sample's initialization; used for training-set evaluation.
pub fn predict_samples(params: &RefinerParams, samples: &[TrainingSample], exec: Execution) -> Result<Vec<Array2<f64>>> {
    exec.try_map(samples, |s| {
        let mask = vec![true; s.poses.nrows()];
        params.forward(&s.poses.view(), &s.scene.view(), &mask)
    })
}

/// Convenience for matrices produced by the refiner.
pub fn matrix_to_frames(m: &ArrayView2<f64>) -> Result<Vec<PoseState>> {
    m.rows().into_iter().map(|r| PoseState::from_slice(&r.to_vec())).collect()
}
