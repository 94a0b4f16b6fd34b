//! End-to-end steps shared by the command line and the test suites:
//! training from a corpus, generating predictions and scoring them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::LoadedCorpus;
use crate::encoding::{CylinderBasis, EncoderKind, RandomFourierFeatures, SceneEncoder};
use crate::exec::Execution;
use crate::geometry::{MotionSequence, SequenceLabel};
use crate::io::{self, Checkpoint};
use crate::metrics::{evaluate, EvalOptions, Evaluation, SplitSpec, Thresholds};
use crate::refiner::{generate, prepare_samples, train, EpochLog, ModelConfig, NormStats, RefinerParams, TrainConfig};
use crate::scene::SceneModel;
use crate::{Error, Result};

/// Everything a training or evaluation run is parameterized by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub thresholds: Thresholds,
    pub root_only_orientation: bool,
    pub basis_seed: u64,
    pub feature_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            thresholds: Thresholds::default(),
            root_only_orientation: false,
            basis_seed: 0,
            feature_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.thresholds.validate()
    }

    pub fn hash(&self) -> String {
        io::config_hash(self)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions { thresholds: self.thresholds, root_only_orientation: self.root_only_orientation }
    }
}

/// Scenes as the given encoder sees them: `pointfeat` needs per-point
/// features, which are synthetic Fourier features of the point positions.
pub fn scenes_for(
    kind: EncoderKind,
    scenes: &BTreeMap<String, SceneModel>,
    feature_seed: u64,
) -> Result<BTreeMap<String, SceneModel>> {
    let mut out = scenes.clone();
    if kind == EncoderKind::PointFeat {
        let rff = RandomFourierFeatures::standard(feature_seed);
        for scene in out.values_mut() {
            let f = rff.features(scene.cloud().points());
            scene.set_point_features(f)?;
        }
    }
    Ok(out)
}

/// Reaching sequences whose ids are listed, in id order; all reaching
/// sequences when `ids` is `None`.
pub fn select(sequences: &[MotionSequence], ids: Option<&[u32]>) -> Result<Vec<MotionSequence>> {
    let by_id: BTreeMap<u32, &MotionSequence> = sequences.iter().map(|s| (s.id, s)).collect();
    match ids {
        None => Ok(sequences.iter().filter(|s| s.label == SequenceLabel::Reaching).cloned().collect()),
        Some(ids) => {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            ids.iter()
                .map(|id| {
                    by_id.get(id).map(|s| (*s).clone()).ok_or_else(|| Error::InvalidArgument(format!("no sequence with id {id}")))
                })
                .collect()
        }
    }
}

pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Builds the initial model (normalization from the training targets) and
/// trains it. With zero epochs the checkpoint holds the initial weights.
pub fn train_run(corpus: &LoadedCorpus, split: Option<&SplitSpec>, run: &RunConfig, exec: Execution) -> Result<TrainRun> {
    run.validate()?;
    let seqs = select(&corpus.sequences, split.map(|s| s.train.as_slice()))?;
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let kind = run.model.encoder;
    let scenes = scenes_for(kind, &corpus.scenes, run.feature_seed)?;
    let basis = CylinderBasis::standard(run.basis_seed);
    let encoder = SceneEncoder::new(kind, basis.clone(), &corpus.skeleton);
    let samples = prepare_samples(&seqs, &scenes, &encoder, &corpus.constant_pose, &corpus.skeleton, exec)?;
    let targets: Vec<_> = samples.iter().map(|s| &s.target).collect();
    let stats = NormStats::from_matrices(&targets)?;
    let params = RefinerParams::new(run.model.clone(), stats, run.train.seed)?;
    let out = train(params, &samples, &run.train, &corpus.skeleton, exec)?;
    Ok(TrainRun {
        checkpoint: Checkpoint {
            params: out.params,
            basis,
            constant_pose: corpus.constant_pose.clone(),
            skeleton_hash: corpus.skeleton.hash(),
            config_hash: run.hash(),
            feature_seed: run.feature_seed,
            epochs: run.train.epochs,
        },
        log: out.log,
    })
}

fn check_skeleton(ck: &Checkpoint, corpus: &LoadedCorpus) -> Result<()> {
    if ck.skeleton_hash != corpus.manifest.skeleton_hash {
        return Err(Error::HashMismatch(format!(
            "checkpoint skeleton {} vs corpus skeleton {}",
            ck.skeleton_hash, corpus.manifest.skeleton_hash
        )));
    }
    Ok(())
}

/// Predicts every selected sequence from its first frame and goal, with the
/// ground-truth length. Predictions carry the ground truth's metadata.
pub fn generate_run(
    ck: &Checkpoint,
    corpus: &LoadedCorpus,
    ids: Option<&[u32]>,
    exec: Execution,
) -> Result<Vec<MotionSequence>> {
    check_skeleton(ck, corpus)?;
    let truths = select(&corpus.sequences, ids)?;
    let kind = ck.params.config.encoder;
    let scenes = scenes_for(kind, &corpus.scenes, ck.feature_seed)?;
    let encoder = SceneEncoder::new(kind, ck.basis.clone(), &corpus.skeleton);
    exec.try_map(&truths, |t| {
        let scene = scenes
            .get(&t.scene_id)
            .ok_or_else(|| Error::InvalidArgument(format!("sequence {} refers to unknown scene {}", t.id, t.scene_id)))?;
        let mut p = generate(
            &ck.params,
            &encoder,
            &ck.constant_pose,
            &corpus.skeleton,
            &t.frames[0],
            t.goal,
            scene,
            t.len(),
            Execution::Sequential,
        )?;
        p.id = t.id;
        p.task_id = t.task_id;
        p.scene_id = t.scene_id.clone();
        p.label = t.label;
        p.fps = t.fps;
        Ok(p)
    })
}

/// Scores predictions against the corpus sequences with the same ids.
pub fn evaluate_run(
    corpus: &LoadedCorpus,
    predictions: &[MotionSequence],
    options: &EvalOptions,
    exec: Execution,
) -> Result<Evaluation> {
    let ids: Vec<u32> = predictions.iter().map(|p| p.id).collect();
    let truths = select(&corpus.sequences, Some(&ids))?;
    let mut preds = predictions.to_vec();
    preds.sort_by_key(|p| p.id);
    evaluate(&preds, &truths, &corpus.scenes, &corpus.skeleton, options, exec)
}

/// Evaluates a checkpoint against a corpus, refusing a skeleton mismatch.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    corpus: &LoadedCorpus,
    ids: Option<&[u32]>,
    options: &EvalOptions,
    exec: Execution,
) -> Result<Evaluation> {
    let preds = generate_run(ck, corpus, ids, exec)?;
    evaluate_run(corpus, &preds, options, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_procedural, load_corpus, write_corpus, CorpusConfig};
    use crate::geometry::Skeleton;

    fn corpus(dir: &std::path::Path) -> LoadedCorpus {
        let skel = Skeleton::body22();
        let cfg = CorpusConfig { scenes: 1, tasks_per_scene: 2, sequences_per_task: 2, point_count: 256, ..Default::default() };
        let c = generate_procedural(&cfg, &skel, Execution::Parallel).unwrap();
        write_corpus(dir, &c, &cfg, &skel).unwrap();
        load_corpus(dir).unwrap()
    }

    fn tiny(kind: EncoderKind) -> RunConfig {
        RunConfig {
            model: ModelConfig { d_model: 8, heads: 2, d_ff: 8, blocks: 1, encoder: kind, bps_hidden: 4, residual_output: false },
            train: TrainConfig { epochs: 2, learning_rate: 1e-3, batch_size: 2, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn ground_truth_scores_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(dir.path());
        let e = evaluate_run(&c, &c.sequences, &EvalOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(e.summary.success_rate, 100.0);
        assert_eq!(e.summary.dist_to_goal, 0.0);
    }

    #[test]
    fn every_encoder_trains_and_generates() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(dir.path());
        for kind in [EncoderKind::Bps, EncoderKind::PointFeat, EncoderKind::None] {
            let run = train_run(&c, None, &tiny(kind), Execution::Parallel).unwrap();
            assert_eq!(run.log.len(), 2);
            let preds = generate_run(&run.checkpoint, &c, None, Execution::Parallel).unwrap();
            assert_eq!(preds.len(), c.sequences.len());
            for (p, t) in preds.iter().zip(&c.sequences) {
                assert_eq!(p.frames[0], t.frames[0]);
                assert_eq!(p.len(), t.len());
            }
        }
    }

    #[test]
    fn skeleton_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(dir.path());
        let mut run = train_run(&c, None, &RunConfig { train: TrainConfig { epochs: 0, ..tiny(EncoderKind::None).train }, ..tiny(EncoderKind::None) }, Execution::Sequential).unwrap();
        run.checkpoint.skeleton_hash = "other".into();
        assert!(matches!(
            evaluate_checkpoint(&run.checkpoint, &c, None, &EvalOptions::default(), Execution::Sequential),
            Err(Error::HashMismatch(_))
        ));
    }
}
