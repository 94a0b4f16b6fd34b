//! Evaluation metrics and train/test splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::geometry::{BodySurface, MotionSequence, SequenceLabel, Skeleton};
use crate::scene::SceneModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Final wrist distance below which a task succeeds, cm (strict).
    pub success_cm: f64,
    /// Per-frame penetrations shallower than this are ignored, cm.
    pub collision_cm: f64,
    /// Lowest-vertex displacement per frame above which a frame slides, cm.
    pub sliding_cm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { success_cm: 10.0, collision_cm: 2.0, sliding_cm: 1.0 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if [self.success_cm, self.collision_cm, self.sliding_cm].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("metric thresholds must be positive".into()))
        }
    }
}

fn check_lengths(pred: &MotionSequence, truth: &MotionSequence) -> Result<()> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("prediction has {} frames, ground truth {}", pred.len(), truth.len())));
    }
    Ok(())
}

/// Right-wrist distance at the last frame (cm) and whether it is under the
/// threshold.
pub fn task_success(
    pred: &MotionSequence,
    truth: &MotionSequence,
    skeleton: &Skeleton,
    threshold_cm: f64,
) -> Result<(bool, f64)> {
    check_lengths(pred, truth)?;
    let a = pred.final_right_wrist(skeleton).expect("non-empty");
    let b = truth.final_right_wrist(skeleton).expect("non-empty");
    let cm = (a * 100.0 - b * 100.0).norm();
    Ok((cm < threshold_cm, cm))
}

/// Deepest vertex penetration per frame, in cm.
pub fn penetration_profile(seq: &MotionSequence, scene: &SceneModel, surface: &BodySurface, skeleton: &Skeleton) -> Result<Vec<f64>> {
    seq.frames
        .iter()
        .map(|f| {
            let verts = surface.pose_vertices(skeleton, f)?;
            Ok(verts.iter().map(|v| (-scene.signed_distance(v)).max(0.0)).fold(0.0, f64::max) * 100.0)
        })
        .collect()
}

/// Sum over frames of the per-frame deepest penetration, counting only
/// frames at or above `filter_cm`.
pub fn collision_depth(
    seq: &MotionSequence,
    scene: &SceneModel,
    surface: &BodySurface,
    skeleton: &Skeleton,
    filter_cm: f64,
) -> Result<f64> {
    Ok(penetration_profile(seq, scene, surface, skeleton)?.into_iter().filter(|d| *d >= filter_cm).fold(0.0, |a, d| a + d))
}

/// Percentage of frames whose lowest vertex moved more than the threshold
/// since the previous frame.
pub fn foot_sliding(seq: &MotionSequence, surface: &BodySurface, skeleton: &Skeleton, threshold_cm: f64) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::InvalidArgument("foot sliding needs at least two frames".into()));
    }
    let verts = seq
        .frames
        .iter()
        .map(|f| surface.pose_vertices(skeleton, f))
        .collect::<Result<Vec<_>>>()?;
    let mut sliding = 0;
    for t in 1..verts.len() {
        let lowest = verts[t]
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.z.total_cmp(&b.1.z).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .expect("vertices");
        if (verts[t][lowest] - verts[t - 1][lowest]).norm() * 100.0 > threshold_cm {
            sliding += 1;
        }
    }
    Ok(100.0 * sliding as f64 / (verts.len() - 1) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    /// cm
    pub mvpe: f64,
    /// cm
    pub mjpe: f64,
    /// cm
    pub root: f64,
    pub orientation: f64,
}

/// Mean vertex, joint and root distances (cm) and mean Frobenius distance
/// between local rotation matrices. With `root_only` the orientation term
/// covers the root joint alone.
pub fn similarity_metrics(
    pred: &MotionSequence,
    truth: &MotionSequence,
    skeleton: &Skeleton,
    surface: &BodySurface,
    root_only: bool,
) -> Result<Similarity> {
    check_lengths(pred, truth)?;
    let mut s = Similarity::default();
    let mut vert_count = 0usize;
    let mut joint_count = 0usize;
    let mut orn_count = 0usize;
    for (p, q) in pred.frames.iter().zip(&truth.frames) {
        let vp = surface.pose_vertices(skeleton, p)?;
        let vq = surface.pose_vertices(skeleton, q)?;
        s.mvpe += vp.iter().zip(&vq).map(|(a, b)| (a - b).norm()).sum::<f64>();
        vert_count += vp.len();
        s.mjpe += p.joints.iter().zip(&q.joints).map(|(a, b)| (a - b).norm()).sum::<f64>();
        joint_count += p.joints.len();
        s.root += (p.root - q.root).norm();
        let rp = p.rotation_matrices()?;
        let rq = q.rotation_matrices()?;
        let n = if root_only { 1 } else { rp.len() };
        s.orientation += rp.iter().zip(&rq).take(n).map(|(a, b)| (a - b).norm()).sum::<f64>();
        orn_count += n;
    }
    let frames = pred.len() as f64;
    s.mvpe = s.mvpe / vert_count as f64 * 100.0;
    s.mjpe = s.mjpe / joint_count as f64 * 100.0;
    s.root = s.root / frames * 100.0;
    s.orientation /= orn_count as f64;
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub id: u32,
    pub success: bool,
    pub dist_to_goal: f64,
    pub collision: f64,
    pub foot_sliding: f64,
    pub mvpe: f64,
    pub mjpe: f64,
    pub root_trans_error: f64,
    pub joint_orn_error: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub success_rate: f64,
    pub dist_to_goal: f64,
    pub cumulative_collision_depth: f64,
    pub foot_sliding: f64,
    pub mvpe: f64,
    pub mjpe: f64,
    pub root_trans_error: f64,
    pub joint_orn_error: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub thresholds: Thresholds,
    pub root_only_orientation: bool,
}

pub fn evaluate_sequence(
    pred: &MotionSequence,
    truth: &MotionSequence,
    scene: &SceneModel,
    skeleton: &Skeleton,
    surface: &BodySurface,
    options: &EvalOptions,
) -> Result<SequenceMetrics> {
    let th = &options.thresholds;
    let (success, dist) = task_success(pred, truth, skeleton, th.success_cm)?;
    let sim = similarity_metrics(pred, truth, skeleton, surface, options.root_only_orientation)?;
    Ok(SequenceMetrics {
        id: truth.id,
        success,
        dist_to_goal: dist,
        collision: collision_depth(pred, scene, surface, skeleton, th.collision_cm)?,
        foot_sliding: foot_sliding(pred, surface, skeleton, th.sliding_cm)?,
        mvpe: sim.mvpe,
        mjpe: sim.mjpe,
        root_trans_error: sim.root,
        joint_orn_error: sim.orientation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: Vec<SequenceMetrics>,
    pub summary: MetricReport,
}

impl Evaluation {
    pub const CSV_HEADER: &'static str =
        "id,success,dist_to_goal_cm,collision_cm,foot_sliding_pct,mvpe_cm,mjpe_cm,root_trans_error_cm,joint_orn_error";

    /// One row per sequence, then a `summary` row whose success column is
    /// the success rate in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.id,
                u8::from(r.success),
                r.dist_to_goal,
                r.collision,
                r.foot_sliding,
                r.mvpe,
                r.mjpe,
                r.root_trans_error,
                r.joint_orn_error
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "summary,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            s.success_rate,
            s.dist_to_goal,
            s.cumulative_collision_depth,
            s.foot_sliding,
            s.mvpe,
            s.mjpe,
            s.root_trans_error,
            s.joint_orn_error
        ));
        out
    }
}

pub fn summarize(rows: &[SequenceMetrics]) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("nothing to summarize".into()));
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&SequenceMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        success_rate: 100.0 * rows.iter().filter(|r| r.success).count() as f64 / n,
        dist_to_goal: mean(|r| r.dist_to_goal),
        cumulative_collision_depth: mean(|r| r.collision),
        foot_sliding: mean(|r| r.foot_sliding),
        mvpe: mean(|r| r.mvpe),
        mjpe: mean(|r| r.mjpe),
        root_trans_error: mean(|r| r.root_trans_error),
        joint_orn_error: mean(|r| r.joint_orn_error),
    })
}

/// Metrics for aligned prediction / ground-truth pairs, averaged over
/// sequences. Rows keep the input order.
pub fn evaluate(
    preds: &[MotionSequence],
    truths: &[MotionSequence],
    scenes: &BTreeMap<String, SceneModel>,
    skeleton: &Skeleton,
    options: &EvalOptions,
    exec: Execution,
) -> Result<Evaluation> {
    options.thresholds.validate()?;
    if truths.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions for {} sequences", preds.len(), truths.len())));
    }
    let surface = BodySurface::new(skeleton);
    let pairs: Vec<(&MotionSequence, &MotionSequence)> = preds.iter().zip(truths).collect();
    let rows = exec.try_map(&pairs, |(p, t)| {
        let scene = scenes
            .get(&t.scene_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scene {}", t.scene_id)))?;
        evaluate_sequence(p, t, scene, skeleton, &surface, options)
    })?;
    let summary = summarize(&rows)?;
    Ok(Evaluation { rows, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitKind {
    /// Shuffle sequences and keep `train_ratio` of them for training.
    Random { train_ratio: f64 },
    /// Hold out every sequence of `holdout_tasks` randomly chosen tasks.
    Task { holdout_tasks: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub kind: SplitKind,
    pub seed: u64,
    pub train: Vec<u32>,
    pub test: Vec<u32>,
}

/// Splits the reaching sequences of a corpus. Id lists come back sorted.
pub fn make_split(corpus: &[MotionSequence], kind: SplitKind, seed: u64) -> Result<SplitSpec> {
    let reaching: Vec<&MotionSequence> = corpus.iter().filter(|s| s.label == SequenceLabel::Reaching).collect();
    make_split_ids(&reaching.iter().map(|s| (s.id, s.task_id)).collect::<Vec<_>>(), kind, seed)
}

/// Split over `(sequence id, task id)` pairs.
pub fn make_split_ids(items: &[(u32, u32)], kind: SplitKind, seed: u64) -> Result<SplitSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: BTreeSet<u32> = items.iter().map(|(i, _)| *i).collect();
    if ids.len() != items.len() {
        return Err(Error::InvalidArgument("duplicate sequence ids".into()));
    }
    let (mut train, mut test): (Vec<u32>, Vec<u32>) = match kind {
        SplitKind::Random { train_ratio } => {
            if !(0.0..=1.0).contains(&train_ratio) {
                return Err(Error::InvalidArgument(format!("train ratio {train_ratio} outside [0, 1]")));
            }
            let mut all: Vec<u32> = ids.into_iter().collect();
            all.shuffle(&mut rng);
            let n_train = (train_ratio * all.len() as f64).round() as usize;
            let test = all.split_off(n_train);
            (all, test)
        }
        SplitKind::Task { holdout_tasks } => {
            let mut tasks: Vec<u32> = items.iter().map(|(_, t)| *t).collect::<BTreeSet<_>>().into_iter().collect();
            if holdout_tasks > tasks.len() {
                return Err(Error::InvalidArgument(format!(
                    "cannot hold out {holdout_tasks} of {} tasks",
                    tasks.len()
                )));
            }
            tasks.shuffle(&mut rng);
            let held: BTreeSet<u32> = tasks[..holdout_tasks].iter().copied().collect();
            let (train, test): (Vec<&(u32, u32)>, Vec<&(u32, u32)>) =
                items.iter().partition(|(_, task)| !held.contains(task));
            (train.iter().map(|(i, _)| *i).collect(), test.iter().map(|(i, _)| *i).collect())
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec { kind, seed, train, test })
}
