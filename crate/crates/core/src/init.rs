//! Naive initial motion: constant template pose with a linearly
//! interpolated root.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    forward_kinematics, MotionSequence, PoseState, Rot6D, SequenceLabel, Skeleton, Vec3, JOINT_COUNT, MODEL_FPS,
};
use crate::{Error, Result};

/// Frames considered when picking the medoid template.
pub const MEDOID_SAMPLE: usize = 500;

/// Template pose shared by a whole corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantPose {
    pub rotations: [Rot6D; JOINT_COUNT],
    /// Right wrist relative to the root when the template is posed.
    pub wrist_offset: Vec3,
}

impl ConstantPose {
    pub fn new(skeleton: &Skeleton, rotations: [Rot6D; JOINT_COUNT]) -> Result<Self> {
        let fk = forward_kinematics(skeleton, &rotations, Vec3::zeros())?;
        Ok(ConstantPose { rotations, wrist_offset: fk[skeleton.right_wrist()] })
    }

    /// Medoid of an evenly strided sample of at most [`MEDOID_SAMPLE`]
    /// frames under the summed per-joint Frobenius rotation distance.
    pub fn medoid(skeleton: &Skeleton, frames: &[&PoseState]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("no frames to choose a template from".into()));
        }
        let stride = frames.len().div_ceil(MEDOID_SAMPLE);
        let sample: Vec<&PoseState> = frames.iter().step_by(stride).copied().collect();
        let mats = sample.iter().map(|f| f.rotation_matrices()).collect::<Result<Vec<_>>>()?;
        let mut best = (f64::INFINITY, 0);
        for (i, a) in mats.iter().enumerate() {
            let cost: f64 = mats
                .iter()
                .map(|b| a.iter().zip(b).map(|(ra, rb)| (ra - rb).norm()).sum::<f64>())
                .sum();
            if cost < best.0 {
                best = (cost, i);
            }
        }
        Self::new(skeleton, sample[best.1].rotations)
    }

    /// Template posed so that its right wrist lies at `goal`.
    pub fn placed_at_goal(&self, skeleton: &Skeleton, goal: Vec3) -> Result<PoseState> {
        PoseState::from_rotations(skeleton, self.rotations, goal - self.wrist_offset)
    }
}

/// `frames` poses: the start pose, then the template with its root moving
/// on a straight line to the placement that puts the wrist on `goal`.
pub fn initialize_motion(
    x0: &PoseState,
    goal: Vec3,
    frames: usize,
    xc: &ConstantPose,
    skeleton: &Skeleton,
) -> Result<MotionSequence> {
    if frames < 2 {
        return Err(Error::InvalidArgument(format!("initialization needs at least 2 frames, got {frames}")));
    }
    if !goal.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("goal is not finite".into()));
    }
    let last = frames - 1;
    let end_root = goal - xc.wrist_offset;
    let mut out = Vec::with_capacity(frames);
    out.push(x0.clone());
    for t in 1..frames {
        let root = if t == last {
            end_root
        } else {
            let alpha = t as f64 / last as f64;
            x0.root + (end_root - x0.root) * alpha
        };
        out.push(PoseState::from_rotations(skeleton, xc.rotations, root)?);
    }
    Ok(MotionSequence {
        id: 0,
        task_id: 0,
        scene_id: String::new(),
        label: SequenceLabel::Reaching,
        fps: MODEL_FPS,
        goal,
        frames: out,
    })
}
