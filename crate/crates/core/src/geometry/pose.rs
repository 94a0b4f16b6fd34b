use serde::{Deserialize, Serialize};

use super::rotation::{Mat3, Rot6D, Vec3};
use super::skeleton::{forward_kinematics, forward_kinematics_transforms, JointTransforms, Skeleton};
use crate::{Error, Result};

pub const JOINT_COUNT: usize = 22;
/// Flattened pose width: root (3) + joint positions (66) + 6D rotations (132).
pub const POSE_DIM: usize = 3 + 3 * JOINT_COUNT + 6 * JOINT_COUNT;
pub const ROOT_RANGE: std::ops::Range<usize> = 0..3;
pub const JOINTS_RANGE: std::ops::Range<usize> = 3..3 + 3 * JOINT_COUNT;
pub const ROTATIONS_RANGE: std::ops::Range<usize> = 3 + 3 * JOINT_COUNT..POSE_DIM;
/// Longest sequence the refiner accepts.
pub const MAX_FRAMES: usize = 240;
/// Frame rate of model input sequences.
pub const MODEL_FPS: f64 = 20.0;

/// One frame of body state: root translation, global joint positions and
/// local joint rotations. Joint positions are stored alongside the
/// rotations and are not guaranteed to equal their forward kinematics.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseState {
    pub root: Vec3,
    pub joints: [Vec3; JOINT_COUNT],
    pub rotations: [Rot6D; JOINT_COUNT],
}

impl PoseState {
    /// Builds a frame whose joint positions are the forward kinematics of
    /// the given rotations.
    pub fn from_rotations(skeleton: &Skeleton, rotations: [Rot6D; JOINT_COUNT], root: Vec3) -> Result<Self> {
        let fk = forward_kinematics(skeleton, &rotations, root)?;
        let mut joints = [Vec3::zeros(); JOINT_COUNT];
        joints.copy_from_slice(&fk);
        Ok(PoseState { root, joints, rotations })
    }

    pub fn identity(skeleton: &Skeleton) -> Self {
        Self::from_rotations(skeleton, [Rot6D::IDENTITY; JOINT_COUNT], Vec3::zeros()).expect("identity pose")
    }

    pub fn write_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), POSE_DIM);
        out[0..3].copy_from_slice(self.root.as_slice());
        for (j, p) in self.joints.iter().enumerate() {
            out[3 + 3 * j..6 + 3 * j].copy_from_slice(p.as_slice());
        }
        for (j, r) in self.rotations.iter().enumerate() {
            let base = ROTATIONS_RANGE.start + 6 * j;
            out[base..base + 6].copy_from_slice(&r.to_array());
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; POSE_DIM];
        self.write_into(&mut v);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != POSE_DIM {
            return Err(Error::Shape(format!("pose vector has {} components, expected {POSE_DIM}", v.len())));
        }
        let root = Vec3::new(v[0], v[1], v[2]);
        let mut joints = [Vec3::zeros(); JOINT_COUNT];
        for (j, p) in joints.iter_mut().enumerate() {
            *p = Vec3::new(v[3 + 3 * j], v[4 + 3 * j], v[5 + 3 * j]);
        }
        let mut rotations = [Rot6D::IDENTITY; JOINT_COUNT];
        for (j, r) in rotations.iter_mut().enumerate() {
            let base = ROTATIONS_RANGE.start + 6 * j;
            *r = Rot6D::from_slice(&v[base..base + 6]);
        }
        Ok(PoseState { root, joints, rotations })
    }

    pub fn rotation_matrices(&self) -> Result<Vec<Mat3>> {
        self.rotations
            .iter()
            .map(|r| r.to_matrix().map(|m| m.into_inner()))
            .collect()
    }

    /// Global joint frames from the rotations and root (ignores `joints`).
    pub fn transforms(&self, skeleton: &Skeleton) -> Result<JointTransforms> {
        forward_kinematics_transforms(skeleton, &self.rotations, self.root)
    }

    /// Largest distance between the stored joint positions and their
    /// forward kinematics.
    pub fn fk_residual(&self, skeleton: &Skeleton) -> Result<f64> {
        let fk = forward_kinematics(skeleton, &self.rotations, self.root)?;
        Ok(fk
            .iter()
            .zip(&self.joints)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn translated(&self, t: Vec3) -> Self {
        let mut out = self.clone();
        out.root += t;
        for p in out.joints.iter_mut() {
            *p += t;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceLabel {
    Reaching,
    Transition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub id: u32,
    pub task_id: u32,
    pub scene_id: String,
    pub label: SequenceLabel,
    pub fps: f64,
    pub goal: Vec3,
    pub frames: Vec<PoseState>,
}

impl MotionSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps every `factor`-th frame, starting with the first.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("downsample factor must be positive".into()));
        }
        Ok(MotionSequence {
            frames: self.frames.iter().step_by(factor).cloned().collect(),
            fps: self.fps / factor as f64,
            ..self.clone()
        })
    }

    /// Checks the constraints of a model-ready sequence.
    pub fn validate_model_input(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        if self.frames.len() > MAX_FRAMES {
            return Err(Error::SequenceTooLong { got: self.frames.len(), max: MAX_FRAMES });
        }
        Ok(())
    }

    /// Stored right-wrist position at the last frame.
    pub fn final_right_wrist(&self, skeleton: &Skeleton) -> Option<Vec3> {
        self.frames.last().map(|f| f.joints[skeleton.right_wrist()])
    }
}
