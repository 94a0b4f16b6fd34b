//! Quality-assurance detectors for captured clips.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, MotionSequence, Vec3};
use crate::{Error, Result};

/// Labeled marker positions for one capture frame.
pub type MarkerFrame = BTreeMap<String, Vec3>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MarkerSwap {
    /// Frame `t` such that the swap shows between `t` and `t + 1`.
    pub frame: usize,
    pub label_a: String,
    pub label_b: String,
}

/// For each marker at frame `t`, finds the nearest marker at `t + 1`; a
/// label mismatch is a swap. Each unordered pair is reported once per frame.
pub fn detect_marker_swaps(frames: &[MarkerFrame]) -> Result<Vec<MarkerSwap>> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument("marker swap detection needs at least two frames".into()));
    }
    let mut swaps = Vec::new();
    for (t, pair) in frames.windows(2).enumerate() {
        let (now, next) = (&pair[0], &pair[1]);
        let mut seen = BTreeSet::new();
        for (label, p) in now {
            let nearest = next
                .iter()
                .map(|(l, q)| ((q - p).norm_squared(), l))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            if let Some((_, other)) = nearest {
                if other != label {
                    let key = if label < other { (label.clone(), other.clone()) } else { (other.clone(), label.clone()) };
                    if seen.insert(key.clone()) {
                        swaps.push(MarkerSwap { frame: t, label_a: key.0, label_b: key.1 });
                    }
                }
            }
        }
    }
    Ok(swaps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpThresholds {
    /// m/s²
    pub linear_acceleration: f64,
    /// rad/s
    pub angular_velocity: f64,
}

impl Default for JumpThresholds {
    fn default() -> Self {
        JumpThresholds { linear_acceleration: 50.0, angular_velocity: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub max_lin_acc: f64,
    pub max_ang_vel: f64,
    pub flagged: bool,
}

/// Per-frame global joint positions and local joint rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTrack {
    pub fps: f64,
    pub positions: Vec<Vec<Vec3>>,
    pub local_rotations: Vec<Vec<Mat3>>,
}

impl JointTrack {
    pub fn from_sequence(seq: &MotionSequence) -> Result<Self> {
        Ok(JointTrack {
            fps: seq.fps,
            positions: seq.frames.iter().map(|f| f.joints.to_vec()).collect(),
            local_rotations: seq.frames.iter().map(|f| f.rotation_matrices()).collect::<Result<_>>()?,
        })
    }
}

/// Largest second-difference joint acceleration (global) and largest local
/// angular velocity over the clip.
pub fn detect_jumps_track(track: &JointTrack, thresholds: &JumpThresholds) -> Result<JumpReport> {
    let n = track.positions.len();
    if n < 3 {
        return Err(Error::InvalidArgument("jump detection needs at least three frames".into()));
    }
    let fps2 = track.fps * track.fps;
    let mut max_lin_acc: f64 = 0.0;
    for t in 1..n - 1 {
        for j in 0..track.positions[t].len() {
            let acc = track.positions[t + 1][j] - track.positions[t][j] * 2.0 + track.positions[t - 1][j];
            max_lin_acc = max_lin_acc.max(acc.norm() * fps2);
        }
    }
    let mut max_ang_vel: f64 = 0.0;
    for t in 0..track.local_rotations.len().saturating_sub(1) {
        for (a, b) in track.local_rotations[t].iter().zip(&track.local_rotations[t + 1]) {
            let rel = a.transpose() * b;
            let angle = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos();
            max_ang_vel = max_ang_vel.max(angle * track.fps);
        }
    }
    Ok(JumpReport {
        max_lin_acc,
        max_ang_vel,
        flagged: max_lin_acc > thresholds.linear_acceleration || max_ang_vel > thresholds.angular_velocity,
    })
}

pub fn detect_jumps(seq: &MotionSequence, thresholds: &JumpThresholds) -> Result<JumpReport> {
    if seq.len() < 3 {
        return Err(Error::InvalidArgument("jump detection needs at least three frames".into()));
    }
    detect_jumps_track(&JointTrack::from_sequence(seq)?, thresholds)
}

/// Per-sequence QA summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub sequence_id: u32,
    pub swaps: Vec<MarkerSwap>,
    pub max_lin_acc: f64,
    pub max_ang_vel: f64,
    pub flags: Vec<String>,
}

impl QaReport {
    pub fn new(sequence_id: u32, swaps: Vec<MarkerSwap>, jumps: JumpReport, thresholds: &JumpThresholds) -> Self {
        let mut flags = Vec::new();
        if !swaps.is_empty() {
            flags.push("marker_swap".to_string());
        }
        if jumps.max_lin_acc > thresholds.linear_acceleration {
            flags.push("linear_acceleration".to_string());
        }
        if jumps.max_ang_vel > thresholds.angular_velocity {
            flags.push("angular_velocity".to_string());
        }
        QaReport { sequence_id, swaps, max_lin_acc: jumps.max_lin_acc, max_ang_vel: jumps.max_ang_vel, flags }
    }
}
