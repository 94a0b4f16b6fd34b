//! Capture post-processing and preparation: clock synchronization,
//! headset calibration, QA detectors, task sampling and ordering.

mod bvh;
mod calibrate;
mod qa;
mod sync;
mod tasks;

pub use bvh::{BvhClip, BvhJoint, Channel};
pub use calibrate::{calibrate_offset, Calibration};
pub use qa::{
    detect_jumps, detect_jumps_track, detect_marker_swaps, JointTrack, JumpReport, JumpThresholds, MarkerFrame,
    MarkerSwap, QaReport,
};
pub use sync::{
    estimate_offset, resample_uniform, speed_profile, synchronize, HeadsetSample, HeadsetTrack, SyncConfig,
    SyncResult, MOCAP_FPS,
};
pub use tasks::{
    order_sequences, sample_tasks, transition_cost, RegionPair, SequenceSpec, TaskSampling, MAX_ATTEMPTS_PER_SAMPLE,
    SCENE_CHANGE_COST,
};
