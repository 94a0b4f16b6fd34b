//! Pose, skeleton and rotation data model.

mod pose;
mod rotation;
mod skeleton;
mod surface;

pub use pose::{
    MotionSequence, PoseState, SequenceLabel, JOINTS_RANGE, JOINT_COUNT, MAX_FRAMES, MODEL_FPS, POSE_DIM,
    ROOT_RANGE, ROTATIONS_RANGE,
};
pub use rotation::{
    matrix_to_rot6d, orthonormality_residual, rot6d_to_matrix, rot6d_to_matrix_backward, Mat3, Rot6D, RotMat,
    Vec3, ROTATION_TOLERANCE,
};
pub use skeleton::{
    forward_kinematics, forward_kinematics_backward, forward_kinematics_matrices, forward_kinematics_transforms,
    Joint, JointTransforms, Skeleton, SKELETON_FORMAT_VERSION,
};
pub use surface::{body_surface_vertices, BodySurface, SURFACE_VERTEX_COUNT};
