//! Rigid surrogate body surface: capsule shells around each bone, sampled
//! to a fixed vertex count. Every vertex is attached to exactly one joint
//! frame and moves rigidly with it.

use std::f64::consts::PI;

use super::pose::PoseState;
use super::rotation::Vec3;
use super::skeleton::{JointTransforms, Skeleton};
use crate::Result;

pub const SURFACE_VERTEX_COUNT: usize = 699;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
const DEFAULT_RADIUS: f64 = 0.05;

fn bone_radius(name: &str) -> f64 {
    match name {
        "left_hip" | "right_hip" => 0.09,
        "spine1" => 0.11,
        "spine2" => 0.12,
        "spine3" => 0.13,
        "left_knee" | "right_knee" => 0.075,
        "left_ankle" | "right_ankle" => 0.055,
        "left_foot" | "right_foot" => 0.04,
        "neck" => 0.06,
        "head" => 0.05,
        "left_elbow" | "right_elbow" => 0.045,
        "left_wrist" | "right_wrist" => 0.035,
        _ => DEFAULT_RADIUS,
    }
}

/// A capsule in rest coordinates, attached to one joint frame.
#[derive(Clone, Debug)]
struct Shell {
    joint: usize,
    a: Vec3,
    b: Vec3,
    radius: f64,
}

impl Shell {
    fn area(&self) -> f64 {
        let r = self.radius;
        2.0 * PI * r * (self.b - self.a).norm() + 4.0 * PI * r * r
    }

    /// Deterministic, roughly area-uniform points on the capsule surface.
    fn sample(&self, n: usize, out: &mut Vec<Vec3>) {
        let r = self.radius;
        let d = self.b - self.a;
        let len = d.norm();
        let axis = if len > 1e-12 { d / len } else { Vec3::z() };
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = axis.cross(&helper).normalize();
        let e2 = axis.cross(&e1);
        let ring = 2.0 * PI * r;
        let cap = 2.0 * PI * r * r;
        let total = 2.0 * cap + ring * len;
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64 * total;
            let (along, rho) = if s < cap {
                let z = -r + s / ring;
                (z, (r * r - z * z).max(0.0).sqrt())
            } else if s < cap + ring * len {
                ((s - cap) / ring, r)
            } else {
                let h = (s - cap - ring * len) / ring;
                (len + h, (r * r - h * h).max(0.0).sqrt())
            };
            let phi = i as f64 * GOLDEN_ANGLE;
            out.push(self.a + axis * along + (e1 * phi.cos() + e2 * phi.sin()) * rho);
        }
    }
}

/// Template of surface vertices bound to joint frames.
#[derive(Clone, Debug)]
pub struct BodySurface {
    joint_of: Vec<usize>,
    local: Vec<Vec3>,
    rest: Vec<Vec3>,
}

impl BodySurface {
    pub fn new(skeleton: &Skeleton) -> Self {
        let rest_joints = skeleton.rest_positions();
        let mut shells = Vec::new();
        for (j, joint) in skeleton.joints().iter().enumerate() {
            if let Some(p) = joint.parent {
                shells.push(Shell {
                    joint: p,
                    a: rest_joints[p],
                    b: rest_joints[j],
                    radius: bone_radius(&joint.name),
                });
            }
        }
        let mut extra = |name: &str, delta: Vec3, radius: f64| {
            if let Some(j) = skeleton.index_of(name) {
                shells.push(Shell { joint: j, a: rest_joints[j], b: rest_joints[j] + delta, radius });
            }
        };
        extra("pelvis", Vec3::zeros(), 0.11);
        extra("head", Vec3::new(0.0, 0.01, 0.12), 0.09);
        extra("right_wrist", Vec3::new(0.09, 0.0, 0.0), 0.03);
        extra("left_wrist", Vec3::new(-0.09, 0.0, 0.0), 0.03);
        extra("right_foot", Vec3::new(0.0, 0.06, 0.0), 0.035);
        extra("left_foot", Vec3::new(0.0, 0.06, 0.0), 0.035);

        let counts = allocate(&shells.iter().map(Shell::area).collect::<Vec<_>>(), SURFACE_VERTEX_COUNT);
        let mut rest = Vec::with_capacity(SURFACE_VERTEX_COUNT);
        let mut joint_of = Vec::with_capacity(SURFACE_VERTEX_COUNT);
        for (shell, &n) in shells.iter().zip(&counts) {
            shell.sample(n, &mut rest);
            joint_of.extend(std::iter::repeat_n(shell.joint, n));
        }
        let local = rest.iter().zip(&joint_of).map(|(v, &j)| v - rest_joints[j]).collect();
        BodySurface { joint_of, local, rest }
    }

    pub fn len(&self) -> usize {
        self.rest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    /// Vertex positions at rest (identity rotations, root at origin).
    pub fn rest_vertices(&self) -> &[Vec3] {
        &self.rest
    }

    pub fn joint_of(&self, vertex: usize) -> usize {
        self.joint_of[vertex]
    }

    pub fn local_offset(&self, vertex: usize) -> Vec3 {
        self.local[vertex]
    }

    pub fn vertices(&self, transforms: &JointTransforms) -> Vec<Vec3> {
        self.local
            .iter()
            .zip(&self.joint_of)
            .map(|(l, &j)| transforms.positions[j] + transforms.rotations[j] * l)
            .collect()
    }

    pub fn pose_vertices(&self, skeleton: &Skeleton, pose: &PoseState) -> Result<Vec<Vec3>> {
        Ok(self.vertices(&pose.transforms(skeleton)?))
    }

    /// Height of the root above the lowest rest vertex.
    pub fn rest_root_height(&self) -> f64 {
        -self.rest.iter().map(|v| v.z).fold(f64::INFINITY, f64::min)
    }
}

/// Vertices of `pose` on the surrogate body surface of `skeleton`.
pub fn body_surface_vertices(skeleton: &Skeleton, pose: &PoseState) -> Result<Vec<Vec3>> {
    BodySurface::new(skeleton).pose_vertices(skeleton, pose)
}

/// Largest-remainder apportionment of `total` items by weight.
fn allocate(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}
