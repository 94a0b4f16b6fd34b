//! Skeleton template and forward kinematics.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rotation::{rot6d_to_matrix, rot6d_to_matrix_backward, Mat3, Rot6D, Vec3};
use crate::{Error, Result};

pub const SKELETON_FORMAT_VERSION: u32 = 1;

const BODY22_JSON: &str = include_str!("../../assets/skeleton_body22.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SkeletonFile {
    version: u32,
    name: String,
    #[serde(default)]
    up_axis: Option<String>,
    #[serde(default)]
    forward_axis: Option<String>,
    #[serde(default)]
    units: Option<String>,
    joints: Vec<Joint>,
    right_wrist: String,
    left_wrist: String,
}

/// A kinematic tree. Joint 0 is the root and every parent index is smaller
/// than its child's index, so a forward pass in index order is topological.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    name: String,
    joints: Vec<Joint>,
    offsets: Vec<Vec3>,
    right_wrist: usize,
    left_wrist: usize,
}

impl Skeleton {
    /// The bundled 22-joint body template.
    pub fn body22() -> Skeleton {
        Skeleton::from_json(BODY22_JSON).expect("bundled skeleton template is valid")
    }

    pub fn new(name: &str, joints: Vec<Joint>, right_wrist: usize, left_wrist: usize) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if joints[0].parent.is_some() {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (i, j) in joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {}
                _ => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {i} ({}) must have a parent with a smaller index",
                        j.name
                    )))
                }
            }
        }
        if joints.iter().any(|j| j.offset.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSkeleton("non-finite offset".into()));
        }
        if right_wrist >= joints.len() || left_wrist >= joints.len() {
            return Err(Error::InvalidSkeleton("wrist index out of range".into()));
        }
        let offsets = joints.iter().map(|j| Vec3::from(j.offset)).collect();
        Ok(Skeleton {
            name: name.to_string(),
            joints,
            offsets,
            right_wrist,
            left_wrist,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SkeletonFile = serde_json::from_str(text)?;
        if file.version != SKELETON_FORMAT_VERSION {
            return Err(Error::Version {
                what: "skeleton",
                found: file.version,
                expected: SKELETON_FORMAT_VERSION,
            });
        }
        let find = |name: &str| {
            file.joints
                .iter()
                .position(|j| j.name == name)
                .ok_or_else(|| Error::InvalidSkeleton(format!("unknown wrist joint {name}")))
        };
        let right = find(&file.right_wrist)?;
        let left = find(&file.left_wrist)?;
        Skeleton::new(&file.name, file.joints, right, left)
    }

    pub fn to_json(&self) -> String {
        let file = SkeletonFile {
            version: SKELETON_FORMAT_VERSION,
            name: self.name.clone(),
            up_axis: Some("z".into()),
            forward_axis: Some("y".into()),
            units: Some("meters".into()),
            joints: self.joints.clone(),
            right_wrist: self.joints[self.right_wrist].name.clone(),
            left_wrist: self.joints[self.left_wrist].name.clone(),
        };
        serde_json::to_string_pretty(&file).expect("skeleton serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.joints[joint].parent
    }

    pub fn offset(&self, joint: usize) -> Vec3 {
        self.offsets[joint]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn right_wrist(&self) -> usize {
        self.right_wrist
    }

    pub fn left_wrist(&self) -> usize {
        self.left_wrist
    }

    /// Positions of all joints at rest (identity rotations, root at origin).
    pub fn rest_positions(&self) -> Vec<Vec3> {
        forward_kinematics_matrices(self, &vec![Mat3::identity(); self.len()], Vec3::zeros()).positions
    }
}

/// Global joint frames produced by forward kinematics.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTransforms {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
}

/// Forward kinematics from local rotation matrices. The root joint sits at
/// `root`; each other joint is at its parent's position plus the parent's
/// global rotation applied to its offset.
pub fn forward_kinematics_matrices(skeleton: &Skeleton, local: &[Mat3], root: Vec3) -> JointTransforms {
    assert_eq!(local.len(), skeleton.len(), "one rotation per joint");
    let n = skeleton.len();
    let mut positions = Vec::with_capacity(n);
    let mut rotations: Vec<Mat3> = Vec::with_capacity(n);
    positions.push(root);
    rotations.push(local[0]);
    for j in 1..n {
        let p = skeleton.joints[j].parent.expect("validated tree");
        let pos = positions[p] + rotations[p] * skeleton.offsets[j];
        let rot = rotations[p] * local[j];
        positions.push(pos);
        rotations.push(rot);
    }
    JointTransforms { positions, rotations }
}

pub fn forward_kinematics(skeleton: &Skeleton, rotations: &[Rot6D], root: Vec3) -> Result<Vec<Vec3>> {
    Ok(forward_kinematics_transforms(skeleton, rotations, root)?.positions)
}

pub fn forward_kinematics_transforms(
    skeleton: &Skeleton,
    rotations: &[Rot6D],
    root: Vec3,
) -> Result<JointTransforms> {
    if rotations.len() != skeleton.len() {
        return Err(Error::Shape(format!(
            "{} rotations for a {}-joint skeleton",
            rotations.len(),
            skeleton.len()
        )));
    }
    let local = rotations
        .iter()
        .map(|r| rot6d_to_matrix(r).map(|m| m.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    Ok(forward_kinematics_matrices(skeleton, &local, root))
}

/// Reverse-mode derivative of [`forward_kinematics`]: given dL/d(position)
/// for every joint, returns dL/d(6D rotation) per joint and dL/d(root).
pub fn forward_kinematics_backward(
    skeleton: &Skeleton,
    rotations: &[Rot6D],
    root: Vec3,
    grad_positions: &[Vec3],
) -> Result<(Vec<[f64; 6]>, Vec3)> {
    let n = skeleton.len();
    let local = rotations
        .iter()
        .map(|r| rot6d_to_matrix(r).map(|m| m.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    let fk = forward_kinematics_matrices(skeleton, &local, root);
    let mut grad_pos = grad_positions.to_vec();
    let mut grad_global = vec![Mat3::zeros(); n];
    let mut grad_local = vec![Mat3::zeros(); n];
    for j in (1..n).rev() {
        let p = skeleton.joints[j].parent.expect("validated tree");
        let gp = grad_pos[j];
        grad_pos[p] += gp;
        grad_global[p] += gp * skeleton.offsets[j].transpose();
        let gg = grad_global[j];
        grad_global[p] += gg * local[j].transpose();
        grad_local[j] = fk.rotations[p].transpose() * gg;
    }
    grad_local[0] = grad_global[0];
    let grads = rotations
        .iter()
        .zip(&grad_local)
        .map(|(r, g)| rot6d_to_matrix_backward(r, g))
        .collect::<Result<Vec<_>>>()?;
    Ok((grads, grad_pos[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation::RotMat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain2() -> Skeleton {
        Skeleton::new(
            "chain",
            vec![
                Joint { name: "a".into(), parent: None, offset: [0.0; 3] },
                Joint { name: "b".into(), parent: Some(0), offset: [0.0, 1.0, 0.0] },
            ],
            1,
            1,
        )
        .unwrap()
    }

    fn random_rot6d(rng: &mut impl Rng) -> Rot6D {
        let v = |rng: &mut dyn rand::RngCore| {
            Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        };
        Rot6D::new(v(rng), v(rng))
    }

    #[test]
    fn bundled_template_loads() {
        let s = Skeleton::body22();
        assert_eq!(s.len(), 22);
        assert_eq!(s.joints()[s.right_wrist()].name, "right_wrist");
        assert_eq!(s.right_wrist(), 21);
        assert_eq!(s.left_wrist(), 20);
        let again = Skeleton::from_json(&s.to_json()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.hash(), s.hash());
    }

    #[test]
    fn rejects_bad_topology_and_versions() {
        let bad = vec![
            Joint { name: "a".into(), parent: None, offset: [0.0; 3] },
            Joint { name: "b".into(), parent: Some(1), offset: [0.0; 3] },
        ];
        assert!(Skeleton::new("x", bad, 0, 0).is_err());
        let text = Skeleton::body22().to_json().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(Skeleton::from_json(&text), Err(Error::Version { found: 7, .. })));
    }

    #[test]
    fn identity_pose_accumulates_offsets() {
        let s = Skeleton::body22();
        let pos = forward_kinematics(&s, &[Rot6D::IDENTITY; 22], Vec3::zeros()).unwrap();
        for j in 0..22 {
            let mut expected = Vec3::zeros();
            let mut k = j;
            while let Some(p) = s.parent(k) {
                expected += s.offset(k);
                k = p;
            }
            assert!((pos[j] - expected).norm() < 1e-15);
        }
        let shifted = forward_kinematics(&s, &[Rot6D::IDENTITY; 22], Vec3::new(1.0, 2.0, 3.0)).unwrap();
        for j in 0..22 {
            assert!((shifted[j] - pos[j] - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn two_joint_chain_quarter_turn() {
        let s = chain2();
        let r = RotMat::rot_z(std::f64::consts::FRAC_PI_2).to_rot6d();
        let pos = forward_kinematics(&s, &[r, Rot6D::IDENTITY], Vec3::zeros()).unwrap();
        assert!((pos[1] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn root_rotation_equivariance() {
        let s = Skeleton::body22();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rots: Vec<Rot6D> = (0..22).map(|_| random_rot6d(&mut rng)).collect();
            let local: Vec<Mat3> = rots.iter().map(|r| r.to_matrix().unwrap().into_inner()).collect();
            let root = Vec3::new(rng.random(), rng.random(), rng.random());
            let q = RotMat::from_axis_angle(
                &Vec3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1),
                rng.random::<f64>() * 6.0,
            );
            let base = forward_kinematics_matrices(&s, &local, root);
            let mut turned_local = local.clone();
            turned_local[0] = q.matrix() * local[0];
            let turned = forward_kinematics_matrices(&s, &turned_local, q * root);
            for j in 0..22 {
                assert!((turned.positions[j] - q * base.positions[j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = Skeleton::body22();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rots: Vec<Rot6D> = (0..22).map(|_| random_rot6d(&mut rng)).collect();
        let root = Vec3::new(0.3, -0.2, 0.9);
        let weights: Vec<Vec3> = (0..22)
            .map(|_| Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let f = |rots: &[Rot6D], root: Vec3| -> f64 {
            forward_kinematics(&s, rots, root)
                .unwrap()
                .iter()
                .zip(&weights)
                .map(|(p, w)| p.dot(w))
                .sum()
        };
        let (g_rot, g_root) = forward_kinematics_backward(&s, &rots, root, &weights).unwrap();
        let h = 1e-6;
        for j in 0..22 {
            for c in 0..6 {
                let mut plus = rots.clone();
                let mut minus = rots.clone();
                let mut a = plus[j].to_array();
                a[c] += h;
                plus[j] = Rot6D::from_slice(&a);
                let mut b = minus[j].to_array();
                b[c] -= h;
                minus[j] = Rot6D::from_slice(&b);
                let numeric = (f(&plus, root) - f(&minus, root)) / (2.0 * h);
                assert!((numeric - g_rot[j][c]).abs() < 1e-6, "joint {j} comp {c}");
            }
        }
        for c in 0..3 {
            let mut e = Vec3::zeros();
            e[c] = h;
            let numeric = (f(&rots, root + e) - f(&rots, root - e)) / (2.0 * h);
            assert!((numeric - g_root[c]).abs() < 1e-6);
        }
    }
}
