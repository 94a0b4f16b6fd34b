use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::model::sequence_matrix;
use crate::geometry::{
    forward_kinematics, forward_kinematics_backward, MotionSequence, Rot6D, Skeleton, Vec3, JOINTS_RANGE, JOINT_COUNT,
    POSE_DIM, ROOT_RANGE, ROTATIONS_RANGE,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub trans: f64,
    pub joint: f64,
    pub rot: f64,
    pub fk: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { trans: 1.0, joint: 1.0, rot: 1.0, fk: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.trans, self.joint, self.rot, self.fk];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("loss weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Unweighted L1 sums of the four terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub trans: f64,
    pub joint: f64,
    pub rot: f64,
    pub fk: f64,
}

impl LossTerms {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.trans * self.trans + w.joint * self.joint + w.rot * self.rot + w.fk * self.fk
    }

    pub fn add(&mut self, o: &LossTerms) {
        self.trans += o.trans;
        self.joint += o.joint;
        self.rot += o.rot;
        self.fk += o.fk;
    }

    pub fn scaled(&self, s: f64) -> LossTerms {
        LossTerms { trans: self.trans * s, joint: self.joint * s, rot: self.rot * s, fk: self.fk * s }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Summed loss terms over supervised frames (valid and not frame 0), the
/// number of such frames, and the gradient of the weighted sum with respect
/// to `pred`.
pub fn loss_and_grad(
    pred: &ArrayView2<f64>,
    target: &ArrayView2<f64>,
    mask: &[bool],
    weights: &LossWeights,
    skeleton: &Skeleton,
) -> Result<(LossTerms, usize, Array2<f64>)> {
    weights.validate()?;
    if pred.dim() != target.dim() || pred.ncols() != POSE_DIM || mask.len() != pred.nrows() {
        return Err(Error::Shape(format!(
            "prediction {:?}, target {:?}, mask {}",
            pred.dim(),
            target.dim(),
            mask.len()
        )));
    }
    let mut terms = LossTerms::default();
    let mut grad = Array2::zeros(pred.dim());
    let mut count = 0;
    for t in (1..pred.nrows()).filter(|t| mask[*t]) {
        count += 1;
        let p = pred.row(t).to_vec();
        let q = target.row(t).to_vec();
        let mut g = grad.row_mut(t);
        for (range, w, acc) in [
            (ROOT_RANGE, weights.trans, &mut terms.trans),
            (JOINTS_RANGE, weights.joint, &mut terms.joint),
            (ROTATIONS_RANGE, weights.rot, &mut terms.rot),
        ] {
            for i in range {
                let r = p[i] - q[i];
                *acc += r.abs();
                g[i] += w * sign(r);
            }
        }
        let rots: Vec<Rot6D> = (0..JOINT_COUNT)
            .map(|j| Rot6D::from_slice(&p[ROTATIONS_RANGE.start + 6 * j..ROTATIONS_RANGE.start + 6 * j + 6]))
            .collect();
        let root = Vec3::new(p[0], p[1], p[2]);
        let fk = forward_kinematics(skeleton, &rots, root)?;
        let mut gpos = vec![Vec3::zeros(); JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            for c in 0..3 {
                let r = fk[j][c] - q[JOINTS_RANGE.start + 3 * j + c];
                terms.fk += r.abs();
                gpos[j][c] = weights.fk * sign(r);
            }
        }
        if weights.fk != 0.0 {
            let (grot, groot) = forward_kinematics_backward(skeleton, &rots, root, &gpos)?;
            for c in 0..3 {
                g[c] += groot[c];
            }
            for (j, gr) in grot.iter().enumerate() {
                for (c, v) in gr.iter().enumerate() {
                    g[ROTATIONS_RANGE.start + 6 * j + c] += v;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no supervised frames (only frame 0 or all masked)".into()));
    }
    Ok((terms, count, grad))
}

/// Mean over supervised frames of the weighted per-frame loss.
pub fn loss(pred: &MotionSequence, target: &MotionSequence, weights: &LossWeights, skeleton: &Skeleton) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("prediction has {} frames, target {}", pred.len(), target.len())));
    }
    let mask = vec![true; pred.len()];
    let (terms, count, _) =
        loss_and_grad(&sequence_matrix(pred).view(), &sequence_matrix(target).view(), &mask, weights, skeleton)?;
    Ok(terms.weighted(weights) / count as f64)
}
