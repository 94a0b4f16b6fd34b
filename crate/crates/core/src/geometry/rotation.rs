//! Continuous 6D rotation parameterization and its conversion to and from
//! rotation matrices.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on the orthonormality residual accepted by [`RotMat::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

const MIN_NORM: f64 = 1e-12;
const MIN_SINE: f64 = 1e-9;

/// First two columns of a rotation matrix, before orthonormalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rot6D {
    pub a1: Vec3,
    pub a2: Vec3,
}

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D {
        a1: Vector3::new(1.0, 0.0, 0.0),
        a2: Vector3::new(0.0, 1.0, 0.0),
    };

    pub fn new(a1: Vec3, a2: Vec3) -> Self {
        Rot6D { a1, a2 }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a1.x, self.a1.y, self.a1.z, self.a2.x, self.a2.y, self.a2.z]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Rot6D {
            a1: Vec3::new(v[0], v[1], v[2]),
            a2: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_matrix(&self) -> Result<RotMat> {
        rot6d_to_matrix(self)
    }
}

/// A proper rotation matrix (orthonormal, determinant +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotMat(Mat3);

impl RotMat {
    pub const IDENTITY: RotMat = RotMat(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0));

    /// Validates orthonormality and orientation within [`ROTATION_TOLERANCE`].
    pub fn new(m: Mat3) -> Result<Self> {
        let residual = orthonormality_residual(&m);
        if !residual.is_finite() || residual > ROTATION_TOLERANCE {
            return Err(Error::NotRotation { residual });
        }
        Ok(RotMat(m))
    }

    /// Wraps a matrix known to be a rotation by construction.
    pub(crate) fn new_unchecked(m: Mat3) -> Self {
        RotMat(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        RotMat(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    pub fn to_rot6d(&self) -> Rot6D {
        Rot6D {
            a1: self.0.column(0).into_owned(),
            a2: self.0.column(1).into_owned(),
        }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }
}

impl std::ops::Mul for RotMat {
    type Output = RotMat;
    fn mul(self, rhs: RotMat) -> RotMat {
        RotMat(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for RotMat {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// max(|RᵀR − I|) plus the deviation of the determinant from +1.
pub fn orthonormality_residual(m: &Mat3) -> f64 {
    let gram = m.transpose() * m - Mat3::identity();
    gram.amax() + (m.determinant() - 1.0).abs()
}

/// Gram–Schmidt decode: normalize `a1`, remove its component from `a2` and
/// normalize, third column by cross product.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<RotMat> {
    let (b1, b2, b3) = gram_schmidt(r)?;
    Ok(RotMat(Mat3::from_columns(&[b1, b2, b3])))
}

/// Inverse embedding: the first two columns. Rejects non-rotations.
pub fn matrix_to_rot6d(m: &Mat3) -> Result<Rot6D> {
    Ok(RotMat::new(*m)?.to_rot6d())
}

fn gram_schmidt(r: &Rot6D) -> Result<(Vec3, Vec3, Vec3)> {
    if !(r.a1.iter().chain(r.a2.iter()).all(|v| v.is_finite())) {
        return Err(Error::DegenerateRotation("non-finite component"));
    }
    let n1 = r.a1.norm();
    if n1 < MIN_NORM {
        return Err(Error::DegenerateRotation("first column is zero"));
    }
    let n2 = r.a2.norm();
    if n2 < MIN_NORM {
        return Err(Error::DegenerateRotation("second column is zero"));
    }
    let b1 = r.a1 / n1;
    let u = r.a2 - b1 * b1.dot(&r.a2);
    let nu = u.norm();
    if nu < MIN_SINE * n2 {
        return Err(Error::DegenerateRotation("columns are parallel"));
    }
    let b2 = u / nu;
    Ok((b1, b2, b1.cross(&b2)))
}

/// Reverse-mode derivative of [`rot6d_to_matrix`]: maps dL/dR to dL/d(a1, a2).
pub fn rot6d_to_matrix_backward(r: &Rot6D, grad: &Mat3) -> Result<[f64; 6]> {
    let n1 = r.a1.norm();
    let (b1, b2, _) = gram_schmidt(r)?;
    let mut g1: Vec3 = grad.column(0).into_owned();
    let mut g2: Vec3 = grad.column(1).into_owned();
    let g3: Vec3 = grad.column(2).into_owned();

    // b3 = b1 x b2
    g1 += b2.cross(&g3);
    g2 += g3.cross(&b1);

    // b2 = u / |u|
    let u = r.a2 - b1 * b1.dot(&r.a2);
    let nu = u.norm();
    let gu = (g2 - b2 * b2.dot(&g2)) / nu;

    // u = a2 - (b1 . a2) b1
    let ga2 = gu - b1 * gu.dot(&b1);
    g1 -= r.a2 * gu.dot(&b1) + gu * b1.dot(&r.a2);

    // b1 = a1 / |a1|
    let ga1 = (g1 - b1 * b1.dot(&g1)) / n1;
    Ok([ga1.x, ga1.y, ga1.z, ga2.x, ga2.y, ga2.z])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    macro_rules! assert_mat_eq {
        ($a:expr, $b:expr, $tol:expr) => {{
            let d = ($a - $b).amax();
            assert!(d <= $tol, "matrices differ by {d:e}:\n{}\n{}", $a, $b);
        }};
    }

    pub(crate) fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        ));
        *q.to_rotation_matrix().matrix()
    }

    #[test]
    fn identity_and_scaled_identity() {
        let r = Rot6D::new(Vec3::x(), Vec3::y()).to_matrix().unwrap();
        assert_eq!(*r.matrix(), Mat3::identity());
        let r = Rot6D::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0))
            .to_matrix()
            .unwrap();
        assert_eq!(*r.matrix(), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Rot6D::new(Vec3::y(), -Vec3::x()).to_matrix().unwrap();
        // Applying to the basis: x -> y, y -> -x, z -> z.
        assert_eq!(r * Vec3::x(), Vec3::y());
        assert_eq!(r * Vec3::y(), -Vec3::x());
        assert_eq!(r * Vec3::z(), Vec3::z());
        assert_mat_eq!(*r.matrix(), *RotMat::rot_z(std::f64::consts::FRAC_PI_2).matrix(), 1e-15);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            Rot6D::new(Vec3::x(), Vec3::x() * 2.0).to_matrix(),
            Err(Error::DegenerateRotation(_))
        ));
        assert!(Rot6D::new(Vec3::zeros(), Vec3::y()).to_matrix().is_err());
        assert!(Rot6D::new(Vec3::x(), Vec3::zeros()).to_matrix().is_err());
        assert!(Rot6D::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::y()).to_matrix().is_err());
    }

    #[test]
    fn encode_identity_and_half_turn() {
        assert_eq!(matrix_to_rot6d(&Mat3::identity()).unwrap(), Rot6D::IDENTITY);
        let half_x = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let r = matrix_to_rot6d(&half_x).unwrap();
        assert_eq!(r.a1, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(r.a2, Vec3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn encode_rejects_non_rotation() {
        let m = Mat3::identity() * 1.1;
        assert!(matches!(matrix_to_rot6d(&m), Err(Error::NotRotation { .. })));
        let reflection = Mat3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matrix_to_rot6d(&reflection).is_err());
    }

    #[test]
    fn round_trip_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = random_rotation(&mut rng);
            let back = rot6d_to_matrix(&matrix_to_rot6d(&m).unwrap()).unwrap();
            assert_mat_eq!(*back.matrix(), m, 1e-9);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let r = Rot6D::new(
                Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5),
                Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5),
            );
            let weights = Mat3::from_fn(|_, _| rng.random::<f64>() - 0.5);
            let f = |r: &Rot6D| rot6d_to_matrix(r).unwrap().matrix().component_mul(&weights).sum();
            let analytic = rot6d_to_matrix_backward(&r, &weights).unwrap();
            let base = r.to_array();
            for (i, &a) in analytic.iter().enumerate() {
                let h = 1e-6;
                let mut plus = base;
                let mut minus = base;
                plus[i] += h;
                minus[i] -= h;
                let numeric = (f(&Rot6D::from_slice(&plus)) - f(&Rot6D::from_slice(&minus))) / (2.0 * h);
                assert!((a - numeric).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {numeric}");
            }
        }
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn decode_is_orthonormal(a1 in vec3(), a2 in vec3()) {
            if let Ok(r) = Rot6D::new(a1, a2).to_matrix() {
                prop_assert!(orthonormality_residual(r.matrix()) < 1e-9);
            }
        }

        #[test]
        fn power_of_two_scaling_is_exact(a1 in vec3(), a2 in vec3(), e in -20i32..20) {
            let s = 2f64.powi(e);
            if let Ok(r) = Rot6D::new(a1, a2).to_matrix() {
                let scaled = Rot6D::new(a1 * s, a2 * s).to_matrix().unwrap();
                prop_assert_eq!(r, scaled);
            }
        }

        #[test]
        fn arbitrary_positive_scaling_is_invariant(a1 in vec3(), a2 in vec3(), s in 1e-3..1e3f64) {
            if let Ok(r) = Rot6D::new(a1, a2).to_matrix() {
                if orthonormality_residual(r.matrix()) < 1e-12 && a1.cross(&a2).norm() > 1e-3 * a1.norm() * a2.norm() {
                    let scaled = Rot6D::new(a1 * s, a2 * s).to_matrix().unwrap();
                    prop_assert!((r.matrix() - scaled.matrix()).amax() < 1e-12);
                }
            }
        }
    }
}
