//! Planar headset-to-skeleton calibration.
//!
//! The eye midpoint `r_e` lies on the line through the head-top point
//! `r_ht` along the head forward vector `f_h`, up to a planar offset
//! `o = (o_x, o_y, 0)`: `r_e = r_ht + lambda * f_h + o`.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::{Error, Result};

const SINGULAR_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub o_x: f64,
    pub o_y: f64,
    pub lambda: f64,
}

impl Calibration {
    pub fn offset(&self) -> Vec3 {
        Vec3::new(self.o_x, self.o_y, 0.0)
    }

    /// Largest absolute residual of the three equations.
    pub fn residual(&self, r_e: &Vec3, r_ht: &Vec3, f_h: &Vec3) -> f64 {
        (r_ht + f_h * self.lambda + self.offset() - r_e).amax()
    }
}

pub fn calibrate_offset(r_e: &Vec3, r_ht: &Vec3, f_h: &Vec3) -> Result<Calibration> {
    if !(f_h.z.abs() >= SINGULAR_EPS) {
        return Err(Error::SingularCalibration(f_h.z.abs()));
    }
    let lambda = (r_e.z - r_ht.z) / f_h.z;
    Ok(Calibration {
        o_x: r_e.x - r_ht.x - lambda * f_h.x,
        o_y: r_e.y - r_ht.y - lambda * f_h.y,
        lambda,
    })
}
