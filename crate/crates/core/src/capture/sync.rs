//! Offline headset/mocap synchronization by cross-correlating speed
//! profiles.

use nalgebra::{Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Vec3};
use crate::{Error, Execution, Result};

pub const MOCAP_FPS: f64 = 120.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadsetSample {
    pub t: f64,
    pub position: Vec3,
    pub orientation: Mat3,
}

/// Timestamped headset poses; timestamps strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadsetTrack {
    pub samples: Vec<HeadsetSample>,
}

impl HeadsetTrack {
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InvalidArgument("headset track needs at least two samples".into()));
        }
        if self.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidArgument("headset timestamps must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.position).collect()
    }

    /// Pose at time `t` by linear interpolation of position and spherical
    /// interpolation of orientation. `None` outside the sampled span.
    pub fn interpolate(&self, t: f64) -> Option<(Vec3, Mat3)> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let k = self.samples.partition_point(|s| s.t <= t).clamp(1, self.samples.len() - 1);
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(a.orientation));
        let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(b.orientation));
        let q = qa.try_slerp(&qb, w, 1e-12).unwrap_or(qa);
        Some((a.position.lerp(&b.position, w), *q.to_rotation_matrix().matrix()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncConfig {
    pub fps: f64,
    /// Largest offset magnitude searched, seconds.
    pub max_lag: f64,
    /// Minimum fraction of the shorter series that must overlap at a lag.
    pub min_overlap: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig { fps: MOCAP_FPS, max_lag: 3.0, min_overlap: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    /// Headset clock minus mocap clock for the same physical instant.
    pub offset: f64,
    pub peak_correlation: f64,
    /// First mocap frame covered by the aligned track.
    pub first_frame: usize,
    /// Headset poses resampled onto mocap frame times (mocap clock).
    pub aligned: HeadsetTrack,
}

/// Speed magnitude at each sample by central differences (one-sided at the
/// ends).
pub fn speed_profile(times: &[f64], positions: &[Vec3]) -> Vec<f64> {
    let n = positions.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            if a == b {
                0.0
            } else {
                (positions[b] - positions[a]).norm() / (times[b] - times[a])
            }
        })
        .collect()
}

/// Linear resampling of `(times, values)` at `start + k * dt` for every `k`
/// that stays within the sampled span.
pub fn resample_uniform(times: &[f64], values: &[f64], start: f64, dt: f64) -> Vec<f64> {
    let end = *times.last().expect("non-empty series");
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let t = start + k as f64 * dt;
        if t > end + 1e-12 {
            break;
        }
        let j = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
        let w = ((t - times[j - 1]) / (times[j] - times[j - 1])).clamp(0.0, 1.0);
        out.push(values[j - 1] + (values[j] - values[j - 1]) * w);
        k += 1;
    }
    out
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Normalized cross-correlation of `a[i]` against `b[i + lag]` over their
/// overlap.
fn ncc(a: &[f64], b: &[f64], lag: i64) -> (f64, usize) {
    let i0 = (-lag).max(0) as usize;
    let i1 = (a.len() as i64).min(b.len() as i64 - lag).max(0) as usize;
    if i1 <= i0 + 1 {
        return (f64::NEG_INFINITY, 0);
    }
    let n = (i1 - i0) as f64;
    let xa = &a[i0..i1];
    let xb = &b[(i0 as i64 + lag) as usize..(i1 as i64 + lag) as usize];
    let ma = xa.iter().sum::<f64>() / n;
    let mb = xb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in xa.iter().zip(xb) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return (0.0, i1 - i0);
    }
    (sab / (saa * sbb).sqrt(), i1 - i0)
}

/// Offset (seconds, headset clock minus mocap clock) maximizing the
/// normalized cross-correlation of the two speed profiles, refined below
/// one frame by a parabola through the peak and its neighbours.
///
/// `mocap_speed[i]` is sampled at `i / fps`; the headset profile is given
/// at its own timestamps and resampled to `fps` first.
pub fn estimate_offset(
    mocap_speed: &[f64],
    headset_times: &[f64],
    headset_speed: &[f64],
    config: &SyncConfig,
    exec: Execution,
) -> Result<(f64, f64)> {
    if mocap_speed.len() < 3 || headset_speed.len() < 3 || headset_times.len() != headset_speed.len() {
        return Err(Error::Unsynchronizable("series too short"));
    }
    if variance(mocap_speed) < 1e-18 || variance(headset_speed) < 1e-18 {
        return Err(Error::Unsynchronizable("flat velocity profile"));
    }
    let dt = 1.0 / config.fps;
    let t0 = headset_times[0];
    let head = resample_uniform(headset_times, headset_speed, t0, dt);
    let min_overlap = ((mocap_speed.len().min(head.len()) as f64) * config.min_overlap).ceil().max(3.0) as usize;
    let lo = ((-config.max_lag - t0) * config.fps).floor() as i64;
    let hi = ((config.max_lag - t0) * config.fps).ceil() as i64;
    let lags: Vec<i64> = (lo..=hi).collect();
    let scores = exec.map(&lags, |&lag| {
        let (c, n) = ncc(mocap_speed, &head, lag);
        if n >= min_overlap {
            c
        } else {
            f64::NEG_INFINITY
        }
    });
    let (best, &peak) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty lag range");
    if !peak.is_finite() {
        return Err(Error::Unsynchronizable("no lag with sufficient overlap"));
    }
    let mut frac = 0.0;
    if best > 0 && best + 1 < scores.len() && scores[best - 1].is_finite() && scores[best + 1].is_finite() {
        let (cm, c0, cp) = (scores[best - 1], scores[best], scores[best + 1]);
        let denom = cm - 2.0 * c0 + cp;
        if denom < 0.0 {
            frac = (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok((t0 + (lags[best] as f64 + frac) * dt, peak))
}

/// Aligns a headset track to mocap head-bone positions sampled at
/// `config.fps`, then resamples the headset onto every mocap frame inside
/// the common support.
pub fn synchronize(head_bone: &[Vec3], headset: &HeadsetTrack, config: &SyncConfig, exec: Execution) -> Result<SyncResult> {
    headset.validate()?;
    let mocap_times: Vec<f64> = (0..head_bone.len()).map(|i| i as f64 / config.fps).collect();
    let mocap_speed = speed_profile(&mocap_times, head_bone);
    let times = headset.times();
    let head_speed = speed_profile(&times, &headset.positions());
    let (offset, peak_correlation) = estimate_offset(&mocap_speed, &times, &head_speed, config, exec)?;
    let mut aligned = HeadsetTrack::default();
    let mut first_frame = None;
    for (i, &t) in mocap_times.iter().enumerate() {
        if let Some((position, orientation)) = headset.interpolate(t + offset) {
            first_frame.get_or_insert(i);
            aligned.samples.push(HeadsetSample { t, position, orientation });
        } else if first_frame.is_some() {
            break;
        }
    }
    let first_frame = first_frame.ok_or(Error::Unsynchronizable("no common support after alignment"))?;
    Ok(SyncResult { offset, peak_correlation, first_frame, aligned })
}
