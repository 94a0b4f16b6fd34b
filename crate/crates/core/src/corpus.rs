//! Procedural ground-truth corpus: box-furniture rooms, sampled reaching
//! tasks, and rule-based motion that walks a grid path, turns, crouches if
//! needed and puts the right wrist on the goal with two-link arm IK.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{order_sequences, sample_tasks, RegionPair, SequenceSpec};
use crate::exec::Execution;
use crate::geometry::{
    forward_kinematics_matrices, BodySurface, Mat3, MotionSequence, PoseState, Rot6D, RotMat, SequenceLabel,
    Skeleton, Vec3, JOINT_COUNT, MAX_FRAMES, MODEL_FPS,
};
use crate::init::ConstantPose;
use crate::io;
use crate::scene::{Aabb, SceneModel, SceneSpec, BLOCKING_HEIGHT, DEFAULT_MAX_SURFACE_DIST, SCENE_FORMAT_VERSION};
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
/// Body clearance kept from furniture footprints while walking or standing.
pub const CLEARANCE: f64 = 0.28;
/// Largest allowed wrist error of a generated sequence.
pub const GOAL_TOLERANCE: f64 = 1e-6;

const STRIDE: f64 = 1.2;
const MIN_WALK_FRAMES: usize = 12;
const ARM_DOWN: f64 = 1.45;
const MAX_CROUCH_HIP: f64 = 1.1;
const MAX_BEND: f64 = 0.5;
const CROUCH_LEVELS: usize = 8;
const MAX_PENETRATION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub scenes: usize,
    pub tasks_per_scene: usize,
    pub sequences_per_task: usize,
    pub seed: u64,
    pub room_size: f64,
    pub furniture: usize,
    pub point_count: usize,
    pub max_frames: usize,
    /// Meters per second along the path.
    pub walk_speed: f64,
    pub reach_frames: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scenes: 4,
            tasks_per_scene: 4,
            sequences_per_task: 4,
            seed: 0,
            room_size: 4.0,
            furniture: 3,
            point_count: 4096,
            max_frames: MAX_FRAMES,
            walk_speed: 1.2,
            reach_frames: 16,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.scenes == 0 || self.tasks_per_scene == 0 || self.sequences_per_task == 0 {
            return bad("scene, task and sequence counts must be positive");
        }
        if !(self.room_size >= 2.0 && self.room_size.is_finite()) {
            return bad("room must be at least 2 m wide");
        }
        if self.max_frames < 2 || self.max_frames > MAX_FRAMES {
            return bad("max_frames must lie in [2, 240]");
        }
        if self.reach_frames == 0 || self.reach_frames + 1 > self.max_frames {
            return bad("reach phase does not fit in max_frames");
        }
        if !(self.walk_speed > 0.0 && self.walk_speed.is_finite()) {
            return bad("walk speed must be positive");
        }
        Ok(())
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Walkable cells at least [`CLEARANCE`] away from every blocking box.
#[derive(Clone, Debug)]
pub struct FreeGrid {
    origin: [f64; 2],
    cell: f64,
    width: usize,
    height: usize,
    free: Vec<bool>,
}

impl FreeGrid {
    pub fn new(scene: &SceneModel) -> Self {
        let nav = scene.nav();
        let floor = scene.floor_height().unwrap_or(0.0);
        let blocking: Vec<&Aabb> = scene.boxes().iter().filter(|b| b.min.z < floor + BLOCKING_HEIGHT).collect();
        let mut free = nav.walkable.clone();
        for iy in 0..nav.height {
            for ix in 0..nav.width {
                let [x, y] = nav.cell_center(ix, iy);
                let i = iy * nav.width + ix;
                free[i] = free[i] && blocking.iter().all(|b| footprint_distance(b, x, y) >= CLEARANCE);
            }
        }
        FreeGrid { origin: nav.origin, cell: nav.cell, width: nav.width, height: nav.height, free }
    }

    fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.origin[0] + (ix as f64 + 0.5) * self.cell, self.origin[1] + (iy as f64 + 0.5) * self.cell]
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.cell).floor();
        let fy = ((y - self.origin[1]) / self.cell).floor();
        (fx >= 0.0 && fy >= 0.0 && fx < self.width as f64 && fy < self.height as f64).then(|| (fx as usize, fy as usize))
    }

    pub fn is_free(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|(ix, iy)| self.free[iy * self.width + ix])
    }

    pub fn free_cells(&self) -> Vec<[f64; 2]> {
        (0..self.height)
            .flat_map(|iy| (0..self.width).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| self.free[iy * self.width + ix])
            .map(|(ix, iy)| self.center(ix, iy))
            .collect()
    }

    fn segment_free(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let steps = (len / (0.25 * self.cell)).ceil().max(1.0) as usize;
        (0..=steps).all(|i| {
            let t = i as f64 / steps as f64;
            self.is_free(a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)
        })
    }

    /// 8-connected A* between the cells holding `from` and `to`, then
    /// shortcut by line of sight. Endpoints are kept exactly.
    pub fn path(&self, from: [f64; 2], to: [f64; 2]) -> Option<Vec<[f64; 2]>> {
        let start = self.cell_of(from[0], from[1])?;
        let goal = self.cell_of(to[0], to[1])?;
        let idx = |(x, y): (usize, usize)| y * self.width + x;
        if !self.free[idx(start)] || !self.free[idx(goal)] {
            return None;
        }
        let h = |(x, y): (usize, usize)| {
            let dx = x.abs_diff(goal.0) as u64;
            let dy = y.abs_diff(goal.1) as u64;
            10 * dx.max(dy) + 4 * dx.min(dy)
        };
        let n = self.width * self.height;
        let mut cost = vec![u64::MAX; n];
        let mut came = vec![usize::MAX; n];
        let mut open = BinaryHeap::new();
        cost[idx(start)] = 0;
        open.push(Reverse((h(start), idx(start))));
        while let Some(Reverse((_, i))) = open.pop() {
            if i == idx(goal) {
                break;
            }
            let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
            for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
                    continue;
                }
                let c = (nx as usize, ny as usize);
                let j = idx(c);
                // No corner cutting past blocked cells.
                if !self.free[j] || !self.free[idx((nx as usize, y as usize))] || !self.free[idx((x as usize, ny as usize))] {
                    continue;
                }
                let step = if dx != 0 && dy != 0 { 14 } else { 10 };
                let next = cost[i] + step;
                if next < cost[j] {
                    cost[j] = next;
                    came[j] = i;
                    open.push(Reverse((next + h(c), j)));
                }
            }
        }
        if cost[idx(goal)] == u64::MAX {
            return None;
        }
        let mut cells = vec![idx(goal)];
        while *cells.last().expect("non-empty") != idx(start) {
            cells.push(came[*cells.last().expect("non-empty")]);
        }
        cells.reverse();
        if cells.len() == 1 {
            return Some(vec![from, to]);
        }
        let mut raw: Vec<[f64; 2]> = cells.iter().map(|&i| self.center(i % self.width, i / self.width)).collect();
        raw[0] = from;
        *raw.last_mut().expect("non-empty") = to;
        let mut out = vec![raw[0]];
        let mut k = 0;
        while k + 1 < raw.len() {
            let mut far = k + 1;
            for j in (k + 2..raw.len()).rev() {
                if self.segment_free(raw[k], raw[j]) {
                    far = j;
                    break;
                }
            }
            out.push(raw[far]);
            k = far;
        }
        Some(out)
    }
}

fn footprint_distance(b: &Aabb, x: f64, y: f64) -> f64 {
    let dx = (b.min.x - x).max(x - b.max.x).max(0.0);
    let dy = (b.min.y - y).max(y - b.max.y).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

/// A furnished square room with sampled task regions.
pub fn procedural_scene(index: usize, config: &CorpusConfig) -> Result<SceneSpec> {
    let mut rng = stream(config.seed, 1 + index as u64);
    let half = 0.5 * config.room_size;
    let mut boxes: Vec<Aabb> = Vec::new();
    for _ in 0..config.furniture {
        for _ in 0..200 {
            let sx = rng.random_range(0.4..1.0);
            let sy = rng.random_range(0.4..1.0);
            let h = match rng.random_range(0..3) {
                0 => rng.random_range(0.3..0.5),
                1 => rng.random_range(0.6..0.9),
                _ => rng.random_range(0.9..1.3),
            };
            let cx = rng.random_range(-half + 0.5 * sx..half - 0.5 * sx);
            let cy = rng.random_range(-half + 0.5 * sy..half - 0.5 * sy);
            let b = Aabb::new(Vec3::new(cx - 0.5 * sx, cy - 0.5 * sy, 0.0), Vec3::new(cx + 0.5 * sx, cy + 0.5 * sy, h))?;
            let gap = boxes.iter().all(|o| {
                let dx = (o.min.x - b.max.x).max(b.min.x - o.max.x);
                let dy = (o.min.y - b.max.y).max(b.min.y - o.max.y);
                dx.max(dy) >= 2.0 * CLEARANCE + 0.2
            });
            if gap {
                boxes.push(b);
                break;
            }
        }
    }
    let mut spec = SceneSpec {
        version: SCENE_FORMAT_VERSION,
        id: format!("room{index:03}"),
        boxes,
        floor_height: Some(0.0),
        navigable: vec![[-half, -half], [half, -half], [half, half], [-half, half]],
        point_count: config.point_count,
        seed: rng.random(),
        tasks: Vec::new(),
    };
    let free = FreeGrid::new(&SceneModel::new(spec.clone())?).free_cells();
    if free.is_empty() {
        return Err(Error::InvalidScene(format!("{} has no free floor", spec.id)));
    }
    let pick = |rng: &mut ChaCha8Rng| free[rng.random_range(0..free.len())];
    for t in 0..config.tasks_per_scene {
        let s = pick(&mut rng);
        let start = Aabb::new(Vec3::new(s[0] - 0.15, s[1] - 0.15, 0.0), Vec3::new(s[0] + 0.15, s[1] + 0.15, 0.01))?;
        let kind = if spec.boxes.is_empty() { rng.random_range(1..3) } else { rng.random_range(0..4) };
        let goal = match kind {
            0 | 3 => {
                let b = spec.boxes[rng.random_range(0..spec.boxes.len())];
                let depth = 0.12;
                let (lo, hi) = match rng.random_range(0..4) {
                    0 => ([b.min.x, b.min.y], [b.min.x + depth, b.max.y]),
                    1 => ([b.max.x - depth, b.min.y], [b.max.x, b.max.y]),
                    2 => ([b.min.x, b.min.y], [b.max.x, b.min.y + depth]),
                    _ => ([b.min.x, b.max.y - depth], [b.max.x, b.max.y]),
                };
                Aabb::new(Vec3::new(lo[0], lo[1], b.max.z + 0.12), Vec3::new(hi[0], hi[1], b.max.z + 0.35))?
            }
            1 => {
                let c = pick(&mut rng);
                Aabb::new(Vec3::new(c[0] - 0.2, c[1] - 0.2, 1.4), Vec3::new(c[0] + 0.2, c[1] + 0.2, 1.8))?
            }
            _ => {
                let c = pick(&mut rng);
                Aabb::new(Vec3::new(c[0] - 0.2, c[1] - 0.2, 0.4), Vec3::new(c[0] + 0.2, c[1] + 0.2, 0.7))?
            }
        };
        spec.tasks.push(RegionPair { task_id: (index * config.tasks_per_scene + t) as u32, start, goal });
    }
    Ok(spec)
}

/// Joint indices the generator drives.
#[derive(Clone, Copy, Debug)]
struct Rig {
    hips: [usize; 2],
    knees: [usize; 2],
    ankles: [usize; 2],
    spine: usize,
    shoulders: [usize; 2],
    collar: usize,
    elbow: usize,
    wrist: usize,
}

impl Rig {
    fn new(skel: &Skeleton) -> Result<Self> {
        let j = |name: &str| {
            skel.index_of(name).ok_or_else(|| Error::InvalidSkeleton(format!("generator needs joint `{name}`")))
        };
        let rig = Rig {
            hips: [j("left_hip")?, j("right_hip")?],
            knees: [j("left_knee")?, j("right_knee")?],
            ankles: [j("left_ankle")?, j("right_ankle")?],
            spine: j("spine1")?,
            shoulders: [j("left_shoulder")?, j("right_shoulder")?],
            collar: j("right_collar")?,
            elbow: j("right_elbow")?,
            wrist: skel.right_wrist(),
        };
        if skel.parent(rig.shoulders[1]) != Some(rig.collar)
            || skel.parent(rig.elbow) != Some(rig.shoulders[1])
            || skel.parent(rig.wrist) != Some(rig.elbow)
        {
            return Err(Error::InvalidSkeleton("right arm must be collar > shoulder > elbow > wrist".into()));
        }
        Ok(rig)
    }
}

/// Whole-body posture before the arm solve.
#[derive(Clone, Copy, Debug)]
struct Posture {
    yaw: f64,
    crouch: f64,
    phase: f64,
    gait: f64,
}

fn yaw_facing(dx: f64, dy: f64) -> f64 {
    (-dx).atan2(dy)
}

fn angle_diff(to: f64, from: f64) -> f64 {
    let d = (to - from).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

fn ease(s: f64) -> f64 {
    0.5 * (1.0 - (PI * s).cos())
}

fn rot_x(a: f64) -> Mat3 {
    RotMat::rot_x(a).into_inner()
}

fn local_rotations(rig: &Rig, skel: &Skeleton, p: &Posture) -> Vec<Mat3> {
    let mut l = vec![Mat3::identity(); skel.len()];
    l[0] = RotMat::rot_z(p.yaw).into_inner();
    let theta = MAX_CROUCH_HIP * p.crouch;
    let swing = p.gait * p.phase.sin();
    for (side, sign) in [(0, 1.0), (1, -1.0)] {
        let s = sign * swing;
        let lift = 0.9 * p.gait * (sign * p.phase.cos()).max(0.0);
        l[rig.hips[side]] = rot_x(theta + s + 0.5 * lift);
        l[rig.knees[side]] = rot_x(-2.0 * theta - lift);
        l[rig.ankles[side]] = rot_x(theta - s + 0.5 * lift);
    }
    l[rig.spine] = rot_x(-MAX_BEND * p.crouch);
    l[rig.shoulders[0]] = RotMat::rot_y(-ARM_DOWN).into_inner();
    l[rig.shoulders[1]] = RotMat::rot_y(ARM_DOWN).into_inner();
    l
}

/// Root height that rests the lowest non-arm vertex on the floor.
fn grounded_root(rig: &Rig, skel: &Skeleton, surface: &BodySurface, local: &[Mat3], xy: [f64; 2], floor: f64) -> Vec3 {
    let t = forward_kinematics_matrices(skel, local, Vec3::zeros());
    let arm = [rig.shoulders[1], rig.elbow, rig.wrist];
    let lowest = (0..surface.len())
        .filter(|&v| !arm.contains(&surface.joint_of(v)))
        .map(|v| (t.positions[surface.joint_of(v)] + t.rotations[surface.joint_of(v)] * surface.local_offset(v)).z)
        .fold(f64::INFINITY, f64::min);
    Vec3::new(xy[0], xy[1], floor - lowest)
}

/// Analytic two-link solve. Returns local shoulder and elbow rotations that
/// put the wrist joint exactly on `goal`.
fn solve_arm(rig: &Rig, skel: &Skeleton, local: &[Mat3], root: Vec3, yaw: f64, goal: Vec3) -> Option<(Mat3, Mat3)> {
    let t = forward_kinematics_matrices(skel, local, root);
    let upper = skel.offset(rig.elbow);
    let fore = skel.offset(rig.wrist);
    let (a, b) = (upper.norm(), fore.norm());
    // Both bones must lie along local +x for the frame construction below.
    if upper.y.abs() + upper.z.abs() > 1e-12 || fore.y.abs() + fore.z.abs() > 1e-12 || upper.x <= 0.0 || fore.x <= 0.0 {
        return None;
    }
    let shoulder = t.positions[rig.shoulders[1]];
    let to_goal = goal - shoulder;
    let d = to_goal.norm();
    if d > 0.97 * (a + b) || d < (a - b).abs() + 0.05 {
        return None;
    }
    let u = to_goal / d;
    let right = RotMat::rot_z(yaw).into_inner() * Vec3::x();
    let pole = Vec3::new(0.0, 0.0, -1.0) + right * 0.5;
    let w = pole - u * u.dot(&pole);
    let w = if w.norm() > 1e-6 { w.normalize() } else { u.cross(&right).normalize() };
    let alpha = ((a * a + d * d - b * b) / (2.0 * a * d)).clamp(-1.0, 1.0).acos();
    let elbow = shoulder + (u * alpha.cos() + w * alpha.sin()) * a;
    let ua = (elbow - shoulder) / a;
    let fa = (goal - elbow) / b;
    let bend = ua.cross(&fa);
    let z = if bend.norm() > 1e-9 { bend.normalize() } else { ua.cross(&w).normalize() };
    let frame = |x: Vec3| Mat3::from_columns(&[x, z.cross(&x), z]);
    let g_shoulder = frame(ua);
    let g_elbow = frame(fa);
    let g_collar = t.rotations[rig.collar];
    Some((g_collar.transpose() * g_shoulder, g_shoulder.transpose() * g_elbow))
}

fn pose(skel: &Skeleton, local: &[Mat3], root: Vec3) -> Result<PoseState> {
    let mut rots = [Rot6D::IDENTITY; JOINT_COUNT];
    if local.len() != JOINT_COUNT {
        return Err(Error::InvalidSkeleton(format!("generator expects {JOINT_COUNT} joints")));
    }
    for (r, m) in rots.iter_mut().zip(local) {
        *r = RotMat::new_unchecked(*m).to_rot6d();
    }
    PoseState::from_rotations(skel, rots, root)
}

fn slerp(a: &Mat3, b: &Mat3, s: f64) -> Mat3 {
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*a));
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*b));
    *qa.slerp(&qb, s).to_rotation_matrix().matrix()
}

struct Stance {
    xy: [f64; 2],
    posture: Posture,
    arm: (Mat3, Mat3),
    root: Vec3,
}

struct Polyline {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Polyline {
    fn new(points: Vec<[f64; 2]>) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let l = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cumulative.push(cumulative.last().expect("non-empty") + l);
        }
        Polyline { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn segment(&self, s: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= s);
        k.clamp(1, self.points.len().max(2) - 1) - 1
    }

    fn at(&self, s: f64) -> [f64; 2] {
        if self.points.len() < 2 {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.length());
        let k = self.segment(s);
        let (a, b) = (self.points[k], self.points[k + 1]);
        let seg = self.cumulative[k + 1] - self.cumulative[k];
        let t = if seg > 0.0 { (s - self.cumulative[k]) / seg } else { 0.0 };
        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
    }

    /// Direction averaged over a short window, so corners turn smoothly.
    fn heading(&self, s: f64) -> f64 {
        let mut dir = [0.0, 0.0];
        for off in [-0.3, -0.15, 0.0, 0.15, 0.3] {
            let q = (s + off).clamp(0.0, self.length());
            let k = self.segment(q);
            let (a, b) = (self.points[k], self.points[k + 1]);
            let l = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if l > 0.0 {
                dir[0] += (b[0] - a[0]) / l;
                dir[1] += (b[1] - a[1]) / l;
            }
        }
        yaw_facing(dir[0], dir[1])
    }
}

/// Everything needed to synthesize sequences in one scene.
pub struct SceneContext<'a> {
    pub scene: &'a SceneModel,
    pub free: FreeGrid,
    skel: &'a Skeleton,
    surface: &'a BodySurface,
    rig: Rig,
    floor: f64,
}

impl<'a> SceneContext<'a> {
    pub fn new(scene: &'a SceneModel, skel: &'a Skeleton, surface: &'a BodySurface) -> Result<Self> {
        Ok(SceneContext {
            free: FreeGrid::new(scene),
            floor: scene.floor_height().unwrap_or(0.0),
            rig: Rig::new(skel)?,
            scene,
            skel,
            surface,
        })
    }

    fn penetration(&self, p: &PoseState) -> Result<f64> {
        let verts = self.surface.pose_vertices(self.skel, p)?;
        Ok(verts.iter().map(|v| -self.scene.signed_distance(v)).fold(0.0, f64::max))
    }

    /// Cheapest collision-free place and posture to reach `goal` from.
    fn stance(&self, goal: Vec3) -> Result<Option<Stance>> {
        let mut candidates = Vec::new();
        for (ri, r) in [0.3, 0.4, 0.5, 0.6].into_iter().enumerate() {
            for k in 0..16 {
                let ang = k as f64 * PI / 8.0;
                let xy = [goal.x + r * ang.cos(), goal.y + r * ang.sin()];
                if !self.free.is_free(xy[0], xy[1]) {
                    continue;
                }
                let face = yaw_facing(goal.x - xy[0], goal.y - xy[1]);
                for (oi, off) in [0.0, 0.35, -0.35, 0.7].into_iter().enumerate() {
                    for level in 0..=CROUCH_LEVELS {
                        let crouch = level as f64 / CROUCH_LEVELS as f64;
                        let cost = 3.0 * crouch + 0.5 * ri as f64 + 0.3 * oi as f64 + 0.01 * k as f64;
                        candidates.push((cost, xy, Posture { yaw: face + off, crouch, phase: 0.0, gait: 0.0 }));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut checked = 0;
        for (_, xy, posture) in candidates {
            let mut local = local_rotations(&self.rig, self.skel, &posture);
            let root = grounded_root(&self.rig, self.skel, self.surface, &local, xy, self.floor);
            let Some(arm) = solve_arm(&self.rig, self.skel, &local, root, posture.yaw, goal) else {
                continue;
            };
            checked += 1;
            if checked > 60 {
                break;
            }
            local[self.rig.shoulders[1]] = arm.0;
            local[self.rig.elbow] = arm.1;
            if self.penetration(&pose(self.skel, &local, root)?)? <= MAX_PENETRATION {
                return Ok(Some(Stance { xy, posture, arm, root }));
            }
        }
        Ok(None)
    }

    /// Ground-truth motion for one task, or `None` when no collision-free
    /// plan fits in the frame budget.
    pub fn synthesize(&self, spec: &SequenceSpec, config: &CorpusConfig) -> Result<Option<MotionSequence>> {
        let Some(stance) = self.stance(spec.goal)? else {
            return Ok(None);
        };
        let from = [spec.start.x, spec.start.y];
        let Some(points) = self.free.path(from, stance.xy) else {
            return Ok(None);
        };
        let path = Polyline::new(points);
        let length = path.length();
        let walk = if length < 0.05 { 0 } else { ((length / config.walk_speed * MODEL_FPS).ceil() as usize).max(MIN_WALK_FRAMES) };
        let reach = config.reach_frames;
        if walk + 1 + reach > config.max_frames {
            return Ok(None);
        }
        let final_yaw = stance.posture.yaw;
        let start_yaw = if walk == 0 { final_yaw } else { path.heading(0.0) };
        let mut frames = Vec::with_capacity(walk + 1 + reach);
        let mut last_yaw = start_yaw;
        for i in 0..=walk {
            let (s, speed) = if walk == 0 {
                (0.0, 0.0)
            } else {
                let u = i as f64 / walk as f64;
                (length * ease(u), length * FRAC_PI_2 * (PI * u).sin() * MODEL_FPS / walk as f64)
            };
            let yaw = if walk == 0 { start_yaw } else { path.heading(s) };
            last_yaw = yaw;
            let posture = Posture { yaw, crouch: 0.0, phase: 2.0 * PI * s / STRIDE, gait: 0.35 * (speed / 1.2).min(1.0) };
            let local = local_rotations(&self.rig, self.skel, &posture);
            let root = grounded_root(&self.rig, self.skel, self.surface, &local, path.at(s), self.floor);
            frames.push(pose(self.skel, &local, root)?);
        }
        let end_xy = path.at(length);
        let turn = angle_diff(final_yaw, last_yaw);
        let rest = local_rotations(&self.rig, self.skel, &Posture { yaw: 0.0, crouch: 0.0, phase: 0.0, gait: 0.0 });
        for k in 1..=reach {
            let (root, local) = if k == reach {
                let mut local = local_rotations(&self.rig, self.skel, &stance.posture);
                local[self.rig.shoulders[1]] = stance.arm.0;
                local[self.rig.elbow] = stance.arm.1;
                (stance.root, local)
            } else {
                let s = ease(k as f64 / reach as f64);
                let posture =
                    Posture { yaw: last_yaw + turn * s, crouch: stance.posture.crouch * s, phase: 0.0, gait: 0.0 };
                let mut local = local_rotations(&self.rig, self.skel, &posture);
                local[self.rig.shoulders[1]] = slerp(&rest[self.rig.shoulders[1]], &stance.arm.0, s);
                local[self.rig.elbow] = slerp(&rest[self.rig.elbow], &stance.arm.1, s);
                let xy = [end_xy[0] + (stance.xy[0] - end_xy[0]) * s, end_xy[1] + (stance.xy[1] - end_xy[1]) * s];
                (grounded_root(&self.rig, self.skel, self.surface, &local, xy, self.floor), local)
            };
            frames.push(pose(self.skel, &local, root)?);
        }
        let seq = MotionSequence {
            id: 0,
            task_id: spec.task_id,
            scene_id: spec.scene_id.clone(),
            label: SequenceLabel::Reaching,
            fps: MODEL_FPS,
            goal: spec.goal,
            frames,
        };
        let miss = (seq.final_right_wrist(self.skel).expect("non-empty") - spec.goal).norm();
        if miss > GOAL_TOLERANCE {
            log::warn!("task {} missed its goal by {miss:e} m", spec.task_id);
            return Ok(None);
        }
        Ok(Some(seq))
    }
}

/// An in-memory corpus.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub scenes: Vec<SceneSpec>,
    pub sequences: Vec<MotionSequence>,
    pub constant_pose: ConstantPose,
    pub skipped: usize,
}

/// Samples `per_task` start/goal pairs from every task region of every scene
/// and synthesizes a sequence for each. Unreachable tasks are skipped with
/// a warning. Ids are assigned in generation order.
pub fn generate_corpus(
    scenes: &[SceneModel],
    per_task: usize,
    seed: u64,
    config: &CorpusConfig,
    skel: &Skeleton,
    exec: Execution,
) -> Result<Corpus> {
    config.validate()?;
    let surface = BodySurface::new(skel);
    let mut sequences = Vec::new();
    let mut skipped = 0;
    for (i, scene) in scenes.iter().enumerate() {
        let ctx = SceneContext::new(scene, skel, &surface)?;
        let sampled = sample_tasks(&scene.spec().tasks, scene, per_task, seed ^ (i as u64 + 1), DEFAULT_MAX_SURFACE_DIST)?;
        let specs = order_sequences(&sampled.specs);
        let made = exec.try_map(&specs, |s| ctx.synthesize(s, config))?;
        for (spec, seq) in specs.iter().zip(made) {
            match seq {
                Some(s) => sequences.push(s),
                None => {
                    log::warn!("skipping unreachable task {} in {} (goal {:?})", spec.task_id, spec.scene_id, spec.goal);
                    skipped += 1;
                }
            }
        }
    }
    for (id, s) in sequences.iter_mut().enumerate() {
        s.id = id as u32;
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("no task could be synthesized".into()));
    }
    let frames: Vec<&PoseState> = sequences.iter().flat_map(|s| s.frames.iter()).collect();
    let constant_pose = ConstantPose::medoid(skel, &frames)?;
    Ok(Corpus { scenes: scenes.iter().map(|s| s.spec().clone()).collect(), sequences, constant_pose, skipped })
}

/// Procedural scenes followed by [`generate_corpus`].
pub fn generate_procedural(config: &CorpusConfig, skel: &Skeleton, exec: Execution) -> Result<Corpus> {
    config.validate()?;
    let specs = (0..config.scenes).map(|i| procedural_scene(i, config)).collect::<Result<Vec<_>>>()?;
    let models = exec.try_map(&specs, |s| SceneModel::new(s.clone()))?;
    generate_corpus(&models, config.sequences_per_task, config.seed, config, skel, exec)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub seed: u64,
    pub config: CorpusConfig,
    pub config_hash: String,
    pub skeleton: FileRef,
    pub skeleton_hash: String,
    pub scenes: Vec<FileRef>,
    pub sequences: FileRef,
    pub constant_pose: FileRef,
    #[serde(default)]
    pub splits: Vec<FileRef>,
    pub sequence_count: usize,
    pub skipped: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn put(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileRef> {
    io::atomic_write(&dir.join(name), bytes)?;
    Ok(FileRef { path: name.to_string(), sha256: io::sha256_hex(bytes) })
}

pub fn file_ref(dir: &Path, name: &str) -> Result<FileRef> {
    Ok(FileRef { path: name.to_string(), sha256: io::sha256_hex(&io::read_bytes(&dir.join(name))?) })
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

/// Writes every artifact, then the manifest last.
pub fn write_corpus(dir: &Path, corpus: &Corpus, config: &CorpusConfig, skel: &Skeleton) -> Result<CorpusManifest> {
    let mut scenes = Vec::new();
    for s in &corpus.scenes {
        let mut text = s.to_json();
        text.push('\n');
        scenes.push(put(dir, &format!("scenes/{}.json", s.id), text.as_bytes())?);
    }
    let mut skel_json = skel.to_json();
    skel_json.push('\n');
    let manifest = CorpusManifest {
        version: MANIFEST_VERSION,
        seed: config.seed,
        config: config.clone(),
        config_hash: io::config_hash(config),
        skeleton: put(dir, "skeleton.json", skel_json.as_bytes())?,
        skeleton_hash: skel.hash(),
        scenes,
        sequences: put(dir, "sequences.bin", &io::encode_sequences(&corpus.sequences))?,
        constant_pose: put(dir, "constant_pose.json", &json_bytes(&corpus.constant_pose))?,
        splits: Vec::new(),
        sequence_count: corpus.sequences.len(),
        skipped: corpus.skipped,
    };
    io::atomic_write(&dir.join(MANIFEST_FILE), &json_bytes(&manifest))?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &CorpusManifest) -> Result<()> {
    io::atomic_write(&dir.join(MANIFEST_FILE), &json_bytes(manifest))
}

/// A corpus read back from disk with all hashes verified.
#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub manifest: CorpusManifest,
    pub skeleton: Skeleton,
    pub scenes: BTreeMap<String, SceneModel>,
    pub sequences: Vec<MotionSequence>,
    pub constant_pose: ConstantPose,
}

fn verified(dir: &Path, r: &FileRef) -> Result<Vec<u8>> {
    let bytes = io::read_bytes(&dir.join(&r.path))?;
    if io::sha256_hex(&bytes) != r.sha256 {
        return Err(Error::HashMismatch(r.path.clone()));
    }
    Ok(bytes)
}

fn utf8(path: &str, bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| Error::Parse { offset: e.utf8_error().valid_up_to(), message: format!("{path} is not UTF-8") })
}

pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let manifest: CorpusManifest = io::read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Version { what: "manifest", found: manifest.version, expected: MANIFEST_VERSION });
    }
    let skeleton = Skeleton::from_json(&utf8(&manifest.skeleton.path, verified(dir, &manifest.skeleton)?)?)?;
    if skeleton.hash() != manifest.skeleton_hash {
        return Err(Error::HashMismatch("skeleton template".into()));
    }
    let mut scenes = BTreeMap::new();
    for r in &manifest.scenes {
        let text = utf8(&r.path, verified(dir, r)?)?;
        let spec = SceneSpec::from_json(&text).map_err(|e| match e {
            Error::Json(j) => io::json_error(&text, j),
            other => other,
        })?;
        scenes.insert(spec.id.clone(), SceneModel::new(spec)?);
    }
    for r in &manifest.splits {
        verified(dir, r)?;
    }
    let sequences = io::decode_sequences(&verified(dir, &manifest.sequences)?)?;
    let pose_text = utf8(&manifest.constant_pose.path, verified(dir, &manifest.constant_pose)?)?;
    let constant_pose = serde_json::from_str(&pose_text).map_err(|e| io::json_error(&pose_text, e))?;
    Ok(LoadedCorpus { manifest, skeleton, scenes, sequences, constant_pose })
}
