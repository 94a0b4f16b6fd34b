//! Box-world scenes: point-cloud sampling, exact signed distance and
//! reachability tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::RegionPair;
use crate::geometry::Vec3;
use crate::spatial::{KdIndex, PointCloud};
use crate::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;
/// Default horizontal distance a goal may lie from navigable floor.
pub const DEFAULT_MAX_SURFACE_DIST: f64 = 1.0;
/// Boxes whose bottom is lower than this above the floor block walking.
pub const BLOCKING_HEIGHT: f64 = 1.0;
pub const NAV_CELL_SIZE: f64 = 0.1;

const COVER_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = Aabb { min, max };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        let finite = self.min.iter().chain(self.max.iter()).all(|v| v.is_finite());
        if !finite || (0..3).any(|i| self.max[i] <= self.min[i]) {
            return Err(Error::InvalidScene(format!("box {:?}..{:?} has no volume", self.min, self.max)));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Exact signed distance to the box surface.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let half = self.extent() * 0.5;
        let q = (p - self.center()).abs() - half;
        let outside = q.sup(&Vec3::zeros()).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x > self.min.x && x < self.max.x && y > self.min.y && y < self.max.y
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Faces as (corner, edge u, edge v).
    fn faces(&self) -> [(Vec3, Vec3, Vec3); 6] {
        let e = self.extent();
        let (ex, ey, ez) = (Vec3::new(e.x, 0.0, 0.0), Vec3::new(0.0, e.y, 0.0), Vec3::new(0.0, 0.0, e.z));
        let lo = self.min;
        [
            (lo, ey, ez),
            (lo + ex, ey, ez),
            (lo, ex, ez),
            (lo + ey, ex, ez),
            (lo, ex, ey),
            (lo + ez, ex, ey),
        ]
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Vec3 {
        Vec3::new(
            rng.random_range(self.min.x..=self.max.x),
            rng.random_range(self.min.y..=self.max.y),
            rng.random_range(self.min.z..=self.max.z),
        )
    }
}

/// On-disk scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub version: u32,
    pub id: String,
    pub boxes: Vec<Aabb>,
    /// Height of the solid floor plane; `None` for free-floating scenes.
    pub floor_height: Option<f64>,
    /// Walkable floor area as a simple polygon in the xy plane.
    #[serde(default)]
    pub navigable: Vec<[f64; 2]>,
    pub point_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub tasks: Vec<RegionPair>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        if spec.version != SCENE_FORMAT_VERSION {
            return Err(Error::Version { what: "scene", found: spec.version, expected: SCENE_FORMAT_VERSION });
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Cells of the floor that a person can stand on.
#[derive(Clone, Debug)]
pub struct NavGrid {
    pub origin: [f64; 2],
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    pub walkable: Vec<bool>,
}

impl NavGrid {
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell,
            self.origin[1] + (iy as f64 + 0.5) * self.cell,
        ]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.cell).floor();
        let fy = ((y - self.origin[1]) / self.cell).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn is_walkable(&self, ix: usize, iy: usize) -> bool {
        self.walkable[iy * self.width + ix]
    }

    pub fn walkable_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |iy| (0..self.width).map(move |ix| (ix, iy))).filter(|&(ix, iy)| self.is_walkable(ix, iy))
    }
}

/// A scene with its sampled point cloud, nearest-neighbour index and
/// navigation grid. Immutable after construction.
#[derive(Clone, Debug)]
pub struct SceneModel {
    spec: SceneSpec,
    cloud: PointCloud,
    index: KdIndex,
    nav: NavGrid,
}

impl SceneModel {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        for b in &spec.boxes {
            b.validate()?;
        }
        if spec.navigable.len() == 1 || spec.navigable.len() == 2 {
            return Err(Error::InvalidScene("navigable polygon needs at least 3 vertices".into()));
        }
        let nav = build_nav_grid(&spec);
        let mut model = SceneModel {
            cloud: PointCloud::new(vec![Vec3::zeros()])?,
            index: KdIndex::from_points(vec![Vec3::zeros()])?,
            spec,
            nav,
        };
        model.cloud = sample_point_cloud(&model, model.spec.point_count, model.spec.seed)?;
        model.index = KdIndex::build(&model.cloud)?;
        Ok(model)
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn boxes(&self) -> &[Aabb] {
        &self.spec.boxes
    }

    pub fn floor_height(&self) -> Option<f64> {
        self.spec.floor_height
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn index(&self) -> &KdIndex {
        &self.index
    }

    pub fn nav(&self) -> &NavGrid {
        &self.nav
    }

    /// Replace the per-point features of the sampled cloud.
    pub fn set_point_features(&mut self, features: ndarray::Array2<f64>) -> Result<()> {
        self.cloud.set_features(features)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        signed_distance(&self.spec, p)
    }

    /// Horizontal distance from `(x, y)` to the nearest walkable floor.
    pub fn distance_to_navigable(&self, x: f64, y: f64) -> f64 {
        if self.is_walkable_point(x, y) {
            return 0.0;
        }
        self.nav
            .walkable_cells()
            .map(|(ix, iy)| {
                let c = self.nav.cell_center(ix, iy);
                ((c[0] - x).powi(2) + (c[1] - y).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_walkable_point(&self, x: f64, y: f64) -> bool {
        point_in_polygon(&self.spec.navigable, x, y) && !blocked(&self.spec, x, y)
    }

    pub fn is_reachable(&self, goal: &Vec3, max_surface_dist: f64) -> bool {
        is_reachable(self, goal, max_surface_dist)
    }
}

/// Union-of-solids signed distance: boxes plus the floor half-space.
/// Exact outside all solids and inside a single box.
pub fn signed_distance(spec: &SceneSpec, p: &Vec3) -> f64 {
    let mut d = spec.floor_height.map_or(f64::INFINITY, |h| p.z - h);
    for b in &spec.boxes {
        d = d.min(b.signed_distance(p));
    }
    d
}

pub fn is_reachable(scene: &SceneModel, goal: &Vec3, max_surface_dist: f64) -> bool {
    scene.signed_distance(goal) >= 0.0 && scene.distance_to_navigable(goal.x, goal.y) <= max_surface_dist
}

/// Area-weighted uniform samples over exposed box faces and navigable floor.
/// Candidates lying inside or on another solid are rejected.
pub fn sample_point_cloud(scene: &SceneModel, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("point count must be positive".into()));
    }
    let spec = &scene.spec;
    enum Surface {
        Face { owner: usize, corner: Vec3, u: Vec3, v: Vec3 },
        Floor,
    }
    let mut surfaces = Vec::new();
    let mut areas = Vec::new();
    for (i, b) in spec.boxes.iter().enumerate() {
        for (corner, u, v) in b.faces() {
            areas.push(u.cross(&v).norm());
            surfaces.push(Surface::Face { owner: i, corner, u, v });
        }
    }
    let floor_area = if spec.floor_height.is_some() { polygon_area(&spec.navigable) } else { 0.0 };
    if floor_area > 0.0 {
        areas.push(floor_area);
        surfaces.push(Surface::Floor);
    }
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateScene);
    }
    let cumulative: Vec<f64> = areas
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc / total)
        })
        .collect();
    let (bx_min, bx_max) = polygon_bounds(&spec.navigable);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let max_attempts = n.saturating_mul(200).max(10_000);
    let mut attempts = 0;
    while points.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::DegenerateScene);
        }
        let r: f64 = rng.random();
        let s = cumulative.partition_point(|&c| c <= r).min(surfaces.len() - 1);
        let (p, owner) = match &surfaces[s] {
            Surface::Face { owner, corner, u, v } => {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                (corner + u * a + v * b, Some(*owner))
            }
            Surface::Floor => {
                let x = rng.random_range(bx_min[0]..=bx_max[0]);
                let y = rng.random_range(bx_min[1]..=bx_max[1]);
                if !point_in_polygon(&spec.navigable, x, y) {
                    continue;
                }
                (Vec3::new(x, y, spec.floor_height.unwrap_or(0.0)), None)
            }
        };
        let covered_by_box = spec
            .boxes
            .iter()
            .enumerate()
            .any(|(i, b)| Some(i) != owner && b.signed_distance(&p) <= COVER_EPS);
        let covered_by_floor = owner.is_some() && spec.floor_height.is_some_and(|h| p.z <= h + COVER_EPS);
        if covered_by_box || covered_by_floor {
            continue;
        }
        points.push(p);
    }
    PointCloud::new(points)
}

fn blocked(spec: &SceneSpec, x: f64, y: f64) -> bool {
    let floor = spec.floor_height.unwrap_or(0.0);
    spec.boxes.iter().any(|b| b.min.z < floor + BLOCKING_HEIGHT && b.contains_xy(x, y))
}

fn build_nav_grid(spec: &SceneSpec) -> NavGrid {
    if spec.navigable.is_empty() {
        return NavGrid { origin: [0.0, 0.0], cell: NAV_CELL_SIZE, width: 0, height: 0, walkable: Vec::new() };
    }
    let (lo, hi) = polygon_bounds(&spec.navigable);
    let width = ((hi[0] - lo[0]) / NAV_CELL_SIZE).ceil().max(1.0) as usize;
    let height = ((hi[1] - lo[1]) / NAV_CELL_SIZE).ceil().max(1.0) as usize;
    let mut grid = NavGrid { origin: lo, cell: NAV_CELL_SIZE, width, height, walkable: vec![false; width * height] };
    for iy in 0..height {
        for ix in 0..width {
            let [x, y] = grid.cell_center(ix, iy);
            grid.walkable[iy * width + ix] = point_in_polygon(&spec.navigable, x, y) && !blocked(spec, x, y);
        }
    }
    grid
}

pub fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    twice.abs() * 0.5
}

fn polygon_bounds(poly: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}
