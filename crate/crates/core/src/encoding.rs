//! Per-frame scene features: basis-point distances through an MLP, or
//! interpolated per-point features.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::geometry::{BodySurface, MotionSequence, PoseState, Skeleton, Vec3, SURFACE_VERTEX_COUNT};
use crate::nn::{gelu, gelu_grad, Linear, Tensors};
use crate::scene::SceneModel;
use crate::spatial::{KdIndex, PointCloud};
use crate::{Error, Result};

pub const BASIS_RADIUS: f64 = 0.6;
pub const BASIS_HEIGHT: f64 = 2.0;
pub const BASIS_POINTS: usize = 1024;
pub const FEATURE_DIM: usize = 256;
pub const POINT_FEATURE_DIM: usize = 128;
/// Raw distance input width: one difference vector per body vertex and per
/// basis point.
pub const BPS_INPUT_DIM: usize = 3 * (SURFACE_VERTEX_COUNT + BASIS_POINTS);
pub const DEFAULT_BPS_HIDDEN: usize = 512;
/// Distance below which interpolation snaps to the coincident point.
pub const EXACT_HIT: f64 = 1e-9;

/// Fixed points inside a vertical cylinder centred on the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderBasis {
    pub radius: f64,
    pub height: f64,
    pub seed: u64,
    pub points: Vec<Vec3>,
}

impl CylinderBasis {
    /// Uniform by volume, via rejection in the bounding box.
    pub fn sample(radius: f64, height: f64, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        while points.len() < count {
            let x = rng.random_range(-radius..=radius);
            let y = rng.random_range(-radius..=radius);
            let z = rng.random_range(-0.5 * height..=0.5 * height);
            if x * x + y * y <= radius * radius {
                points.push(Vec3::new(x, y, z));
            }
        }
        CylinderBasis { radius, height, seed, points }
    }

    pub fn standard(seed: u64) -> Self {
        Self::sample(BASIS_RADIUS, BASIS_HEIGHT, BASIS_POINTS, seed)
    }
}

/// Basis in world coordinates, axis through the root's floor position and
/// spanning heights `[0, height]`.
pub fn place_basis(basis: &CylinderBasis, root_xy: [f64; 2]) -> Vec<Vec3> {
    let shift = Vec3::new(root_xy[0], root_xy[1], 0.5 * basis.height);
    basis.points.iter().map(|p| p + shift).collect()
}

/// Nearest scene point minus query, per query.
pub fn nn_differences(queries: &[Vec3], index: &KdIndex) -> Vec<Vec3> {
    queries
        .iter()
        .map(|q| index.point(index.nearest(q).index) - q)
        .collect()
}

/// Concatenated difference vectors for the body vertices and the placed basis.
pub fn bps_input(pose_vertices: &[Vec3], basis_world: &[Vec3], index: &KdIndex) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * (pose_vertices.len() + basis_world.len()));
    for d in nn_differences(pose_vertices, index).into_iter().chain(nn_differences(basis_world, index)) {
        out.extend_from_slice(d.as_slice());
    }
    out
}

/// Two-layer MLP from raw distances to a scene feature.
#[derive(Clone, Debug, PartialEq)]
pub struct BpsEncoderParams {
    pub hidden: Linear,
    pub output: Linear,
}

pub struct BpsCache {
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl BpsEncoderParams {
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BpsEncoderParams { hidden: Linear::glorot(inputs, hidden, rng), output: Linear::glorot(hidden, FEATURE_DIM, rng) }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        BpsEncoderParams { hidden: Linear::zeros(inputs, hidden), output: Linear::zeros(hidden, FEATURE_DIM) }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.outputs()
    }

    /// Rows of `x` are independent frames.
    pub fn forward(&self, x: &ArrayView2<f64>) -> (Array2<f64>, BpsCache) {
        let pre = self.hidden.forward(x);
        let act = pre.mapv(gelu);
        let y = self.output.forward(&act.view());
        (y, BpsCache { pre, act })
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&self, x: &ArrayView2<f64>, cache: &BpsCache, gy: &ArrayView2<f64>, grad: &mut Self) -> Array2<f64> {
        let gpre = self.hidden_grad(cache, gy, grad);
        self.hidden.backward(x, &gpre.view(), &mut grad.hidden)
    }

    /// Like [`Self::backward`] but skips the input gradient.
    pub fn backward_params(&self, x: &ArrayView2<f64>, cache: &BpsCache, gy: &ArrayView2<f64>, grad: &mut Self) {
        let gpre = self.hidden_grad(cache, gy, grad);
        self.hidden.backward_params(x, &gpre.view(), &mut grad.hidden);
    }

    fn hidden_grad(&self, cache: &BpsCache, gy: &ArrayView2<f64>, grad: &mut Self) -> Array2<f64> {
        let gact = self.output.backward(&cache.act.view(), gy, &mut grad.output);
        let mut gpre = cache.pre.mapv(gelu_grad);
        gpre *= &gact;
        gpre
    }
}

impl Tensors for BpsEncoderParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.hidden.push("bps.hidden", &mut out);
        self.output.push("bps.output", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.hidden.push_mut(&mut out);
        self.output.push_mut(&mut out);
        out
    }
}

pub fn encode_bps(
    pose_vertices: &[Vec3],
    basis_world: &[Vec3],
    index: &KdIndex,
    params: &BpsEncoderParams,
) -> Result<Array1<f64>> {
    let raw = bps_input(pose_vertices, basis_world, index);
    if raw.len() != params.input_dim() {
        return Err(Error::Shape(format!("{} distance inputs for an encoder expecting {}", raw.len(), params.input_dim())));
    }
    let x = Array2::from_shape_vec((1, raw.len()), raw).expect("one row");
    let (y, _) = params.forward(&x.view());
    Ok(y.row(0).to_owned())
}

fn cloud_features(cloud: &PointCloud) -> Result<&Array2<f64>> {
    cloud
        .features()
        .ok_or_else(|| Error::InvalidArgument("scene cloud has no per-point features".into()))
}

/// Inverse-distance weighting over the three nearest points.
pub fn interpolate_feature(e: &Vec3, cloud: &PointCloud, index: &KdIndex) -> Result<Array1<f64>> {
    let features = cloud_features(cloud)?;
    let nn = index.k_nearest(e, 3)?;
    if nn[0].distance < EXACT_HIT {
        return Ok(features.row(nn[0].index).to_owned());
    }
    let mut acc = Array1::zeros(features.ncols());
    let mut total = 0.0;
    for n in &nn {
        let w = 1.0 / n.distance;
        acc.scaled_add(w, &features.row(n.index));
        total += w;
    }
    Ok(acc / total)
}

/// Mean interpolated feature over the body vertices, then over the nearest
/// scene points of the basis.
pub fn encode_pointfeat(
    pose_vertices: &[Vec3],
    basis_world: &[Vec3],
    cloud: &PointCloud,
    index: &KdIndex,
) -> Result<Array1<f64>> {
    let dim = cloud_features(cloud)?.ncols();
    let mut out = Array1::zeros(2 * dim);
    for v in pose_vertices {
        let f = interpolate_feature(v, cloud, index)?;
        out.slice_mut(ndarray::s![..dim]).scaled_add(1.0, &f);
    }
    for b in basis_world {
        let p = index.point(index.nearest(b).index);
        let f = interpolate_feature(&p, cloud, index)?;
        out.slice_mut(ndarray::s![dim..]).scaled_add(1.0, &f);
    }
    out.slice_mut(ndarray::s![..dim]).mapv_inplace(|v| v / pose_vertices.len() as f64);
    out.slice_mut(ndarray::s![dim..]).mapv_inplace(|v| v / basis_world.len() as f64);
    Ok(out)
}

/// Smooth synthetic per-point features: `cos(w·p + phase)` for random
/// frequencies `w` and phases.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomFourierFeatures {
    pub frequencies: Array2<f64>,
    pub phases: Array1<f64>,
}

impl RandomFourierFeatures {
    /// `scale` is the spatial length (meters) of the typical period.
    pub fn new(dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / scale).expect("positive scale");
        let frequencies = Array2::from_shape_simple_fn((3, dim), || normal.sample(&mut rng));
        let phases = Array1::from_shape_simple_fn(dim, || rng.random_range(0.0..std::f64::consts::TAU));
        RandomFourierFeatures { frequencies, phases }
    }

    pub fn standard(seed: u64) -> Self {
        Self::new(POINT_FEATURE_DIM, 0.5, seed)
    }

    pub fn features(&self, points: &[Vec3]) -> Array2<f64> {
        let p = Array2::from_shape_fn((points.len(), 3), |(i, j)| points[i][j]);
        let mut f = p.dot(&self.frequencies);
        f += &self.phases;
        f.mapv_inplace(f64::cos);
        f
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Bps,
    PointFeat,
    None,
}

impl EncoderKind {
    /// Width of the per-frame encoder input handed to the refiner.
    pub fn input_dim(self) -> usize {
        match self {
            EncoderKind::Bps => BPS_INPUT_DIM,
            EncoderKind::PointFeat => FEATURE_DIM,
            EncoderKind::None => 0,
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bps" => Ok(EncoderKind::Bps),
            "pointfeat" => Ok(EncoderKind::PointFeat),
            "none" => Ok(EncoderKind::None),
            other => Err(Error::InvalidArgument(format!("unknown encoder `{other}`"))),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Bps => "bps",
            EncoderKind::PointFeat => "pointfeat",
            EncoderKind::None => "none",
        })
    }
}

/// Computes the parameter-free part of the scene encoding for each frame.
/// For the basis-point pathway that is the raw distance vector (the MLP
/// belongs to the refiner); for the point-feature pathway it is the final
/// 256-dim feature.
#[derive(Clone, Debug)]
pub struct SceneEncoder {
    pub kind: EncoderKind,
    pub basis: CylinderBasis,
    surface: BodySurface,
}

impl SceneEncoder {
    pub fn new(kind: EncoderKind, basis: CylinderBasis, skeleton: &Skeleton) -> Self {
        SceneEncoder { kind, basis, surface: BodySurface::new(skeleton) }
    }

    pub fn surface(&self) -> &BodySurface {
        &self.surface
    }

    pub fn frame_input(&self, scene: &SceneModel, skeleton: &Skeleton, pose: &PoseState) -> Result<Vec<f64>> {
        if self.kind == EncoderKind::None {
            return Ok(Vec::new());
        }
        let vertices = self.surface.pose_vertices(skeleton, pose)?;
        let basis = place_basis(&self.basis, [pose.root.x, pose.root.y]);
        match self.kind {
            EncoderKind::Bps => Ok(bps_input(&vertices, &basis, scene.index())),
            EncoderKind::PointFeat => Ok(encode_pointfeat(&vertices, &basis, scene.cloud(), scene.index())?.to_vec()),
            EncoderKind::None => unreachable!(),
        }
    }

    /// One row per frame, `kind.input_dim()` columns.
    pub fn sequence_input(
        &self,
        scene: &SceneModel,
        skeleton: &Skeleton,
        seq: &MotionSequence,
        exec: Execution,
    ) -> Result<Array2<f64>> {
        let rows = exec.try_map(&seq.frames, |f| self.frame_input(scene, skeleton, f))?;
        let width = self.kind.input_dim();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Array2::from_shape_vec((seq.len(), width), flat).map_err(|e| Error::Shape(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseState;

    fn random_points(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(0.0..2.0 * extent),
                )
            })
            .collect()
    }

    fn featured_cloud(rng: &mut impl Rng, n: usize, dim: usize) -> (PointCloud, KdIndex) {
        let pts = random_points(rng, n, 1.0);
        let feats = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
        let cloud = PointCloud::with_features(pts, feats).unwrap();
        let index = KdIndex::build(&cloud).unwrap();
        (cloud, index)
    }

    #[test]
    fn basis_lies_in_cylinder_after_placement() {
        let basis = CylinderBasis::standard(0);
        assert_eq!(basis.points.len(), 1024);
        let placed = place_basis(&basis, [0.0, 0.0]);
        assert_eq!(placed[5], basis.points[5] + Vec3::new(0.0, 0.0, 1.0));
        let moved = place_basis(&basis, [2.5, -1.0]);
        for (a, b) in placed.iter().zip(&moved) {
            assert!((b - a - Vec3::new(2.5, -1.0, 0.0)).norm() < 1e-12);
            assert!((b.x - 2.5).hypot(b.y + 1.0) <= 0.6 + 1e-12);
            assert!((0.0..=2.0).contains(&b.z));
        }
        assert_eq!(CylinderBasis::standard(0), basis);
    }

    #[test]
    fn differences_point_at_nearest_scene_point() {
        let index = KdIndex::from_points(vec![Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(nn_differences(&[Vec3::zeros()], &index), vec![Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(nn_differences(&[Vec3::new(1.0, 0.0, 0.0)], &index), vec![Vec3::zeros()]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_points(&mut rng, 2000, 2.0);
        let index = KdIndex::from_points(scene.clone()).unwrap();
        let body = BodySurface::new(&Skeleton::body22()).rest_vertices().to_vec();
        for (q, d) in body.iter().zip(nn_differences(&body, &index)) {
            let best = scene
                .iter()
                .map(|p| (p - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((d.norm() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_mlp_returns_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let index = KdIndex::from_points(random_points(&mut rng, 300, 1.0)).unwrap();
        let verts = random_points(&mut rng, 699, 1.0);
        let basis = place_basis(&CylinderBasis::standard(1), [0.0, 0.0]);
        let mut params = BpsEncoderParams::zeros(BPS_INPUT_DIM, 16);
        params.output.b = Array1::from_shape_fn(FEATURE_DIM, |i| i as f64);
        let f = encode_bps(&verts, &basis, &index, &params).unwrap();
        assert_eq!(f, params.output.b);
        let params = BpsEncoderParams::new(BPS_INPUT_DIM, 16, &mut rng);
        assert_eq!(
            encode_bps(&verts, &basis, &index, &params).unwrap(),
            encode_bps(&verts, &basis, &index, &params).unwrap()
        );
    }

    #[test]
    fn bps_encoding_ignores_cloud_storage_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = random_points(&mut rng, 500, 1.0);
        let verts = random_points(&mut rng, 699, 1.0);
        let basis = place_basis(&CylinderBasis::standard(1), [0.1, 0.2]);
        let params = BpsEncoderParams::new(BPS_INPUT_DIM, 8, &mut rng);
        let a = encode_bps(&verts, &basis, &KdIndex::from_points(pts.clone()).unwrap(), &params).unwrap();
        pts.reverse();
        let b = encode_bps(&verts, &basis, &KdIndex::from_points(pts).unwrap(), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bps_mlp_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = BpsEncoderParams::new(12, 6, &mut rng);
        let x = Array2::from_shape_simple_fn((3, 12), || rng.random_range(-1.0..1.0));
        let probe = Array2::from_shape_simple_fn((3, FEATURE_DIM), || rng.random_range(-1.0..1.0));
        let f = |p: &BpsEncoderParams, x: &Array2<f64>| (p.forward(&x.view()).0 * &probe).sum();
        let (_, cache) = params.forward(&x.view());
        let mut grad = BpsEncoderParams::zeros(12, 6);
        let gx = params.backward(&x.view(), &cache, &probe.view(), &mut grad);
        let h = 1e-6;
        for k in 0..20 {
            let (i, j) = (k % 12, k % 6);
            let mut a = params.clone();
            a.hidden.w[[i, j]] += h;
            let mut b = params.clone();
            b.hidden.w[[i, j]] -= h;
            let fd = (f(&a, &x) - f(&b, &x)) / (2.0 * h);
            let an = grad.hidden.w[[i, j]];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6), "{fd} vs {an}");
        }
        let mut xp = x.clone();
        xp[[1, 4]] += h;
        let mut xm = x.clone();
        xm[[1, 4]] -= h;
        let fd = (f(&params, &xp) - f(&params, &xm)) / (2.0 * h);
        assert!((fd - gx[[1, 4]]).abs() <= 1e-4 * fd.abs().max(1e-6));
    }

    #[test]
    fn interpolation_edge_cases() {
        let pts = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-0.5, 0.75f64.sqrt(), 0.0),
            Vec3::new(-0.5, -(0.75f64.sqrt()), 0.0),
            Vec3::new(0.0, 0.0, 5.0),
        ];
        let feats = Array2::from_shape_fn((4, 2), |(i, j)| (i * 10 + j) as f64);
        let cloud = PointCloud::with_features(pts.clone(), feats.clone()).unwrap();
        let index = KdIndex::build(&cloud).unwrap();
        let mean = interpolate_feature(&Vec3::zeros(), &cloud, &index).unwrap();
        assert!((mean[0] - 10.0).abs() < 1e-12 && (mean[1] - 11.0).abs() < 1e-12);
        assert_eq!(interpolate_feature(&pts[3], &cloud, &index).unwrap(), feats.row(3));
        let bare = PointCloud::new(pts).unwrap();
        assert!(interpolate_feature(&Vec3::zeros(), &bare, &index).is_err());
    }

    #[test]
    fn constant_and_scaled_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 400, 1.0);
        let verts = random_points(&mut rng, 50, 1.0);
        let basis = random_points(&mut rng, 60, 1.0);
        let c = Array1::from_shape_fn(4, |i| i as f64 - 1.5);
        let constant = Array2::from_shape_fn((400, 4), |(_, j)| c[j]);
        let cloud = PointCloud::with_features(pts.clone(), constant).unwrap();
        let index = KdIndex::build(&cloud).unwrap();
        let out = encode_pointfeat(&verts, &basis, &cloud, &index).unwrap();
        for j in 0..4 {
            assert!((out[j] - c[j]).abs() < 1e-12 && (out[4 + j] - c[j]).abs() < 1e-12);
        }
        let feats = Array2::from_shape_simple_fn((400, 4), || rng.random_range(-1.0..1.0));
        let a = PointCloud::with_features(pts.clone(), feats.clone()).unwrap();
        let b = PointCloud::with_features(pts, feats * 2.0).unwrap();
        let fa = encode_pointfeat(&verts, &basis, &a, &index).unwrap();
        let fb = encode_pointfeat(&verts, &basis, &b, &index).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pointfeat_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (cloud, index) = featured_cloud(&mut rng, 300, 5);
        let verts = random_points(&mut rng, 40, 1.0);
        let basis = random_points(&mut rng, 30, 1.0);
        let pts = cloud.points();
        let feats = cloud.features().unwrap();
        let brute = |e: &Vec3| -> Array1<f64> {
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.sort_by(|&a, &b| (pts[a] - e).norm().total_cmp(&(pts[b] - e).norm()));
            if (pts[order[0]] - e).norm() < EXACT_HIT {
                return feats.row(order[0]).to_owned();
            }
            let w: Vec<f64> = order[..3].iter().map(|&i| 1.0 / (pts[i] - e).norm()).collect();
            let mut acc = Array1::zeros(5);
            for (k, &i) in order[..3].iter().enumerate() {
                acc.scaled_add(w[k], &feats.row(i));
            }
            acc / w.iter().sum::<f64>()
        };
        let mut expected = Array1::zeros(10);
        for v in &verts {
            expected.slice_mut(ndarray::s![..5]).scaled_add(1.0 / 40.0, &brute(v));
        }
        for b in &basis {
            let nearest = pts.iter().min_by(|p, q| (*p - b).norm().total_cmp(&(*q - b).norm())).unwrap();
            expected.slice_mut(ndarray::s![5..]).scaled_add(1.0 / 30.0, &brute(nearest));
        }
        let got = encode_pointfeat(&verts, &basis, &cloud, &index).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_features_are_deterministic_and_bounded() {
        let rff = RandomFourierFeatures::standard(3);
        let pts = vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 2.0, 0.0)];
        let f = rff.features(&pts);
        assert_eq!(f.dim(), (2, POINT_FEATURE_DIM));
        assert!(f.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(f, RandomFourierFeatures::standard(3).features(&pts));
    }

    #[test]
    fn encoder_kind_round_trips_text() {
        for k in [EncoderKind::Bps, EncoderKind::PointFeat, EncoderKind::None] {
            assert_eq!(k.to_string().parse::<EncoderKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{k}\""));
        }
        assert!("bogus".parse::<EncoderKind>().is_err());
    }

    #[test]
    fn none_encoder_has_empty_rows() {
        let skel = Skeleton::body22();
        let enc = SceneEncoder::new(EncoderKind::None, CylinderBasis::standard(0), &skel);
        let spec = crate::scene::SceneSpec {
            version: crate::scene::SCENE_FORMAT_VERSION,
            id: "empty".into(),
            boxes: vec![],
            floor_height: Some(0.0),
            navigable: vec![[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]],
            point_count: 200,
            seed: 1,
            tasks: vec![],
        };
        let scene = SceneModel::new(spec).unwrap();
        let pose = PoseState::identity(&skel);
        assert!(enc.frame_input(&scene, &skel, &pose).unwrap().is_empty());
    }
}
