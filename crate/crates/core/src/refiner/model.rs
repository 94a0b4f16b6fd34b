use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{BpsCache, BpsEncoderParams, EncoderKind, DEFAULT_BPS_HIDDEN, FEATURE_DIM};
use crate::geometry::{MotionSequence, PoseState, MAX_FRAMES, POSE_DIM};
use crate::nn::{gelu, gelu_grad, masked_softmax, sinusoidal_table, LayerNorm, LayerNormCache, Linear, Tensors};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub blocks: usize,
    pub encoder: EncoderKind,
    /// Hidden width of the distance-encoder MLP.
    pub bps_hidden: usize,
    /// Add the initialized pose to the prediction instead of predicting
    /// absolute poses.
    pub residual_output: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            heads: 4,
            d_ff: 256,
            blocks: 4,
            encoder: EncoderKind::Bps,
            bps_hidden: DEFAULT_BPS_HIDDEN,
            residual_output: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 || self.blocks == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.encoder == EncoderKind::Bps && self.bps_hidden == 0 {
            return Err(Error::InvalidArgument("distance encoder needs a hidden layer".into()));
        }
        Ok(())
    }
}

/// Fixed per-dimension pose statistics used to scale inputs and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub const MIN_STD: f64 = 0.05;

    pub fn identity() -> Self {
        NormStats { mean: vec![0.0; POSE_DIM], std: vec![1.0; POSE_DIM] }
    }

    /// Statistics over all rows of the given pose matrices; deviations are
    /// floored at [`Self::MIN_STD`].
    pub fn from_matrices(mats: &[&Array2<f64>]) -> Result<Self> {
        let rows: usize = mats.iter().map(|m| m.nrows()).sum();
        if rows == 0 {
            return Err(Error::InvalidArgument("no frames to compute statistics from".into()));
        }
        let mut mean = Array1::<f64>::zeros(POSE_DIM);
        for m in mats {
            mean += &m.sum_axis(Axis(0));
        }
        mean /= rows as f64;
        let mut var = Array1::<f64>::zeros(POSE_DIM);
        for m in mats {
            var += &(*m - &mean).mapv(|v| v * v).sum_axis(Axis(0));
        }
        var /= rows as f64;
        Ok(NormStats { mean: mean.to_vec(), std: var.iter().map(|v| v.sqrt().max(Self::MIN_STD)).collect() })
    }
}

/// Pre-norm self-attention block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub ln2: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

pub struct BlockCache {
    ln1: LayerNormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    ln2: LayerNormCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

impl Block {
    fn new(d: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        Block {
            ln1: LayerNorm::new(d),
            query: Linear::glorot(d, d, rng),
            key: Linear::glorot(d, d, rng),
            value: Linear::glorot(d, d, rng),
            attn_out: Linear::glorot(d, d, rng),
            ln2: LayerNorm::new(d),
            ff_in: Linear::glorot(d, d_ff, rng),
            ff_out: Linear::glorot(d_ff, d, rng),
        }
    }

    fn zeros(d: usize, d_ff: usize) -> Self {
        Block {
            ln1: LayerNorm::zeros(d),
            query: Linear::zeros(d, d),
            key: Linear::zeros(d, d),
            value: Linear::zeros(d, d),
            attn_out: Linear::zeros(d, d),
            ln2: LayerNorm::zeros(d),
            ff_in: Linear::zeros(d, d_ff),
            ff_out: Linear::zeros(d_ff, d),
        }
    }

    fn forward(&self, h: &ArrayView2<f64>, mask: &[bool], heads: usize) -> (Array2<f64>, BlockCache) {
        let (a, ln1) = self.ln1.forward(h);
        let q = self.query.forward(&a.view());
        let k = self.key.forward(&a.view());
        let v = self.value.forward(&a.view());
        let (t, d) = q.dim();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attn = Array2::zeros((t, d));
        let mut probs = Vec::with_capacity(heads);
        for head in 0..heads {
            let cols = s![.., head * dh..(head + 1) * dh];
            let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for mut row in p.rows_mut() {
                masked_softmax(row.as_slice_mut().expect("contiguous row"), mask);
            }
            attn.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let h1 = h + &self.attn_out.forward(&attn.view());
        let (b, ln2) = self.ln2.forward(&h1.view());
        let u = self.ff_in.forward(&b.view());
        let g = u.mapv(gelu);
        let h2 = &h1 + &self.ff_out.forward(&g.view());
        (h2, BlockCache { ln1, a, q, k, v, probs, attn, ln2, b, u, g })
    }

    fn backward(&self, c: &BlockCache, dh2: &ArrayView2<f64>, heads: usize, grad: &mut Block) -> Array2<f64> {
        let dg = self.ff_out.backward(&c.g.view(), dh2, &mut grad.ff_out);
        let du = dg * &c.u.mapv(gelu_grad);
        let db = self.ff_in.backward(&c.b.view(), &du.view(), &mut grad.ff_in);
        let dh1 = dh2 + &self.ln2.backward(&c.ln2, &db.view(), &mut grad.ln2);
        let dattn = self.attn_out.backward(&c.attn.view(), &dh1.view(), &mut grad.attn_out);
        let (t, d) = c.q.dim();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros((t, d));
        let mut dk = Array2::zeros((t, d));
        let mut dv = Array2::zeros((t, d));
        for (head, p) in c.probs.iter().enumerate() {
            let cols = s![.., head * dh..(head + 1) * dh];
            let dout = dattn.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&dout));
            let mut ds = dout.dot(&c.v.slice(cols).t());
            for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                drow.zip_mut_with(&prow, |g, &pv| *g = pv * (*g - dot) * scale);
            }
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let a = c.a.view();
        let mut da = self.query.backward(&a, &dq.view(), &mut grad.query);
        da += &self.key.backward(&a, &dk.view(), &mut grad.key);
        da += &self.value.backward(&a, &dv.view(), &mut grad.value);
        dh1 + self.ln1.backward(&c.ln1, &da.view(), &mut grad.ln1)
    }

    fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.ln1.push(&format!("{prefix}.ln1"), out);
        self.query.push(&format!("{prefix}.query"), out);
        self.key.push(&format!("{prefix}.key"), out);
        self.value.push(&format!("{prefix}.value"), out);
        self.attn_out.push(&format!("{prefix}.attn_out"), out);
        self.ln2.push(&format!("{prefix}.ln2"), out);
        self.ff_in.push(&format!("{prefix}.ff_in"), out);
        self.ff_out.push(&format!("{prefix}.ff_out"), out);
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.ln1.push_mut(out);
        self.query.push_mut(out);
        self.key.push_mut(out);
        self.value.push_mut(out);
        self.attn_out.push_mut(out);
        self.ln2.push_mut(out);
        self.ff_in.push_mut(out);
        self.ff_out.push_mut(out);
    }
}

/// All refiner weights. The output head maps the residual stream to
/// normalized pose units; its bias is in pose units so that a zero weight
/// matrix yields the bias itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerParams {
    pub config: ModelConfig,
    pub stats: NormStats,
    pub embed: Linear,
    pub blocks: Vec<Block>,
    pub head: Linear,
    pub bps: Option<BpsEncoderParams>,
    positional: Array2<f64>,
}

pub struct ForwardCache {
    z: Array2<f64>,
    bps: Option<BpsCache>,
    blocks: Vec<BlockCache>,
    hidden: Array2<f64>,
}

impl RefinerParams {
    /// Zero-filled parameters of the right shapes.
    pub fn zeros(config: ModelConfig, stats: NormStats) -> Result<Self> {
        config.validate()?;
        if stats.mean.len() != POSE_DIM || stats.std.len() != POSE_DIM {
            return Err(Error::Shape("normalization statistics must have one entry per pose dimension".into()));
        }
        let d = config.d_model;
        Ok(RefinerParams {
            embed: Linear::zeros(POSE_DIM + FEATURE_DIM, d),
            blocks: (0..config.blocks).map(|_| Block::zeros(d, config.d_ff)).collect(),
            head: Linear::zeros(d, POSE_DIM),
            bps: (config.encoder == EncoderKind::Bps)
                .then(|| BpsEncoderParams::zeros(config.encoder.input_dim(), config.bps_hidden)),
            positional: sinusoidal_table(MAX_FRAMES, d),
            config,
            stats,
        })
    }

    /// Seeded random initialization.
    pub fn new(config: ModelConfig, stats: NormStats, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config, stats)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = p.config.d_model;
        p.embed = Linear::glorot(POSE_DIM + FEATURE_DIM, d, &mut rng);
        p.blocks = (0..p.config.blocks).map(|_| Block::new(d, p.config.d_ff, &mut rng)).collect();
        p.head = Linear::glorot(d, POSE_DIM, &mut rng);
        if !p.config.residual_output {
            p.head.b = Array1::from(p.stats.mean.clone());
        }
        if p.config.encoder == EncoderKind::Bps {
            p.bps = Some(BpsEncoderParams::new(p.config.encoder.input_dim(), p.config.bps_hidden, &mut rng));
        }
        Ok(p)
    }

    /// Same shapes, all trainable tensors zero.
    pub fn zeroed(&self) -> Self {
        let mut g = self.clone();
        g.fill_zero();
        g
    }

    fn check_input(&self, poses: &ArrayView2<f64>, scene: &ArrayView2<f64>, mask: &[bool]) -> Result<()> {
        let t = poses.nrows();
        if t == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        if t > MAX_FRAMES {
            return Err(Error::SequenceTooLong { got: t, max: MAX_FRAMES });
        }
        if poses.ncols() != POSE_DIM {
            return Err(Error::Shape(format!("pose rows have {} columns, expected {POSE_DIM}", poses.ncols())));
        }
        let width = self.config.encoder.input_dim();
        if scene.dim() != (t, width) {
            return Err(Error::Shape(format!("scene input is {:?}, expected ({t}, {width})", scene.dim())));
        }
        if mask.len() != t {
            return Err(Error::Shape(format!("mask has {} entries for {t} frames", mask.len())));
        }
        if !mask.iter().any(|m| *m) {
            return Err(Error::InvalidArgument("every frame is masked".into()));
        }
        Ok(())
    }

    /// Forward pass on one (possibly padded) sequence. `poses` holds the
    /// initialized frames, `scene` the encoder input per frame. Row 0 of the
    /// output is a copy of row 0 of `poses`.
    pub fn forward_cached(
        &self,
        poses: &ArrayView2<f64>,
        scene: &ArrayView2<f64>,
        mask: &[bool],
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(poses, scene, mask)?;
        let t = poses.nrows();
        let mean = Array1::from(self.stats.mean.clone());
        let std = Array1::from(self.stats.std.clone());
        let xn = (poses - &mean) / &std;
        let (feat, bps) = match self.config.encoder {
            EncoderKind::Bps => {
                let enc = self.bps.as_ref().ok_or_else(|| Error::InvalidArgument("missing encoder weights".into()))?;
                let (f, c) = enc.forward(scene);
                (f, Some(c))
            }
            EncoderKind::PointFeat => (scene.to_owned(), None),
            EncoderKind::None => (Array2::zeros((t, FEATURE_DIM)), None),
        };
        let z = concatenate![Axis(1), xn, feat];
        let mut h = self.embed.forward(&z.view());
        h += &self.positional.slice(s![..t, ..]);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h.view(), mask, self.config.heads);
            blocks.push(cache);
            h = next;
        }
        let mut y = h.dot(&self.head.w) * &std;
        y += &self.head.b;
        if self.config.residual_output {
            y += poses;
        }
        y.row_mut(0).assign(&poses.row(0));
        Ok((y, ForwardCache { z, bps, blocks, hidden: h }))
    }

    pub fn forward(&self, poses: &ArrayView2<f64>, scene: &ArrayView2<f64>, mask: &[bool]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(poses, scene, mask)?.0)
    }

    /// Gradient of a scalar loss with respect to every trainable tensor,
    /// given dL/d(output). Row 0 of `dy` is ignored since that row is
    /// overwritten.
    pub fn backward(&self, scene: &ArrayView2<f64>, cache: &ForwardCache, dy: &ArrayView2<f64>) -> Self {
        let mut grad = self.zeroed();
        let mut dy = dy.to_owned();
        dy.row_mut(0).fill(0.0);
        grad.head.b += &dy.sum_axis(Axis(0));
        let dnorm = dy * &Array1::from(self.stats.std.clone());
        grad.head.w += &cache.hidden.t().dot(&dnorm);
        let mut dh = dnorm.dot(&self.head.w.t());
        for ((block, c), g) in self.blocks.iter().zip(&cache.blocks).zip(grad.blocks.iter_mut()).rev() {
            dh = block.backward(c, &dh.view(), self.config.heads, g);
        }
        let dz = self.embed.backward(&cache.z.view(), &dh.view(), &mut grad.embed);
        if let (Some(enc), Some(c), Some(g)) = (&self.bps, &cache.bps, grad.bps.as_mut()) {
            enc.backward_params(scene, c, &dz.slice(s![.., POSE_DIM..]), g);
        }
        grad
    }
}

impl Tensors for RefinerParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.embed.push("embed", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.push(&format!("block{i}"), &mut out);
        }
        self.head.push("head", &mut out);
        if let Some(bps) = &self.bps {
            out.extend(bps.tensors());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.embed.push_mut(&mut out);
        for b in &mut self.blocks {
            b.push_mut(&mut out);
        }
        self.head.push_mut(&mut out);
        if let Some(bps) = &mut self.bps {
            out.extend(bps.tensors_mut());
        }
        out
    }
}

/// Frames of a sequence as rows of a matrix.
pub fn sequence_matrix(seq: &MotionSequence) -> Array2<f64> {
    let mut m = Array2::zeros((seq.len(), POSE_DIM));
    for (f, mut row) in seq.frames.iter().zip(m.rows_mut()) {
        f.write_into(row.as_slice_mut().expect("contiguous row"));
    }
    m
}

/// Runs the refiner on an initialized sequence. `scene_input` holds the
/// encoder input per frame (see [`crate::encoding::SceneEncoder`]); masked
/// frames are excluded from attention. Frame 0 of the result is the
/// initialization's frame 0.
pub fn refine(
    params: &RefinerParams,
    init: &MotionSequence,
    scene_input: &ArrayView2<f64>,
    mask: &[bool],
) -> Result<MotionSequence> {
    let poses = sequence_matrix(init);
    let y = params.forward(&poses.view(), scene_input, mask)?;
    let mut frames = Vec::with_capacity(init.len());
    frames.push(init.frames[0].clone());
    for row in y.rows().into_iter().skip(1) {
        frames.push(PoseState::from_slice(row.as_slice().expect("contiguous row"))?);
    }
    Ok(MotionSequence { frames, ..init.clone() })
}
