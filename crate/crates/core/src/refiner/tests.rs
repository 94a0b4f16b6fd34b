use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::encoding::{EncoderKind, FEATURE_DIM};
use crate::exec::Execution;
use crate::geometry::{MotionSequence, PoseState, RotMat, SequenceLabel, Skeleton, Vec3, JOINT_COUNT, POSE_DIM};
use crate::nn::{gelu, Tensors};
use crate::Error;

fn random_pose(rng: &mut impl Rng, skel: &Skeleton) -> PoseState {
    let mut rots = [crate::geometry::Rot6D::IDENTITY; JOINT_COUNT];
    for r in rots.iter_mut() {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        *r = RotMat::from_axis_angle(&axis.normalize(), rng.random_range(-0.8..0.8)).to_rot6d();
    }
    let root = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.8..1.0));
    PoseState::from_rotations(skel, rots, root).unwrap()
}

fn random_sequence(rng: &mut impl Rng, skel: &Skeleton, frames: usize, id: u32) -> MotionSequence {
    MotionSequence {
        id,
        task_id: 0,
        scene_id: "s".into(),
        label: SequenceLabel::Reaching,
        fps: 20.0,
        goal: Vec3::zeros(),
        frames: (0..frames).map(|_| random_pose(rng, skel)).collect(),
    }
}

fn tiny(encoder: EncoderKind) -> ModelConfig {
    ModelConfig { d_model: 16, heads: 2, d_ff: 24, blocks: 2, encoder, bps_hidden: 8, residual_output: false }
}

fn random_sample(rng: &mut impl Rng, skel: &Skeleton, encoder: EncoderKind, frames: usize, id: u32) -> TrainingSample {
    let init = random_sequence(rng, skel, frames, id);
    let target = random_sequence(rng, skel, frames, id);
    let scene = Array2::from_shape_simple_fn((frames, encoder.input_dim()), || rng.random_range(-0.5..0.5));
    TrainingSample::new(id, &init, &target, scene).unwrap()
}

#[test]
fn zero_head_outputs_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let skel = Skeleton::body22();
    let mut p = RefinerParams::new(tiny(EncoderKind::None), NormStats::identity(), 3).unwrap();
    p.head.w.fill(0.0);
    p.head.b = Array1::from_shape_fn(POSE_DIM, |i| i as f64 * 0.01);
    let s = random_sample(&mut rng, &skel, EncoderKind::None, 6, 0);
    let y = p.forward(&s.poses.view(), &s.scene.view(), &[true; 6]).unwrap();
    assert_eq!(y.row(0), s.poses.row(0));
    for t in 1..6 {
        assert_eq!(y.row(t), p.head.b);
    }
}

#[test]
fn rejects_long_and_malformed_inputs() {
    let p = RefinerParams::new(tiny(EncoderKind::None), NormStats::identity(), 3).unwrap();
    let poses = Array2::zeros((241, POSE_DIM));
    let scene = Array2::zeros((241, 0));
    assert!(matches!(
        p.forward(&poses.view(), &scene.view(), &[true; 241]),
        Err(Error::SequenceTooLong { got: 241, max: 240 })
    ));
    let poses = Array2::zeros((4, POSE_DIM));
    let scene = Array2::zeros((4, 0));
    assert!(p.forward(&poses.view(), &scene.view(), &[true; 3]).is_err());
    assert!(p.forward(&poses.view(), &scene.view(), &[false; 4]).is_err());
    let bad = ModelConfig { heads: 3, ..tiny(EncoderKind::None) };
    assert!(RefinerParams::new(bad, NormStats::identity(), 0).is_err());
}

#[test]
fn padded_frames_do_not_leak_into_valid_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let skel = Skeleton::body22();
    let p = RefinerParams::new(tiny(EncoderKind::PointFeat), NormStats::identity(), 4).unwrap();
    let s = random_sample(&mut rng, &skel, EncoderKind::PointFeat, 8, 0);
    let mask = [true, true, true, true, true, false, false, false];
    let y = p.forward(&s.poses.view(), &s.scene.view(), &mask).unwrap();
    let mut poses = s.poses.clone();
    let mut scene = s.scene.clone();
    for (a, b) in [(5, 7), (6, 5)] {
        let (ra, rb) = (poses.row(a).to_owned(), poses.row(b).to_owned());
        poses.row_mut(a).assign(&rb);
        poses.row_mut(b).assign(&ra);
        let (fa, fb) = (scene.row(a).to_owned(), scene.row(b).to_owned());
        scene.row_mut(a).assign(&fb);
        scene.row_mut(b).assign(&fa);
    }
    // Also scribble over the padding.
    scene.row_mut(6).fill(42.0);
    let y2 = p.forward(&poses.view(), &scene.view(), &mask).unwrap();
    assert_eq!(y.slice(s![..5, ..]), y2.slice(s![..5, ..]));
}

/// Straight-line dense maths over `Vec<Vec<f64>>` for a one-block model.
fn reference_forward(p: &RefinerParams, poses: &Array2<f64>, scene: &Array2<f64>) -> Vec<Vec<f64>> {
    let t = poses.nrows();
    let d = p.config.d_model;
    let heads = p.config.heads;
    let dh = d / heads;
    let matmul = |x: &Vec<Vec<f64>>, l: &crate::nn::Linear| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                (0..l.w.ncols())
                    .map(|j| l.b[j] + (0..row.len()).map(|i| row[i] * l.w[[i, j]]).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let layer_norm = |x: &Vec<Vec<f64>>, ln: &crate::nn::LayerNorm| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mu = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                row.iter()
                    .enumerate()
                    .map(|(i, v)| (v - mu) / (var + 1e-5).sqrt() * ln.gamma[i] + ln.beta[i])
                    .collect()
            })
            .collect()
    };
    let mut z = vec![vec![0.0; POSE_DIM + FEATURE_DIM]; t];
    for i in 0..t {
        for j in 0..POSE_DIM {
            z[i][j] = (poses[[i, j]] - p.stats.mean[j]) / p.stats.std[j];
        }
        for j in 0..FEATURE_DIM {
            z[i][POSE_DIM + j] = scene[[i, j]];
        }
    }
    let mut h = matmul(&z, &p.embed);
    for (i, row) in h.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let freq = 1.0 / 10000f64.powf((2 * (j / 2)) as f64 / d as f64);
            *v += if j % 2 == 0 { (i as f64 * freq).sin() } else { (i as f64 * freq).cos() };
        }
    }
    let b = &p.blocks[0];
    let a = layer_norm(&h, &b.ln1);
    let (q, k, v) = (matmul(&a, &b.query), matmul(&a, &b.key), matmul(&a, &b.value));
    let mut attn = vec![vec![0.0; d]; t];
    for hd in 0..heads {
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| (0..dh).map(|c| q[i][hd * dh + c] * k[j][hd * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let total: f64 = e.iter().sum();
            for c in 0..dh {
                attn[i][hd * dh + c] = (0..t).map(|j| e[j] / total * v[j][hd * dh + c]).sum();
            }
        }
    }
    let o = matmul(&attn, &b.attn_out);
    let h1: Vec<Vec<f64>> = h.iter().zip(&o).map(|(x, y)| x.iter().zip(y).map(|(a, b)| a + b).collect()).collect();
    let u = matmul(&layer_norm(&h1, &b.ln2), &b.ff_in);
    let g: Vec<Vec<f64>> = u.iter().map(|r| r.iter().map(|x| gelu(*x)).collect()).collect();
    let f = matmul(&g, &b.ff_out);
    let h2: Vec<Vec<f64>> = h1.iter().zip(&f).map(|(x, y)| x.iter().zip(y).map(|(a, b)| a + b).collect()).collect();
    let mut out = Vec::new();
    for (i, row) in h2.iter().enumerate() {
        if i == 0 {
            out.push(poses.row(0).to_vec());
            continue;
        }
        out.push(
            (0..POSE_DIM)
                .map(|j| (0..d).map(|c| row[c] * p.head.w[[c, j]]).sum::<f64>() * p.stats.std[j] + p.head.b[j])
                .collect(),
        );
    }
    out
}

#[test]
fn matches_dense_reference_on_tiny_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let skel = Skeleton::body22();
    let config = ModelConfig { d_model: 8, heads: 1, d_ff: 12, blocks: 1, ..tiny(EncoderKind::PointFeat) };
    let mut stats = NormStats::identity();
    stats.mean[4] = 0.3;
    stats.std[7] = 2.0;
    let mut p = RefinerParams::new(config, stats, 9).unwrap();
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let s = random_sample(&mut rng, &skel, EncoderKind::PointFeat, 3, 0);
    let y = p.forward(&s.poses.view(), &s.scene.view(), &[true; 3]).unwrap();
    let r = reference_forward(&p, &s.poses, &s.scene);
    for i in 0..3 {
        for j in 0..POSE_DIM {
            assert!((y[[i, j]] - r[i][j]).abs() < 1e-10, "({i},{j}) {} vs {}", y[[i, j]], r[i][j]);
        }
    }
}

#[test]
fn loss_terms_by_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let skel = Skeleton::body22();
    let target = random_sequence(&mut rng, &skel, 5, 0);
    let w = LossWeights::default();
    assert_eq!(loss(&target, &target, &w, &skel).unwrap(), 0.0);
    let mut shifted = target.clone();
    for f in shifted.frames.iter_mut() {
        f.root.x += 1.0;
    }
    let l = loss(&shifted, &target, &w, &skel).unwrap();
    // Trans contributes 1 per frame; FK of the shifted root moves all 22 joints by 1.
    assert!((l - 23.0).abs() < 1e-12, "{l}");
    let w2 = LossWeights { trans: 2.0, joint: 0.0, rot: 0.0, fk: 0.5 };
    assert!((loss(&shifted, &target, &w2, &skel).unwrap() - 13.0).abs() < 1e-12);
    let zero = LossWeights { trans: 0.0, joint: 0.0, rot: 0.0, fk: 0.0 };
    assert!(loss(&shifted, &target, &zero, &skel).is_err());
    let short = MotionSequence { frames: target.frames[..3].to_vec(), ..target.clone() };
    assert!(loss(&short, &target, &w, &skel).is_err());
}

#[test]
fn learning_rate_schedule() {
    let c = TrainConfig::default();
    for (epoch, lr) in [(0, 1e-4), (999, 1e-4), (1000, 3e-5), (2000, 9e-6)] {
        assert!((c.learning_rate_at(epoch) - lr).abs() < 1e-18, "{epoch}");
    }
}

/// Denominator floored so that structurally zero gradients are compared
/// against finite-difference round-off rather than divided by it.
fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn gradient_matches_finite_differences_in_every_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let skel = Skeleton::body22();
    let w = LossWeights::default();
    let params = RefinerParams::new(tiny(EncoderKind::Bps), NormStats::identity(), 11).unwrap();
    let sample = random_sample(&mut rng, &skel, EncoderKind::Bps, 5, 0);
    let (_, frames, mut grad) = sample_gradient(&params, &sample, &w, &skel).unwrap();
    grad.scale(1.0 / frames as f64);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
    let eval = |p: &RefinerParams| sample_gradient(p, &sample, &w, &skel).unwrap().0.weighted(&w) / frames as f64;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (ti, name) in names.iter().enumerate() {
        for _ in 0..3 {
            let i = rng.random_range(0..analytic[ti].len());
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let err = relative_error(fd, analytic[ti][i]);
            assert!(err < 1e-4, "{name}[{i}]: fd {fd} analytic {}", analytic[ti][i]);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn gradient_vanishes_at_exact_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let skel = Skeleton::body22();
    let pose = random_pose(&mut rng, &skel);
    let target = MotionSequence { frames: vec![pose.clone(); 6], ..random_sequence(&mut rng, &skel, 6, 0) };
    let init = random_sequence(&mut rng, &skel, 6, 0);
    let sample = TrainingSample::new(0, &init, &target, Array2::zeros((6, 0))).unwrap();
    let mut p = RefinerParams::new(tiny(EncoderKind::None), NormStats::identity(), 2).unwrap();
    p.head.w.fill(0.0);
    p.head.b = Array1::from(pose.to_vector());
    let (terms, _, grad) = sample_gradient(&p, &sample, &LossWeights::default(), &skel).unwrap();
    assert!(terms.weighted(&LossWeights::default()) < 1e-12);
    for (name, t) in grad.tensors() {
        assert!(t.iter().all(|v| *v == 0.0), "{name}");
    }
}

#[test]
fn batch_loss_ignores_sample_order_and_execution_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let skel = Skeleton::body22();
    let samples: Vec<TrainingSample> =
        (0..4).map(|i| random_sample(&mut rng, &skel, EncoderKind::PointFeat, 4 + i as usize, i)).collect();
    let p = RefinerParams::new(tiny(EncoderKind::PointFeat), NormStats::identity(), 5).unwrap();
    let w = LossWeights::default();
    let fwd: Vec<&TrainingSample> = samples.iter().collect();
    let rev: Vec<&TrainingSample> = samples.iter().rev().collect();
    let a = batch_gradient(&p, &fwd, &w, &skel, Execution::Sequential).unwrap();
    let b = batch_gradient(&p, &rev, &w, &skel, Execution::Parallel).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.grad, b.grad);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let skel = Skeleton::body22();
    let samples: Vec<TrainingSample> =
        (0..3).map(|i| random_sample(&mut rng, &skel, EncoderKind::PointFeat, 5, i)).collect();
    let p = RefinerParams::new(tiny(EncoderKind::PointFeat), NormStats::identity(), 5).unwrap();
    let cfg = TrainConfig { epochs: 30, learning_rate: 1e-3, batch_size: 2, seed: 3, ..TrainConfig::default() };
    let a = train(p.clone(), &samples, &cfg, &skel, Execution::Sequential).unwrap();
    let b = train(p.clone(), &samples, &cfg, &skel, Execution::Parallel).unwrap();
    assert_eq!(a.log.last().unwrap().loss.to_bits(), b.log.last().unwrap().loss.to_bits());
    assert_eq!(a.params, b.params);
    assert!(a.log.last().unwrap().loss < a.log[0].loss);
    let zero = TrainConfig { epochs: 0, ..cfg };
    let c = train(p.clone(), &samples, &zero, &skel, Execution::Sequential).unwrap();
    assert_eq!(c.params, p);
    assert!(c.log.is_empty());
}

#[test]
fn divergence_returns_last_good_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let skel = Skeleton::body22();
    let mut samples = vec![random_sample(&mut rng, &skel, EncoderKind::None, 4, 0)];
    samples[0].target[[2, 5]] = f64::NAN;
    let p = RefinerParams::new(tiny(EncoderKind::None), NormStats::identity(), 5).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    match train(p.clone(), &samples, &cfg, &skel, Execution::Sequential) {
        Err(Error::Diverged { epoch, last_good }) => {
            assert_eq!(epoch, 0);
            assert_eq!(*last_good, p);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
    }
}

#[test]
fn single_sample_overfits() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let skel = Skeleton::body22();
    let pose = random_pose(&mut rng, &skel);
    let target = MotionSequence { frames: vec![pose; 4], ..random_sequence(&mut rng, &skel, 4, 0) };
    let init = random_sequence(&mut rng, &skel, 4, 0);
    let sample = TrainingSample::new(0, &init, &target, Array2::zeros((4, 0))).unwrap();
    let p = RefinerParams::new(tiny(EncoderKind::None), NormStats::identity(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 2000,
        learning_rate: 3e-3,
        decay_every: 250,
        weight_decay: 0.0,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let out = train(p, &[sample], &cfg, &skel, Execution::Sequential).unwrap();
    let last = out.log.last().unwrap().loss;
    assert!(last < 1e-3, "final loss {last}");
}

#[test]
fn residual_model_with_zero_head_returns_initialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let skel = Skeleton::body22();
    let config = ModelConfig { residual_output: true, ..tiny(EncoderKind::None) };
    let mut p = RefinerParams::new(config, NormStats::identity(), 1).unwrap();
    p.head.w.fill(0.0);
    let init = random_sequence(&mut rng, &skel, 7, 0);
    let out = refine(&p, &init, &Array2::zeros((7, 0)).view(), &[true; 7]).unwrap();
    assert_eq!(out, init);
}
