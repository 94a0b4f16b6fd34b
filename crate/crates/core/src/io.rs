//! File formats: binary containers for sequences and checkpoints, JSON for
//! everything people read or edit. Writes go through a temp file and a
//! rename so readers never observe a partial artifact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::CylinderBasis;
use crate::geometry::{MotionSequence, PoseState, SequenceLabel, Vec3, POSE_DIM};
use crate::init::ConstantPose;
use crate::nn::Tensors;
use crate::refiner::{ModelConfig, NormStats, RefinerParams};
use crate::{Error, Result};

pub const SEQUENCE_MAGIC: &[u8; 4] = b"RSEQ";
pub const SEQUENCE_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RCKP";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

/// Writes `bytes` next to `path` and renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(&text, e))
}

/// Converts serde's line/column into a byte offset.
pub fn json_error(text: &str, e: serde_json::Error) -> Error {
    if e.line() == 0 {
        return Error::Json(e);
    }
    let line_start: usize = text.split_inclusive('\n').take(e.line() - 1).map(str::len).sum();
    Error::Parse { offset: line_start + e.column().saturating_sub(1), message: e.to_string() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn fail(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Parse { offset: at, message: message.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(self.bytes.len(), format!("unexpected end of data reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, out: &mut [f64], what: &str) -> Result<()> {
        let raw = self.take(8 * out.len(), what)?;
        for (v, c) in out.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
        Ok(())
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        if self.take(4, "magic")? != magic {
            return Err(self.fail(at, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }

    fn version(&mut self, what: &'static str, expected: u32) -> Result<()> {
        let found = self.u32("version")?;
        if found != expected {
            return Err(Error::Version { what, found, expected });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.fail(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes sequences into the binary container.
pub fn encode_sequences(seqs: &[MotionSequence]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SEQUENCE_MAGIC);
    out.extend_from_slice(&SEQUENCE_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(seqs.len() as u32).to_le_bytes());
    let mut row = vec![0.0; POSE_DIM];
    for s in seqs {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.extend_from_slice(&s.task_id.to_le_bytes());
        out.push(match s.label {
            SequenceLabel::Reaching => 0,
            SequenceLabel::Transition => 1,
        });
        put_f64s(&mut out, &[s.fps, s.goal.x, s.goal.y, s.goal.z]);
        out.extend_from_slice(&(s.scene_id.len() as u32).to_le_bytes());
        out.extend_from_slice(s.scene_id.as_bytes());
        out.extend_from_slice(&(s.frames.len() as u32).to_le_bytes());
        for f in &s.frames {
            f.write_into(&mut row);
            put_f64s(&mut out, &row);
        }
    }
    out
}

pub fn decode_sequences(bytes: &[u8]) -> Result<Vec<MotionSequence>> {
    let mut r = Reader::new(bytes);
    r.magic(SEQUENCE_MAGIC)?;
    r.version("sequence file", SEQUENCE_FORMAT_VERSION)?;
    let count = r.u32("sequence count")?;
    let mut seqs = Vec::new();
    let mut row = vec![0.0; POSE_DIM];
    for _ in 0..count {
        let id = r.u32("sequence id")?;
        let task_id = r.u32("task id")?;
        let at = r.pos;
        let label = match r.u8("label")? {
            0 => SequenceLabel::Reaching,
            1 => SequenceLabel::Transition,
            other => return Err(r.fail(at, format!("unknown label {other}"))),
        };
        let fps = r.f64("fps")?;
        let goal = Vec3::new(r.f64("goal")?, r.f64("goal")?, r.f64("goal")?);
        let len = r.u32("scene id length")? as usize;
        let at = r.pos;
        let scene_id = String::from_utf8(r.take(len, "scene id")?.to_vec())
            .map_err(|_| r.fail(at, "scene id is not UTF-8"))?;
        let n = r.u32("frame count")? as usize;
        let mut frames = Vec::with_capacity(n.min(bytes.len() / (8 * POSE_DIM) + 1));
        for _ in 0..n {
            r.f64s(&mut row, "pose")?;
            frames.push(PoseState::from_slice(&row)?);
        }
        seqs.push(MotionSequence { id, task_id, scene_id, label, fps, goal, frames });
    }
    r.finish()?;
    Ok(seqs)
}

pub fn write_sequences(path: &Path, seqs: &[MotionSequence]) -> Result<()> {
    atomic_write(path, &encode_sequences(seqs))
}

pub fn read_sequences(path: &Path) -> Result<Vec<MotionSequence>> {
    decode_sequences(&read_bytes(path)?)
}

/// A trained (or freshly initialized) refiner with everything needed to
/// run it: the scene basis, the template pose and the skeleton it was fit
/// against.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: RefinerParams,
    pub basis: CylinderBasis,
    pub constant_pose: ConstantPose,
    pub skeleton_hash: String,
    pub config_hash: String,
    /// Seed of the synthetic per-point features used by `pointfeat`.
    pub feature_seed: u64,
    pub epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model: ModelConfig,
    stats: NormStats,
    basis: CylinderBasis,
    constant_pose: ConstantPose,
    skeleton_hash: String,
    config_hash: String,
    feature_seed: u64,
    epochs: usize,
    tensors: Vec<(String, usize)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.params.tensors();
        let header = CheckpointHeader {
            model: self.params.config.clone(),
            stats: self.params.stats.clone(),
            basis: self.basis.clone(),
            constant_pose: self.constant_pose.clone(),
            skeleton_hash: self.skeleton_hash.clone(),
            config_hash: self.config_hash.clone(),
            feature_seed: self.feature_seed,
            epochs: self.epochs,
            tensors: tensors.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            put_f64s(&mut out, t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        r.version("checkpoint", CHECKPOINT_FORMAT_VERSION)?;
        let len = r.u64("header length")? as usize;
        let start = r.pos;
        let json = r.take(len.min(bytes.len()), "header")?;
        let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| {
            let text = String::from_utf8_lossy(json);
            match json_error(&text, e) {
                Error::Parse { offset, message } => Error::Parse { offset: start + offset, message },
                other => other,
            }
        })?;
        let mut params = RefinerParams::zeros(header.model, header.stats)?;
        let expected: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
        if expected != header.tensors {
            return Err(r.fail(start, "tensor table does not match the model configuration"));
        }
        for (t, (name, _)) in params.tensors_mut().into_iter().zip(&expected) {
            r.f64s(t, name)?;
        }
        r.finish()?;
        Ok(Checkpoint {
            params,
            basis: header.basis,
            constant_pose: header.constant_pose,
            skeleton_hash: header.skeleton_hash,
            config_hash: header.config_hash,
            feature_seed: header.feature_seed,
            epochs: header.epochs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncoderKind;
    use crate::geometry::{RotMat, Rot6D, Skeleton, JOINT_COUNT};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sequences(n: usize, seed: u64) -> Vec<MotionSequence> {
        let skel = Skeleton::body22();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n as u32)
            .map(|id| {
                let frames = (0..rng.random_range(1..6))
                    .map(|_| {
                        let mut rots = [Rot6D::IDENTITY; JOINT_COUNT];
                        for r in rots.iter_mut() {
                            *r = RotMat::from_axis_angle(&Vec3::new(rng.random(), rng.random(), 1.0), rng.random())
                                .to_rot6d();
                        }
                        PoseState::from_rotations(&skel, rots, Vec3::new(rng.random(), rng.random(), 0.9)).unwrap()
                    })
                    .collect();
                MotionSequence {
                    id,
                    task_id: id / 3,
                    scene_id: format!("scene-{}", id % 2),
                    label: if id % 4 == 3 { SequenceLabel::Transition } else { SequenceLabel::Reaching },
                    fps: 20.0,
                    goal: Vec3::new(rng.random(), rng.random(), 1.2),
                    frames,
                }
            })
            .collect()
    }

    #[test]
    fn sequence_round_trip_is_byte_identical() {
        let seqs = sequences(100, 3);
        let a = encode_sequences(&seqs);
        let back = decode_sequences(&a).unwrap();
        assert_eq!(back, seqs);
        let b = encode_sequences(&back);
        assert_eq!(sha256_hex(&a), sha256_hex(&b));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_sequences(&sequences(2, 1));
        let cut = bytes.len() - 5;
        match decode_sequences(&bytes[..cut]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let mut bytes = encode_sequences(&sequences(1, 1));
        bytes[4] = 9;
        assert!(matches!(decode_sequences(&bytes), Err(Error::Version { found: 9, .. })));
        assert!(matches!(decode_sequences(b"NOPE\x01\0\0\0"), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let skel = Skeleton::body22();
        let config = ModelConfig {
            d_model: 8,
            heads: 2,
            d_ff: 12,
            blocks: 1,
            encoder: EncoderKind::Bps,
            bps_hidden: 4,
            residual_output: false,
        };
        let ck = Checkpoint {
            params: RefinerParams::new(config, NormStats::identity(), 5).unwrap(),
            basis: CylinderBasis::sample(0.6, 2.0, 16, 2),
            constant_pose: ConstantPose::new(&skel, [Rot6D::IDENTITY; JOINT_COUNT]).unwrap(),
            skeleton_hash: skel.hash(),
            config_hash: "abc".into(),
            feature_seed: 7,
            epochs: 3,
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Parse { .. })));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.json");
        write_json(&path, &vec![1.5, 2.0]).unwrap();
        write_json(&path, &vec![3.0]).unwrap();
        assert_eq!(read_json::<Vec<f64>>(&path).unwrap(), vec![3.0]);
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn json_errors_carry_offsets() {
        let text = "{\n  \"a\": tru\n}";
        let e = serde_json::from_str::<serde_json::Value>(text).unwrap_err();
        match json_error(text, e) {
            Error::Parse { offset, .. } => assert!((8..=13).contains(&offset), "offset {offset}"),
            other => panic!("{other:?}"),
        }
    }
}
