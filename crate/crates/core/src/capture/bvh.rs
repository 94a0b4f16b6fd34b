//! Minimal BVH reader: hierarchy, Euler channels and motion block.

use crate::capture::qa::JointTrack;
use crate::geometry::{Mat3, RotMat, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub channels: Vec<Channel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhClip {
    pub joints: Vec<BvhJoint>,
    pub frame_time: f64,
    pub frames: Vec<Vec<f64>>,
}

struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < bytes.len() && !bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some((start, &self.text[start..self.pos]))
    }

    fn expect_any(&mut self) -> Result<(usize, &'a str)> {
        self.next().ok_or(Error::Parse { offset: self.text.len(), message: "unexpected end of file".into() })
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let (at, tok) = self.expect_any()?;
        if tok != word {
            return Err(Error::Parse { offset: at, message: format!("expected `{word}`, found `{tok}`") });
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64> {
        let (at, tok) = self.expect_any()?;
        tok.parse().map_err(|_| Error::Parse { offset: at, message: format!("expected a number, found `{tok}`") })
    }
}

impl BvhClip {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Tokens { text, pos: 0 };
        t.expect("HIERARCHY")?;
        t.expect("ROOT")?;
        let mut joints = Vec::new();
        parse_joint(&mut t, None, &mut joints)?;
        t.expect("MOTION")?;
        t.expect("Frames:")?;
        let count = t.number()? as usize;
        t.expect("Frame")?;
        t.expect("Time:")?;
        let frame_time = t.number()?;
        if !(frame_time > 0.0) {
            return Err(Error::Parse { offset: t.pos, message: "frame time must be positive".into() });
        }
        let width: usize = joints.iter().map(|j: &BvhJoint| j.channels.len()).sum();
        let frames = (0..count)
            .map(|_| (0..width).map(|_| t.number()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(BvhClip { joints, frame_time, frames })
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.frame_time
    }

    /// Forward kinematics of every frame; `scale` converts file units to
    /// meters.
    pub fn to_joint_track(&self, scale: f64) -> JointTrack {
        let mut positions = Vec::with_capacity(self.frames.len());
        let mut local_rotations = Vec::with_capacity(self.frames.len());
        for values in &self.frames {
            let mut cursor = 0;
            let mut pos: Vec<Vec3> = Vec::with_capacity(self.joints.len());
            let mut global: Vec<Mat3> = Vec::with_capacity(self.joints.len());
            let mut local: Vec<Mat3> = Vec::with_capacity(self.joints.len());
            for joint in &self.joints {
                let mut translation = joint.offset;
                let mut rot = Mat3::identity();
                for ch in &joint.channels {
                    let v = values[cursor];
                    cursor += 1;
                    match ch {
                        Channel::Xposition => translation.x = v,
                        Channel::Yposition => translation.y = v,
                        Channel::Zposition => translation.z = v,
                        Channel::Xrotation => rot *= RotMat::rot_x(v.to_radians()).into_inner(),
                        Channel::Yrotation => rot *= RotMat::rot_y(v.to_radians()).into_inner(),
                        Channel::Zrotation => rot *= RotMat::rot_z(v.to_radians()).into_inner(),
                    }
                }
                let (p, g) = match joint.parent {
                    None => (translation * scale, rot),
                    Some(parent) => (pos[parent] + global[parent] * (translation * scale), global[parent] * rot),
                };
                pos.push(p);
                global.push(g);
                local.push(rot);
            }
            positions.push(pos);
            local_rotations.push(local);
        }
        JointTrack { fps: self.fps(), positions, local_rotations }
    }
}

fn parse_joint(t: &mut Tokens<'_>, parent: Option<usize>, joints: &mut Vec<BvhJoint>) -> Result<()> {
    let (_, name) = t.expect_any()?;
    t.expect("{")?;
    t.expect("OFFSET")?;
    let offset = Vec3::new(t.number()?, t.number()?, t.number()?);
    t.expect("CHANNELS")?;
    let n = t.number()? as usize;
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        let (at, tok) = t.expect_any()?;
        channels.push(match tok {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            other => return Err(Error::Parse { offset: at, message: format!("unknown channel `{other}`") }),
        });
    }
    let index = joints.len();
    joints.push(BvhJoint { name: name.to_string(), parent, offset, channels });
    loop {
        let (at, tok) = t.expect_any()?;
        match tok {
            "JOINT" => parse_joint(t, Some(index), joints)?,
            "End" => {
                t.expect("Site")?;
                t.expect("{")?;
                t.expect("OFFSET")?;
                for _ in 0..3 {
                    t.number()?;
                }
                t.expect("}")?;
            }
            "}" => return Ok(()),
            other => return Err(Error::Parse { offset: at, message: format!("unexpected `{other}` in joint block") }),
        }
    }
}
