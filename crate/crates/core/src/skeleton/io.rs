//! Line-oriented text format for skeleton frame sequences.
//!
//! ```text
//! # posefield-frames v1
//! # joints nose neck l_shoulder ... r_eye
//! # bones 14,1,0.14 1,0,0.1 ...
//! x,y,z x,y,z ... (17 triples, one frame per line)
//! ```

use std::io::{BufRead, Write};

use super::{Bone, Joint, Skeleton3D, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::P3;

const MAGIC: &str = "# posefield-frames v1";

/// Write frames sharing the bone table of the first frame.
pub fn write_frames<W: Write>(mut w: W, frames: &[Skeleton3D]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames to write"))?;
    writeln!(w, "{MAGIC}")?;
    let names: Vec<&str> = Joint::ALL.iter().map(|j| j.name()).collect();
    writeln!(w, "# joints {}", names.join(" "))?;
    let bones: Vec<String> = first.bones.iter().map(|b| format!("{},{},{}", b.parent, b.child, b.radius)).collect();
    writeln!(w, "# bones {}", bones.join(" "))?;
    for f in frames {
        let triples: Vec<String> = f.joints.iter().map(|p| format!("{},{},{}", p.x, p.y, p.z)).collect();
        writeln!(w, "{}", triples.join(" "))?;
    }
    Ok(())
}

pub fn read_frames<R: BufRead>(r: R) -> Result<Vec<Skeleton3D>> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> { lines.next().ok_or_else(|| Error::format("truncated header"))?.map_err(Error::from) };
    if next()?.trim() != MAGIC {
        return Err(Error::format("missing frames header"));
    }
    let joints_line = next()?;
    let names: Vec<&str> = joints_line.trim().strip_prefix("# joints").ok_or_else(|| Error::format("missing joint list"))?.split_whitespace().collect();
    if names != Joint::ALL.iter().map(|j| j.name()).collect::<Vec<_>>() {
        return Err(Error::format("joint order does not match"));
    }
    let bones_line = next()?;
    let bones = bones_line
        .trim()
        .strip_prefix("# bones")
        .ok_or_else(|| Error::format("missing bone table"))?
        .split_whitespace()
        .map(|t| {
            let f: Vec<&str> = t.split(',').collect();
            if f.len() != 3 {
                return Err(Error::format(format!("bad bone entry {t}")));
            }
            Ok(Bone { parent: parse(f[0])?, child: parse(f[1])?, radius: parse(f[2])? })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut joints = [P3::origin(); NUM_JOINTS];
        let triples: Vec<&str> = line.split_whitespace().collect();
        if triples.len() != NUM_JOINTS {
            return Err(Error::format(format!("expected {NUM_JOINTS} triples, got {}", triples.len())));
        }
        for (j, t) in triples.iter().enumerate() {
            let c: Vec<&str> = t.split(',').collect();
            if c.len() != 3 {
                return Err(Error::format(format!("bad triple {t}")));
            }
            joints[j] = P3::new(parse(c[0])?, parse(c[1])?, parse(c[2])?);
        }
        frames.push(Skeleton3D::new(joints, bones.clone())?);
    }
    Ok(frames)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::format(format!("cannot parse {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{animate, build_canonical_skeleton, PoseParams};

    #[test]
    fn frames_round_trip_exactly() {
        let base = build_canonical_skeleton(1.7).unwrap();
        let frames: Vec<_> = (0..5)
            .map(|i| animate(&base, &PoseParams::walking(&base, i as f64 * 0.9, 0.5)).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_frames(&mut buf, &frames).unwrap();
        let back = read_frames(buf.as_slice()).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn rejects_wrong_joint_count() {
        let text = format!("{MAGIC}\n# joints {}\n# bones\n1,2,3\n", Joint::ALL.map(|j| j.name()).join(" "));
        assert!(read_frames(text.as_bytes()).is_err());
    }
}
