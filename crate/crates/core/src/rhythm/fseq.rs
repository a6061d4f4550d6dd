//! FSEQ1 feature files and dataset directories.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! b"FSEQ1" | u32 N | u32 D | u32 label | u32 id_len | id bytes | N·D f32
//! ```
//!
//! A dataset directory holds one `<id>.fseq` per sequence, a `manifest.txt`
//! with `id<TAB>label<TAB>split` lines, and optionally `segments.txt` with
//! `id<TAB>sub,sub,...<TAB>0101...` lines for synthetic annotations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{FeatureSequence, SegmentMap};
use crate::error::{Error, Result};

pub const FSEQ_MAGIC: &[u8; 5] = b"FSEQ1";

pub fn encode_fseq(seq: &FeatureSequence) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("{what} {v} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(21 + seq.id.len() + seq.raw().len() * 4);
    out.extend_from_slice(FSEQ_MAGIC);
    out.extend_from_slice(&to_u32(seq.len(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(seq.dim(), "dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(seq.label, "label")?.to_le_bytes());
    out.extend_from_slice(&to_u32(seq.id.len(), "id length")?.to_le_bytes());
    out.extend_from_slice(seq.id.as_bytes());
    for v in seq.raw() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fseq(bytes: &[u8], path: &Path) -> Result<FeatureSequence> {
    let fail = |reason: &str| Error::format(path, reason);
    if bytes.len() < FSEQ_MAGIC.len() || &bytes[..5] != FSEQ_MAGIC {
        return Err(fail("bad magic, expected FSEQ1"));
    }
    let mut pos = 5;
    let mut next_u32 = || -> Result<u32> {
        let chunk = bytes.get(pos..pos + 4).ok_or_else(|| fail("truncated header"))?;
        pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
    };
    let n = next_u32()? as usize;
    let d = next_u32()? as usize;
    let label = next_u32()? as usize;
    let id_len = next_u32()? as usize;
    if n == 0 || d == 0 {
        return Err(fail("N and D must be positive"));
    }
    let id_bytes = bytes.get(pos..pos + id_len).ok_or_else(|| fail("truncated id"))?;
    let id = std::str::from_utf8(id_bytes).map_err(|_| fail("id is not UTF-8"))?.to_string();
    pos += id_len;
    let payload = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| fail("dimension overflow"))?;
    let rest = &bytes[pos..];
    if rest.len() < payload {
        return Err(fail("truncated payload"));
    }
    if rest.len() > payload {
        return Err(fail("trailing bytes after payload"));
    }
    let frames = rest.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    FeatureSequence::new(id, label, d, frames)
}

pub fn write_fseq(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let bytes = encode_fseq(seq)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_fseq(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fseq(&bytes, path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<FeatureSequence>,
    pub val: Vec<FeatureSequence>,
    pub test: Vec<FeatureSequence>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[FeatureSequence] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<FeatureSequence> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    fn all(&self) -> impl Iterator<Item = (Split, &FeatureSequence)> {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .flat_map(move |s| self.split(s).iter().map(move |q| (s, q)))
    }

    /// Feature dimension shared by every sequence.
    pub fn dim(&self) -> Result<usize> {
        let mut dims = self.all().map(|(_, s)| s.dim());
        let Some(d) = dims.next() else {
            return Err(Error::invalid("dataset is empty"));
        };
        if dims.any(|x| x != d) {
            return Err(Error::shape("sequences disagree on feature dimension"));
        }
        Ok(d)
    }

    pub fn n_classes(&self) -> usize {
        self.all().map(|(_, s)| s.label + 1).max().unwrap_or(0)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        let mut segments = String::new();
        for (split, seq) in self.all() {
            if seq.id.is_empty() || seq.id.contains(['/', '\\', '\t', '\n']) {
                return Err(Error::invalid(format!("sequence id '{}' is not a valid file stem", seq.id)));
            }
            write_fseq(&dir.join(format!("{}.fseq", seq.id)), seq)?;
            let _ = writeln!(manifest, "{}\t{}\t{}", seq.id, seq.label, split.name());
            if let Some(seg) = &seq.segments {
                let subs: Vec<String> = seg.subactivity.iter().map(u32::to_string).collect();
                let flags: String = seg.discriminative.iter().map(|&d| if d { '1' } else { '0' }).collect();
                let _ = writeln!(segments, "{}\t{}\t{}", seq.id, subs.join(","), flags);
            }
        }
        let path = dir.join("manifest.txt");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        if !segments.is_empty() {
            let path = dir.join("segments.txt");
            fs::write(&path, segments).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let manifest = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;

        let mut segments: HashMap<String, SegmentMap> = HashMap::new();
        let seg_path = dir.join("segments.txt");
        if seg_path.exists() {
            let text = fs::read_to_string(&seg_path).map_err(|e| Error::io(&seg_path, e))?;
            for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let bad = || Error::format(&seg_path, format!("line {}: malformed", lineno + 1));
                let mut parts = line.split('\t');
                let (Some(id), Some(subs), Some(flags)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(bad());
                };
                let subactivity = subs
                    .split(',')
                    .map(|s| s.parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad())?;
                let discriminative = flags
                    .chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        _ => Err(bad()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                segments.insert(id.to_string(), SegmentMap { subactivity, discriminative });
            }
        }

        let mut data = Dataset::default();
        for (lineno, line) in manifest.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |r: &str| Error::format(&manifest_path, format!("line {}: {r}", lineno + 1));
            let parts: Vec<&str> = line.split('\t').collect();
            let [id, label, split] = parts.as_slice() else {
                return Err(bad("expected id, label, split"));
            };
            let label: usize = label.parse().map_err(|_| bad("label is not an integer"))?;
            let split = Split::parse(split)?;
            let mut seq = read_fseq(&dir.join(format!("{id}.fseq")))?;
            if seq.id != *id || seq.label != label {
                return Err(bad("manifest disagrees with the feature file"));
            }
            if let Some(seg) = segments.remove(*id) {
                seq = seq.with_segments(seg)?;
            }
            data.split_mut(split).push(seq);
        }
        Ok(data)
    }
}
