//! Event sequences: synthetic generation, feature files, and the rhythm
//! transforms applied at train and test time.

mod fseq;
mod scenario;
mod synth;

pub use fseq::{decode_fseq, encode_fseq, read_fseq, write_fseq, Dataset, Split, FSEQ_MAGIC};
pub use scenario::{resample, resample_dataset, resample_indices, train_subsample, ScenarioKind, ScenarioSpec};
pub use synth::{generate_dataset, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tape, Tensor, Var};

/// Per-frame sub-activity annotation for synthetic sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentMap {
    pub subactivity: Vec<u32>,
    pub discriminative: Vec<bool>,
}

impl SegmentMap {
    fn subset(&self, indices: &[usize]) -> SegmentMap {
        SegmentMap {
            subactivity: indices.iter().map(|&i| self.subactivity[i]).collect(),
            discriminative: indices.iter().map(|&i| self.discriminative[i]).collect(),
        }
    }
}

/// One event instance: `N` frames of `D` features and a class label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub id: String,
    pub label: usize,
    dim: usize,
    frames: Vec<f32>,
    pub segments: Option<SegmentMap>,
}

impl FeatureSequence {
    pub fn new(id: impl Into<String>, label: usize, dim: usize, frames: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if frames.is_empty() || !frames.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} values do not form N >= 1 rows of dimension {dim}",
                frames.len()
            )));
        }
        Ok(FeatureSequence { id: id.into(), label, dim, frames, segments: None })
    }

    pub fn with_segments(mut self, segments: SegmentMap) -> Result<Self> {
        let n = self.len();
        if segments.subactivity.len() != n || segments.discriminative.len() != n {
            return Err(Error::shape(format!("segment map does not cover {n} frames")));
        }
        self.segments = Some(segments);
        Ok(self)
    }

    /// Number of frames `N`.
    pub fn len(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.frames.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f32] {
        &self.frames
    }

    /// Records every frame on `tape` as a constant vector.
    pub fn to_tape<T: Real>(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.frames()
            .map(|f| tape.constant(Tensor::vector(f.iter().map(|&v| T::from_f64(v as f64)).collect())))
            .collect()
    }

    /// Frames at `indices`, in the given order; id, label kept.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid(format!("sequence '{}': empty frame subset", self.id)));
        }
        let mut frames = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("frame index {i} out of range")));
            }
            frames.extend_from_slice(self.frame(i));
        }
        Ok(FeatureSequence {
            id: self.id.clone(),
            label: self.label,
            dim: self.dim,
            frames,
            segments: self.segments.as_ref().map(|s| s.subset(indices)),
        })
    }
}
