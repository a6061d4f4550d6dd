//! Synthetic events built from sub-activity segments of varying duration.
//!
//! Sub-activities `0..n_subactivities - n_classes·discriminative_per_class`
//! form the shared pool; the rest are owned by exactly one class each. Every
//! sequence is a run of shared segments with one of its class's own segments
//! inserted at a random position. A frame is its segment's prototype plus
//! isotropic Gaussian noise.
//!
//! With `tempo_amplitude > 0`, frames of shared segments additionally carry
//! an oscillation along one global direction whose period depends on the
//! class (the pace at which the event is performed). The period is measured
//! in frames, so it shifts whenever the sampling rate does.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Dataset, FeatureSequence, SegmentMap};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    /// Total sub-activity count, shared and discriminative.
    pub n_subactivities: usize,
    pub discriminative_per_class: usize,
    /// Inclusive range for the number of shared segments per sequence.
    pub shared_segments: (usize, usize),
    /// Inclusive frame-count range of a shared segment.
    pub duration: (usize, usize),
    /// Inclusive frame-count range of a discriminative segment.
    pub discriminative_duration: (usize, usize),
    pub dim: usize,
    pub noise: f64,
    /// Norm of every prototype vector.
    pub separation: f64,
    pub tempo_amplitude: f64,
    /// Period (frames) of class 0; class `c` uses `base · ratio^c`.
    pub tempo_base_period: f64,
    pub tempo_ratio: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 6,
            n_subactivities: 14,
            discriminative_per_class: 1,
            shared_segments: (3, 5),
            duration: (10, 40),
            discriminative_duration: (10, 40),
            dim: 32,
            noise: 0.5,
            separation: 3.0,
            tempo_amplitude: 0.0,
            tempo_base_period: 4.0,
            tempo_ratio: std::f64::consts::SQRT_2,
            n_train: 200,
            n_val: 0,
            n_test: 100,
        }
    }
}

impl SyntheticSpec {
    /// Six classes whose shared segments carry a class-specific tempo; the
    /// discriminative segment is short relative to the event.
    pub fn tempo() -> Self {
        SyntheticSpec {
            n_classes: 6,
            n_subactivities: 14,
            discriminative_per_class: 1,
            shared_segments: (3, 5),
            duration: (10, 40),
            discriminative_duration: (20, 40),
            dim: 32,
            noise: 0.3,
            separation: 3.0,
            tempo_amplitude: 2.0,
            tempo_base_period: 4.0,
            tempo_ratio: std::f64::consts::SQRT_2,
            n_train: 200,
            n_val: 50,
            n_test: 100,
        }
    }

    /// Three classes separable by their mean frame.
    pub fn separable() -> Self {
        SyntheticSpec {
            n_classes: 3,
            n_subactivities: 4,
            discriminative_per_class: 1,
            shared_segments: (0, 1),
            duration: (3, 6),
            discriminative_duration: (4, 8),
            dim: 8,
            noise: 0.1,
            separation: 3.0,
            tempo_amplitude: 0.0,
            tempo_base_period: 4.0,
            tempo_ratio: 2.0,
            n_train: 30,
            n_val: 0,
            n_test: 30,
        }
    }

    pub fn shared_pool(&self) -> usize {
        self.n_subactivities.saturating_sub(self.n_classes * self.discriminative_per_class)
    }

    /// Sub-activity ids owned by `class`.
    pub fn discriminative_ids(&self, class: usize) -> std::ops::Range<u32> {
        let start = self.shared_pool() + class * self.discriminative_per_class;
        start as u32..(start + self.discriminative_per_class) as u32
    }

    pub fn tempo_period(&self, class: usize) -> f64 {
        self.tempo_base_period * self.tempo_ratio.powi(class as i32)
    }

    /// Keys accepted by [`SyntheticSpec::set`]. Ranges are written `lo-hi`.
    pub const KEYS: &'static [&'static str] = &[
        "n_classes",
        "n_subactivities",
        "discriminative_per_class",
        "shared_segments",
        "duration",
        "discriminative_duration",
        "dim",
        "noise",
        "separation",
        "tempo_amplitude",
        "tempo_base_period",
        "tempo_ratio",
        "n_train",
        "n_val",
        "n_test",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
        }
        fn range(key: &str, value: &str) -> Result<(usize, usize)> {
            let (lo, hi) =
                value.split_once('-').ok_or_else(|| Error::Config(format!("{key}: expected lo-hi, got '{value}'")))?;
            Ok((num(key, lo)?, num(key, hi)?))
        }
        match key {
            "n_classes" => self.n_classes = num(key, value)?,
            "n_subactivities" => self.n_subactivities = num(key, value)?,
            "discriminative_per_class" => self.discriminative_per_class = num(key, value)?,
            "shared_segments" => self.shared_segments = range(key, value)?,
            "duration" => self.duration = range(key, value)?,
            "discriminative_duration" => self.discriminative_duration = range(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "separation" => self.separation = num(key, value)?,
            "tempo_amplitude" => self.tempo_amplitude = num(key, value)?,
            "tempo_base_period" => self.tempo_base_period = num(key, value)?,
            "tempo_ratio" => self.tempo_ratio = num(key, value)?,
            "n_train" => self.n_train = num(key, value)?,
            "n_val" => self.n_val = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            other => return Err(Error::Config(format!("unknown dataset key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.discriminative_per_class == 0 {
            return bad("every class needs a discriminative sub-activity".into());
        }
        let owned = self.n_classes * self.discriminative_per_class;
        if owned > self.n_subactivities {
            return bad(format!(
                "{owned} discriminative sub-activities exceed the pool of {}",
                self.n_subactivities
            ));
        }
        if self.shared_segments.1 > 0 && self.shared_pool() == 0 {
            return bad("shared segments requested but the shared pool is empty".into());
        }
        for (name, (lo, hi)) in
            [("duration", self.duration), ("discriminative_duration", self.discriminative_duration)]
        {
            if lo == 0 || lo > hi {
                return bad(format!("{name} range ({lo}, {hi}) is invalid"));
            }
        }
        if self.shared_segments.0 > self.shared_segments.1 {
            return bad("shared_segments range is inverted".into());
        }
        if self.dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        if !(self.separation.is_finite() && self.tempo_amplitude.is_finite() && self.tempo_amplitude >= 0.0) {
            return bad("separation and tempo amplitude must be finite".into());
        }
        if self.tempo_amplitude > 0.0 && !(self.tempo_base_period > 0.0 && self.tempo_ratio > 0.0) {
            return bad("tempo periods must be positive".into());
        }
        Ok(())
    }
}

fn random_direction(rng: &mut impl Rng, dim: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-9 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

/// Generates train, validation and test splits; fully determined by `seed`.
pub fn generate_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> =
        (0..spec.n_subactivities).map(|_| random_direction(&mut rng, spec.dim, spec.separation)).collect();
    let tempo_axis = random_direction(&mut rng, spec.dim, 1.0);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;

    let mut make = |split: &str, count: usize| -> Result<Vec<FeatureSequence>> {
        (0..count)
            .map(|i| {
                let label = i % spec.n_classes;
                let id = format!("{split}-{i:05}");
                generate_sequence(spec, &prototypes, &tempo_axis, &noise, id, label, &mut rng)
            })
            .collect()
    };
    let train = make("train", spec.n_train)?;
    let val = make("val", spec.n_val)?;
    let test = make("test", spec.n_test)?;
    Ok(Dataset { train, val, test })
}

fn generate_sequence(
    spec: &SyntheticSpec,
    prototypes: &[Vec<f64>],
    tempo_axis: &[f64],
    noise: &Normal<f64>,
    id: String,
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureSequence> {
    let pool = spec.shared_pool() as u32;
    let n_shared = rng.gen_range(spec.shared_segments.0..=spec.shared_segments.1);
    let mut plan: Vec<(u32, bool, usize)> = Vec::with_capacity(n_shared + 1);
    let mut previous = None;
    for _ in 0..n_shared {
        // Adjacent shared segments use different sub-activities.
        let sub = loop {
            let s = rng.gen_range(0..pool);
            if pool == 1 || Some(s) != previous {
                break s;
            }
        };
        previous = Some(sub);
        let dur = rng.gen_range(spec.duration.0..=spec.duration.1);
        plan.push((sub, false, dur));
    }
    let owned: Vec<u32> = spec.discriminative_ids(label).collect();
    let disc = *owned.choose(rng).expect("class owns a sub-activity");
    let dur = rng.gen_range(spec.discriminative_duration.0..=spec.discriminative_duration.1);
    let at = rng.gen_range(0..=plan.len());
    plan.insert(at, (disc, true, dur));

    let period = spec.tempo_period(label);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let total: usize = plan.iter().map(|p| p.2).sum();
    let mut frames = Vec::with_capacity(total * spec.dim);
    let mut subactivity = Vec::with_capacity(total);
    let mut discriminative = Vec::with_capacity(total);
    let mut t = 0usize;
    for (sub, is_disc, dur) in plan {
        let proto = &prototypes[sub as usize];
        for _ in 0..dur {
            let wave = if !is_disc && spec.tempo_amplitude > 0.0 {
                spec.tempo_amplitude * (std::f64::consts::TAU * t as f64 / period + phase).sin()
            } else {
                0.0
            };
            for (d, &p) in proto.iter().enumerate() {
                let eps = if spec.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                frames.push((p + wave * tempo_axis[d] + eps) as f32);
            }
            subactivity.push(sub);
            discriminative.push(is_disc);
            t += 1;
        }
    }
    FeatureSequence::new(id, label, spec.dim, frames)?.with_segments(SegmentMap { subactivity, discriminative })
}
