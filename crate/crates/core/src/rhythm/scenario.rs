use std::fmt;

use rand::Rng;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, FeatureSequence};
use crate::error::{Error, Result};

/// Test-time rhythm transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Original,
    /// Strides 2, 1, 5 over the three intervals.
    S1,
    /// Strides 5, 1, 2.
    S2,
    /// Sorted uniform sample of `⌊N/2⌋` frames without replacement.
    S3,
    /// Caller-chosen stride per interval.
    Custom([usize; 3]),
}

impl ScenarioKind {
    pub fn strides(self) -> Option<[usize; 3]> {
        match self {
            ScenarioKind::S1 => Some([2, 1, 5]),
            ScenarioKind::S2 => Some([5, 1, 2]),
            ScenarioKind::Custom(s) => Some(s),
            ScenarioKind::Original | ScenarioKind::S3 => None,
        }
    }

    pub fn is_random(self) -> bool {
        self == ScenarioKind::S3
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "original" => Ok(ScenarioKind::Original),
            "s1" | "S1" => Ok(ScenarioKind::S1),
            "s2" | "S2" => Ok(ScenarioKind::S2),
            "s3" | "S3" => Ok(ScenarioKind::S3),
            other => {
                let Some(rest) = other.strip_prefix("custom:") else {
                    return Err(Error::Config(format!("unknown scenario '{other}'")));
                };
                let parts: Vec<usize> = rest
                    .split('/')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Config(format!("scenario '{other}': {e}")))?;
                let strides: [usize; 3] = parts
                    .try_into()
                    .map_err(|_| Error::Config(format!("scenario '{other}' needs three strides")))?;
                if strides.contains(&0) {
                    return Err(Error::Config(format!("scenario '{other}': strides must be >= 1")));
                }
                Ok(ScenarioKind::Custom(strides))
            }
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioKind::Original => write!(f, "original"),
            ScenarioKind::S1 => write!(f, "s1"),
            ScenarioKind::S2 => write!(f, "s2"),
            ScenarioKind::S3 => write!(f, "s3"),
            ScenarioKind::Custom([a, b, c]) => write!(f, "custom:{a}/{b}/{c}"),
        }
    }
}

/// A scenario plus how many random repeats to average and their base seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub repeats: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec { kind, repeats: if kind.is_random() { 5 } else { 1 }, seed: 0 }
    }

    /// The four standard scenarios.
    pub fn standard() -> Vec<ScenarioSpec> {
        [ScenarioKind::Original, ScenarioKind::S1, ScenarioKind::S2, ScenarioKind::S3]
            .into_iter()
            .map(ScenarioSpec::new)
            .collect()
    }
}

/// Kept frame indices (strictly increasing) for a sequence of length `n`.
///
/// The outer intervals hold `⌊n/3⌋` frames each and the middle one takes the
/// remainder, so S1 and S2 always keep the same number of frames. Each stride
/// is anchored at its interval's first frame.
pub fn resample_indices(n: usize, kind: ScenarioKind, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("cannot resample an empty sequence"));
    }
    match kind {
        ScenarioKind::Original => Ok((0..n).collect()),
        ScenarioKind::S3 => {
            if n < 2 {
                return Err(Error::invalid(format!("s3 needs at least 2 frames, got {n}")));
            }
            let mut idx = rand::seq::index::sample(rng, n, n / 2).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
        _ => {
            let strides = kind.strides().expect("interval scenario");
            if n < 3 {
                return Err(Error::invalid(format!("{kind} needs at least 3 frames, got {n}")));
            }
            if strides.contains(&0) {
                return Err(Error::invalid("strides must be >= 1"));
            }
            let third = n / 3;
            let bounds = [(0, third), (third, n - third), (n - third, n)];
            let mut out = Vec::new();
            for ((start, end), stride) in bounds.into_iter().zip(strides) {
                out.extend((start..end).step_by(stride));
            }
            Ok(out)
        }
    }
}

/// Applies a scenario to one sequence. Label and id are unchanged.
pub fn resample(seq: &FeatureSequence, kind: ScenarioKind, rng: &mut impl Rng) -> Result<FeatureSequence> {
    let idx = resample_indices(seq.len(), kind, rng)?;
    seq.subset(&idx)
}

/// Applies a scenario to every sequence of a dataset, in split order, with
/// one generator seeded from `seed`.
pub fn resample_dataset(data: &Dataset, kind: ScenarioKind, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut apply = |seqs: &[FeatureSequence]| -> Result<Vec<FeatureSequence>> {
        seqs.iter().map(|s| resample(s, kind, &mut rng)).collect()
    };
    Ok(Dataset { train: apply(&data.train)?, val: apply(&data.val)?, test: apply(&data.test)? })
}

/// Drops `trim` frames from both ends, then keeps every `stride`-th frame.
pub fn train_subsample(seq: &FeatureSequence, stride: usize, trim: usize) -> Result<FeatureSequence> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let n = seq.len();
    if n <= 2 * trim {
        return Err(Error::invalid(format!(
            "sequence '{}' has {n} frames, nothing left after trimming {trim} per side",
            seq.id
        )));
    }
    let idx: Vec<usize> = (trim..n - trim).step_by(stride).collect();
    seq.subset(&idx)
}
