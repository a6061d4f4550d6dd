use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Variant};
use crate::classifier::{classify, predict, Classifier, ClassifierConfig};
use crate::cells::{default_recurrent_clip, Activation};
use crate::error::{Error, Result};
use crate::numerics::ParamStore;
use crate::rhythm::FeatureSequence;
use crate::selector::{score_frames, select_decisions, SelectionTrace, Selector, SelectorConfig, SelectorVariant};

/// Independent random streams derived from the run seed, so that adding a
/// selector never perturbs classifier initialization or data order.
pub(crate) const STREAM_CLASSIFIER: u64 = 0;
pub(crate) const STREAM_SELECTOR: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_POLICY: u64 = 3;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A selector (absent for the baseline) feeding a classifier, with all
/// parameters in one store: classifier tensors first.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ExperimentConfig,
    pub classifier: Classifier,
    pub selector: Option<Selector>,
    pub store: ParamStore<f32>,
}

/// Deterministic prediction for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub probs: Vec<f32>,
    pub predicted: usize,
    /// `None` for the baseline.
    pub trace: Option<SelectionTrace>,
}

impl Model {
    pub fn new(config: &ExperimentConfig, input_dim: usize, n_classes: usize) -> Result<Self> {
        config.validate()?;
        let seed = config.require_seed()?;
        let mut config = config.clone();
        for (name, slot, actual) in
            [("input_dim", &mut config.input_dim, input_dim), ("n_classes", &mut config.n_classes, n_classes)]
        {
            match *slot {
                Some(v) if v != actual => {
                    return Err(Error::shape(format!("config {name} = {v}, dataset has {actual}")));
                }
                _ => *slot = Some(actual),
            }
        }
        let mut store = ParamStore::new();
        let classifier = Classifier::new(
            &mut store,
            "classifier",
            ClassifierConfig {
                cell: config.cell,
                input: input_dim,
                hidden: config.hidden,
                fc_hidden: config.fc_hidden,
                n_classes,
            },
            &mut stream(seed, STREAM_CLASSIFIER),
        )?;
        let selector = match config.variant {
            Variant::Baseline => None,
            v => Some(Selector::new(
                &mut store,
                "selector",
                SelectorConfig {
                    variant: if v == Variant::SrnnPlus { SelectorVariant::SrnnPlus } else { SelectorVariant::RnnPlus },
                    input: input_dim,
                    hidden: config.selector_hidden,
                    fc1: config.selector_fc1,
                    m_r: config.m_r,
                    lambda: config.lambda,
                    activation: Activation::Relu,
                    init_logit: config.selector_init_logit,
                    init_gain: config.selector_init_gain,
                },
                &mut stream(seed, STREAM_SELECTOR),
            )?),
        };
        Ok(Model { config, classifier, selector, store })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn input_dim(&self) -> usize {
        self.classifier.config.input
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.config.n_classes
    }

    /// Selection decisions at evaluation time: thresholding with the
    /// argmax fallback, or keep-all when selection is pinned off.
    pub fn selection(&self, seq: &FeatureSequence) -> Result<Option<SelectionTrace>> {
        let Some(selector) = &self.selector else { return Ok(None) };
        if self.config.keep_all {
            return Ok(Some(SelectionTrace::keep_all(seq.len())));
        }
        let p: Vec<f64> = score_frames(selector, &self.store, seq)?.into_iter().map(f64::from).collect();
        select_decisions(&p).map(Some)
    }

    pub fn infer(&self, seq: &FeatureSequence) -> Result<Inference> {
        if seq.dim() != self.input_dim() {
            return Err(Error::shape(format!("model expects {} features, sequence has {}", self.input_dim(), seq.dim())));
        }
        let trace = self.selection(seq)?;
        let probs = match &trace {
            None => classify(&self.classifier, &self.store, seq)?,
            Some(t) => classify(&self.classifier, &self.store, &seq.subset(&t.kept_indices())?)?,
        };
        Ok(Inference { predicted: predict(&probs), probs, trace })
    }

    /// Keeps every IndRNN recurrent weight within the default bound.
    pub fn clip_recurrent(&mut self) {
        let bound = default_recurrent_clip();
        self.classifier.clip_recurrent(&mut self.store, bound);
        if let Some(s) = &self.selector {
            s.clip_recurrent(&mut self.store, bound);
        }
    }
}
