//! Frame-importance heads (RNN+ / SRNN+), keep/delete selection, the
//! usage regularizer, and the straight-through hand-off to the classifier.

use rand::Rng;

use crate::cells::{Activation, IndRnnLayer, SkipIndRnnLayer, SkipMode};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::numerics::{Bound, ParamId, ParamStore, Real, Tape, Var};
use crate::rhythm::FeatureSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectorVariant {
    /// Two plain IndRNN layers.
    RnnPlus,
    /// Two Skip IndRNN layers.
    SrnnPlus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectorConfig {
    pub variant: SelectorVariant,
    pub input: usize,
    pub hidden: usize,
    pub fc1: usize,
    /// Target mean keep probability.
    pub m_r: f64,
    /// Weight of the usage regularizer.
    pub lambda: f64,
    pub activation: Activation,
    /// Initial output-layer bias; positive values start with most frames kept.
    pub init_logit: f64,
    /// Multiplier on the initial output-layer weights.
    pub init_gain: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            variant: SelectorVariant::RnnPlus,
            input: 4096,
            hidden: 250,
            fc1: 50,
            m_r: 0.25,
            lambda: 4.0,
            activation: Activation::Relu,
            init_logit: 0.0,
            init_gain: 1.0,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_r > 0.0 && self.m_r < 1.0) {
            return Err(Error::Config(format!("m_R must lie in (0, 1), got {}", self.m_r)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.input == 0 || self.hidden == 0 || self.fc1 == 0 {
            return Err(Error::Config("selector sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Stack {
    Plain(Vec<IndRnnLayer>),
    Skip(Vec<SkipIndRnnLayer>),
}

/// Recurrent stack → FC(relu) → FC(1) → sigmoid, one probability per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Selector {
    pub config: SelectorConfig,
    stack: Stack,
    fc1: Dense,
    fc2: Dense,
}

/// Per-frame keep probabilities on the tape.
#[derive(Clone, Debug)]
pub struct Scores {
    /// One scalar node per frame.
    pub probs: Vec<Var>,
    /// All probabilities as one vector node.
    pub p_vec: Var,
    /// Skip IndRNN update decisions, `[layer][step][neuron]`; empty for RNN+.
    pub skip_decisions: Vec<Vec<Vec<bool>>>,
}

impl Selector {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: SelectorConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (input, hidden, act) = (config.input, config.hidden, config.activation);
        let stack = match config.variant {
            SelectorVariant::RnnPlus => Stack::Plain(vec![
                IndRnnLayer::new(store, &format!("{prefix}.rnn0"), input, hidden, act, rng),
                IndRnnLayer::new(store, &format!("{prefix}.rnn1"), hidden, hidden, act, rng),
            ]),
            SelectorVariant::SrnnPlus => Stack::Skip(vec![
                SkipIndRnnLayer::new(store, &format!("{prefix}.rnn0"), input, hidden, act, rng),
                SkipIndRnnLayer::new(store, &format!("{prefix}.rnn1"), hidden, hidden, act, rng),
            ]),
        };
        let fc1 = Dense::new(store, &format!("{prefix}.fc1"), hidden, config.fc1, rng);
        let fc2 = Dense::new(store, &format!("{prefix}.fc2"), config.fc1, 1, rng);
        store.get_mut(fc2.bias_id()).data_mut()[0] = T::from_f64(config.init_logit);
        let gain = T::from_f64(config.init_gain);
        store.get_mut(fc2.weight_id()).data_mut().iter_mut().for_each(|w| *w = *w * gain);
        Ok(Selector { config, stack, fc1, fc2 })
    }

    /// Input-weight matrix of the first recurrent layer.
    pub fn input_weight_id(&self) -> ParamId {
        match &self.stack {
            Stack::Plain(l) => l[0].input_weight_id(),
            Stack::Skip(l) => l[0].base.input_weight_id(),
        }
    }

    pub fn head(&self) -> (&Dense, &Dense) {
        (&self.fc1, &self.fc2)
    }

    /// Scores every frame. `frozen_skip` replays recorded Skip IndRNN gate
    /// decisions as constants (used by finite-difference checks).
    pub fn score<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        frames: &[Var],
        frozen_skip: Option<&[Vec<Vec<bool>>]>,
    ) -> Result<Scores> {
        if frames.is_empty() {
            return Err(Error::invalid("cannot score an empty sequence"));
        }
        let d = tape.value(frames[0]).len();
        if d != self.config.input {
            return Err(Error::shape(format!("selector expects {} features, got {d}", self.config.input)));
        }
        let mut skip_decisions = Vec::new();
        let top = match &self.stack {
            Stack::Plain(layers) => {
                let mut xs = frames.to_vec();
                for layer in layers {
                    xs = layer.unroll(tape, bound, &xs)?;
                }
                xs
            }
            Stack::Skip(layers) => {
                if let Some(f) = frozen_skip {
                    if f.len() != layers.len() {
                        return Err(Error::shape("frozen decisions must cover every skip layer"));
                    }
                }
                let mut xs = frames.to_vec();
                for (i, layer) in layers.iter().enumerate() {
                    let mode = match frozen_skip {
                        Some(f) => SkipMode::Frozen(&f[i]),
                        None => SkipMode::StraightThrough,
                    };
                    let (out, decisions) = layer.unroll(tape, bound, &xs, mode)?;
                    skip_decisions.push(decisions);
                    xs = out;
                }
                xs
            }
        };
        let probs: Vec<Var> = top
            .into_iter()
            .map(|h| {
                let a = self.fc1.forward(tape, bound, h);
                let a = tape.relu(a);
                let logit = self.fc2.forward(tape, bound, a);
                tape.sigmoid(logit)
            })
            .collect();
        let p_vec = tape.concat(&probs);
        Ok(Scores { probs, p_vec, skip_decisions })
    }

    pub fn clip_recurrent<T: Real>(&self, store: &mut ParamStore<T>, u_max: f64) {
        match &self.stack {
            Stack::Plain(layers) => layers.iter().for_each(|l| l.clip_recurrent(store, u_max)),
            Stack::Skip(layers) => layers.iter().for_each(|l| l.clip_recurrent(store, u_max)),
        }
    }
}

/// Keep probabilities for every frame of `seq`, computed without gradients.
pub fn score_frames<T: Real>(selector: &Selector, store: &ParamStore<T>, seq: &FeatureSequence) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let bound = store.bind_frozen(&mut tape);
    let frames = seq.to_tape(&mut tape);
    let scores = selector.score(&mut tape, &bound, &frames, None)?;
    Ok(tape.value(scores.p_vec).data().to_vec())
}

/// Keep/delete decisions for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionTrace {
    pub p: Vec<f64>,
    pub y: Vec<bool>,
    /// Set when no frame reached 0.5 and the argmax frame was kept instead.
    pub fallback: bool,
}

impl SelectionTrace {
    /// `K`.
    pub fn kept(&self) -> usize {
        self.y.iter().filter(|&&y| y).count()
    }

    /// `N`.
    pub fn total(&self) -> usize {
        self.y.len()
    }

    /// `100 · K / N`.
    pub fn usage(&self) -> f64 {
        100.0 * self.kept() as f64 / self.total() as f64
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.y.iter().enumerate().filter(|(_, &y)| y).map(|(i, _)| i).collect()
    }

    /// Every frame kept with `p = 1`.
    pub fn keep_all(n: usize) -> Self {
        SelectionTrace { p: vec![1.0; n], y: vec![true; n], fallback: false }
    }

    /// One line: `id, N, K, usage, p-list, y-list`, tab-separated, lists
    /// comma-separated.
    pub fn to_line(&self, id: &str) -> String {
        let p: Vec<String> = self.p.iter().map(|v| v.to_string()).collect();
        let y: Vec<&str> = self.y.iter().map(|&y| if y { "1" } else { "0" }).collect();
        format!(
            "{id}\t{}\t{}\t{:.4}\t{}\t{}",
            self.total(),
            self.kept(),
            self.usage(),
            p.join(","),
            y.join(",")
        )
    }

    pub fn parse_line(line: &str) -> Result<(String, Self)> {
        let bad = |m: &str| Error::invalid(format!("trace line: {m}"));
        let parts: Vec<&str> = line.trim_end_matches('\n').split('\t').collect();
        let [id, n, k, _usage, p, y] = parts.as_slice() else {
            return Err(bad("expected six tab-separated fields"));
        };
        let n: usize = n.parse().map_err(|_| bad("N"))?;
        let k: usize = k.parse().map_err(|_| bad("K"))?;
        let p: Vec<f64> = p
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("p-list"))?;
        let y: Vec<bool> = y
            .split(',')
            .map(|v| match v {
                "1" => Ok(true),
                "0" => Ok(false),
                _ => Err(bad("y-list")),
            })
            .collect::<Result<_>>()?;
        if p.len() != n || y.len() != n {
            return Err(bad("list length differs from N"));
        }
        let fallback = !p.iter().any(|&v| v >= 0.5) && k == 1;
        let trace = SelectionTrace { p, y, fallback };
        if trace.kept() != k {
            return Err(bad("K disagrees with the y-list"));
        }
        Ok((id.to_string(), trace))
    }
}

/// `y_i = [p_i >= 0.5]`; if nothing is kept, keeps the first argmax frame.
pub fn select_decisions(p: &[f64]) -> Result<SelectionTrace> {
    if p.is_empty() {
        return Err(Error::invalid("no probabilities to select from"));
    }
    if let Some(bad) = p.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::invalid(format!("keep probability {bad} outside [0, 1]")));
    }
    let mut y: Vec<bool> = p.iter().map(|&v| v >= 0.5).collect();
    let fallback = !y.iter().any(|&v| v);
    if fallback {
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        y[best] = true;
    }
    Ok(SelectionTrace { p: p.to_vec(), y, fallback })
}

/// Applies the keep rule and compacts the sequence in temporal order.
pub fn select(p: &[f64], seq: &FeatureSequence) -> Result<(SelectionTrace, FeatureSequence)> {
    if p.len() != seq.len() {
        return Err(Error::shape(format!("{} probabilities for {} frames", p.len(), seq.len())));
    }
    let trace = select_decisions(p)?;
    let kept = seq.subset(&trace.kept_indices())?;
    Ok((trace, kept))
}

/// `|mean(p) - m_R|`.
pub fn reducing_loss(p: &[f64], m_r: f64) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::invalid("reducing loss of an empty sequence"));
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    Ok((mean - m_r).abs())
}

/// Tape form of [`reducing_loss`] over a probability vector node.
pub fn reducing_loss_node<T: Real>(tape: &mut Tape<T>, p_vec: Var, m_r: f64) -> Var {
    let mean = tape.mean(p_vec);
    let centered = tape.add_scalar(mean, T::from_f64(-m_r));
    tape.abs(centered)
}

/// `L_C + λ · L_R`.
pub fn rnn_total_loss(classification: f64, reducing: f64, lambda: f64) -> Result<f64> {
    if !(classification >= 0.0 && reducing >= 0.0 && lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "losses and lambda must be >= 0 (L_C={classification}, L_R={reducing}, lambda={lambda})"
        )));
    }
    Ok(classification + lambda * reducing)
}

pub fn rnn_total_loss_node<T: Real>(tape: &mut Tape<T>, classification: Var, reducing: Var, lambda: f64) -> Var {
    let weighted = tape.scale(reducing, T::from_f64(lambda));
    tape.add(classification, weighted)
}

/// Kept frames multiplied by a straight-through gate on their keep
/// probability. The gate's forward value is exactly 1 (so the frames are
/// unchanged) and its adjoint flows into `p_i`; deleted frames are absent.
///
/// `anchors`, when given, fixes the gate offset at previously recorded
/// probabilities instead of the current ones, which turns the gate into a
/// differentiable function for finite-difference checks.
pub fn gated_forward<T: Real>(
    tape: &mut Tape<T>,
    trace: &SelectionTrace,
    probs: &[Var],
    frames: &[Var],
    anchors: Option<&[T]>,
) -> Result<Vec<Var>> {
    if probs.len() != trace.total() || frames.len() != trace.total() {
        return Err(Error::shape(format!(
            "trace covers {} frames, got {} probabilities and {} frames",
            trace.total(),
            probs.len(),
            frames.len()
        )));
    }
    if anchors.is_some_and(|a| a.len() != trace.total()) {
        return Err(Error::shape("one anchor per frame required"));
    }
    Ok(trace
        .kept_indices()
        .into_iter()
        .map(|i| {
            let anchor = anchors.map_or_else(|| tape.scalar(probs[i]), |a| a[i]);
            let g = tape.gate(probs[i], anchor);
            tape.scale_by(frames[i], g)
        })
        .collect())
}
