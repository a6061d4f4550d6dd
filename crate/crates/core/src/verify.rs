//! Finite-difference verification of every differentiable path: the three
//! recurrent cells, the classifier head, and the full selector loss with
//! selection decisions frozen at the unperturbed point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{Activation, GruLayer, IndRnnLayer, SkipIndRnnLayer, SkipMode};
use crate::classifier::{CellKind, Classifier, ClassifierConfig};
use crate::error::Result;
use crate::numerics::{grad_check, Bound, ParamStore, Tape, Tensor, Var};
use crate::rhythm::FeatureSequence;
use crate::selector::{
    gated_forward, reducing_loss_node, rnn_total_loss_node, select_decisions, Selector, SelectorConfig,
    SelectorVariant,
};

/// Central-difference step. Large enough that f64 roundoff in the loss
/// (about 1e-16 / h absolute) stays well below 1e-4 relative even for
/// gradient entries near 1e-8.
pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Gru,
    IndRnn,
    SkipIndRnn,
    ClassifierHead,
    RnnPlusLoss,
    SrnnPlusLoss,
}

impl Check {
    pub const ALL: [Check; 6] =
        [Check::Gru, Check::IndRnn, Check::SkipIndRnn, Check::ClassifierHead, Check::RnnPlusLoss, Check::SrnnPlusLoss];

    pub fn name(self) -> &'static str {
        match self {
            Check::Gru => "gru",
            Check::IndRnn => "indrnn",
            Check::SkipIndRnn => "skip_indrnn",
            Check::ClassifierHead => "classifier_head",
            Check::RnnPlusLoss => "rnn_plus_loss",
            Check::SrnnPlusLoss => "srnn_plus_loss",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub check: Check,
    pub seed: u64,
    pub hidden: usize,
    pub length: usize,
    pub max_rel_error: f64,
}

impl CheckOutcome {
    pub fn passes(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

struct Case {
    rng: ChaCha8Rng,
    input: usize,
    hidden: usize,
    length: usize,
    frames: Vec<Vec<f64>>,
    /// Fixed readout weights so the loss depends on every output.
    readout: Vec<f64>,
}

impl Case {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rng.gen_range(2..=5);
        let hidden = rng.gen_range(2..=8);
        let length = rng.gen_range(2..=6);
        let frames = (0..length).map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let readout = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Case { rng, input, hidden, length, frames, readout }
    }

    fn frame_vars(&self, tape: &mut Tape<f64>) -> Vec<Var> {
        self.frames.iter().map(|f| tape.constant(Tensor::vector(f.clone()))).collect()
    }

    /// `Σ_t sin(r · h_t)`, touching every timestep.
    fn readout_loss(&self, tape: &mut Tape<f64>, outputs: &[Var]) -> Var {
        let r = tape.constant(Tensor::vector(self.readout.clone()));
        let terms: Vec<Var> = outputs
            .iter()
            .map(|&h| {
                let w = tape.mul(r, h);
                tape.sum(w)
            })
            .collect();
        let all = tape.concat(&terms);
        let s = tape.sin(all);
        tape.sum(s)
    }

    fn sequence(&self) -> FeatureSequence {
        let raw = self.frames.iter().flatten().map(|&v| v as f32).collect();
        FeatureSequence::new("check", 0, self.input, raw).expect("valid toy sequence")
    }
}

/// Zero-initialized biases can put relu pre-activations exactly on the
/// kink, so all-zero tensors get small random values.
fn jitter(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for t in store.tensors_mut() {
        if t.data().iter().all(|&v| v == 0.0) {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
}

fn run_cell(check: Check, seed: u64) -> Result<CheckOutcome> {
    let mut case = Case::new(seed);
    let mut store = ParamStore::<f64>::new();
    let (input, hidden) = (case.input, case.hidden);
    let report = match check {
        Check::Gru => {
            let layer = GruLayer::new(&mut store, "gru", input, hidden, &mut case.rng);
            jitter(&mut store, &mut case.rng);
            grad_check(
                |tape, vars| {
                    let xs = case.frame_vars(tape);
                    let hs = layer.unroll(tape, &Bound::from_vars(vars.to_vec()), &xs)?;
                    Ok(case.readout_loss(tape, &hs))
                },
                store.tensors(),
                STEP,
            )?
        }
        Check::IndRnn => {
            let layer = IndRnnLayer::new(&mut store, "indrnn", input, hidden, Activation::Relu, &mut case.rng);
            jitter(&mut store, &mut case.rng);
            grad_check(
                |tape, vars| {
                    let xs = case.frame_vars(tape);
                    let hs = layer.unroll(tape, &Bound::from_vars(vars.to_vec()), &xs)?;
                    Ok(case.readout_loss(tape, &hs))
                },
                store.tensors(),
                STEP,
            )?
        }
        Check::SkipIndRnn => {
            let layer = SkipIndRnnLayer::new(&mut store, "skip", input, hidden, Activation::Relu, &mut case.rng);
            jitter(&mut store, &mut case.rng);
            let decisions = {
                let mut tape = Tape::new();
                let bound = store.bind(&mut tape);
                let xs = case.frame_vars(&mut tape);
                layer.unroll(&mut tape, &bound, &xs, SkipMode::StraightThrough)?.1
            };
            grad_check(
                |tape, vars| {
                    let xs = case.frame_vars(tape);
                    let bound = Bound::from_vars(vars.to_vec());
                    let (hs, _) = layer.unroll(tape, &bound, &xs, SkipMode::Frozen(&decisions))?;
                    Ok(case.readout_loss(tape, &hs))
                },
                store.tensors(),
                STEP,
            )?
        }
        _ => unreachable!("not a cell check"),
    };
    Ok(CheckOutcome { check, seed, hidden, length: case.length, max_rel_error: report.max_rel_error })
}

fn run_head(seed: u64) -> Result<CheckOutcome> {
    let mut case = Case::new(seed);
    let mut store = ParamStore::<f64>::new();
    let n_classes = case.rng.gen_range(2..=4);
    let label = case.rng.gen_range(0..n_classes);
    let classifier = Classifier::new(
        &mut store,
        "classifier",
        ClassifierConfig { cell: CellKind::Gru, input: case.input, hidden: case.hidden, fc_hidden: 5, n_classes },
        &mut case.rng,
    )?;
    jitter(&mut store, &mut case.rng);
    let report = grad_check(
        |tape, vars| {
            let xs = case.frame_vars(tape);
            let probs = classifier.forward(tape, &Bound::from_vars(vars.to_vec()), &xs)?;
            Ok(tape.cross_entropy(probs, label))
        },
        store.tensors(),
        STEP,
    )?;
    Ok(CheckOutcome { check: Check::ClassifierHead, seed, hidden: case.hidden, length: case.length, max_rel_error: report.max_rel_error })
}

/// `L_C + λ·L_R` through selector, straight-through gates and classifier.
/// Keep decisions, gate anchors and skip-gate decisions are recorded at the
/// unperturbed parameters and held fixed while differencing.
fn run_loss_path(check: Check, seed: u64) -> Result<CheckOutcome> {
    let mut case = Case::new(seed);
    let mut store = ParamStore::<f64>::new();
    let variant = if check == Check::SrnnPlusLoss { SelectorVariant::SrnnPlus } else { SelectorVariant::RnnPlus };
    let classifier = Classifier::new(
        &mut store,
        "classifier",
        ClassifierConfig { cell: CellKind::Gru, input: case.input, hidden: case.hidden, fc_hidden: 4, n_classes: 3 },
        &mut case.rng,
    )?;
    let selector = Selector::new(
        &mut store,
        "selector",
        SelectorConfig {
            variant,
            input: case.input,
            hidden: case.hidden,
            fc1: 4,
            activation: Activation::Relu,
            init_gain: 4.0,
            ..SelectorConfig::default()
        },
        &mut case.rng,
    )?;
    jitter(&mut store, &mut case.rng);
    let seq = case.sequence();
    let (m_r, lambda) = (selector.config.m_r, selector.config.lambda);

    let (anchors, trace, skip) = {
        let mut tape = Tape::<f64>::new();
        let bound = store.bind(&mut tape);
        let xs = case.frame_vars(&mut tape);
        let scores = selector.score(&mut tape, &bound, &xs, None)?;
        let p = tape.value(scores.p_vec).data().to_vec();
        (p.clone(), select_decisions(&p)?, scores.skip_decisions)
    };
    let frozen = (!skip.is_empty()).then_some(skip.as_slice());
    let report = grad_check(
        |tape, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            let xs = case.frame_vars(tape);
            let scores = selector.score(tape, &bound, &xs, frozen)?;
            let gated = gated_forward(tape, &trace, &scores.probs, &xs, Some(&anchors))?;
            let probs = classifier.forward(tape, &bound, &gated)?;
            let lc = tape.cross_entropy(probs, seq.label);
            let lr = reducing_loss_node(tape, scores.p_vec, m_r);
            Ok(rnn_total_loss_node(tape, lc, lr, lambda))
        },
        store.tensors(),
        STEP,
    )?;
    Ok(CheckOutcome { check, seed, hidden: case.hidden, length: case.length, max_rel_error: report.max_rel_error })
}

pub fn run_check(check: Check, seed: u64) -> Result<CheckOutcome> {
    match check {
        Check::Gru | Check::IndRnn | Check::SkipIndRnn => run_cell(check, seed),
        Check::ClassifierHead => run_head(seed),
        Check::RnnPlusLoss | Check::SrnnPlusLoss => run_loss_path(check, seed),
    }
}

/// Every check for seeds `0..seeds`.
pub fn gradient_suite(seeds: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for check in Check::ALL {
        for seed in 0..seeds {
            out.push(run_check(check, seed)?);
        }
    }
    Ok(out)
}
