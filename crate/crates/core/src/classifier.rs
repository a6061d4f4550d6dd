//! Recognition head: a recurrent cell over the (compacted) frames, then two
//! fully-connected layers on the final hidden state and a softmax.

use rand::Rng;

use crate::cells::{Activation, GruLayer, IndRnnLayer};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::numerics::{Bound, ParamStore, Real, Tape, Var};
use crate::rhythm::FeatureSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    IndRnn,
}

impl CellKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "gru" => Ok(CellKind::Gru),
            "indrnn" => Ok(CellKind::IndRnn),
            other => Err(Error::Config(format!("unknown classifier cell '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::IndRnn => "indrnn",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub cell: CellKind,
    pub input: usize,
    pub hidden: usize,
    pub fc_hidden: usize,
    pub n_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { cell: CellKind::Gru, input: 4096, hidden: 1024, fc_hidden: 100, n_classes: 2 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        if self.input == 0 || self.hidden == 0 || self.fc_hidden == 0 {
            return Err(Error::Config("classifier sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Gru(GruLayer),
    IndRnn(IndRnnLayer),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    cell: Cell,
    fc1: Dense,
    fc2: Dense,
}

impl Classifier {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: ClassifierConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let cell = match config.cell {
            CellKind::Gru => Cell::Gru(GruLayer::new(store, &format!("{prefix}.gru"), config.input, config.hidden, rng)),
            CellKind::IndRnn => Cell::IndRnn(IndRnnLayer::new(
                store,
                &format!("{prefix}.indrnn"),
                config.input,
                config.hidden,
                Activation::Relu,
                rng,
            )),
        };
        let fc1 = Dense::new(store, &format!("{prefix}.fc1"), config.hidden, config.fc_hidden, rng);
        let fc2 = Dense::new(store, &format!("{prefix}.fc2"), config.fc_hidden, config.n_classes, rng);
        Ok(Classifier { config, cell, fc1, fc2 })
    }

    /// Final-layer logits for a sequence of frame nodes.
    pub fn logits<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, frames: &[Var]) -> Result<Var> {
        if frames.is_empty() {
            return Err(Error::invalid("classifier needs at least one frame"));
        }
        let d = tape.value(frames[0]).len();
        if d != self.config.input {
            return Err(Error::shape(format!("classifier expects {} features, got {d}", self.config.input)));
        }
        let states = match &self.cell {
            Cell::Gru(layer) => layer.unroll(tape, bound, frames)?,
            Cell::IndRnn(layer) => layer.unroll(tape, bound, frames)?,
        };
        let last = *states.last().expect("non-empty");
        let a = self.fc1.forward(tape, bound, last);
        let a = tape.relu(a);
        Ok(self.fc2.forward(tape, bound, a))
    }

    /// Class probabilities as a tape node.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, frames: &[Var]) -> Result<Var> {
        let logits = self.logits(tape, bound, frames)?;
        Ok(tape.softmax(logits))
    }

    pub fn clip_recurrent<T: Real>(&self, store: &mut ParamStore<T>, u_max: f64) {
        if let Cell::IndRnn(layer) = &self.cell {
            layer.clip_recurrent(store, u_max);
        }
    }
}

/// Class probabilities for `seq`, computed without gradients.
pub fn classify<T: Real>(classifier: &Classifier, store: &ParamStore<T>, seq: &FeatureSequence) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let bound = store.bind_frozen(&mut tape);
    let frames = seq.to_tape(&mut tape);
    let probs = classifier.forward(&mut tape, &bound, &frames)?;
    Ok(tape.value(probs).data().to_vec())
}

/// Argmax, first index on ties.
pub fn predict<T: Real>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::gru_step;
    use crate::numerics::{grad_check, softmax, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(cell: CellKind) -> ClassifierConfig {
        ClassifierConfig { cell, input: 3, hidden: 4, fc_hidden: 5, n_classes: 3 }
    }

    fn seq(n: usize, seed: u64) -> FeatureSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureSequence::new("c", 1, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_are_uniform() {
        for cell in [CellKind::Gru, CellKind::IndRnn] {
            let mut store = ParamStore::<f64>::new();
            let c = Classifier::new(&mut store, "c", config(cell), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            for t in store.tensors_mut() {
                t.data_mut().fill(0.0);
            }
            let p = classify(&c, &store, &seq(4, 1)).unwrap();
            for v in p {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_frame_is_one_step_then_head() {
        let mut store = ParamStore::<f64>::new();
        let c = Classifier::new(&mut store, "c", config(CellKind::Gru), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let s = seq(1, 3);
        let direct = classify(&c, &store, &s).unwrap();

        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let x = s.to_tape(&mut tape)[0];
        let h0 = tape.constant(Tensor::zeros(&[4]));
        let Cell::Gru(gru) = &c.cell else { unreachable!() };
        let h = gru_step(&mut tape, &gru.params(&bound), x, h0).unwrap();
        let a = c.fc1.forward(&mut tape, &bound, h);
        let a = tape.relu(a);
        let logits = c.fc2.forward(&mut tape, &bound, a);
        let manual = softmax(tape.value(logits).data()).unwrap();
        assert_eq!(direct, manual);
    }

    #[test]
    fn output_is_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cell in [CellKind::Gru, CellKind::IndRnn] {
            let mut store = ParamStore::<f32>::new();
            let c = Classifier::new(&mut store, "c", config(cell), &mut rng).unwrap();
            for n in 1..12 {
                let p = classify(&c, &store, &seq(n, n as u64)).unwrap();
                let total: f32 = p.iter().sum();
                assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_empty_and_misshapen_input() {
        let mut store = ParamStore::<f64>::new();
        let c = Classifier::new(&mut store, "c", config(CellKind::Gru), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        assert!(c.forward(&mut tape, &bound, &[]).is_err());
        let wrong = FeatureSequence::new("w", 0, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(classify(&c, &store, &wrong), Err(Error::Shape(_))));
        let bad = ClassifierConfig { n_classes: 1, ..config(CellKind::Gru) };
        assert!(Classifier::new(&mut store, "x", bad, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(predict(&[0.5, 0.5]), 0);
        let logits = [0.3f64, -1.0, 2.5, 2.4];
        let p = softmax(&logits).unwrap();
        let shifted = softmax(&logits.map(|v| v + 17.0)).unwrap();
        let cubed = softmax(&logits.map(|v| v * v * v)).unwrap();
        assert_eq!(predict(&p), 2);
        assert_eq!(predict(&shifted), 2);
        assert_eq!(predict(&cubed), 2);
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        for cell in [CellKind::Gru, CellKind::IndRnn] {
            let mut store = ParamStore::<f64>::new();
            let c = Classifier::new(&mut store, "c", config(cell), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
            let s = seq(4, 12);
            let report = grad_check(
                |tape, vars| {
                    let bound = Bound::from_vars(vars.to_vec());
                    let frames = s.to_tape(tape);
                    let probs = c.forward(tape, &bound, &frames)?;
                    Ok(tape.cross_entropy(probs, 2))
                },
                store.tensors(),
                1e-6,
            )
            .unwrap();
            assert!(report.passes(1e-4), "{cell:?}: {}", report.max_rel_error);
        }
    }
}
