//! RL+ frame selection: Bernoulli keep actions, the frame-usage reward,
//! the REINFORCE surrogate, and the keep-floor curriculum.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tape, Var};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before use.
pub const PROB_CLAMP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardConfig {
    /// Penalty for a wrong prediction.
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { gamma: 1.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// One sampled action vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    /// `Y_i`: keep frame `i`.
    pub actions: Vec<bool>,
    /// Frames whose action was drawn from the policy. Frames forced to
    /// "keep" by the curriculum are excluded from the likelihood.
    pub sampled: Vec<bool>,
    /// `log π(Y | X)` over the sampled frames.
    pub log_prob: f64,
    pub reward: Option<f64>,
}

impl ActionSample {
    pub fn kept(&self) -> usize {
        self.actions.iter().filter(|&&y| y).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.actions.iter().enumerate().filter(|(_, &y)| y).map(|(i, _)| i).collect()
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("no probabilities to sample from"));
    }
    match p.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        Some(bad) => Err(Error::invalid(format!("keep probability {bad} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// `Σ_i ln(p_i Y_i + (1 - p_i)(1 - Y_i))` over frames with `mask_i`, clamped.
pub fn log_likelihood(p: &[f64], actions: &[bool], mask: &[bool]) -> Result<f64> {
    check_probs(p)?;
    if actions.len() != p.len() || mask.len() != p.len() {
        return Err(Error::shape("probabilities, actions and mask must have equal length"));
    }
    Ok(p.iter()
        .zip(actions)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&pi, &y), _)| if y { clamp(pi).ln() } else { (1.0 - clamp(pi)).ln() })
        .sum())
}

/// Draws `Y_i ~ Bernoulli(p_i)` independently. With `keep_floor = ε > 0`,
/// each frame is first forced to "keep" with probability `ε`.
pub fn sample_actions(p: &[f64], keep_floor: f64, rng: &mut impl Rng) -> Result<ActionSample> {
    check_probs(p)?;
    if !(0.0..=1.0).contains(&keep_floor) {
        return Err(Error::invalid(format!("keep floor {keep_floor} outside [0, 1]")));
    }
    let mut actions = Vec::with_capacity(p.len());
    let mut sampled = Vec::with_capacity(p.len());
    for &pi in p {
        if keep_floor > 0.0 && rng.gen::<f64>() < keep_floor {
            actions.push(true);
            sampled.push(false);
        } else {
            actions.push(rng.gen::<f64>() < clamp(pi));
            sampled.push(true);
        }
    }
    let log_prob = log_likelihood(p, &actions, &sampled)?;
    Ok(ActionSample { actions, sampled, log_prob, reward: None })
}

/// `1 - (K/N)²` if correct, else `-γ`.
pub fn reward(correct: bool, kept: usize, total: usize, cfg: &RewardConfig) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("reward needs N >= 1"));
    }
    if kept > total {
        return Err(Error::invalid(format!("K = {kept} exceeds N = {total}")));
    }
    if !correct {
        return Ok(-cfg.gamma);
    }
    let ratio = kept as f64 / total as f64;
    Ok(1.0 - ratio * ratio)
}

fn filled_reward(sample: &ActionSample) -> Result<f64> {
    sample.reward.ok_or_else(|| Error::invalid("action sample has no reward yet"))
}

/// `-R · log π(Y | X)`.
pub fn reinforce_term(sample: &ActionSample) -> Result<f64> {
    let r = filled_reward(sample)?;
    Ok(if r == 0.0 { 0.0 } else { -r * sample.log_prob })
}

/// Tape form of [`reinforce_term`]; `R` is a constant, the gradient flows
/// into the probability vector `p_vec`.
pub fn reinforce_node<T: Real>(tape: &mut Tape<T>, p_vec: Var, sample: &ActionSample) -> Result<Var> {
    let r = filled_reward(sample)?;
    if tape.value(p_vec).len() != sample.actions.len() {
        return Err(Error::shape("probability vector and action sample differ in length"));
    }
    let log_prob = tape.bernoulli_log_prob(p_vec, &sample.actions, &sample.sampled, T::from_f64(PROB_CLAMP));
    Ok(tape.scale(log_prob, T::from_f64(-r)))
}

/// `L_C - R · log π`.
pub fn rl_total_loss(classification: f64, sample: &ActionSample) -> Result<f64> {
    if !(classification >= 0.0) {
        return Err(Error::invalid(format!("classification loss must be >= 0, got {classification}")));
    }
    Ok(classification + reinforce_term(sample)?)
}

/// Forced-keep probability `ε`: 1 for `epoch < warmup`, then a linear decay
/// reaching 0 at `warmup + anneal`.
pub fn curriculum_keep_floor(epoch: usize, warmup: usize, anneal: usize) -> f64 {
    if epoch < warmup {
        return 1.0;
    }
    let into = (epoch - warmup) as f64;
    if anneal == 0 || into >= anneal as f64 {
        return 0.0;
    }
    1.0 - into / anneal as f64
}

/// Exponential moving average of past rewards, subtracted from `R` when
/// enabled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardBaseline {
    pub decay: f64,
    value: Option<f64>,
}

impl RewardBaseline {
    pub fn new(decay: f64) -> Self {
        RewardBaseline { decay, value: None }
    }

    pub fn value(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }

    /// Returns `R - b` using the baseline before the update, then folds `R` in.
    pub fn advantage(&mut self, r: f64) -> f64 {
        let adv = r - self.value();
        self.value = Some(match self.value {
            None => r,
            Some(b) => self.decay * b + (1.0 - self.decay) * r,
        });
        adv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn near_deterministic_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let s = sample_actions(&[1.0 - 1e-6, 1e-6], 0.0, &mut rng).unwrap();
            assert_eq!(s.actions, vec![true, false]);
        }
    }

    #[test]
    fn likelihood_example() {
        let lp = log_likelihood(&[0.8, 0.3], &[true, false], &[true, true]).unwrap();
        assert!((lp - 0.56f64.ln()).abs() < 1e-15);
        assert!((lp.exp() - 0.56).abs() < 1e-15);
    }

    #[test]
    fn clamped_extremes_stay_finite() {
        let lp = log_likelihood(&[0.0, 1.0], &[true, false], &[true, true]).unwrap();
        assert!(lp.is_finite());
        assert!((lp - 2.0 * PROB_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn keep_frequency_is_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let kept = (0..n).filter(|_| sample_actions(&[0.25], 0.0, &mut rng).unwrap().actions[0]).count();
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        assert!((kept as f64 - 0.25 * n as f64).abs() < 3.0 * sigma, "kept {kept}");
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(reward(true, 10, 10, &cfg).unwrap(), 0.0);
        assert_eq!(reward(true, 5, 10, &cfg).unwrap(), 0.75);
        assert_eq!(reward(false, 3, 10, &cfg).unwrap(), -1.0);
        assert!(reward(true, 11, 10, &cfg).is_err());
        assert!(reward(true, 0, 0, &cfg).is_err());
    }

    #[test]
    fn reward_monotone_in_k() {
        let cfg = RewardConfig { gamma: 2.5 };
        for n in 1..30usize {
            let rs: Vec<f64> = (1..=n).map(|k| reward(true, k, n, &cfg).unwrap()).collect();
            assert!(rs.windows(2).all(|w| w[0] > w[1]));
            assert!(rs[0] <= 1.0 - 1.0 / (n * n) as f64 + 1e-15);
            assert!(rs.iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn zero_reward_contributes_nothing() {
        let s = ActionSample { actions: vec![true], sampled: vec![true], log_prob: -0.5, reward: Some(0.0) };
        assert_eq!(reinforce_term(&s).unwrap(), 0.0);
        assert_eq!(rl_total_loss(0.7, &s).unwrap(), 0.7);
        let mut tape = Tape::<f64>::new();
        let p = tape.param(Tensor::vector(vec![0.4]));
        let t = reinforce_node(&mut tape, p, &s).unwrap();
        let g = tape.backward(t).unwrap();
        assert_eq!(g.get(p).unwrap(), &[0.0]);
        let unfilled = ActionSample { reward: None, ..s };
        assert!(reinforce_term(&unfilled).is_err());
    }

    #[test]
    fn keep_floor_schedule() {
        assert_eq!(curriculum_keep_floor(0, 5, 10), 1.0);
        assert_eq!(curriculum_keep_floor(4, 5, 10), 1.0);
        assert_eq!(curriculum_keep_floor(15, 5, 10), 0.0);
        assert_eq!(curriculum_keep_floor(10, 5, 10), 0.5);
        assert_eq!(curriculum_keep_floor(40, 5, 10), 0.0);
        assert_eq!(curriculum_keep_floor(5, 5, 0), 0.0);
    }

    #[test]
    fn full_floor_keeps_everything_and_has_empty_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_actions(&[0.1, 0.2, 0.3], 1.0, &mut rng).unwrap();
        assert_eq!(s.actions, vec![true; 3]);
        assert_eq!(s.sampled, vec![false; 3]);
        assert_eq!(s.log_prob, 0.0);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = [0.3, 0.6, 0.5, 0.9];
        let a = sample_actions(&p, 0.2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_actions(&p, 0.2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moving_baseline() {
        let mut b = RewardBaseline::new(0.9);
        assert_eq!(b.advantage(1.0), 1.0);
        assert_eq!(b.value(), 1.0);
        assert!((b.advantage(0.0) + 1.0).abs() < 1e-15);
        assert!((b.value() - 0.9).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn log_sum_matches_product(
            cases in prop::collection::vec((1e-3f64..1.0 - 1e-3, prop::bool::ANY), 1..=20)
        ) {
            let p: Vec<f64> = cases.iter().map(|c| c.0).collect();
            let y: Vec<bool> = cases.iter().map(|c| c.1).collect();
            let lp = log_likelihood(&p, &y, &vec![true; p.len()]).unwrap();
            let product: f64 = p.iter().zip(&y).map(|(&pi, &yi)| if yi { pi } else { 1.0 - pi }).product();
            prop_assert!((lp.exp() - product).abs() <= 1e-10 * product);
        }
    }
}
