use std::fmt;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::save_checkpoint;
use super::config::{ExperimentConfig, Variant};
use super::eval::accuracy;
use super::model::{stream, Model, STREAM_POLICY, STREAM_SHUFFLE};
use crate::classifier::predict;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Tape, Tensor};
use crate::policy::{
    curriculum_keep_floor, reinforce_node, reward, sample_actions, RewardBaseline, RewardConfig,
};
use crate::rhythm::{train_subsample, Dataset, FeatureSequence};
use crate::selector::{gated_forward, reducing_loss_node, rnn_total_loss_node, select_decisions, SelectionTrace};

/// Averages over one epoch of training examples.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean classification loss over examples the classifier saw.
    pub loss_c: f64,
    /// Mean reducing loss (RNN+ / SRNN+).
    pub loss_r: Option<f64>,
    /// Mean reward (RL+).
    pub reward: Option<f64>,
    pub train_accuracy: f64,
    /// `100 · ΣK / ΣN` over training examples.
    pub usage: f64,
    pub val_accuracy: Option<f64>,
    pub keep_floor: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss_c={:.6}", self.epoch, self.loss_c)?;
        if let Some(r) = self.loss_r {
            write!(f, " loss_r={r:.6}")?;
        }
        if let Some(r) = self.reward {
            write!(f, " reward={r:.6}")?;
        }
        write!(f, " train_acc={:.2} usage={:.2}", self.train_accuracy, self.usage)?;
        if let Some(v) = self.val_accuracy {
            write!(f, " val_acc={v:.2}")?;
        }
        write!(f, " keep_floor={:.3}", self.keep_floor)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochLog)>,
    /// Where to write the parameters if training diverges.
    pub dump_dir: Option<PathBuf>,
}

struct StepResult {
    grads: Vec<Tensor<f32>>,
    loss: f64,
    loss_c: Option<f64>,
    loss_r: Option<f64>,
    reward: Option<f64>,
    correct: bool,
    kept: usize,
    total: usize,
}

struct StepContext {
    keep_floor: f64,
    policy_rng: ChaCha8Rng,
    baseline: Option<RewardBaseline>,
    reward: RewardConfig,
}

fn example_step(model: &Model, seq: &FeatureSequence, ctx: &mut StepContext) -> Result<StepResult> {
    let mut tape = Tape::<f32>::new();
    let bound = model.store.bind(&mut tape);
    let frames = seq.to_tape(&mut tape);
    let n = seq.len();
    let cfg = &model.config;

    let (loss, loss_c, loss_r, rew, correct, kept) = match (model.variant(), &model.selector) {
        (Variant::Baseline, _) | (_, None) => {
            let probs = model.classifier.forward(&mut tape, &bound, &frames)?;
            let correct = predict(tape.value(probs).data()) == seq.label;
            let lc = tape.cross_entropy(probs, seq.label);
            (lc, Some(lc), None, None, correct, n)
        }
        (Variant::RnnPlus | Variant::SrnnPlus, Some(selector)) => {
            let (probs, p_vec) = if cfg.keep_all {
                let ones: Vec<_> = (0..n).map(|_| tape.constant(Tensor::scalar(1.0))).collect();
                let v = tape.concat(&ones);
                (ones, v)
            } else {
                let s = selector.score(&mut tape, &bound, &frames, None)?;
                (s.probs, s.p_vec)
            };
            let p: Vec<f64> = tape.value(p_vec).data().iter().map(|&v| f64::from(v)).collect();
            let trace = if cfg.keep_all { SelectionTrace::keep_all(n) } else { select_decisions(&p)? };
            let gated = gated_forward(&mut tape, &trace, &probs, &frames, None)?;
            let out = model.classifier.forward(&mut tape, &bound, &gated)?;
            let correct = predict(tape.value(out).data()) == seq.label;
            let lc = tape.cross_entropy(out, seq.label);
            let lr = reducing_loss_node(&mut tape, p_vec, cfg.m_r);
            let total = rnn_total_loss_node(&mut tape, lc, lr, cfg.lambda);
            (total, Some(lc), Some(lr), None, correct, trace.kept())
        }
        (Variant::RlPlus, Some(selector)) => {
            let scores = selector.score(&mut tape, &bound, &frames, None)?;
            let p: Vec<f64> = tape.value(scores.p_vec).data().iter().map(|&v| f64::from(v)).collect();
            let mut sample = sample_actions(&p, ctx.keep_floor, &mut ctx.policy_rng)?;
            let kept = sample.kept();
            let (lc, correct) = if kept == 0 {
                (None, false)
            } else {
                let chosen: Vec<_> = sample.kept_indices().into_iter().map(|i| frames[i]).collect();
                let out = model.classifier.forward(&mut tape, &bound, &chosen)?;
                let correct = predict(tape.value(out).data()) == seq.label;
                (Some(tape.cross_entropy(out, seq.label)), correct)
            };
            let r = reward(correct, kept, n, &ctx.reward)?;
            sample.reward = Some(match &mut ctx.baseline {
                Some(b) => b.advantage(r),
                None => r,
            });
            let surrogate = reinforce_node(&mut tape, scores.p_vec, &sample)?;
            let total = match lc {
                Some(lc) => tape.add(lc, surrogate),
                None => surrogate,
            };
            (total, lc, None, Some(r), correct, kept)
        }
    };
    let value = |v| f64::from(tape.scalar(v));
    let result_loss = value(loss);
    let loss_c = loss_c.map(value);
    let loss_r = loss_r.map(value);
    let grads = tape.backward(loss)?;
    Ok(StepResult {
        grads: model.store.collect_grads(&bound, &grads),
        loss: result_loss,
        loss_c,
        loss_r,
        reward: rew,
        correct,
        kept,
        total: n,
    })
}

fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().flat_map(|g| g.data()).map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= k));
    }
}

/// Training sequences after the configured stride / trim.
pub fn training_sequences(config: &ExperimentConfig, data: &Dataset) -> Result<Vec<FeatureSequence>> {
    if config.train_stride == 1 && config.train_trim == 0 {
        return Ok(data.train.clone());
    }
    data.train.iter().map(|s| train_subsample(s, config.train_stride, config.train_trim)).collect()
}

pub fn train(config: &ExperimentConfig, data: &Dataset) -> Result<TrainOutcome> {
    train_with(config, data, TrainHooks::default())
}

/// Per-example forward/backward, gradients averaged over `accum` examples
/// per Adam step. With a validation split, the parameters of the best
/// validation epoch are restored at the end (RL+ only considers epochs
/// after its curriculum has finished).
pub fn train_with(config: &ExperimentConfig, data: &Dataset, mut hooks: TrainHooks<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    let seed = config.require_seed()?;
    if data.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let train_set = training_sequences(config, data)?;
    let mut model = Model::new(config, data.dim()?, data.n_classes())?;
    let mut adam = AdamState::new(config.adam(), model.store.tensors());
    let mut shuffle_rng = stream(seed, STREAM_SHUFFLE);
    let mut ctx = StepContext {
        keep_floor: 0.0,
        policy_rng: stream(seed, STREAM_POLICY),
        baseline: config.baseline_enabled.then(|| RewardBaseline::new(config.baseline_decay)),
        reward: RewardConfig { gamma: config.gamma },
    };
    let curriculum_end = if config.variant == Variant::RlPlus { config.warmup_epochs + config.anneal_epochs } else { 0 };

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor<f32>>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        ctx.keep_floor = if config.variant == Variant::RlPlus {
            curriculum_keep_floor(epoch, config.warmup_epochs, config.anneal_epochs)
        } else {
            0.0
        };
        order.shuffle(&mut shuffle_rng);
        let (mut sum_c, mut n_c, mut sum_r, mut sum_reward) = (0.0, 0usize, 0.0, 0.0);
        let (mut correct, mut kept, mut total) = (0usize, 0usize, 0usize);

        for chunk in order.chunks(config.accum) {
            let mut acc: Vec<Tensor<f32>> = model.store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            for &i in chunk {
                let step = example_step(&model, &train_set[i], &mut ctx)?;
                if !step.loss.is_finite() {
                    let mut reason = format!("non-finite loss on '{}'", train_set[i].id);
                    if let Some(dir) = &hooks.dump_dir {
                        let path = dir.join("diverged.ckpt");
                        save_checkpoint(&model, &path)?;
                        reason.push_str(&format!("; parameters dumped to {}", path.display()));
                    }
                    return Err(Error::Diverged { epoch, reason });
                }
                if let Some(c) = step.loss_c {
                    sum_c += c;
                    n_c += 1;
                }
                sum_r += step.loss_r.unwrap_or(0.0);
                sum_reward += step.reward.unwrap_or(0.0);
                correct += usize::from(step.correct);
                kept += step.kept;
                total += step.total;
                for (a, g) in acc.iter_mut().zip(&step.grads) {
                    a.data_mut().iter_mut().zip(g.data()).for_each(|(a, g)| *a += g);
                }
            }
            let k = 1.0 / chunk.len() as f32;
            acc.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= k));
            clip_global_norm(&mut acc, config.grad_clip);
            adam.step(model.store.tensors_mut(), &acc)?;
            model.clip_recurrent();
        }

        let n = train_set.len() as f64;
        let val_accuracy = if data.val.is_empty() { None } else { Some(accuracy(&model, &data.val)?) };
        let entry = EpochLog {
            epoch,
            loss_c: if n_c > 0 { sum_c / n_c as f64 } else { 0.0 },
            loss_r: matches!(config.variant, Variant::RnnPlus | Variant::SrnnPlus).then_some(sum_r / n),
            reward: (config.variant == Variant::RlPlus).then_some(sum_reward / n),
            train_accuracy: 100.0 * correct as f64 / n,
            usage: 100.0 * kept as f64 / total as f64,
            val_accuracy,
            keep_floor: ctx.keep_floor,
        };
        if let Some(cb) = hooks.on_epoch.as_mut() {
            cb(&entry);
        }
        log.push(entry);

        if let Some(v) = val_accuracy {
            if epoch >= curriculum_end {
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, epoch, model.store.tensors().to_vec()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if config.patience > 0 && since_best >= config.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, tensors)) => {
            model.store.load_tensors(tensors)?;
            epoch
        }
        None => log.len().saturating_sub(1),
    };
    Ok(TrainOutcome { model, log, best_epoch, stopped_early })
}
