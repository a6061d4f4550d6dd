//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! with the measured numbers and fails if its criterion is not met.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rhythm_core::cells::{skip_indrnn_step, Activation, GateMode, IndRnnParams, SkipIndRnnParams, SkipState};
use rhythm_core::harness::{
    decode_checkpoint, discriminative_enrichment, encode_checkpoint, evaluate, load_data, sweep_mr, train,
    ExperimentConfig, MetricsTable, Model, Preset, Variant,
};
use rhythm_core::numerics::{Tape, Tensor};
use rhythm_core::policy::{log_likelihood, reinforce_node, reward, sample_actions, RewardConfig};
use rhythm_core::rhythm::{resample_indices, Dataset, ScenarioKind};
use rhythm_core::selector::{reducing_loss, rnn_total_loss};
use rhythm_core::verify::{gradient_suite, TOLERANCE};

const TRAIN_SEEDS: [u64; 3] = [1, 2, 3];

/// Written straight to stdout so the line shows even when output is captured.
fn report(id: usize, name: &str, pass: bool, detail: &str, started: Instant) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "[acceptance] criterion {id} {name}: {status} ({detail}; {:.1}s)\n",
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
}

#[test]
fn c1_gradient_correctness() {
    let started = Instant::now();
    let outcomes = gradient_suite(20).unwrap();
    let worst = outcomes.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let small = outcomes.iter().all(|o| o.hidden <= 8 && o.length <= 6);
    let pass = outcomes.iter().all(|o| o.passes()) && small && outcomes.len() == 6 * 20;
    let detail = format!(
        "{} checks, worst {:.2e} ({} seed {}), tolerance {TOLERANCE:e}",
        outcomes.len(),
        worst.max_rel_error,
        worst.check.name(),
        worst.seed
    );
    report(1, "gradient correctness", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 120);
}

struct SkipCell {
    w: Vec<f64>,
    u: Vec<f64>,
    b: Vec<f64>,
    w_p: Vec<f64>,
    b_p: Vec<f64>,
    activation: Activation,
}

impl SkipCell {
    fn random(rng: &mut ChaCha8Rng, hidden: usize, input: usize) -> Self {
        let mut v = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>();
        let w = v(hidden * input, -1.0, 1.0);
        let u = v(hidden, -1.0, 1.0);
        let b = v(hidden, -0.5, 0.5);
        let w_p = v(hidden, -3.0, 3.0);
        let b_p = v(hidden, -4.0, 2.0);
        let activation = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::Relu };
        SkipCell { w, u, b, w_p, b_p, activation }
    }

    fn bind(&self, tape: &mut Tape<f64>, hidden: usize) -> SkipIndRnnParams {
        let input = self.w.len() / hidden;
        let base = IndRnnParams {
            w: tape.constant(Tensor::new(vec![hidden, input], self.w.clone()).unwrap()),
            u: tape.constant(Tensor::vector(self.u.clone())),
            b: tape.constant(Tensor::vector(self.b.clone())),
            activation: self.activation,
        };
        SkipIndRnnParams {
            base,
            w_p: tape.constant(Tensor::vector(self.w_p.clone())),
            b_p: tape.constant(Tensor::vector(self.b_p.clone())),
        }
    }

    /// Smallest possible `Δũ` per neuron when `|h| <= 1` (tanh cells).
    fn delta_floor(&self) -> Vec<f64> {
        self.w_p.iter().zip(&self.b_p).map(|(w, b)| 1.0 / (1.0 + (w.abs() - b).exp())).collect()
    }
}

#[test]
fn c2_skip_indrnn_invariants() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (hidden, input) = (6, 3);
    let target_steps = 1_000_000usize;
    let (mut steps, mut copies) = (0usize, 0usize);
    let (mut copy_bitwise, mut in_range, mut monotone, mut eventual) = (true, true, true, true);
    let mut longest_ratio = 0.0f64;
    while steps < target_steps {
        let cell = SkipCell::random(&mut rng, hidden, input);
        let floor = cell.delta_floor();
        let len = rng.gen_range(50..400);
        let mut tape = Tape::<f64>::new();
        let params = cell.bind(&mut tape, hidden);
        let mut state = SkipState::initial(&mut tape, hidden);
        let mut run = vec![0usize; hidden];
        for _ in 0..len {
            let x: Vec<f64> = (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xv = tape.constant(Tensor::vector(x));
            let h_prev = tape.value(state.h).data().to_vec();
            let u_prev = tape.value(state.u_tilde).data().to_vec();
            let step = skip_indrnn_step(&mut tape, &params, xv, state, GateMode::StraightThrough).unwrap();
            let h = tape.value(step.output).data();
            let u_next = tape.value(step.state.u_tilde).data();
            for j in 0..hidden {
                in_range &= (0.0..=1.0).contains(&u_next[j]);
                if step.update[j] {
                    run[j] = 0;
                    continue;
                }
                copies += 1;
                copy_bitwise &= h[j].to_bits() == h_prev[j].to_bits();
                monotone &= u_next[j] >= u_prev[j];
                run[j] += 1;
                if cell.activation == Activation::Tanh {
                    let bound = (1.0 / floor[j]).ceil() as usize;
                    eventual &= run[j] <= bound;
                    longest_ratio = longest_ratio.max(run[j] as f64 / bound as f64);
                }
            }
            state = step.state;
            steps += 1;
        }
    }
    let pass = copy_bitwise && in_range && monotone && eventual;
    let detail = format!(
        "{steps} steps, {copies} copied neuron-steps; bitwise copy {copy_bitwise}, ũ in [0,1] {in_range}, \
         monotone {monotone}, eventual update {eventual} (longest run {:.2} of bound)",
        longest_ratio
    );
    report(2, "skip indrnn invariants", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 60);
}

/// Stand-in classifier: correct exactly when the kept pattern equals `target`.
fn oracle_reward(actions: &[bool], target: &[bool]) -> f64 {
    let kept = actions.iter().filter(|&&a| a).count();
    reward(actions == target, kept, actions.len(), &RewardConfig::default()).unwrap()
}

#[test]
fn c3_reinforce_oracle() {
    let started = Instant::now();
    let cases: [(&[f64], &[bool]); 3] =
        [(&[0.6], &[true]), (&[0.75, 0.25], &[true, false]), (&[0.85, 0.15, 0.15], &[true, false, false])];
    let samples = 50_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (p, target) in cases {
        let n = p.len();
        // Exact: ∂E[R]/∂θ_i = Σ_Y R(Y) π(Y) (Y_i − p_i), with p = sigmoid(θ).
        let mut exact = vec![0.0; n];
        for bits in 0..1usize << n {
            let y: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let pi: f64 = p.iter().zip(&y).map(|(&pj, &yj)| if yj { pj } else { 1.0 - pj }).product();
            let r = oracle_reward(&y, target);
            for i in 0..n {
                exact[i] += r * pi * (f64::from(u8::from(y[i])) - p[i]);
            }
        }
        let theta: Vec<f64> = p.iter().map(|&q| (q / (1.0 - q)).ln()).collect();
        let mut mean = vec![0.0; n];
        for _ in 0..samples {
            let mut tape = Tape::<f64>::new();
            let th = tape.param(Tensor::vector(theta.clone()));
            let pv = tape.sigmoid(th);
            let probs = tape.value(pv).data().to_vec();
            let mut sample = sample_actions(&probs, 0.0, &mut rng).unwrap();
            sample.reward = Some(oracle_reward(&sample.actions, target));
            let loss = reinforce_node(&mut tape, pv, &sample).unwrap();
            let grads = tape.backward(loss).unwrap();
            for (m, g) in mean.iter_mut().zip(grads.get(th).unwrap()) {
                *m += g / samples as f64;
            }
        }
        // The loss is −R·log π, so its mean gradient estimates −∇E[R].
        for i in 0..n {
            let rel = (-mean[i] - exact[i]).abs() / exact[i].abs();
            worst = worst.max(rel);
            lines.push(format!("N={n} θ{i}: exact {:.4} mc {:.4} rel {:.2}%", exact[i], -mean[i], rel * 100.0));
        }
    }
    let pass = worst < 0.02;
    let detail = format!("worst {:.2}% over {} parameters [{}]", worst * 100.0, lines.len(), lines.join("; "));
    report(3, "reinforce oracle", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 300);
}

#[test]
fn c4_unit_values() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut check = |what: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{what}: got {got}, want {want}"));
        }
    };
    check("reducing_loss [0.1,0.2,0.3] m=0.25", reducing_loss(&[0.1, 0.2, 0.3], 0.25).unwrap(), 0.05);
    check("reducing_loss p = m", reducing_loss(&[0.25; 4], 0.25).unwrap(), 0.0);
    check("reducing_loss [1,1] m=0.25", reducing_loss(&[1.0, 1.0], 0.25).unwrap(), 0.75);
    check("total (1.2, 0.05, 4)", rnn_total_loss(1.2, 0.05, 4.0).unwrap(), 1.4);
    check("total (0.9, 0, 4)", rnn_total_loss(0.9, 0.0, 4.0).unwrap(), 0.9);
    check("total (0, 0.25, 4)", rnn_total_loss(0.0, 0.25, 4.0).unwrap(), 1.0);
    let cfg = RewardConfig::default();
    check("reward correct K=N", reward(true, 8, 8, &cfg).unwrap(), 0.0);
    check("reward correct K=N/2", reward(true, 4, 8, &cfg).unwrap(), 0.75);
    check("reward incorrect γ=1", reward(false, 3, 8, &cfg).unwrap(), -1.0);
    let mask = [true, true];
    let ll = log_likelihood(&[0.8, 0.3], &[true, false], &mask).unwrap();
    check("likelihood [0.8,0.3] Y=[1,0]", ll.exp(), 0.56);
    check("log likelihood", ll, 0.56f64.ln());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s1 = resample_indices(30, ScenarioKind::S1, &mut rng).unwrap();
    let s1_want: Vec<usize> = [0, 2, 4, 6, 8].into_iter().chain(10..20).chain([20, 25]).collect();
    if s1 != s1_want {
        failures.push(format!("S1 N=30: {s1:?}"));
    }
    let s2 = resample_indices(30, ScenarioKind::S2, &mut rng).unwrap();
    let s2_want: Vec<usize> = [0, 5].into_iter().chain(10..20).chain([20, 22, 24, 26, 28]).collect();
    if s2 != s2_want {
        failures.push(format!("S2 N=30: {s2:?}"));
    }
    for n in [1, 7, 30, 143] {
        if resample_indices(n, ScenarioKind::Original, &mut rng).unwrap() != (0..n).collect::<Vec<_>>() {
            failures.push(format!("original N={n} is not the identity"));
        }
    }
    let pass = failures.is_empty();
    let detail = if pass { "every example reproduced".to_string() } else { failures.join("; ") };
    report(4, "unit values", pass, &detail, started);
    assert!(pass, "{detail}");
}

fn tempo(variant: Variant, seed: u64) -> ExperimentConfig {
    ExperimentConfig { seed: Some(seed), preset: Preset::Tempo, ..ExperimentConfig::desk_scale(variant) }
}

fn tempo_data() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| load_data(&tempo(Variant::Baseline, 0)).unwrap())
}

#[test]
fn c5_usage_follows_mr() {
    let started = Instant::now();
    let values = [0.1, 0.25, 0.5];
    let rows = sweep_mr(&tempo(Variant::RnnPlus, TRAIN_SEEDS[0]), tempo_data(), &values).unwrap();
    let usage: Vec<f64> = rows.iter().map(|r| r.metrics.usage().unwrap()).collect();
    let monotone = usage.windows(2).all(|w| w[0] <= w[1]);
    let banded = (15.0..=40.0).contains(&usage[1]);
    let pass = monotone && banded;
    let detail = format!("usage at m_R 0.1/0.25/0.5 = {:.1}/{:.1}/{:.1}%", usage[0], usage[1], usage[2]);
    report(5, "usage follows m_R", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 3600);
}

struct Trained {
    table: MetricsTable,
    enrichment: Option<f64>,
}

/// Every variant trained once per seed, shared by the trend and selection
/// quality criteria.
fn trained() -> &'static Vec<(Variant, Vec<Trained>)> {
    static RUNS: OnceLock<Vec<(Variant, Vec<Trained>)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let data = tempo_data();
        Variant::ALL
            .into_iter()
            .map(|variant| {
                let runs = TRAIN_SEEDS
                    .iter()
                    .map(|&seed| {
                        let cfg = tempo(variant, seed);
                        let model = train(&cfg, data).unwrap().model;
                        let table = evaluate(&model, &data.test, &cfg.scenario_specs()).unwrap();
                        let enrichment = (variant == Variant::SrnnPlus).then(|| {
                            let (kept, base) = discriminative_enrichment(&model, &data.test).unwrap();
                            kept / base
                        });
                        Trained { table, enrichment }
                    })
                    .collect();
                (variant, runs)
            })
            .collect()
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn c6_rhythm_robustness_trend() {
    let started = Instant::now();
    let mut original = std::collections::HashMap::new();
    let mut drop = std::collections::HashMap::new();
    for (variant, runs) in trained() {
        let acc = |k| mean(runs.iter().map(|r| r.table.accuracy(k).unwrap()));
        original.insert(*variant, acc(ScenarioKind::Original));
        drop.insert(*variant, acc(ScenarioKind::Original) - acc(ScenarioKind::S3));
    }
    let base = drop[&Variant::Baseline];
    let checks = [
        ("baseline original >= 90", original[&Variant::Baseline] >= 90.0),
        ("baseline S3 drop >= 10", base >= 10.0),
        ("srnn+ drop <= half baseline", drop[&Variant::SrnnPlus] <= base / 2.0),
        ("srnn+ drop <= 5", drop[&Variant::SrnnPlus] <= 5.0),
        ("rnn+ drop < baseline", drop[&Variant::RnnPlus] < base),
        ("rl+ drop < baseline", drop[&Variant::RlPlus] < base),
    ];
    let pass = checks.iter().all(|c| c.1);
    let summary: Vec<String> = Variant::ALL
        .iter()
        .map(|v| format!("{v} original {:.1} drop {:.1}", original[v], drop[v]))
        .collect();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = format!("{}; failed: [{}]", summary.join(", "), failed.join(", "));
    report(6, "rhythm robustness trend", pass, &detail, started);
    assert!(pass, "{detail}");
}

/// Metrics without the wall-clock field.
fn rows(t: &MetricsTable) -> String {
    t.rows.iter().map(|r| format!("{:?}\n", (r.scenario, r.accuracy.to_bits(), &r.per_class, r.evaluated))).collect()
}

#[test]
fn c7_pipeline_equivalences() {
    let started = Instant::now();
    let data = tempo_data();
    let small = |variant| ExperimentConfig { epochs: 3, ..tempo(variant, 11) };
    let run = |cfg: &ExperimentConfig| -> (Model, MetricsTable, String) {
        let out = train(cfg, data).unwrap();
        let table = evaluate(&out.model, &data.test, &cfg.scenario_specs()).unwrap();
        let log: String = out.log.iter().map(|e| format!("{e:?}\n")).collect();
        (out.model, table, log)
    };

    let (_, baseline, _) = run(&small(Variant::Baseline));
    let (_, keep_all, _) = run(&ExperimentConfig { keep_all: true, ..small(Variant::RnnPlus) });
    let equivalent = rows(&baseline) == rows(&keep_all);

    let cfg = small(Variant::SrnnPlus);
    let (model, table, log) = run(&cfg);
    let bytes = encode_checkpoint(&model).unwrap();
    let restored = decode_checkpoint(&bytes, "memory".as_ref()).unwrap();
    let round_trip = rows(&evaluate(&restored, &data.test, &cfg.scenario_specs()).unwrap()) == rows(&table)
        && encode_checkpoint(&restored).unwrap() == bytes;

    let (model2, table2, log2) = run(&cfg);
    let deterministic =
        log == log2 && rows(&table) == rows(&table2) && encode_checkpoint(&model2).unwrap() == bytes;

    let pass = equivalent && round_trip && deterministic;
    let detail = format!("keep-all = baseline {equivalent}, checkpoint round trip {round_trip}, determinism {deterministic}");
    report(7, "pipeline equivalences", pass, &detail, started);
    assert!(pass, "{detail}");
}

#[test]
fn c8_selection_enriches_discriminative_frames() {
    let started = Instant::now();
    let (_, runs) = trained().iter().find(|(v, _)| *v == Variant::SrnnPlus).unwrap();
    let ratios: Vec<f64> = runs.iter().map(|r| r.enrichment.unwrap()).collect();
    let pass = ratios.iter().all(|&r| r > 1.5);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    let detail = format!("kept-frame enrichment per seed [{}], threshold 1.5", shown.join(", "));
    report(8, "selection enriches discriminative frames", pass, &detail, started);
    assert!(pass, "{detail}");
}
