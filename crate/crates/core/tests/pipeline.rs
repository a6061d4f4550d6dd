use rhythm_core::harness::{
    accuracy, evaluate, export_traces, format_tables, load_checkpoint, load_data, save_checkpoint, sweep_mr, train,
    train_with, ExperimentConfig, Model, Preset, TrainHooks, Variant,
};
use rhythm_core::classifier::CellKind;
use rhythm_core::rhythm::{generate_dataset, Dataset, FeatureSequence, ScenarioKind, SyntheticSpec};
use rhythm_core::selector::SelectionTrace;
use rhythm_core::Error;

fn separable(variant: Variant, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed: Some(seed),
        preset: Preset::Separable,
        hidden: 16,
        fc_hidden: 16,
        selector_hidden: 8,
        selector_fc1: 8,
        epochs: 8,
        ..ExperimentConfig::desk_scale(variant)
    }
}

fn separable_data() -> Dataset {
    load_data(&separable(Variant::Baseline, 0)).unwrap()
}

#[test]
fn baseline_fits_the_separable_set() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 200, ..separable(Variant::Baseline, 1) };
    let out = train(&cfg, &data).unwrap();
    let acc = accuracy(&out.model, &data.train).unwrap();
    assert!(acc >= 99.0, "train accuracy {acc}");
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let data = separable_data();
    let cfg = ExperimentConfig { m_r: 0.4, ..separable(Variant::RnnPlus, 2) };
    let rows = sweep_mr(&cfg, &data, &[0.4]).unwrap();
    let model = train(&cfg, &data).unwrap().model;
    let plain = evaluate(&model, &data.test, &cfg.scenario_specs()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].metrics.rows, plain.rows);
}

#[test]
fn sweep_has_one_full_row_per_value() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 2, ..separable(Variant::SrnnPlus, 3) };
    let rows = sweep_mr(&cfg, &data, &[0.2, 0.6]).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.metrics.rows.len(), 4);
        assert!(r.metrics.rows.iter().all(|s| s.usage.is_some() && (0.0..=100.0).contains(&s.accuracy)));
    }
    assert!(matches!(sweep_mr(&cfg, &data, &[]), Err(Error::Config(_))));
    assert!(matches!(sweep_mr(&cfg, &data, &[1.0]), Err(Error::Config(_))));
}

#[test]
fn traces_are_consistent() {
    let data = separable_data();
    let model = train(&separable(Variant::RnnPlus, 4), &data).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.tsv");
    let n = export_traces(&model, &data.test, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(n, data.test.len());
    assert_eq!(text.lines().count(), data.test.len());
    for line in text.lines() {
        let (_, t) = SelectionTrace::parse_line(line).unwrap();
        assert_eq!(t.kept(), t.y.iter().filter(|&&y| y).count());
        assert!(t.kept() >= 1);
    }
}

#[test]
fn baseline_reports_no_usage() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 1, ..separable(Variant::Baseline, 5) };
    let model = train(&cfg, &data).unwrap().model;
    let table = evaluate(&model, &data.test, &cfg.scenario_specs()).unwrap();
    assert!(table.rows.iter().all(|r| r.usage.is_none()));
    assert!(table.records().lines().all(|l| l.contains("usage=none")));
    let rendered = format_tables(&[("baseline".into(), &table)]);
    assert!(rendered.lines().nth(1).unwrap().trim_end().ends_with(" -"), "{rendered}");
    assert_eq!(table.rows.iter().find(|r| r.scenario == ScenarioKind::S3).unwrap().repeats, 5);
}

#[test]
fn overfit_model_scores_high_on_its_training_set() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 100, ..separable(Variant::Baseline, 6) };
    let model = train(&cfg, &data).unwrap().model;
    let table = evaluate(&model, &data.train, &cfg.scenario_specs()).unwrap();
    assert!(table.accuracy(ScenarioKind::Original).unwrap() >= 99.0);
}

#[test]
fn evaluation_rejects_mismatched_dimensions() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 1, ..separable(Variant::Baseline, 7) };
    let model = train(&cfg, &data).unwrap().model;
    let other = generate_dataset(&SyntheticSpec { dim: 5, ..SyntheticSpec::separable() }, 0).unwrap();
    assert!(matches!(evaluate(&model, &other.test, &cfg.scenario_specs()), Err(Error::Shape(_))));
}

#[test]
fn checkpoint_file_round_trip_and_corruption() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 2, ..separable(Variant::SrnnPlus, 8) };
    let model = train(&cfg, &data).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.store.tensors(), model.store.tensors());
    assert_eq!(loaded.config, model.config);

    let bytes = std::fs::read(&path).unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint(&bad), Err(Error::Format { .. })));
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    std::fs::write(&bad, &wrong).unwrap();
    assert!(matches!(load_checkpoint(&bad), Err(Error::Format { .. })));
    assert!(matches!(load_checkpoint(&dir.path().join("missing.ckpt")), Err(Error::Io { .. })));
}

#[test]
fn divergence_aborts_with_a_dump() {
    // Features at ±f32::MAX overflow the relu IndRNN classifier, and
    // inf − inf in the head makes the loss NaN.
    let data = separable_data();
    let blow_up = |seqs: &[FeatureSequence]| -> Vec<FeatureSequence> {
        seqs.iter()
            .map(|s| {
                let raw = s.raw().iter().map(|v| f32::MAX.copysign(*v)).collect();
                FeatureSequence::new(s.id.clone(), s.label, s.dim(), raw).unwrap()
            })
            .collect()
    };
    let data = Dataset { train: blow_up(&data.train), val: vec![], test: blow_up(&data.test) };
    let cfg = ExperimentConfig { cell: CellKind::IndRnn, ..separable(Variant::Baseline, 9) };
    let dir = tempfile::tempdir().unwrap();
    let hooks = TrainHooks { on_epoch: None, dump_dir: Some(dir.path().to_path_buf()) };
    match train_with(&cfg, &data, hooks) {
        Err(Error::Diverged { .. }) => assert!(dir.path().join("diverged.ckpt").exists()),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
    }
}

#[test]
fn training_requires_a_seed() {
    let data = separable_data();
    let cfg = ExperimentConfig { seed: None, ..separable(Variant::Baseline, 0) };
    assert!(matches!(train(&cfg, &data), Err(Error::Config(_))));
    assert!(matches!(Model::new(&cfg, 8, 3), Err(Error::Config(_))));
}

#[test]
fn rl_plus_trains_and_selects() {
    let data = separable_data();
    let cfg = ExperimentConfig { epochs: 4, warmup_epochs: 1, anneal_epochs: 2, ..separable(Variant::RlPlus, 10) };
    let out = train(&cfg, &data).unwrap();
    assert_eq!(out.log[0].keep_floor, 1.0);
    assert_eq!(out.log[0].usage, 100.0);
    assert!(out.log.iter().all(|e| e.reward.is_some() && e.loss_r.is_none()));
    let table = evaluate(&out.model, &data.test, &cfg.scenario_specs()).unwrap();
    assert!(table.usage().unwrap() > 0.0);
}
