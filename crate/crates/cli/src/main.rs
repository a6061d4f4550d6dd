use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{value_parser, Arg, ArgMatches, Command};

use rhythm_core::harness::{
    evaluate, export_traces, format_sweep, load_checkpoint, load_data, save_checkpoint, sweep_mr,
    train_with, EpochLog, ExperimentConfig, Model, Preset, TrainHooks, Variant,
};
use rhythm_core::rhythm::{generate_dataset, resample_dataset, Dataset, ScenarioKind, Split, SyntheticSpec};
use rhythm_core::verify::{gradient_suite, TOLERANCE};
use rhythm_core::{Error, Result};

fn key_args(keys: &'static [&'static str], heading: &'static str) -> Vec<Arg> {
    keys.iter().map(|&k| Arg::new(k).long(k).value_name("VALUE").help_heading(heading)).collect()
}

fn config_args() -> Vec<Arg> {
    let mut args = vec![
        Arg::new("config").long("config").value_name("FILE").help("key = value config file"),
        Arg::new("scale")
            .long("scale")
            .value_parser(["full", "desk"])
            .default_value("full")
            .help("defaults to start from: full sizes, or small sizes for one CPU"),
    ];
    args.extend(key_args(ExperimentConfig::keys(), "Config overrides"));
    args
}

fn cli() -> Command {
    let split = || Arg::new("split").long("split").value_parser(["train", "val", "test"]).default_value("test");
    Command::new("rhythm")
        .about("Frame selection and rhythm-robust event recognition")
        .subcommand_required(true)
        .subcommand(
            Command::new("generate")
                .about("Write a synthetic dataset directory")
                .arg(Arg::new("out").long("out").value_name("DIR").required(true))
                .arg(Arg::new("preset").long("preset").default_value("tempo"))
                .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)).default_value("0"))
                .args(key_args(SyntheticSpec::KEYS, "Dataset overrides")),
        )
        .subcommand(
            Command::new("train")
                .about("Train a model and write a checkpoint")
                .arg(Arg::new("out").long("out").value_name("FILE").required(true))
                .arg(Arg::new("log").long("log").value_name("FILE").help("per-epoch log"))
                .arg(Arg::new("dump_dir").long("dump_dir").value_name("DIR").help("where to dump state on divergence"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("eval")
                .about("Evaluate a checkpoint under rhythm scenarios")
                .arg(Arg::new("checkpoint").long("checkpoint").value_name("FILE").required(true))
                .arg(Arg::new("data_dir").long("data_dir").value_name("DIR"))
                .arg(split())
                .arg(Arg::new("scenarios").long("scenarios").help("comma-separated, e.g. original,s1,s2,s3"))
                .arg(Arg::new("records").long("records").value_name("FILE").help("machine-readable metrics")),
        )
        .subcommand(
            Command::new("resample")
                .about("Apply a rhythm scenario to every sequence of a dataset")
                .arg(Arg::new("data_dir").long("data_dir").value_name("DIR").required(true))
                .arg(Arg::new("scenario").long("scenario").required(true))
                .arg(Arg::new("out").long("out").value_name("DIR").required(true))
                .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)).default_value("0")),
        )
        .subcommand(
            Command::new("gradcheck").about("Run the finite-difference gradient suite").arg(
                Arg::new("seeds").long("seeds").value_parser(value_parser!(u64)).default_value("20"),
            ),
        )
        .subcommand(
            Command::new("sweep")
                .about("Train and evaluate once per m_R value")
                .arg(Arg::new("values").long("values").default_value("0.1,0.25,0.5"))
                .arg(Arg::new("records").long("records").value_name("FILE"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("trace")
                .about("Export per-sequence selection traces")
                .arg(Arg::new("checkpoint").long("checkpoint").value_name("FILE").required(true))
                .arg(Arg::new("out").long("out").value_name("FILE").required(true))
                .arg(Arg::new("data_dir").long("data_dir").value_name("DIR"))
                .arg(split()),
        )
}

fn path(m: &ArgMatches, id: &str) -> Option<PathBuf> {
    m.get_one::<String>(id).map(PathBuf::from)
}

fn required_path(m: &ArgMatches, id: &str) -> PathBuf {
    path(m, id).expect("clap enforces required arguments")
}

fn build_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<String>("scale").map(String::as_str) {
        Some("desk") => ExperimentConfig::desk_scale(Variant::RnnPlus),
        _ => ExperimentConfig::default(),
    };
    if let Some(file) = path(m, "config") {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        cfg.apply_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", file.display())),
            other => other,
        })?;
    }
    for &key in ExperimentConfig::keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The checkpoint's own dataset unless a directory is given.
fn eval_data(model: &Model, m: &ArgMatches) -> Result<Dataset> {
    match path(m, "data_dir") {
        Some(dir) => Dataset::load(&dir),
        None => load_data(&model.config),
    }
}

fn generate(m: &ArgMatches) -> Result<()> {
    let preset = Preset::parse(m.get_one::<String>("preset").expect("defaulted"))?;
    let mut spec = preset.spec();
    for &key in SyntheticSpec::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            spec.set(key, v)?;
        }
    }
    let seed = *m.get_one::<u64>("seed").expect("defaulted");
    let out = required_path(m, "out");
    let data = generate_dataset(&spec, seed)?;
    data.save(&out)?;
    println!(
        "wrote {} train / {} val / {} test sequences to {}",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

fn train(m: &ArgMatches) -> Result<()> {
    let cfg = build_config(m)?;
    cfg.require_seed()?;
    let data = load_data(&cfg)?;
    let mut log = String::new();
    let mut on_epoch = |e: &EpochLog| {
        eprintln!("{e}");
        log.push_str(&format!("{e}\n"));
    };
    let started = Instant::now();
    let hooks = TrainHooks { on_epoch: Some(&mut on_epoch), dump_dir: path(m, "dump_dir") };
    let outcome = train_with(&cfg, &data, hooks)?;
    let out = required_path(m, "out");
    save_checkpoint(&outcome.model, &out)?;
    if let Some(p) = path(m, "log") {
        write_text(&p, &log)?;
    }
    println!(
        "{} trained in {:.1}s, best epoch {}{}; checkpoint {}",
        cfg.variant,
        started.elapsed().as_secs_f64(),
        outcome.best_epoch,
        if outcome.stopped_early { " (stopped early)" } else { "" },
        out.display()
    );
    Ok(())
}

fn eval(m: &ArgMatches) -> Result<()> {
    let mut model = load_checkpoint(&required_path(m, "checkpoint"))?;
    if let Some(list) = m.get_one::<String>("scenarios") {
        model.config.scenarios = list.split(',').map(ScenarioKind::parse).collect::<Result<_>>()?;
    }
    let data = eval_data(&model, m)?;
    let split = Split::parse(m.get_one::<String>("split").expect("defaulted"))?;
    let table = evaluate(&model, data.split(split), &model.config.scenario_specs())?;
    print!("{table}");
    if let Some(p) = path(m, "records") {
        table.write_records(&p)?;
    }
    Ok(())
}

fn resample(m: &ArgMatches) -> Result<()> {
    let data = Dataset::load(&required_path(m, "data_dir"))?;
    let kind = ScenarioKind::parse(m.get_one::<String>("scenario").expect("required"))?;
    let out = required_path(m, "out");
    resample_dataset(&data, kind, *m.get_one::<u64>("seed").expect("defaulted"))?.save(&out)?;
    println!("wrote {kind} dataset to {}", out.display());
    Ok(())
}

fn gradcheck(m: &ArgMatches) -> Result<()> {
    let outcomes = gradient_suite(*m.get_one::<u64>("seeds").expect("defaulted"))?;
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.passes() { "ok" } else { "FAIL" };
        failed += usize::from(!o.passes());
        println!(
            "{:<16} seed {:>3}  hidden {}  length {}  max rel err {:.3e}  {status}",
            o.check.name(),
            o.seed,
            o.hidden,
            o.length,
            o.max_rel_error
        );
    }
    if failed > 0 {
        return Err(Error::Invariant(format!("{failed} of {} checks exceed {TOLERANCE:e}", outcomes.len())));
    }
    println!("all {} checks below {TOLERANCE:e}", outcomes.len());
    Ok(())
}

fn sweep(m: &ArgMatches) -> Result<()> {
    let cfg = build_config(m)?;
    cfg.require_seed()?;
    let values: Vec<f64> = m
        .get_one::<String>("values")
        .expect("defaulted")
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad m_R value '{v}'"))))
        .collect::<Result<_>>()?;
    let data = load_data(&cfg)?;
    let rows = sweep_mr(&cfg, &data, &values)?;
    print!("{}", format_sweep(&rows));
    if let Some(p) = path(m, "records") {
        let text: String =
            rows.iter().flat_map(|r| r.metrics.records().lines().map(move |l| format!("m_r={} {l}\n", r.m_r)).collect::<Vec<_>>()).collect();
        write_text(&p, &text)?;
    }
    Ok(())
}

fn trace(m: &ArgMatches) -> Result<()> {
    let model = load_checkpoint(&required_path(m, "checkpoint"))?;
    let data = eval_data(&model, m)?;
    let split = Split::parse(m.get_one::<String>("split").expect("defaulted"))?;
    let out = required_path(m, "out");
    let n = export_traces(&model, data.split(split), &out)?;
    println!("wrote {n} traces to {}", out.display());
    Ok(())
}

fn run(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("generate", m)) => generate(m),
        Some(("train", m)) => train(m),
        Some(("eval", m)) => eval(m),
        Some(("resample", m)) => resample(m),
        Some(("gradcheck", m)) => gradcheck(m),
        Some(("sweep", m)) => sweep(m),
        Some(("trace", m)) => trace(m),
        _ => unreachable!("subcommand required"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
