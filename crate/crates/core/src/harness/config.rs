use std::fmt;
use std::path::{Path, PathBuf};

use crate::classifier::CellKind;
use crate::error::{Error, Result};
use crate::numerics::AdamConfig;
use crate::rhythm::{ScenarioKind, ScenarioSpec, SyntheticSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Classifier over every frame.
    Baseline,
    RnnPlus,
    SrnnPlus,
    RlPlus,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::RnnPlus, Variant::SrnnPlus, Variant::RlPlus];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(Variant::Baseline),
            "rnn_plus" => Ok(Variant::RnnPlus),
            "srnn_plus" => Ok(Variant::SrnnPlus),
            "rl_plus" => Ok(Variant::RlPlus),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::RnnPlus => "rnn_plus",
            Variant::SrnnPlus => "srnn_plus",
            Variant::RlPlus => "rl_plus",
        }
    }

    pub fn has_selector(self) -> bool {
        self != Variant::Baseline
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Synthetic preset used when no dataset directory is given.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Default,
    Tempo,
    Separable,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "default" => Ok(Preset::Default),
            "tempo" => Ok(Preset::Tempo),
            "separable" => Ok(Preset::Separable),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Tempo => "tempo",
            Preset::Separable => "separable",
        }
    }

    pub fn spec(self) -> SyntheticSpec {
        match self {
            Preset::Default => SyntheticSpec::default(),
            Preset::Tempo => SyntheticSpec::tempo(),
            Preset::Separable => SyntheticSpec::separable(),
        }
    }
}

/// Everything that determines a run. Serialized as flat `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub seed: Option<u64>,

    pub data_dir: Option<PathBuf>,
    pub preset: Preset,
    pub data_seed: u64,
    pub train_stride: usize,
    pub train_trim: usize,
    /// Feature dimension and class count; filled from the dataset.
    pub input_dim: Option<usize>,
    pub n_classes: Option<usize>,

    pub cell: CellKind,
    pub hidden: usize,
    pub fc_hidden: usize,

    pub selector_hidden: usize,
    pub selector_fc1: usize,
    pub m_r: f64,
    pub lambda: f64,
    pub selector_init_logit: f64,
    pub selector_init_gain: f64,
    /// Pins every keep probability to 1 (selection disabled).
    pub keep_all: bool,

    pub gamma: f64,
    pub warmup_epochs: usize,
    pub anneal_epochs: usize,
    pub baseline_enabled: bool,
    pub baseline_decay: f64,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip per update; 0 disables it.
    pub grad_clip: f64,
    pub epochs: usize,
    pub accum: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,

    pub scenarios: Vec<ScenarioKind>,
    pub s3_repeats: usize,
    pub eval_seed: u64,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: Variant::RnnPlus,
            seed: None,
            data_dir: None,
            preset: Preset::Tempo,
            data_seed: 0,
            train_stride: 1,
            train_trim: 0,
            input_dim: None,
            n_classes: None,
            cell: CellKind::Gru,
            hidden: 1024,
            fc_hidden: 100,
            selector_hidden: 250,
            selector_fc1: 50,
            m_r: 0.25,
            lambda: 4.0,
            selector_init_logit: 0.0,
            selector_init_gain: 1.0,
            keep_all: false,
            gamma: 1.0,
            warmup_epochs: 5,
            anneal_epochs: 10,
            baseline_enabled: false,
            baseline_decay: 0.9,
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 0.0,
            epochs: 100,
            accum: 8,
            patience: 20,
            scenarios: vec![ScenarioKind::Original, ScenarioKind::S1, ScenarioKind::S2, ScenarioKind::S3],
            s3_repeats: 5,
            eval_seed: 0,
            threads: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "variant",
    "seed",
    "data_dir",
    "preset",
    "data_seed",
    "train_stride",
    "train_trim",
    "input_dim",
    "n_classes",
    "cell",
    "hidden",
    "fc_hidden",
    "selector_hidden",
    "selector_fc1",
    "m_r",
    "lambda",
    "selector_init_logit",
    "selector_init_gain",
    "keep_all",
    "gamma",
    "warmup_epochs",
    "anneal_epochs",
    "baseline_enabled",
    "baseline_decay",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "grad_clip",
    "epochs",
    "accum",
    "patience",
    "scenarios",
    "s3_repeats",
    "eval_seed",
    "threads",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key} = '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key} = '{value}': expected true or false"))),
    }
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

impl ExperimentConfig {
    /// Every recognised key, in serialization order.
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Sizes and learning rate suited to the synthetic presets on one CPU.
    pub fn desk_scale(variant: Variant) -> Self {
        ExperimentConfig {
            variant,
            hidden: 48,
            fc_hidden: 32,
            selector_hidden: 32,
            selector_fc1: 16,
            lr: 2e-3,
            grad_clip: 5.0,
            epochs: 60,
            patience: 20,
            selector_init_logit: 2.0,
            selector_init_gain: 4.0,
            ..ExperimentConfig::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => self.variant = Variant::parse(value)?,
            "seed" => self.seed = parse_optional(key, value)?,
            "data_dir" => self.data_dir = (value != "none").then(|| PathBuf::from(value)),
            "preset" => self.preset = Preset::parse(value)?,
            "data_seed" => self.data_seed = parse_num(key, value)?,
            "train_stride" => self.train_stride = parse_num(key, value)?,
            "train_trim" => self.train_trim = parse_num(key, value)?,
            "input_dim" => self.input_dim = parse_optional(key, value)?,
            "n_classes" => self.n_classes = parse_optional(key, value)?,
            "cell" => self.cell = CellKind::parse(value)?,
            "hidden" => self.hidden = parse_num(key, value)?,
            "fc_hidden" => self.fc_hidden = parse_num(key, value)?,
            "selector_hidden" => self.selector_hidden = parse_num(key, value)?,
            "selector_fc1" => self.selector_fc1 = parse_num(key, value)?,
            "m_r" => self.m_r = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "selector_init_logit" => self.selector_init_logit = parse_num(key, value)?,
            "selector_init_gain" => self.selector_init_gain = parse_num(key, value)?,
            "keep_all" => self.keep_all = parse_bool(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse_num(key, value)?,
            "anneal_epochs" => self.anneal_epochs = parse_num(key, value)?,
            "baseline_enabled" => self.baseline_enabled = parse_bool(key, value)?,
            "baseline_decay" => self.baseline_decay = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "adam_eps" => self.adam_eps = parse_num(key, value)?,
            "grad_clip" => self.grad_clip = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "accum" => self.accum = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "scenarios" => {
                self.scenarios = value.split(',').map(ScenarioKind::parse).collect::<Result<_>>()?;
            }
            "s3_repeats" => self.s3_repeats = parse_num(key, value)?,
            "eval_seed" => self.eval_seed = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        Ok(match key {
            "variant" => self.variant.name().into(),
            "seed" => opt(self.seed.map(|v| v.to_string())),
            "data_dir" => opt(self.data_dir.as_ref().map(|p| p.display().to_string())),
            "preset" => self.preset.name().into(),
            "data_seed" => self.data_seed.to_string(),
            "train_stride" => self.train_stride.to_string(),
            "train_trim" => self.train_trim.to_string(),
            "input_dim" => opt(self.input_dim.map(|v| v.to_string())),
            "n_classes" => opt(self.n_classes.map(|v| v.to_string())),
            "cell" => self.cell.name().into(),
            "hidden" => self.hidden.to_string(),
            "fc_hidden" => self.fc_hidden.to_string(),
            "selector_hidden" => self.selector_hidden.to_string(),
            "selector_fc1" => self.selector_fc1.to_string(),
            "m_r" => self.m_r.to_string(),
            "lambda" => self.lambda.to_string(),
            "selector_init_logit" => self.selector_init_logit.to_string(),
            "selector_init_gain" => self.selector_init_gain.to_string(),
            "keep_all" => self.keep_all.to_string(),
            "gamma" => self.gamma.to_string(),
            "warmup_epochs" => self.warmup_epochs.to_string(),
            "anneal_epochs" => self.anneal_epochs.to_string(),
            "baseline_enabled" => self.baseline_enabled.to_string(),
            "baseline_decay" => self.baseline_decay.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "epochs" => self.epochs.to_string(),
            "accum" => self.accum.to_string(),
            "patience" => self.patience.to_string(),
            "scenarios" => self.scenarios.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            "s3_repeats" => self.s3_repeats.to_string(),
            "eval_seed" => self.eval_seed.to_string(),
            "threads" => self.threads.to_string(),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        })
    }

    /// Parses `key = value` lines; blank lines and `#` comments are ignored.
    /// Keys not mentioned keep the values already in `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k).expect("known key"))).collect()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    /// Scenario list with the configured repeat count and seed.
    pub fn scenario_specs(&self) -> Vec<ScenarioSpec> {
        self.scenarios
            .iter()
            .map(|&kind| ScenarioSpec {
                kind,
                repeats: if kind.is_random() { self.s3_repeats } else { 1 },
                seed: self.eval_seed,
            })
            .collect()
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required (set seed = N or pass --seed)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.m_r > 0.0 && self.m_r < 1.0) {
            return bad(format!("m_r must lie in (0, 1), got {}", self.m_r));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return bad("lambda and gamma must be >= 0".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if !(self.selector_init_logit.is_finite() && self.selector_init_gain.is_finite()) {
            return bad("selector_init_logit and selector_init_gain must be finite".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)".into());
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("fc_hidden", self.fc_hidden),
            ("selector_hidden", self.selector_hidden),
            ("selector_fc1", self.selector_fc1),
            ("accum", self.accum),
            ("train_stride", self.train_stride),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        if self.scenarios.contains(&ScenarioKind::S3) && self.s3_repeats == 0 {
            return bad("s3_repeats must be >= 1".into());
        }
        if let Some(dir) = &self.data_dir {
            if !dir.is_dir() {
                return bad(format!("data_dir {} does not exist", dir.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::desk_scale(Variant::SrnnPlus);
        cfg.seed = Some(7);
        cfg.scenarios = vec![ScenarioKind::S1, ScenarioKind::Custom([3, 1, 2])];
        cfg.m_r = 0.1;
        let back = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = ExperimentConfig::default();
        for key in ExperimentConfig::keys() {
            let mut other = ExperimentConfig::default();
            other.set(key, &cfg.get(key).unwrap()).unwrap();
            assert_eq!(other, cfg, "{key}");
        }
    }

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.lr, 1e-5);
        assert_eq!(cfg.m_r, 0.25);
        assert_eq!(cfg.lambda, 4.0);
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!((cfg.hidden, cfg.fc_hidden, cfg.selector_hidden, cfg.selector_fc1), (1024, 100, 250, 50));
        assert!(cfg.seed.is_none());
        assert!(cfg.require_seed().is_err());
    }

    #[test]
    fn comments_and_errors() {
        let cfg = ExperimentConfig::from_text("# run\nseed = 3  # trailing\n\nvariant=baseline\n").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.variant, Variant::Baseline);
        assert!(matches!(ExperimentConfig::from_text("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_text("seed 3"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_text("lr = fast"), Err(Error::Config(_))));
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.m_r = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { data_dir: Some("/definitely/not/here".into()), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { accum: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
