use std::fmt::{self, Write as _};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::Variant;
use super::model::{Inference, Model};
use crate::error::{Error, Result};
use crate::rhythm::{resample, FeatureSequence, ScenarioKind, ScenarioSpec};
use crate::selector::SelectionTrace;

/// Results for one scenario, pooled over its repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioMetrics {
    pub scenario: ScenarioKind,
    pub repeats: usize,
    /// Percent correct.
    pub accuracy: f64,
    /// `100 · ΣK / ΣN`; `None` without a selector.
    pub usage: Option<f64>,
    pub per_class: Vec<f64>,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub variant: Variant,
    pub rows: Vec<ScenarioMetrics>,
    pub wall_clock_secs: f64,
}

impl MetricsTable {
    pub fn row(&self, kind: ScenarioKind) -> Option<&ScenarioMetrics> {
        self.rows.iter().find(|r| r.scenario == kind)
    }

    pub fn accuracy(&self, kind: ScenarioKind) -> Option<f64> {
        self.row(kind).map(|r| r.accuracy)
    }

    /// Usage on the unperturbed test set (or the first scenario if absent).
    pub fn usage(&self) -> Option<f64> {
        self.row(ScenarioKind::Original).or(self.rows.first()).and_then(|r| r.usage)
    }

    /// One `key=value` record per scenario.
    pub fn records(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let usage = r.usage.map_or_else(|| "none".to_string(), |u| format!("{u:.4}"));
            let per_class: Vec<String> = r.per_class.iter().map(|a| format!("{a:.4}")).collect();
            writeln!(
                out,
                "variant={} scenario={} accuracy={:.4} usage={usage} repeats={} n={} per_class={} wall_clock={:.3}",
                self.variant,
                r.scenario,
                r.accuracy,
                r.repeats,
                r.evaluated,
                per_class.join(","),
                self.wall_clock_secs
            )
            .expect("write to string");
        }
        out
    }

    pub fn write_records(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.records()).map_err(|e| Error::io(path, e))
    }
}

/// Renders tables side by side: one row per `(label, table)`, one column
/// per scenario of the first table, then usage.
pub fn format_tables(rows: &[(String, &MetricsTable)]) -> String {
    let Some((_, first)) = rows.first() else { return String::new() };
    let scenarios: Vec<ScenarioKind> = first.rows.iter().map(|r| r.scenario).collect();
    let width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}", "model");
    for s in &scenarios {
        write!(out, " {:>12}", s.to_string()).expect("write to string");
    }
    out.push_str("        usage\n");
    for (label, table) in rows {
        write!(out, "{label:<width$}").expect("write to string");
        for s in &scenarios {
            let cell = table.accuracy(*s).map_or_else(|| "-".to_string(), |a| format!("{a:.2}"));
            write!(out, " {cell:>12}").expect("write to string");
        }
        let usage = table.usage().map_or_else(|| "-".to_string(), |u| format!("{u:.2}"));
        writeln!(out, " {usage:>12}").expect("write to string");
    }
    out
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_tables(&[(self.variant.to_string(), self)]))
    }
}

fn infer_all(model: &Model, seqs: &[FeatureSequence]) -> Result<Vec<Inference>> {
    let run = || seqs.par_iter().map(|s| model.infer(s)).collect::<Result<Vec<_>>>();
    if model.config.threads == 1 {
        return seqs.iter().map(|s| model.infer(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(model.config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(run)
}

/// Percent correct on unmodified sequences.
pub fn accuracy(model: &Model, seqs: &[FeatureSequence]) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::invalid("no sequences to evaluate"));
    }
    let hits = infer_all(model, seqs)?.iter().zip(seqs).filter(|(r, s)| r.predicted == s.label).count();
    Ok(100.0 * hits as f64 / seqs.len() as f64)
}

/// Resamples every sequence under each scenario and scores the model.
/// Resampling draws from one stream per repeat, in sequence order, so the
/// numbers do not depend on the thread count.
pub fn evaluate(model: &Model, seqs: &[FeatureSequence], scenarios: &[ScenarioSpec]) -> Result<MetricsTable> {
    if seqs.is_empty() {
        return Err(Error::invalid("no sequences to evaluate"));
    }
    if let Some(s) = seqs.iter().find(|s| s.dim() != model.input_dim()) {
        return Err(Error::shape(format!(
            "checkpoint expects {} features, sequence '{}' has {}",
            model.input_dim(),
            s.id,
            s.dim()
        )));
    }
    let start = Instant::now();
    let n_classes = model.n_classes();
    let mut rows = Vec::with_capacity(scenarios.len());
    for spec in scenarios {
        let repeats = spec.repeats.max(1);
        let (mut hits, mut count, mut kept, mut total) = (0usize, 0usize, 0usize, 0usize);
        let mut class_hits = vec![0usize; n_classes];
        let mut class_count = vec![0usize; n_classes];
        for r in 0..repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(r as u64);
            let perturbed: Vec<FeatureSequence> =
                seqs.iter().map(|s| resample(s, spec.kind, &mut rng)).collect::<Result<_>>()?;
            for (inf, s) in infer_all(model, &perturbed)?.iter().zip(&perturbed) {
                let ok = inf.predicted == s.label;
                hits += usize::from(ok);
                count += 1;
                if s.label < n_classes {
                    class_hits[s.label] += usize::from(ok);
                    class_count[s.label] += 1;
                }
                if let Some(t) = &inf.trace {
                    kept += t.kept();
                    total += t.total();
                }
            }
        }
        rows.push(ScenarioMetrics {
            scenario: spec.kind,
            repeats,
            accuracy: 100.0 * hits as f64 / count as f64,
            usage: model.variant().has_selector().then(|| 100.0 * kept as f64 / total as f64),
            per_class: class_hits
                .iter()
                .zip(&class_count)
                .map(|(&h, &c)| if c == 0 { 0.0 } else { 100.0 * h as f64 / c as f64 })
                .collect(),
            evaluated: count,
        });
    }
    Ok(MetricsTable { variant: model.variant(), rows, wall_clock_secs: start.elapsed().as_secs_f64() })
}

/// Selection traces for every sequence, in order.
pub fn traces(model: &Model, seqs: &[FeatureSequence]) -> Result<Vec<(String, SelectionTrace)>> {
    if model.selector.is_none() {
        return Err(Error::Config("the baseline variant has no selector to trace".into()));
    }
    seqs.iter()
        .map(|s| Ok((s.id.clone(), model.selection(s)?.expect("selector present"))))
        .collect()
}

/// Writes one trace line per sequence; returns the number of lines.
pub fn export_traces(model: &Model, seqs: &[FeatureSequence], path: &Path) -> Result<usize> {
    let lines = traces(model, seqs)?;
    let mut text = String::new();
    for (id, t) in &lines {
        text.push_str(&t.to_line(id));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(lines.len())
}

/// Fraction of kept frames lying in discriminative segments, and the
/// discriminative base rate, over sequences carrying a segment map.
pub fn discriminative_enrichment(model: &Model, seqs: &[FeatureSequence]) -> Result<(f64, f64)> {
    let (mut kept, mut kept_disc, mut frames, mut disc) = (0usize, 0usize, 0usize, 0usize);
    for (seq, (_, t)) in seqs.iter().zip(traces(model, seqs)?) {
        let Some(seg) = &seq.segments else { continue };
        for (i, &y) in t.y.iter().enumerate() {
            frames += 1;
            disc += usize::from(seg.discriminative[i]);
            if y {
                kept += 1;
                kept_disc += usize::from(seg.discriminative[i]);
            }
        }
    }
    if frames == 0 || kept == 0 {
        return Err(Error::invalid("no segment-annotated frames to measure"));
    }
    Ok((kept_disc as f64 / kept as f64, disc as f64 / frames as f64))
}
