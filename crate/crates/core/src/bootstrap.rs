//! The bootstrapping loop: train on the accepted pairs, label candidate
//! contexts, and promote candidates whose votes agree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{predict, Checkpoint, EmbeddingTable, ModelParams, TrainConfig, TrainReport, VectorCache};
use crate::contexts::{
    build_positive_instances, sample_negative_instances, write_instances_jsonl, ContextBuilder, Instance, Label,
    OccurrenceIndex,
};
use crate::error::{Error, Result};
use crate::mining::{write_pairs_tsv, Orientation, PairKey, Provenance, RegularPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// Minimum majority-orientation votes at iteration 0.
    pub min_support: u64,
    /// Added to the support threshold after each iteration.
    pub support_step: u64,
    /// Minimum share of all labeled contexts voting for the majority.
    pub majority: f64,
    /// The orientation vote difference must exceed this share of all contexts.
    pub diff_ratio: f64,
    pub stop_threshold: usize,
    pub max_iterations: usize,
    /// Negatives sampled per positive instance.
    pub negative_ratio: usize,
    /// Votes from predictions below this confidence are ignored.
    pub min_confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            min_support: 15,
            support_step: 5,
            majority: 0.6,
            diff_ratio: 0.4,
            stop_threshold: 100,
            max_iterations: 10,
            negative_ratio: 10,
            min_confidence: 0.0,
        }
    }
}

impl BootstrapConfig {
    pub fn support_threshold(&self, k: usize) -> u64 {
        self.min_support + self.support_step * k as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.majority) || !(0.0..=1.0).contains(&self.diff_ratio) {
            return Err(Error::config("majority and diff_ratio must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::config("min_confidence must lie in [0, 1]"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairVoteTally {
    pub n_forward: u64,
    pub n_backward: u64,
    pub n_other: u64,
}

impl PairVoteTally {
    pub fn total(&self) -> u64 {
        self.n_forward + self.n_backward + self.n_other
    }

    pub fn add(&mut self, vote: Option<Orientation>) {
        match vote {
            Some(Orientation::Forward) => self.n_forward += 1,
            Some(Orientation::Backward) => self.n_backward += 1,
            None => self.n_other += 1,
        }
    }

    pub fn merge(&mut self, other: &PairVoteTally) {
        self.n_forward += other.n_forward;
        self.n_backward += other.n_backward;
        self.n_other += other.n_other;
    }
}

pub type TallyMap = BTreeMap<PairKey, PairVoteTally>;

/// Orientation vote of a classified context; `None` for `Other`.
pub fn vote(label: Label, first_textual: bool) -> Option<Orientation> {
    let textual = match label {
        Label::Before => Orientation::Forward,
        Label::After => Orientation::Backward,
        Label::Other | Label::Unlabeled => return None,
    };
    Some(if first_textual { textual } else { textual.flip() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub after: usize,
    pub before: usize,
    pub other: usize,
}

impl ClassCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::After => self.after += 1,
            Label::Before => self.before += 1,
            _ => self.other += 1,
        }
    }

    fn of(instances: &[Instance]) -> Self {
        let mut c = ClassCounts::default();
        for i in instances {
            c.add(i.label);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub tallies: TallyMap,
    /// Every classified context, with its predicted label and confidence.
    pub instances: Vec<Instance>,
    pub counts: ClassCounts,
    /// Contexts whose vote fell below the confidence cutoff.
    pub skipped: usize,
}

/// Classifies every context of a candidate pair that is not yet accepted and
/// tallies the resulting votes per pair.
pub fn label_candidate_contexts(
    model: &ModelParams,
    table: &EmbeddingTable,
    index: &OccurrenceIndex<'_>,
    candidates: &BTreeSet<PairKey>,
    accepted: &BTreeSet<PairKey>,
    builder: &ContextBuilder,
    min_confidence: f64,
) -> Result<Labeling> {
    let mut instances: Vec<Instance> = index
        .iter()
        .filter(|(_, occ)| candidates.contains(&occ.key) && !accepted.contains(&occ.key))
        .filter_map(|(s, occ)| builder.instance(s, occ, Label::Unlabeled))
        .collect();
    let mut cache = VectorCache::new(table);
    let seqs = instances
        .iter()
        .map(|i| cache.encode(&i.tokens))
        .collect::<Result<Vec<_>>>()?;
    let preds = seqs
        .par_iter()
        .map(|s| predict(model, &cache, s))
        .collect::<Result<Vec<_>>>()?;
    let mut tallies = TallyMap::new();
    let mut counts = ClassCounts::default();
    let mut skipped = 0;
    for (inst, p) in instances.iter_mut().zip(preds) {
        inst.label = p.label;
        inst.confidence = Some(p.confidence);
        counts.add(p.label);
        if p.confidence < min_confidence {
            skipped += 1;
            continue;
        }
        let key = inst.key().expect("instances carry canonical keys");
        tallies.entry(key).or_default().add(vote(p.label, inst.first_textual));
    }
    Ok(Labeling {
        tallies,
        instances,
        counts,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// Forward and backward votes are equal.
    Tie,
    Majority,
    Support,
    Difference,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rejection::Tie => "tie",
            Rejection::Majority => "majority",
            Rejection::Support => "support",
            Rejection::Difference => "difference",
        })
    }
}

/// Applies the acceptance rules at iteration `k`. Returns the orientation or
/// the first rule that fails, checked in the order tie, majority, support,
/// difference.
pub fn judge(t: &PairVoteTally, k: usize, config: &BootstrapConfig) -> std::result::Result<Orientation, Rejection> {
    let (o, n_o) = match t.n_forward.cmp(&t.n_backward) {
        std::cmp::Ordering::Greater => (Orientation::Forward, t.n_forward),
        std::cmp::Ordering::Less => (Orientation::Backward, t.n_backward),
        std::cmp::Ordering::Equal => return Err(Rejection::Tie),
    };
    let total = t.total() as f64;
    if (n_o as f64) / total < config.majority {
        return Err(Rejection::Majority);
    }
    if n_o < config.support_threshold(k) {
        return Err(Rejection::Support);
    }
    if (t.n_forward.abs_diff(t.n_backward) as f64) / total <= config.diff_ratio {
        return Err(Rejection::Difference);
    }
    Ok(o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub accepted: Vec<RegularPair>,
    pub rejected: BTreeMap<Rejection, usize>,
}

/// New regular pairs from the tallies of iteration `k`. For these pairs
/// `forward`/`backward` are vote counts and `cooccur` is the number of
/// labeled contexts.
pub fn select_new_pairs(tallies: &TallyMap, k: usize, config: &BootstrapConfig) -> Selection {
    let mut accepted = Vec::new();
    let mut rejected = BTreeMap::new();
    for (key, t) in tallies {
        match judge(t, k, config) {
            Ok(orientation) => accepted.push(RegularPair {
                key: key.clone(),
                orientation,
                provenance: Provenance::Iteration(k + 1),
                forward: t.n_forward,
                backward: t.n_backward,
                cooccur: t.total(),
            }),
            Err(r) => *rejected.entry(r).or_insert(0) += 1,
        }
    }
    Selection { accepted, rejected }
}

pub fn write_tallies_tsv<W: Write>(w: &mut W, tallies: &TallyMap, k: usize, config: &BootstrapConfig) -> Result<()> {
    writeln!(w, "first\tsecond\tfwd\tbwd\tother\ttotal\tdecision")?;
    for (key, t) in tallies {
        let decision = match judge(t, k, config) {
            Ok(o) => o.to_string(),
            Err(r) => format!("rejected:{r}"),
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{decision}",
            key.first(),
            key.second(),
            t.n_forward,
            t.n_backward,
            t.n_other,
            t.total()
        )?;
    }
    Ok(())
}

pub fn read_tallies_tsv<R: BufRead>(r: R) -> Result<TallyMap> {
    let mut out = TallyMap::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 || line.is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::Parse {
            line: n + 1,
            message: m.to_string(),
        };
        if c.len() != 7 {
            return Err(bad("expected 7 columns"));
        }
        let key = match PairKey::new(c[0], c[1]) {
            Some((k, false)) => k,
            _ => return Err(bad("not a canonical pair key")),
        };
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad("invalid count"));
        out.insert(
            key,
            PairVoteTally {
                n_forward: num(c[2])?,
                n_backward: num(c[3])?,
                n_other: num(c[4])?,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub k: usize,
    pub min_support: u64,
    pub positives: ClassCounts,
    pub negatives: usize,
    pub negative_shortfall: usize,
    pub labeled: ClassCounts,
    pub skipped_votes: usize,
    pub candidate_pairs_labeled: usize,
    pub new_pairs: usize,
    pub accepted_total: usize,
    pub rejected: BTreeMap<Rejection, usize>,
    pub data_fingerprint: String,
    pub training: TrainReport,
}

/// Final summary: pair counts per provenance, in acceptance order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub iterations: usize,
    pub seeds: usize,
    pub new_per_iteration: Vec<usize>,
    pub total: usize,
    pub bootstrap: BootstrapConfig,
    pub train: TrainConfig,
    pub contexts: ContextBuilder,
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub accepted: Vec<RegularPair>,
    pub model: ModelParams,
    pub reports: Vec<IterationReport>,
    pub summary: BootstrapSummary,
    /// Classified candidate contexts of the last iteration.
    pub labeled: Vec<Instance>,
}

pub struct Bootstrap<'a> {
    pub index: &'a OccurrenceIndex<'a>,
    pub candidates: &'a BTreeSet<PairKey>,
    pub table: &'a EmbeddingTable,
    pub builder: ContextBuilder,
    pub train: TrainConfig,
    pub config: BootstrapConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

impl Bootstrap<'_> {
    /// Runs the loop from `seeds`. When `run_dir` is given, writes
    /// `pairs_k.tsv` (k = 0 holds the seeds), `tallies_k.tsv`,
    /// `model_k.ckpt`, `report_k.json`, `labeled_k.jsonl` and `summary.json`.
    pub fn run(&self, seeds: &[RegularPair], run_dir: Option<&Path>) -> Result<BootstrapOutcome> {
        self.config.validate()?;
        self.train.validate()?;
        if seeds.is_empty() {
            return Err(Error::config("bootstrapping needs at least one seed pair"));
        }
        if let Some(dir) = run_dir {
            fs::create_dir_all(dir)?;
        }
        let mut accepted: Vec<RegularPair> = seeds.to_vec();
        accepted.sort_by(|a, b| a.key.cmp(&b.key));
        let mut keys: BTreeSet<PairKey> = accepted.iter().map(|p| p.key.clone()).collect();
        if keys.len() != accepted.len() {
            return Err(Error::config("seed list contains a pair twice"));
        }
        if let Some(dir) = run_dir {
            write_with(&dir.join("pairs_0.tsv"), |w| write_pairs_tsv(w, &accepted))?;
        }

        let mut reports = Vec::new();
        let mut k = 0;
        loop {
            let positives = build_positive_instances(self.index, &accepted, &self.builder);
            if positives.is_empty() {
                return Err(Error::data("no contexts found for the accepted pairs"));
            }
            let negatives = sample_negative_instances(
                self.index,
                &keys,
                self.candidates,
                positives.len(),
                self.config.negative_ratio,
                self.train.seed.wrapping_add(k as u64),
                &self.builder,
            );
            let positive_counts = ClassCounts::of(&positives);
            let n_negatives = negatives.instances.len();
            let mut data = positives;
            data.extend(negatives.instances);
            log::info!(
                "iteration {k}: training on {} instances ({} negative)",
                data.len(),
                n_negatives
            );
            let outcome = crate::cnn::train(&data, self.table, &self.train)?;
            let labeling = label_candidate_contexts(
                &outcome.model,
                self.table,
                self.index,
                self.candidates,
                &keys,
                &self.builder,
                self.config.min_confidence,
            )?;
            let selection = select_new_pairs(&labeling.tallies, k, &self.config);
            let new_pairs = selection.accepted.len();
            log::info!("iteration {k}: {new_pairs} new pairs");
            for p in &selection.accepted {
                keys.insert(p.key.clone());
            }
            accepted.extend(selection.accepted);

            let report = IterationReport {
                k,
                min_support: self.config.support_threshold(k),
                positives: positive_counts,
                negatives: n_negatives,
                negative_shortfall: negatives.shortfall,
                labeled: labeling.counts,
                skipped_votes: labeling.skipped,
                candidate_pairs_labeled: labeling.tallies.len(),
                new_pairs,
                accepted_total: accepted.len(),
                rejected: selection.rejected,
                data_fingerprint: outcome.fingerprint.clone(),
                training: outcome.report,
            };
            if let Some(dir) = run_dir {
                write_with(&dir.join(format!("tallies_{k}.tsv")), |w| {
                    write_tallies_tsv(w, &labeling.tallies, k, &self.config)
                })?;
                Checkpoint::new(
                    outcome.model.clone(),
                    self.train.clone(),
                    self.table.oov_seed(),
                    outcome.fingerprint,
                )
                .save(&dir.join(format!("model_{k}.ckpt")))?;
                write_json(&dir.join(format!("report_{k}.json")), &report)?;
                write_with(&dir.join(format!("labeled_{k}.jsonl")), |w| {
                    write_instances_jsonl(w, &labeling.instances)
                })?;
                write_with(&dir.join(format!("pairs_{}.tsv", k + 1)), |w| write_pairs_tsv(w, &accepted))?;
            }
            reports.push(report);
            k += 1;
            if new_pairs < self.config.stop_threshold || k >= self.config.max_iterations {
                let summary = BootstrapSummary {
                    iterations: k,
                    seeds: seeds.len(),
                    new_per_iteration: reports.iter().map(|r| r.new_pairs).collect(),
                    total: accepted.len(),
                    bootstrap: self.config.clone(),
                    train: self.train.clone(),
                    contexts: self.builder,
                };
                if let Some(dir) = run_dir {
                    write_json(&dir.join("summary.json"), &summary)?;
                }
                return Ok(BootstrapOutcome {
                    accepted,
                    model: outcome.model,
                    reports,
                    summary,
                    labeled: labeling.instances,
                });
            }
        }
    }
}
