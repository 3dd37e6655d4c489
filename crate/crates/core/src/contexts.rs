//! Classifier inputs: local-window and dependency-path contexts, positive
//! instances from regular pairs, and sampled negatives.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::events::EventExtractor;
use crate::mining::{gap, pair_occurrences, Orientation, PairKey, PairOccurrence, RegularPair};

pub const WINDOW_SIDE: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 40;

/// Relation label of an instance, relative to the textual order of its two
/// events: `Before` means the textually first event happens first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    After,
    Before,
    Other,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::After => "AFTER",
            Label::Before => "BEFORE",
            Label::Other => "OTHER",
            Label::Unlabeled => "UNLABELED",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AFTER" => Ok(Label::After),
            "BEFORE" => Ok(Label::Before),
            "OTHER" => Ok(Label::Other),
            "UNLABELED" => Ok(Label::Unlabeled),
            _ => Err(Error::format(format!("unknown label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Window,
    #[default]
    Deppath,
}

impl FromStr for ContextKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "window" => Ok(ContextKind::Window),
            "deppath" | "dependency-path" => Ok(ContextKind::Deppath),
            other => Err(Error::config(format!("unknown context kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub doc: String,
    pub sent: String,
    /// The pair key's first phrase.
    pub first: String,
    pub second: String,
    /// Whether the key's first phrase is also the textually first one.
    pub first_textual: bool,
    pub tokens: Vec<String>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl Instance {
    pub fn key(&self) -> Option<PairKey> {
        PairKey::new(&self.first, &self.second).map(|(k, _)| k)
    }

    /// `(textually first phrase, textually second phrase)`.
    pub fn textual_pair(&self) -> (&str, &str) {
        if self.first_textual {
            (&self.first, &self.second)
        } else {
            (&self.second, &self.first)
        }
    }
}

fn form(sentence: &Sentence, i: usize) -> String {
    sentence.token(i).form.to_lowercase()
}

/// Five tokens before the first head, everything between, five after the
/// second head. `None` when the heads are more than `max_gap` tokens apart.
pub fn local_window_context(sentence: &Sentence, i: usize, j: usize, max_gap: usize) -> Option<Vec<String>> {
    let (i, j) = (i.min(j), i.max(j));
    if i == j || i == 0 || j > sentence.len() || gap(i, j) > max_gap {
        return None;
    }
    let lo = i.saturating_sub(WINDOW_SIDE).max(1);
    let hi = (j + WINDOW_SIDE).min(sentence.len());
    Some((lo..=hi).map(|k| form(sentence, k)).collect())
}

/// Shortest dependency path between the heads plus the direct children of
/// every path token, in textual order, capped at `max_len` tokens.
///
/// Over-long contexts first lose child-only tokens (textually farthest from
/// either head first), then interior path tokens from the tail. Both heads
/// always survive.
pub fn dependency_path_context(
    sentence: &Sentence,
    i: usize,
    j: usize,
    max_gap: usize,
    max_len: usize,
) -> Option<Vec<String>> {
    let (i, j) = (i.min(j), i.max(j));
    if i == j || i == 0 || j > sentence.len() || gap(i, j) > max_gap {
        return None;
    }
    let path = sentence.shortest_path(i, j).ok()?;
    let on_path: BTreeSet<usize> = path.iter().copied().collect();
    let mut kids: Vec<usize> = path
        .iter()
        .flat_map(|&w| sentence.children_of(w).iter().copied())
        .filter(|c| !on_path.contains(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let max_len = max_len.max(2);
    let mut keep_path = on_path;
    if keep_path.len() + kids.len() > max_len {
        let dist = |k: usize| k.abs_diff(i).min(k.abs_diff(j));
        kids.sort_by(|&a, &b| dist(a).cmp(&dist(b)).then(a.cmp(&b)));
        kids.truncate(max_len.saturating_sub(keep_path.len()));
        while keep_path.len() > max_len {
            let victim = keep_path.iter().rev().copied().find(|&k| k != i && k != j)?;
            keep_path.remove(&victim);
        }
    }
    let mut all: Vec<usize> = keep_path.into_iter().chain(kids).collect();
    all.sort_unstable();
    Some(all.into_iter().map(|k| form(sentence, k)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBuilder {
    pub kind: ContextKind,
    pub max_gap: usize,
    pub max_len: usize,
}

impl Default for ContextBuilder {
    fn default() -> Self {
        ContextBuilder {
            kind: ContextKind::Deppath,
            max_gap: 10,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl ContextBuilder {
    pub fn build(&self, sentence: &Sentence, i: usize, j: usize) -> Option<Vec<String>> {
        match self.kind {
            ContextKind::Window => local_window_context(sentence, i, j, self.max_gap),
            ContextKind::Deppath => dependency_path_context(sentence, i, j, self.max_gap, self.max_len),
        }
    }

    pub fn instance(&self, sentence: &Sentence, occ: &PairOccurrence, label: Label) -> Option<Instance> {
        let (a, b) = occ.textual_heads();
        let tokens = self.build(sentence, a, b)?;
        Some(Instance {
            doc: sentence.doc_id().to_string(),
            sent: sentence.sent_id().to_string(),
            first: occ.key.first().to_string(),
            second: occ.key.second().to_string(),
            first_textual: occ.key_first_textually(),
            tokens,
            label,
            confidence: None,
        })
    }
}

/// Every sentence paired with the event-pair occurrences it contains.
pub struct OccurrenceIndex<'c> {
    entries: Vec<(&'c Sentence, Vec<PairOccurrence>)>,
}

impl<'c> OccurrenceIndex<'c> {
    pub fn build(corpus: &'c Corpus, extractor: &EventExtractor, max_gap: usize) -> Self {
        let sentences: Vec<&Sentence> = corpus.sentences().collect();
        let entries = sentences
            .into_par_iter()
            .map(|s| (s, pair_occurrences(&extractor.phrases(s), max_gap)))
            .collect();
        OccurrenceIndex { entries }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'c Sentence, &PairOccurrence)> + '_ {
        self.entries.iter().flat_map(|(s, occs)| occs.iter().map(move |o| (*s, o)))
    }

    pub fn num_occurrences(&self) -> usize {
        self.entries.iter().map(|(_, o)| o.len()).sum()
    }
}

/// Label of a sentence containing an oriented pair: `Before` when the
/// textually first phrase is the temporal antecedent.
pub fn positive_label(occ: &PairOccurrence, orientation: Orientation) -> Label {
    if occ.key_first_textually() == (orientation == Orientation::Forward) {
        Label::Before
    } else {
        Label::After
    }
}

/// One instance per sentence that contains a regular pair.
pub fn build_positive_instances(
    index: &OccurrenceIndex<'_>,
    regular: &[RegularPair],
    builder: &ContextBuilder,
) -> Vec<Instance> {
    let oriented: std::collections::BTreeMap<&PairKey, Orientation> =
        regular.iter().map(|p| (&p.key, p.orientation)).collect();
    index
        .iter()
        .filter_map(|(s, occ)| {
            let o = oriented.get(&occ.key)?;
            builder.instance(s, occ, positive_label(occ, *o))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub instances: Vec<Instance>,
    /// How many requested negatives could not be supplied.
    pub shortfall: usize,
}

/// Samples `ratio * n_positives` `Other` instances from sentences holding a
/// pair that is neither a seed nor a candidate.
pub fn sample_negative_instances(
    index: &OccurrenceIndex<'_>,
    seeds: &BTreeSet<PairKey>,
    candidates: &BTreeSet<PairKey>,
    n_positives: usize,
    ratio: usize,
    rng_seed: u64,
    builder: &ContextBuilder,
) -> NegativeSample {
    let eligible: Vec<Instance> = index
        .iter()
        .filter(|(_, occ)| !seeds.contains(&occ.key) && !candidates.contains(&occ.key))
        .filter_map(|(s, occ)| builder.instance(s, occ, Label::Other))
        .collect();
    let wanted = n_positives.saturating_mul(ratio);
    if eligible.len() <= wanted {
        let shortfall = wanted - eligible.len();
        if shortfall > 0 {
            log::warn!("only {} negative contexts available, {} requested", eligible.len(), wanted);
        }
        return NegativeSample {
            instances: eligible,
            shortfall,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = sample(&mut rng, eligible.len(), wanted).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<Instance>> = eligible.into_iter().map(Some).collect();
    NegativeSample {
        instances: picked.into_iter().filter_map(|i| slots[i].take()).collect(),
        shortfall: 0,
    }
}

pub fn write_instances_jsonl<W: Write>(w: &mut W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut *w, inst)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_instances_jsonl<R: BufRead>(r: R) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if inst.tokens.is_empty() {
            return Err(Error::Parse {
                line: n + 1,
                message: "instance has no tokens".into(),
            });
        }
        out.push(inst);
    }
    Ok(out)
}
