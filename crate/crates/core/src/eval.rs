//! Before/after scoring, audit sampling and knowledge-graph export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contexts::{Instance, Label};
use crate::error::{Error, Result};
use crate::mining::RegularPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Relation {
    Before,
    After,
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "BEFORE" => Ok(Relation::Before),
            "AFTER" => Ok(Relation::After),
            _ => Err(Error::format(format!("relation must be BEFORE or AFTER, found `{s}`"))),
        }
    }
}

/// A prediction or gold row. Predictions may abstain with `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRow {
    pub doc: String,
    pub e1: String,
    pub e2: String,
    pub relation: Option<Relation>,
}

impl RelationRow {
    pub fn new(doc: &str, e1: &str, e2: &str, relation: Option<Relation>) -> Self {
        RelationRow {
            doc: doc.into(),
            e1: e1.into(),
            e2: e2.into(),
            relation,
        }
    }

    /// `(doc, earlier event, later event)`; `None` for abstentions.
    fn ordered(&self) -> Option<(&str, &str, &str)> {
        match self.relation? {
            Relation::Before => Some((&self.doc, &self.e1, &self.e2)),
            Relation::After => Some((&self.doc, &self.e2, &self.e1)),
        }
    }

    fn unordered(&self) -> (&str, &str, &str) {
        if self.e1 <= self.e2 {
            (&self.doc, &self.e1, &self.e2)
        } else {
            (&self.doc, &self.e2, &self.e1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub abstentions: usize,
}

fn check_unique(rows: &[RelationRow], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in rows {
        let (d, a, b) = r.unordered();
        if !seen.insert((d, a, b)) {
            return Err(Error::Validation(format!("duplicate {what} for {a} / {b} in {d}")));
        }
    }
    Ok(())
}

pub fn score_before_after(predictions: &[RelationRow], gold: &[RelationRow]) -> Result<ScoreReport> {
    check_unique(predictions, "prediction")?;
    check_unique(gold, "gold relation")?;
    let gold_set: BTreeSet<(&str, &str, &str)> = gold
        .iter()
        .map(|g| g.ordered().ok_or_else(|| Error::Validation("gold relation without a label".into())))
        .collect::<Result<_>>()?;
    let mut tp = 0;
    let mut fp = 0;
    let mut abstentions = 0;
    for p in predictions {
        match p.ordered() {
            None => abstentions += 1,
            Some(o) if gold_set.contains(&o) => tp += 1,
            Some(_) => fp += 1,
        }
    }
    let fn_ = gold.len() - tp;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ScoreReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        abstentions,
    })
}

/// Reads `doc e1 e2 relation` rows; an optional header starting with `doc`
/// is skipped. With `allow_other`, `OTHER` is read as an abstention.
pub fn read_relations_tsv<R: BufRead>(r: R, allow_other: bool) -> Result<Vec<RelationRow>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || (n == 0 && line.starts_with("doc\t")) {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 4 {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("expected 4 columns, found {}", c.len()),
            });
        }
        let relation = if allow_other && c[3] == "OTHER" {
            None
        } else {
            Some(c[3].parse().map_err(|e: Error| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?)
        };
        rows.push(RelationRow::new(c[0], c[1], c[2], relation));
    }
    Ok(rows)
}

pub fn write_relations_tsv<W: Write>(w: &mut W, rows: &[RelationRow]) -> Result<()> {
    writeln!(w, "doc\te1\te2\trelation")?;
    for r in rows {
        let rel = match r.relation {
            Some(Relation::Before) => "BEFORE",
            Some(Relation::After) => "AFTER",
            None => "OTHER",
        };
        writeln!(w, "{}\t{}\t{}\t{rel}", r.doc, r.e1, r.e2)?;
    }
    Ok(())
}

/// Prediction row for a classified context, in textual order.
pub fn relation_row(inst: &Instance) -> RelationRow {
    let (a, b) = inst.textual_pair();
    let relation = match inst.label {
        Label::Before => Some(Relation::Before),
        Label::After => Some(Relation::After),
        _ => None,
    };
    RelationRow::new(&inst.doc, a, b, relation)
}

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.8;
pub const DEFAULT_SAMPLE_SIZE: usize = 100;

/// Seeded uniform sample of `BEFORE`/`AFTER` instances whose confidence
/// strictly exceeds `min_conf`, kept in input order.
pub fn sample_high_confidence(instances: &[Instance], min_conf: f64, n: usize, rng_seed: u64) -> Vec<Instance> {
    let eligible: Vec<&Instance> = instances
        .iter()
        .filter(|i| matches!(i.label, Label::Before | Label::After))
        .filter(|i| i.confidence.is_some_and(|c| c > min_conf))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = sample(&mut rng, eligible.len(), n.min(eligible.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| eligible[i].clone()).collect()
}

/// Annotation sheet: one row per instance with an empty verdict column.
pub fn write_annotation_sheet<W: Write>(w: W, instances: &[Instance]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["doc", "sent", "context", "event_1", "event_2", "predicted", "confidence", "verdict"])?;
    for inst in instances {
        let (a, b) = inst.textual_pair();
        out.write_record([
            inst.doc.as_str(),
            inst.sent.as_str(),
            &inst.tokens.join(" "),
            a,
            b,
            &inst.label.to_string(),
            &inst.confidence.map(|c| format!("{c:.4}")).unwrap_or_default(),
            "",
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

impl FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(GraphFormat::Dot),
            "json" => Ok(GraphFormat::Json),
            _ => Err(Error::config(format!("unknown graph format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub provenance: String,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

/// Directed graph antecedent → consequent. Repeated edges keep their first
/// occurrence.
pub fn build_graph(pairs: &[RegularPair]) -> Graph {
    let mut edges: BTreeMap<(String, String), GraphEdge> = BTreeMap::new();
    let mut nodes = BTreeSet::new();
    for p in pairs {
        let (from, to) = (p.antecedent().to_string(), p.consequent().to_string());
        nodes.insert(from.clone());
        nodes.insert(to.clone());
        edges.entry((from.clone(), to.clone())).or_insert(GraphEdge {
            from,
            to,
            provenance: p.provenance.to_string(),
            support: p.support(),
        });
    }
    Graph {
        nodes: nodes.into_iter().collect(),
        edges: edges.into_values().collect(),
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn export_graph(pairs: &[RegularPair], format: GraphFormat) -> Result<String> {
    let g = build_graph(pairs);
    Ok(match format {
        GraphFormat::Json => {
            let mut s = serde_json::to_string_pretty(&g)?;
            s.push('\n');
            s
        }
        GraphFormat::Dot => {
            let mut s = String::from("digraph regular_pairs {\n");
            for n in &g.nodes {
                let _ = writeln!(s, "  {};", dot_quote(n));
            }
            for e in &g.edges {
                let _ = writeln!(s, "  {} -> {} [label=\"before\"];", dot_quote(&e.from), dot_quote(&e.to));
            }
            s.push_str("}\n");
            s
        }
    })
}
