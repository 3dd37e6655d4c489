//! Verb and noun event mentions, argument attachment and canonical event
//! phrases.
//!
//! An event phrase is a predicate lemma plus at most one argument. Verbs take
//! their patient if present, else their agent, else their first prepositional
//! object. Nouns take a prepositional object, preferring `of`, then `by`, then
//! anything else. Arguments can be generalized to NE types (and personal
//! pronouns to `PERSON`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence, Token};
use crate::error::{Error, Result};

/// How prepositional attachments are encoded in the dependency labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PatternMode {
    /// Stanford collapsed labels: `prep_after(g, d)`, `agent`, `dobj`, `nsubjpass`.
    #[default]
    Collapsed,
    /// Basic/UD labels: `obl`/`nmod` with a `case` child, or `prep` + `pobj`.
    Composite,
}

impl FromStr for PatternMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "collapsed" => Ok(PatternMode::Collapsed),
            "composite" => Ok(PatternMode::Composite),
            other => Err(Error::config(format!("unknown pattern mode `{other}`"))),
        }
    }
}

pub const DEFAULT_REPORTING_VERBS: &[&str] = &["say", "tell", "add"];

const PERSONAL_PRONOUNS: &[&str] = &["i", "you", "he", "she", "we", "they", "me", "him", "her", "us", "them"];

const AUX_RELATIONS: &[&str] = &["aux", "auxpass", "aux:pass", "cop"];
const PASSIVE_MARKERS: &[&str] = &["nsubjpass", "nsubj:pass", "csubjpass", "csubj:pass", "auxpass", "aux:pass"];

/// A set of lowercase lemmas loaded from a one-per-line file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Lexicon {
            words: words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).filter(|w| !w.is_empty()).collect(),
        }
    }

    pub fn reporting_default() -> Self {
        Lexicon::new(DEFAULT_REPORTING_VERBS)
    }

    /// Reads one lemma per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        Lexicon::new(text.lines().map(|l| l.split('#').next().unwrap_or("")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Lexicon::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.words.contains(&lemma.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    Verb,
    Noun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Voice {
    Active,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArgRole {
    Patient,
    Agent,
    Prep(String),
}

impl ArgRole {
    fn tag(&self) -> String {
        match self {
            ArgRole::Patient => "pat".into(),
            ArgRole::Agent => "agt".into(),
            ArgRole::Prep(p) => format!("p_{}", escape(p)),
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "pat" => Some(ArgRole::Patient),
            "agt" => Some(ArgRole::Agent),
            _ => tag.strip_prefix("p_").and_then(unescape).map(ArgRole::Prep),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub index: usize,
    pub role: ArgRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub head: usize,
    pub kind: EventKind,
    pub argument: Option<Argument>,
    /// Only set for verbs.
    pub voice: Option<Voice>,
}

/// Canonical event phrase: `pred` or `pred|role:arg`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventPhrase {
    pub pred: String,
    pub argument: Option<(ArgRole, String)>,
}

impl EventPhrase {
    pub fn bare(pred: &str) -> Self {
        EventPhrase {
            pred: pred.to_lowercase(),
            argument: None,
        }
    }

    pub fn with_arg(pred: &str, role: ArgRole, arg: &str) -> Self {
        EventPhrase {
            pred: pred.to_lowercase(),
            argument: Some((role, arg.to_string())),
        }
    }

    pub fn has_argument(&self) -> bool {
        self.argument.is_some()
    }
}

impl fmt::Display for EventPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", escape(&self.pred))?;
        if let Some((role, arg)) = &self.argument {
            write!(f, "|{}:{}", role.tag(), escape(arg))?;
        }
        Ok(())
    }
}

impl FromStr for EventPhrase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format(format!("malformed event phrase `{s}`"));
        let (pred, rest) = match s.split_once('|') {
            Some((p, r)) => (p, Some(r)),
            None => (s, None),
        };
        let pred = unescape(pred).filter(|p| !p.is_empty()).ok_or_else(bad)?;
        let argument = match rest {
            None => None,
            Some(r) => {
                let (tag, arg) = r.split_once(':').ok_or_else(bad)?;
                let role = ArgRole::from_tag(tag).ok_or_else(bad)?;
                Some((role, unescape(arg).ok_or_else(bad)?))
            }
        };
        Ok(EventPhrase { pred, argument })
    }
}

/// Whether a serialized phrase carries an argument.
pub fn phrase_has_argument(serialized: &str) -> bool {
    serialized.contains('|')
}

// Percent-escaping keeps the serialization injective and free of the
// separators used by the phrase syntax and the TSV dumps.
fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            '|' => out.push_str("%7C"),
            ':' => out.push_str("%3A"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '%' {
            let code: String = chars.by_ref().take(2).collect();
            let ch = match code.as_str() {
                "25" => '%',
                "7C" => '|',
                "3A" => ':',
                "20" => ' ',
                "09" => '\t',
                "0A" => '\n',
                "0D" => '\r',
                _ => return None,
            };
            out.push(ch);
        } else if c == '|' || c == ':' {
            return None;
        } else {
            out.push(c);
        }
    }
    Some(out)
}

/// Prepositional objects of `head` in textual order, with their preposition.
pub fn prep_objects(sentence: &Sentence, head: usize, mode: PatternMode) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for &c in sentence.children_of(head) {
        let rel = sentence.relation(c);
        match mode {
            PatternMode::Collapsed => {
                if let Some(p) = rel.strip_prefix("prep_").or_else(|| rel.strip_prefix("prepc_")) {
                    out.push((c, p.to_lowercase()));
                }
            }
            PatternMode::Composite => {
                let base = rel.split(':').next().unwrap_or(rel);
                if base == "nmod" || base == "obl" {
                    let case: Vec<String> = sentence
                        .children_with(c, "case")
                        .map(|k| sentence.token(k).form.to_lowercase())
                        .collect();
                    if !case.is_empty() {
                        out.push((c, case.join("_")));
                    }
                } else if rel == "prep" {
                    let prep = sentence.token(c).form.to_lowercase();
                    if let Some(obj) = sentence
                        .children_of(c)
                        .iter()
                        .copied()
                        .find(|&o| matches!(sentence.relation(o), "pobj" | "pcomp"))
                    {
                        out.push((obj, prep));
                    }
                }
            }
        }
    }
    out.sort_by_key(|(i, _)| *i);
    out
}

fn first_child_with(sentence: &Sentence, head: usize, rels: &[&str]) -> Option<usize> {
    sentence.children_of(head).iter().copied().find(|&c| rels.contains(&sentence.relation(c)))
}

fn is_passive(sentence: &Sentence, verb: usize) -> bool {
    sentence.children_of(verb).iter().any(|&c| PASSIVE_MARKERS.contains(&sentence.relation(c)))
}

/// True when `i` is a verb event candidate: tagged VERB and not attached as an
/// auxiliary or copula.
pub fn is_event_verb(sentence: &Sentence, i: usize) -> bool {
    sentence.token(i).upos == "VERB" && !AUX_RELATIONS.contains(&sentence.relation(i))
}

fn verb_argument(sentence: &Sentence, verb: usize, passive: bool, mode: PatternMode) -> Option<Argument> {
    let patient = if passive {
        first_child_with(sentence, verb, &["nsubjpass", "nsubj:pass"])
    } else {
        first_child_with(sentence, verb, &["dobj", "obj"])
    };
    if let Some(index) = patient {
        return Some(Argument {
            index,
            role: ArgRole::Patient,
        });
    }
    let preps = prep_objects(sentence, verb, mode);
    let agent = if passive {
        first_child_with(sentence, verb, &["agent", "obl:agent"])
            .or_else(|| preps.iter().find(|(_, p)| p == "by").map(|(i, _)| *i))
    } else {
        first_child_with(sentence, verb, &["nsubj"])
    };
    if let Some(index) = agent {
        return Some(Argument {
            index,
            role: ArgRole::Agent,
        });
    }
    preps.into_iter().next().map(|(index, p)| Argument {
        index,
        role: ArgRole::Prep(p),
    })
}

/// One mention per non-auxiliary verb whose lemma is not a reporting verb.
pub fn extract_verb_events(sentence: &Sentence, reporting: &Lexicon, mode: PatternMode) -> Vec<EventMention> {
    (1..=sentence.len())
        .filter(|&i| is_event_verb(sentence, i) && !reporting.contains(&sentence.token(i).lemma))
        .map(|i| {
            let passive = is_passive(sentence, i);
            EventMention {
                head: i,
                kind: EventKind::Verb,
                argument: verb_argument(sentence, i, passive, mode),
                voice: Some(if passive { Voice::Passive } else { Voice::Active }),
            }
        })
        .collect()
}

/// One mention per noun whose lemma is in the noun-event lexicon.
pub fn extract_noun_events(sentence: &Sentence, nouns: &Lexicon, mode: PatternMode) -> Vec<EventMention> {
    (1..=sentence.len())
        .filter(|&i| sentence.token(i).upos == "NOUN" && nouns.contains(&sentence.token(i).lemma))
        .map(|i| {
            let preps = prep_objects(sentence, i, mode);
            let pick = preps
                .iter()
                .find(|(_, p)| p == "of")
                .or_else(|| preps.iter().find(|(_, p)| p == "by"))
                .or_else(|| preps.first());
            EventMention {
                head: i,
                kind: EventKind::Noun,
                argument: pick.map(|(index, p)| Argument {
                    index: *index,
                    role: ArgRole::Prep(p.clone()),
                }),
                voice: None,
            }
        })
        .collect()
}

/// Argument surface used in event phrases.
pub fn generalize_argument(token: &Token, enabled: bool) -> String {
    if enabled {
        if token.has_ner() {
            return token.ner.clone();
        }
        if PERSONAL_PRONOUNS.contains(&token.form.to_lowercase().as_str()) {
            return "PERSON".into();
        }
    }
    token.lemma.to_lowercase()
}

pub fn canonical_phrase(sentence: &Sentence, mention: &EventMention, generalize: bool) -> EventPhrase {
    let pred = sentence.token(mention.head).lemma.to_lowercase();
    EventPhrase {
        pred,
        argument: mention
            .argument
            .as_ref()
            .map(|a| (a.role.clone(), generalize_argument(sentence.token(a.index), generalize))),
    }
}

/// Counts noun lemmas appearing as the `in` object of "participate"/"involve".
/// Returns lemmas seen at least `min_count` times, most frequent first.
pub fn mine_noun_event_candidates(corpus: &Corpus, min_count: usize, mode: PatternMode) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in corpus.sentences() {
        for i in 1..=s.len() {
            let lemma = s.token(i).lemma.to_lowercase();
            if lemma != "participate" && lemma != "involve" {
                continue;
            }
            for (obj, prep) in prep_objects(s, i, mode) {
                if prep == "in" && s.token(obj).upos == "NOUN" {
                    *counts.entry(s.token(obj).lemma.to_lowercase()).or_default() += 1;
                }
            }
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// An event phrase anchored at its head token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocatedPhrase {
    pub head: usize,
    pub phrase: String,
    pub has_argument: bool,
}

/// Bundles the lexicons and switches that determine event phrases.
#[derive(Debug, Clone)]
pub struct EventExtractor {
    pub mode: PatternMode,
    pub generalize: bool,
    pub reporting: Lexicon,
    /// `None` disables noun events.
    pub nouns: Option<Lexicon>,
}

impl Default for EventExtractor {
    fn default() -> Self {
        EventExtractor {
            mode: PatternMode::Collapsed,
            generalize: true,
            reporting: Lexicon::reporting_default(),
            nouns: None,
        }
    }
}

impl EventExtractor {
    /// All event mentions in the sentence, ordered by head index.
    pub fn mentions(&self, sentence: &Sentence) -> Vec<EventMention> {
        let mut out = extract_verb_events(sentence, &self.reporting, self.mode);
        if let Some(nouns) = &self.nouns {
            out.extend(extract_noun_events(sentence, nouns, self.mode));
        }
        out.sort_by_key(|m| m.head);
        out
    }

    pub fn phrases(&self, sentence: &Sentence) -> Vec<LocatedPhrase> {
        self.mentions(sentence)
            .iter()
            .map(|m| {
                let phrase = canonical_phrase(sentence, m, self.generalize);
                LocatedPhrase {
                    head: m.head,
                    has_argument: phrase.has_argument(),
                    phrase: phrase.to_string(),
                }
            })
            .collect()
    }
}
