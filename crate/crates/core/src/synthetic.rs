//! Generated data with known answers: a corpus with planted regular pairs and
//! a marker-token classification set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::EmbeddingTable;
use crate::contexts::{Instance, Label};
use crate::corpus::{Corpus, DependencyEdge, Sentence, Token};

pub const BEFORE_MARKERS: &[&str] = &["then", "later", "subsequently"];
pub const AFTER_MARKERS: &[&str] = &["earlier", "previously", "beforehand"];
pub const NEUTRAL_MARKERS: &[&str] = &["meanwhile", "also", "while", "or"];

const SUBJECTS: &[&str] = &["they", "we", "people", "officials", "workers", "residents"];

/// A transitive verb event with a fixed patient.
#[derive(Debug, Clone, Copy)]
pub struct Verb {
    pub lemma: &'static str,
    pub past: &'static str,
    pub gerund: &'static str,
    pub object: &'static str,
    pub object_lemma: &'static str,
}

impl Verb {
    const fn new(
        lemma: &'static str,
        past: &'static str,
        gerund: &'static str,
        object: &'static str,
        object_lemma: &'static str,
    ) -> Self {
        Verb {
            lemma,
            past,
            gerund,
            object,
            object_lemma,
        }
    }

    pub fn phrase(&self) -> String {
        format!("{}|pat:{}", self.lemma, self.object_lemma)
    }
}

/// Planted pairs as (antecedent, consequent). The first two are seeds.
pub const PLANTED: [(Verb, Verb); 5] = [
    (
        Verb::new("storm", "stormed", "storming", "building", "building"),
        Verb::new("arrest", "arrested", "arresting", "suspect", "suspect"),
    ),
    (
        Verb::new("wash", "washed", "washing", "hands", "hand"),
        Verb::new("eat", "ate", "eating", "dinner", "dinner"),
    ),
    (
        Verb::new("sign", "signed", "signing", "contract", "contract"),
        Verb::new("deliver", "delivered", "delivering", "goods", "goods"),
    ),
    (
        Verb::new("plant", "planted", "planting", "seeds", "seed"),
        Verb::new("harvest", "harvested", "harvesting", "crops", "crop"),
    ),
    (
        Verb::new("buy", "bought", "buying", "ticket", "ticket"),
        Verb::new("board", "boarded", "boarding", "train", "train"),
    ),
];

/// Pairs with a few explicit patterns but only neutral contexts.
pub const DISTRACTORS: [(Verb, Verb); 2] = [
    (
        Verb::new("open", "opened", "opening", "window", "window"),
        Verb::new("read", "read", "reading", "book", "book"),
    ),
    (
        Verb::new("paint", "painted", "painting", "fence", "fence"),
        Verb::new("call", "called", "calling", "friend", "friend"),
    ),
];

const NOISE: [Verb; 12] = [
    Verb::new("watch", "watched", "watching", "movie", "movie"),
    Verb::new("cook", "cooked", "cooking", "soup", "soup"),
    Verb::new("fix", "fixed", "fixing", "car", "car"),
    Verb::new("write", "wrote", "writing", "letter", "letter"),
    Verb::new("clean", "cleaned", "cleaning", "room", "room"),
    Verb::new("visit", "visited", "visiting", "museum", "museum"),
    Verb::new("play", "played", "playing", "game", "game"),
    Verb::new("sing", "sang", "singing", "song", "song"),
    Verb::new("drive", "drove", "driving", "truck", "truck"),
    Verb::new("carry", "carried", "carrying", "box", "box"),
    Verb::new("draw", "drew", "drawing", "picture", "picture"),
    Verb::new("climb", "climbed", "climbing", "hill", "hill"),
];

/// Sentence counts per pair type.
#[derive(Debug, Clone, Copy)]
pub struct PlantedLayout {
    pub seed_patterns: usize,
    pub seed_contexts: usize,
    pub planted_patterns: usize,
    pub planted_contexts: usize,
    pub distractor_patterns: usize,
    pub distractor_contexts: usize,
    pub noise: usize,
}

impl Default for PlantedLayout {
    fn default() -> Self {
        PlantedLayout {
            seed_patterns: 12,
            seed_contexts: 28,
            planted_patterns: 3,
            planted_contexts: 40,
            distractor_patterns: 3,
            distractor_contexts: 30,
            noise: 225,
        }
    }
}

impl PlantedLayout {
    pub fn total(&self) -> usize {
        2 * (self.seed_patterns + self.seed_contexts)
            + 3 * (self.planted_patterns + self.planted_contexts)
            + 2 * (self.distractor_patterns + self.distractor_contexts)
            + self.noise
    }
}

pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// (antecedent, consequent) phrases of every planted pair.
    pub planted: Vec<(String, String)>,
    pub distractors: Vec<(String, String)>,
}

struct Builder {
    tokens: Vec<Token>,
    edges: Vec<DependencyEdge>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            tokens: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn push(&mut self, form: &str, lemma: &str, upos: &str, head: usize, rel: &str) -> usize {
        let i = self.tokens.len() + 1;
        self.tokens.push(Token::new(i, form, lemma, upos));
        self.edges.push(DependencyEdge::new(head, i, rel));
        i
    }

    fn finish(self, doc: &str, n: usize) -> Sentence {
        Sentence::new(doc, format!("s{n}"), self.tokens, self.edges).expect("generated trees are well formed")
    }
}

fn subject<R: Rng>(rng: &mut R) -> &'static str {
    SUBJECTS.choose(rng).expect("non-empty")
}

fn subject_upos(s: &str) -> &'static str {
    if matches!(s, "they" | "we") {
        "PRON"
    } else {
        "NOUN"
    }
}

/// "S a the x and MARKER b the y ."
fn coordinated(subj: &str, a: &Verb, marker: &str, b: &Verb) -> Builder {
    let mut s = Builder::new();
    s.push(subj, subj, subject_upos(subj), 2, "nsubj");
    s.push(a.past, a.lemma, "VERB", 0, "root");
    s.push("the", "the", "DET", 4, "det");
    s.push(a.object, a.object_lemma, "NOUN", 2, "dobj");
    s.push("and", "and", "CCONJ", 7, "cc");
    s.push(marker, marker, "ADV", 7, "advmod");
    s.push(b.past, b.lemma, "VERB", 2, "conj");
    s.push("the", "the", "DET", 9, "det");
    s.push(b.object, b.object_lemma, "NOUN", 7, "dobj");
    s.push(".", ".", "PUNCT", 2, "punct");
    s
}

/// "S gov the x PREP dep-ing the y ." with a collapsed `prepc_PREP` edge.
fn pattern(subj: &str, gov: &Verb, prep: &str, dep: &Verb) -> Builder {
    let mut s = Builder::new();
    s.push(subj, subj, subject_upos(subj), 2, "nsubj");
    s.push(gov.past, gov.lemma, "VERB", 0, "root");
    s.push("the", "the", "DET", 4, "det");
    s.push(gov.object, gov.object_lemma, "NOUN", 2, "dobj");
    s.push(prep, prep, "ADP", 6, "mark");
    s.push(dep.gerund, dep.lemma, "VERB", 2, &format!("prepc_{prep}"));
    s.push("the", "the", "DET", 8, "det");
    s.push(dep.object, dep.object_lemma, "NOUN", 6, "dobj");
    s.push(".", ".", "PUNCT", 2, "punct");
    s
}

/// Explicit-pattern sentences for `ante → cons`, alternating between the
/// `after` and `before` constructions starting with `after`.
fn pattern_sentences<R: Rng>(rng: &mut R, ante: &Verb, cons: &Verb, n: usize, only_after: bool) -> Vec<Builder> {
    (0..n)
        .map(|i| {
            let subj = subject(rng);
            if only_after || i % 2 == 0 {
                pattern(subj, cons, "after", ante)
            } else {
                pattern(subj, ante, "before", cons)
            }
        })
        .collect()
}

/// Implicit contexts for `ante → cons`: half in temporal order with a
/// forward marker, half reversed with a backward marker.
fn marked_contexts<R: Rng>(rng: &mut R, ante: &Verb, cons: &Verb, n: usize) -> Vec<Builder> {
    (0..n)
        .map(|i| {
            let subj = subject(rng);
            if i % 2 == 0 {
                coordinated(subj, ante, BEFORE_MARKERS.choose(rng).expect("non-empty"), cons)
            } else {
                coordinated(subj, cons, AFTER_MARKERS.choose(rng).expect("non-empty"), ante)
            }
        })
        .collect()
}

fn neutral_contexts<R: Rng>(rng: &mut R, a: &Verb, b: &Verb, n: usize) -> Vec<Builder> {
    (0..n)
        .map(|i| {
            let subj = subject(rng);
            let m = NEUTRAL_MARKERS.choose(rng).expect("non-empty");
            if i % 2 == 0 {
                coordinated(subj, a, m, b)
            } else {
                coordinated(subj, b, m, a)
            }
        })
        .collect()
}

/// Builds the planted corpus, shuffled with `seed`, as one document.
pub fn planted_corpus(layout: &PlantedLayout, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<Builder> = Vec::new();
    for (i, (ante, cons)) in PLANTED.iter().enumerate() {
        let (np, nc) = if i < 2 {
            (layout.seed_patterns, layout.seed_contexts)
        } else {
            (layout.planted_patterns, layout.planted_contexts)
        };
        blocks.extend(pattern_sentences(&mut rng, ante, cons, np, false));
        blocks.extend(marked_contexts(&mut rng, ante, cons, nc));
    }
    for (ante, cons) in DISTRACTORS.iter() {
        blocks.extend(pattern_sentences(&mut rng, ante, cons, layout.distractor_patterns, true));
        blocks.extend(neutral_contexts(&mut rng, ante, cons, layout.distractor_contexts));
    }
    // every noise sentence pairs a seed verb with a noise verb, so event
    // words alone do not identify positive contexts
    let seed_verbs: Vec<&Verb> = PLANTED.iter().take(2).flat_map(|(a, c)| [a, c]).collect();
    for _ in 0..layout.noise {
        let s = *seed_verbs.choose(&mut rng).expect("non-empty");
        let n = NOISE.choose(&mut rng).expect("non-empty");
        let (a, b) = if rng.gen_bool(0.5) { (s, n) } else { (n, s) };
        let subj = subject(&mut rng);
        let m = NEUTRAL_MARKERS.choose(&mut rng).expect("non-empty");
        blocks.push(coordinated(subj, a, m, b));
    }
    blocks.shuffle(&mut rng);
    let sentences = blocks
        .into_iter()
        .enumerate()
        .map(|(n, b)| b.finish("synthetic", n + 1))
        .collect();
    let pairs = |list: &[(Verb, Verb)]| list.iter().map(|(a, c)| (a.phrase(), c.phrase())).collect();
    PlantedCorpus {
        corpus: Corpus::from_sentences(sentences).expect("sentence ids are unique"),
        planted: pairs(&PLANTED),
        distractors: pairs(&DISTRACTORS),
    }
}

/// Word vectors for the planted corpus with clustered semantics: all verbs
/// near one centroid, all nominals near another, and temporal markers grouped
/// by the order they express. Each vector is its centroid plus small noise.
pub fn planted_embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroid = || -> Vec<f32> { (0..dim).map(|_| rng.gen_range(-0.2f32..0.2)).collect() };
    let (event, entity, precede, follow, neutral, function) =
        (centroid(), centroid(), centroid(), centroid(), centroid(), centroid());
    let verbs = PLANTED.iter().chain(DISTRACTORS.iter()).flat_map(|(a, c)| [*a, *c]).chain(NOISE);
    let mut groups: Vec<(Vec<&str>, &Vec<f32>)> = vec![
        (verbs.clone().flat_map(|v| [v.past, v.gerund]).collect(), &event),
        (verbs.map(|v| v.object).chain(SUBJECTS.iter().copied()).collect(), &entity),
        (BEFORE_MARKERS.iter().copied().chain(["before"]).collect(), &precede),
        (AFTER_MARKERS.iter().copied().chain(["after"]).collect(), &follow),
        (NEUTRAL_MARKERS.to_vec(), &neutral),
    ];
    groups.push((vec!["and", "the", "."], &function));
    let mut table = EmbeddingTable::empty(dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (words, c) in groups {
        for w in words {
            let v: Vec<f32> = c.iter().map(|x| x + rng.gen_range(-0.05f32..0.05)).collect();
            table.insert(w, &v).expect("dimension matches");
        }
    }
    table
}

/// `per_class` instances per label. Each is 6 to 12 filler tokens with one
/// class marker inserted at a random position.
pub fn marker_dataset(per_class: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fillers: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
    let classes = [
        (Label::After, AFTER_MARKERS),
        (Label::Before, BEFORE_MARKERS),
        (Label::Other, &NEUTRAL_MARKERS[..3]),
    ];
    let mut out = Vec::with_capacity(per_class * classes.len());
    for n in 0..per_class {
        for (label, markers) in classes {
            let len = rng.gen_range(6..=12);
            let mut tokens: Vec<String> = (0..len).map(|_| fillers.choose(&mut rng).expect("non-empty").clone()).collect();
            let at = rng.gen_range(0..=len);
            tokens.insert(at, markers.choose(&mut rng).expect("non-empty").to_string());
            out.push(Instance {
                doc: "markers".into(),
                sent: format!("{label}-{n}"),
                first: "a|pat:x".into(),
                second: "b|pat:y".into(),
                first_textual: true,
                tokens,
                label,
                confidence: None,
            });
        }
    }
    out
}
