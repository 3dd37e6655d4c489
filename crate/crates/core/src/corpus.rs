//! Dependency-parsed corpora: CoNLL-U ingestion and tree queries.
//!
//! Named-entity types travel in the MISC column as `NER=<TYPE>`. Multiword
//! token ranges (`3-4`) and empty nodes (`3.1`) are skipped. Every sentence is
//! validated to be a rooted spanning tree on construction, so the graph
//! queries below never have to handle cycles or orphans.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const NO_NER: &str = "NONE";
const EMPTY: &str = "_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub deps: String,
    pub misc: String,
    /// Uppercase NE type, or `NONE`.
    pub ner: String,
}

impl Token {
    pub fn new(index: usize, form: &str, lemma: &str, upos: &str) -> Self {
        Token {
            index,
            form: form.to_string(),
            lemma: lemma.to_string(),
            upos: upos.to_string(),
            xpos: EMPTY.to_string(),
            feats: EMPTY.to_string(),
            deps: EMPTY.to_string(),
            misc: EMPTY.to_string(),
            ner: NO_NER.to_string(),
        }
    }

    /// Sets the NE type and mirrors it into the MISC column.
    pub fn with_ner(mut self, ner: &str) -> Self {
        let ner = normalize_ner(ner);
        self.misc = if ner == NO_NER {
            EMPTY.to_string()
        } else {
            format!("NER={ner}")
        };
        self.ner = ner;
        self
    }

    pub fn has_ner(&self) -> bool {
        self.ner != NO_NER
    }
}

fn normalize_ner(raw: &str) -> String {
    let up = raw.trim().to_uppercase();
    if up.is_empty() || up == "O" || up == EMPTY {
        NO_NER.to_string()
    } else {
        up
    }
}

fn ner_from_misc(misc: &str) -> String {
    misc.split('|')
        .find_map(|kv| kv.strip_prefix("NER="))
        .map(normalize_ner)
        .unwrap_or_else(|| NO_NER.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyEdge {
    /// Governor index, 0 for the root edge.
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

impl DependencyEdge {
    pub fn new(head: usize, dependent: usize, relation: &str) -> Self {
        DependencyEdge {
            head,
            dependent,
            relation: relation.to_string(),
        }
    }
}

/// A validated, immutable dependency-parsed sentence.
#[derive(Debug, Clone)]
pub struct Sentence {
    doc_id: String,
    sent_id: String,
    comments: Vec<String>,
    tokens: Vec<Token>,
    // edges[i - 1] is the edge whose dependent is token i
    edges: Vec<DependencyEdge>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl Sentence {
    /// Builds a sentence from tokens and one edge per token, checking that the
    /// edges form a rooted spanning tree.
    pub fn new(
        doc_id: impl Into<String>,
        sent_id: impl Into<String>,
        tokens: Vec<Token>,
        edges: Vec<DependencyEdge>,
    ) -> Result<Self> {
        Self::with_comments(doc_id.into(), sent_id.into(), Vec::new(), tokens, edges)
    }

    fn with_comments(
        doc_id: String,
        sent_id: String,
        comments: Vec<String>,
        tokens: Vec<Token>,
        edges: Vec<DependencyEdge>,
    ) -> Result<Self> {
        let structure = |message: String| Error::Structure {
            sentence: format!("{doc_id}/{sent_id}"),
            message,
        };
        let n = tokens.len();
        if n == 0 {
            return Err(structure("sentence has no tokens".into()));
        }
        for (pos, tok) in tokens.iter().enumerate() {
            if tok.index != pos + 1 {
                return Err(structure(format!(
                    "token ids must be 1..{n} in order, found {} at position {}",
                    tok.index,
                    pos + 1
                )));
            }
            if tok.form.is_empty() || tok.lemma.is_empty() {
                return Err(structure(format!("token {} has an empty form or lemma", tok.index)));
            }
        }
        if edges.len() != n {
            return Err(structure(format!("{} edges for {n} tokens", edges.len())));
        }
        let mut slots: Vec<Option<DependencyEdge>> = vec![None; n];
        for edge in edges {
            let dep = edge.dependent;
            if dep == 0 || dep > n {
                return Err(structure(format!("edge dependent {dep} out of range")));
            }
            if edge.head > n {
                return Err(structure(format!("head {} of token {dep} out of range", edge.head)));
            }
            if edge.head == dep {
                return Err(structure(format!("token {dep} is its own head")));
            }
            if slots[dep - 1].is_some() {
                return Err(structure(format!("token {dep} has more than one head")));
            }
            slots[dep - 1] = Some(edge);
        }
        let edges: Vec<DependencyEdge> = slots.into_iter().map(|e| e.expect("all slots filled")).collect();

        let roots: Vec<usize> = edges.iter().filter(|e| e.head == 0).map(|e| e.dependent).collect();
        if roots.len() != 1 {
            return Err(structure(format!("expected exactly one root, found {}", roots.len())));
        }
        // every token must reach the root within n steps
        for start in 1..=n {
            let mut cur = start;
            let mut steps = 0;
            while cur != 0 {
                cur = edges[cur - 1].head;
                steps += 1;
                if steps > n {
                    return Err(structure(format!("cycle through token {start}")));
                }
            }
        }

        let mut children = vec![Vec::new(); n + 1];
        for e in &edges {
            children[e.head].push(e.dependent);
        }
        for c in &mut children {
            c.sort_unstable();
        }

        Ok(Sentence {
            doc_id,
            sent_id,
            comments,
            tokens,
            edges,
            children,
            root: roots[0],
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn sent_id(&self) -> &str {
        &self.sent_id
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn edges(&self) -> &[DependencyEdge] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Token by 1-based index. Panics when out of range.
    pub fn token(&self, i: usize) -> &Token {
        &self.tokens[i - 1]
    }

    pub fn get(&self, i: usize) -> Option<&Token> {
        i.checked_sub(1).and_then(|p| self.tokens.get(p))
    }

    pub fn head(&self, i: usize) -> usize {
        self.edges[i - 1].head
    }

    pub fn relation(&self, i: usize) -> &str {
        &self.edges[i - 1].relation
    }

    fn check(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.len() {
            Err(Error::Bounds { index: i, len: self.len() })
        } else {
            Ok(())
        }
    }

    /// Direct dependents of token `i`, ascending by index.
    pub fn children_of(&self, i: usize) -> &[usize] {
        self.children.get(i).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Dependents of `i` attached by the given relation label.
    pub fn children_with<'a>(&'a self, i: usize, rel: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.children_of(i).iter().copied().filter(move |&c| self.relation(c) == rel)
    }

    /// Path from `i` to `j` (inclusive) in the tree viewed as an undirected
    /// graph, found by breadth-first search.
    pub fn shortest_path(&self, i: usize, j: usize) -> Result<Vec<usize>> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Err(Error::EmptyPath(i));
        }
        let n = self.len();
        let mut prev = vec![usize::MAX; n + 1];
        prev[i] = i;
        let mut queue = VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            if u == j {
                break;
            }
            let head = self.head(u);
            let neighbours = self.children_of(u).iter().copied().chain((head != 0).then_some(head));
            for v in neighbours {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let mut path = vec![j];
        let mut cur = j;
        while cur != i {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Ok(path)
    }

    /// Writes the sentence as a CoNLL-U block, terminated by a blank line.
    pub fn write_conllu<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        if self.comments.is_empty() {
            writeln!(w, "# doc_id = {}", self.doc_id)?;
            writeln!(w, "# sent_id = {}", self.sent_id)?;
        } else {
            for c in &self.comments {
                writeln!(w, "{c}")?;
            }
        }
        for (tok, edge) in self.tokens.iter().zip(&self.edges) {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                tok.index,
                tok.form,
                tok.lemma,
                tok.upos,
                tok.xpos,
                tok.feats,
                edge.head,
                edge.relation,
                tok.deps,
                tok.misc
            )?;
        }
        writeln!(w)
    }
}

/// Writes sentences as a CoNLL-U stream.
pub fn write_conllu<'a, W: Write>(sentences: impl IntoIterator<Item = &'a Sentence>, w: &mut W) -> std::io::Result<()> {
    for s in sentences {
        s.write_conllu(w)?;
    }
    Ok(())
}

#[derive(Default)]
struct Block {
    start_line: usize,
    comments: Vec<String>,
    tokens: Vec<Token>,
    edges: Vec<DependencyEdge>,
    seen: HashSet<usize>,
    sent_id: Option<String>,
}

fn finish_block(
    block: &mut Block,
    doc_id: &Option<String>,
    source: &str,
    ordinal: &mut usize,
    sentences: &mut Vec<Sentence>,
) -> Result<()> {
    let b = std::mem::take(block);
    if b.tokens.is_empty() {
        if b.comments.is_empty() {
            return Ok(());
        }
        return Err(Error::Parse {
            line: b.start_line,
            message: "comment block without tokens".into(),
        });
    }
    *ordinal += 1;
    let doc = doc_id.clone().unwrap_or_else(|| source.to_string());
    let sent = b.sent_id.unwrap_or_else(|| format!("{source}:{ordinal}"));
    sentences.push(Sentence::with_comments(doc, sent, b.comments, b.tokens, b.edges)?);
    Ok(())
}

/// Parses a CoNLL-U stream. `source` names the stream for synthesized ids.
pub fn parse_conllu<R: BufRead>(reader: R, source: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut doc_id: Option<String> = None;
    let mut block = Block::default();
    let mut ordinal = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            finish_block(&mut block, &doc_id, source, &mut ordinal, &mut sentences)?;
            continue;
        }
        if block.tokens.is_empty() && block.comments.is_empty() {
            block.start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let body = comment.trim();
            if let Some((key, value)) = body.split_once('=') {
                let (key, value) = (key.trim(), value.trim().to_string());
                match key {
                    "sent_id" => block.sent_id = Some(value),
                    "doc_id" | "newdoc id" => doc_id = Some(value),
                    _ => {}
                }
            }
            block.comments.push(line.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let parse_num = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid {what} `{s}`"),
            })
        };
        let index = parse_num(id, "token id")?;
        let head = parse_num(cols[6], "head")?;
        if !block.seen.insert(index) {
            return Err(Error::Structure {
                sentence: block.sent_id.clone().unwrap_or_else(|| format!("{source}:{}", ordinal + 1)),
                message: format!("token {index} has more than one head line"),
            });
        }
        block.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
            ner: ner_from_misc(cols[9]),
        });
        block.edges.push(DependencyEdge::new(head, index, cols[7]));
    }
    finish_block(&mut block, &doc_id, source, &mut ordinal, &mut sentences)?;
    Ok(sentences)
}

/// Opens a CoNLL-U file, transparently decompressing `.gz`.
pub fn read_conllu_file(path: &Path) -> Result<Vec<Sentence>> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let source = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_conllu(BufReader::new(reader), &source)
}

#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    sources: Vec<PathBuf>,
}

impl Corpus {
    /// Groups sentences into documents by `doc_id`, in order of first
    /// appearance. Fails if a `(doc_id, sent_id)` pair repeats.
    pub fn from_sentences(sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut doc_pos: HashMap<String, usize> = HashMap::new();
        let mut documents: Vec<Document> = Vec::new();
        for s in sentences {
            if !seen.insert((s.doc_id.clone(), s.sent_id.clone())) {
                return Err(Error::Validation(format!(
                    "duplicate sentence id {}/{}",
                    s.doc_id, s.sent_id
                )));
            }
            let pos = *doc_pos.entry(s.doc_id.clone()).or_insert_with(|| {
                documents.push(Document {
                    id: s.doc_id.clone(),
                    sentences: Vec::new(),
                });
                documents.len() - 1
            });
            documents[pos].sentences.push(s);
        }
        Ok(Corpus {
            documents,
            sources: Vec::new(),
        })
    }

    /// Loads and concatenates CoNLL-U files (parsed in parallel).
    pub fn load<P: AsRef<Path> + Sync>(paths: &[P]) -> Result<Self> {
        let parsed: Vec<Vec<Sentence>> = paths
            .par_iter()
            .map(|p| read_conllu_file(p.as_ref()))
            .collect::<Result<_>>()?;
        let mut corpus = Corpus::from_sentences(parsed.into_iter().flatten().collect())?;
        corpus.sources = paths.iter().map(|p| p.as_ref().to_path_buf()).collect();
        Ok(corpus)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn sources(&self) -> &[PathBuf] {
        &self.sources
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Sentence>> {
        parse_conllu(text.as_bytes(), "test.conllu")
    }

    /// Builds a sentence from (form, upos, head, rel) rows; lemma = lowercase form.
    fn sent(rows: &[(&str, &str, usize, &str)]) -> Sentence {
        let tokens = rows
            .iter()
            .enumerate()
            .map(|(i, (f, u, _, _))| Token::new(i + 1, f, &f.to_lowercase(), u))
            .collect();
        let edges = rows
            .iter()
            .enumerate()
            .map(|(i, (_, _, h, r))| DependencyEdge::new(*h, i + 1, r))
            .collect();
        Sentence::new("d", "s", tokens, edges).unwrap()
    }

    #[test]
    fn minimal_block() {
        let text = "1\tPolice\tpolice\tNOUN\tNN\t_\t2\tnsubj\t_\t_\n\
                    2\tarrived\tarrive\tVERB\tVBD\t_\t0\troot\t_\t_\n\n";
        let s = parse(text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 2);
        assert_eq!(s[0].root(), 2);
        assert_eq!(s[0].token(1).ner, NO_NER);
        assert_eq!(s[0].sent_id(), "test.conllu:1");
        assert_eq!(s[0].doc_id(), "test.conllu");
    }

    #[test]
    fn range_and_empty_nodes_are_skipped() {
        let text = "# sent_id = a\n\
                    1\tI\tI\tPRON\t_\t_\t2\tnsubj\t_\t_\n\
                    2\tsee\tsee\tVERB\t_\t_\t0\troot\t_\t_\n\
                    3-4\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    3\tdo\tdo\tAUX\t_\t_\t2\taux\t_\t_\n\
                    4\tn't\tnot\tPART\t_\t_\t2\tadvmod\t_\t_\n\
                    4.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n\n";
        let s = parse(text).unwrap();
        assert_eq!(s[0].len(), 4);
        assert_eq!(s[0].token(3).form, "do");
        assert_eq!(s[0].token(4).form, "n't");
        assert_eq!(s[0].sent_id(), "a");
    }

    #[test]
    fn duplicate_head_line_is_structure_error() {
        let text = "1\tA\ta\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
                    2\tB\tb\tVERB\t_\t_\t0\troot\t_\t_\n\
                    2\tB\tb\tVERB\t_\t_\t1\tdep\t_\t_\n\n";
        assert!(matches!(parse(text), Err(Error::Structure { .. })));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "# sent_id = x\n1\tA\ta\tNOUN\n\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycles_and_multiple_roots_rejected() {
        let cyc = "1\tA\ta\tX\t_\t_\t2\tdep\t_\t_\n\
                   2\tB\tb\tX\t_\t_\t1\tdep\t_\t_\n\
                   3\tC\tc\tX\t_\t_\t0\troot\t_\t_\n\n";
        assert!(matches!(parse(cyc), Err(Error::Structure { .. })));
        let two = "1\tA\ta\tX\t_\t_\t0\troot\t_\t_\n\
                   2\tB\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
        assert!(matches!(parse(two), Err(Error::Structure { .. })));
    }

    #[test]
    fn ner_from_misc_column() {
        let text = "# newdoc id = doc7\n\
                    1\tSudan\tSudan\tPROPN\t_\t_\t0\troot\t_\tSpaceAfter=No|NER=location\n\
                    \n\
                    1\tIt\tit\tPRON\t_\t_\t0\troot\t_\tNER=O\n\n";
        let s = parse(text).unwrap();
        assert_eq!(s[0].token(1).ner, "LOCATION");
        assert_eq!(s[0].doc_id(), "doc7");
        assert_eq!(s[1].doc_id(), "doc7");
        assert_eq!(s[1].token(1).ner, NO_NER);
    }

    #[test]
    fn chain_and_star_paths() {
        let chain = sent(&[("a", "X", 2, "dep"), ("b", "X", 3, "dep"), ("c", "X", 0, "root")]);
        assert_eq!(chain.shortest_path(1, 3).unwrap(), vec![1, 2, 3]);
        let star = sent(&[
            ("a", "X", 2, "dep"),
            ("b", "X", 0, "root"),
            ("c", "X", 2, "dep"),
            ("d", "X", 2, "dep"),
        ]);
        assert_eq!(star.shortest_path(1, 4).unwrap(), vec![1, 2, 4]);
        assert_eq!(star.shortest_path(4, 1).unwrap(), vec![4, 2, 1]);
    }

    #[test]
    fn path_errors() {
        let s = sent(&[("a", "X", 0, "root"), ("b", "X", 1, "dep")]);
        assert!(matches!(s.shortest_path(1, 1), Err(Error::EmptyPath(1))));
        assert!(matches!(s.shortest_path(1, 3), Err(Error::Bounds { index: 3, .. })));
        assert!(matches!(s.shortest_path(0, 1), Err(Error::Bounds { index: 0, .. })));
    }

    #[test]
    fn children_including_conjunction() {
        // "He won and lost": won is root; lost attaches to won via conj
        let s = sent(&[
            ("He", "PRON", 2, "nsubj"),
            ("won", "VERB", 0, "root"),
            ("and", "CCONJ", 4, "cc"),
            ("lost", "VERB", 2, "conj"),
        ]);
        assert_eq!(s.children_of(2), &[1, 4]);
        assert!(s.children_of(4).contains(&3));
        assert!(s.children_of(1).is_empty());
        assert_eq!(s.children_with(2, "conj").collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn duplicate_sentence_ids_rejected() {
        let text = "# sent_id = a\n1\tA\ta\tX\t_\t_\t0\troot\t_\t_\n\n\
                    # sent_id = a\n1\tB\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
        let s = parse(text).unwrap();
        assert!(matches!(Corpus::from_sentences(s), Err(Error::Validation(_))));
    }

    #[test]
    fn gzip_input() {
        use flate2::{write::GzEncoder, Compression};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conllu.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        enc.write_all(b"1\tA\ta\tX\t_\t_\t0\troot\t_\t_\n\n").unwrap();
        enc.finish().unwrap();
        let corpus = Corpus::load(&[path]).unwrap();
        assert_eq!(corpus.num_sentences(), 1);
        assert_eq!(corpus.documents()[0].id, "c.conllu.gz");
    }
}
