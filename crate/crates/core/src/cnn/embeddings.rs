//! Pretrained word vectors in the word2vec binary and text formats.
//!
//! Binary layout: an ASCII header `<count> <dim>\n`, then for each entry the
//! token, a space, `dim` little-endian `f32`s and a trailing newline. Text
//! layout: one `token v1 .. vdim` line per entry, with an optional
//! `<count> <dim>` header line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_RANGE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Text,
}

impl EmbeddingFormat {
    /// `.bin` files are binary, anything else is text.
    pub fn detect(path: &Path) -> Self {
        if path.extension().is_some_and(|e| e == "bin") {
            EmbeddingFormat::Binary
        } else {
            EmbeddingFormat::Text
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    oov_seed: u64,
}

impl EmbeddingTable {
    /// An empty table: every token is out of vocabulary.
    pub fn empty(dim: usize, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            oov_seed,
        }
    }

    /// Adds a vector unless the token is already present.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::format(format!(
                "vector for `{word}` has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(word) {
            return Ok(false);
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn with_oov_seed(mut self, seed: u64) -> Self {
        self.oov_seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.words
            .iter()
            .zip(self.vectors.chunks_exact(self.dim.max(1)))
            .map(|(w, v)| (w.as_str(), v))
    }

    /// Writes the token's vector into `out`. Lookup order: exact token,
    /// capitalized, uppercase, then a seeded random vector. `PAD_TOKEN` maps
    /// to zeros. Returns `false` for padding.
    pub fn lookup_into(&self, token: &str, out: &mut [f64]) -> bool {
        debug_assert_eq!(out.len(), self.dim);
        if token == PAD_TOKEN {
            out.fill(0.0);
            return false;
        }
        let found = self
            .get(token)
            .or_else(|| self.get(&capitalize(token)))
            .or_else(|| self.get(&token.to_uppercase()));
        match found {
            Some(v) => {
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = f64::from(x);
                }
            }
            None => self.oov_vector(token, out),
        }
        true
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.lookup_into(token, &mut v);
        v
    }

    fn oov_vector(&self, token: &str, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.oov_seed);
        for o in out.iter_mut() {
            *o = rng.gen_range(-OOV_RANGE..OOV_RANGE);
        }
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (word, vec) in self.iter() {
            write!(w, "{word} ")?;
            for &x in vec {
                w.write_f32::<LittleEndian>(x)?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        for (word, vec) in self.iter() {
            write!(w, "{word}")?;
            for x in vec {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let (count, dim) = parse_header(&header).ok_or_else(|| Error::format(format!("bad header `{}`", header.trim())))?;
        let mut table = EmbeddingTable::empty(dim, 0);
        let mut vec = vec![0f32; dim];
        for n in 0..count {
            let mut word = Vec::new();
            r.read_until(b' ', &mut word)?;
            if word.pop() != Some(b' ') {
                return Err(Error::format(format!("header promises {count} entries, data ends after {n}")));
            }
            let word = String::from_utf8(word).map_err(|_| Error::format(format!("entry {n} is not UTF-8")))?;
            // word2vec writers separate entries with a newline
            let word = word.trim_start_matches('\n');
            for x in vec.iter_mut() {
                *x = r
                    .read_f32::<LittleEndian>()
                    .map_err(|_| Error::format(format!("truncated vector for `{word}`; header dim is {dim}")))?;
            }
            table.insert(word, &vec)?;
        }
        Ok(table)
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut header: Option<(usize, usize)> = None;
        let mut entries = 0usize;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if n == 0 {
                if let Some(h) = parse_header(&line) {
                    header = Some(h);
                    table = Some(EmbeddingTable::empty(h.1, 0));
                    continue;
                }
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default();
            let vec: Vec<f32> = parts
                .map(|p| p.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("non-numeric component for `{word}`"),
                })?;
            let t = table.get_or_insert_with(|| EmbeddingTable::empty(vec.len(), 0));
            if vec.len() != t.dim {
                return Err(Error::format(format!(
                    "line {}: `{word}` has {} components, expected {}",
                    n + 1,
                    vec.len(),
                    t.dim
                )));
            }
            t.insert(word, &vec)?;
            entries += 1;
        }
        if let Some((count, _)) = header {
            if count != entries {
                return Err(Error::format(format!("header promises {count} entries, found {entries}")));
            }
        }
        table.ok_or_else(|| Error::format("embedding file is empty"))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let count = it.next()?.parse().ok()?;
    let dim = it.next()?.parse().ok()?;
    it.next().is_none().then_some((count, dim))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// 64-bit FNV-1a, used to derive stable per-token OOV seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Loads a table, checking its dimensionality against `expected_dim`.
pub fn load_embeddings(path: &Path, expected_dim: usize, oov_seed: u64) -> Result<EmbeddingTable> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let table = match EmbeddingFormat::detect(path) {
        EmbeddingFormat::Binary => EmbeddingTable::read_binary(&mut reader)?,
        EmbeddingFormat::Text => EmbeddingTable::read_text(reader)?,
    };
    if table.dim != expected_dim {
        return Err(Error::config(format!(
            "{} has dimension {}, configuration expects {expected_dim}",
            path.display(),
            table.dim
        )));
    }
    Ok(table.with_oov_seed(oov_seed))
}

pub fn save_binary(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    table.write_binary(&mut w)?;
    w.flush()?;
    Ok(())
}
