//! Run configuration, read from TOML. Every threshold has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapConfig;
use crate::cnn::TrainConfig;
use crate::contexts::{ContextBuilder, ContextKind, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::events::{EventExtractor, Lexicon, PatternMode};
use crate::mining::MiningConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    pub mode: PatternMode,
    pub generalize: bool,
    /// Reporting verbs excluded as events; built-in list when unset.
    pub reporting_lexicon: Option<PathBuf>,
    /// Noun events; none are extracted when unset.
    pub noun_lexicon: Option<PathBuf>,
    /// Minimum pattern count when mining the noun lexicon.
    pub noun_min_count: usize,
}

impl Default for EventsConfig {
    fn default() -> Self {
        EventsConfig {
            mode: PatternMode::Collapsed,
            generalize: true,
            reporting_lexicon: None,
            noun_lexicon: None,
            noun_min_count: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingsConfig {
    /// Word-vector file; every token is out of vocabulary when unset.
    pub path: Option<PathBuf>,
    pub dim: usize,
}

impl Default for EmbeddingsConfig {
    fn default() -> Self {
        EmbeddingsConfig { path: None, dim: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextsConfig {
    pub kind: ContextKind,
    pub max_len: usize,
}

impl Default for ContextsConfig {
    fn default() -> Self {
        ContextsConfig {
            kind: ContextKind::Deppath,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub min_confidence: f64,
    pub sample_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_confidence: crate::eval::DEFAULT_MIN_CONFIDENCE,
            sample_size: crate::eval::DEFAULT_SAMPLE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Vec<PathBuf>,
    /// Seeds training, sampling and out-of-vocabulary vectors; overrides
    /// `train.seed`.
    pub seed: u64,
    pub events: EventsConfig,
    pub embeddings: EmbeddingsConfig,
    pub mining: MiningConfig,
    pub contexts: ContextsConfig,
    pub train: TrainConfig,
    pub bootstrap: BootstrapConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: Vec::new(),
            seed: 1,
            events: EventsConfig::default(),
            embeddings: EmbeddingsConfig::default(),
            mining: MiningConfig::default(),
            contexts: ContextsConfig::default(),
            train: TrainConfig::default(),
            bootstrap: BootstrapConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.set_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    /// Reads a TOML file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = RunConfig::parse(&text)?;
        if let Some(base) = path.parent() {
            c.resolve_paths(base);
        }
        Ok(c)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.iter_mut().for_each(fix);
        self.events.reporting_lexicon.iter_mut().for_each(fix);
        self.events.noun_lexicon.iter_mut().for_each(fix);
        self.embeddings.path.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.bootstrap.validate()?;
        if !(0.0..=1.0).contains(&self.mining.dominance) {
            return Err(Error::config("mining.dominance must lie in [0, 1]"));
        }
        if !(self.eval.min_confidence > 0.0 && self.eval.min_confidence <= 1.0) {
            return Err(Error::config("eval.min_confidence must lie in (0, 1]"));
        }
        if self.embeddings.dim == 0 || self.contexts.max_len == 0 {
            return Err(Error::config("embeddings.dim and contexts.max_len must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn extractor(&self) -> Result<EventExtractor> {
        let reporting = match &self.events.reporting_lexicon {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::reporting_default(),
        };
        let nouns = self.events.noun_lexicon.as_deref().map(Lexicon::load).transpose()?;
        Ok(EventExtractor {
            mode: self.events.mode,
            generalize: self.events.generalize,
            reporting,
            nouns,
        })
    }

    pub fn context_builder(&self) -> ContextBuilder {
        ContextBuilder {
            kind: self.contexts.kind,
            max_gap: self.mining.max_gap,
            max_len: self.contexts.max_len,
        }
    }
}
