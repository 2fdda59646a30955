//! Labelled corpora: JSONL persistence, deterministic splits, statistics,
//! source-dataset converters and the image-retrieval helpers used to
//! assemble a visual test set for manual review.

mod fetch;
mod ingest;
mod search;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::Label;
use crate::embedding::Modality;

pub use fetch::{fetch_images, write_review_manifest, FetchFailure, FetchOptions, FetchReport, PendingImage};
pub use ingest::{from_hate_speech_csv, from_redcaps_annotations, from_review_manifest, IngestReport};
pub use search::{GoogleImageSearch, ImageSearch, QueryKind, SearchHit, StubImageSearch};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("search endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("search quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One corpus item. Text items carry cleaned text, image items a path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub label: Label,
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default)]
    pub source: String,
}

impl LabeledExample {
    pub fn text(id: impl Into<String>, text: impl Into<String>, label: Label, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            modality: Modality::Text,
            text: Some(text.into()),
            image_path: None,
            label,
            synthetic: false,
            source: source.into(),
        }
    }

    pub fn image(id: impl Into<String>, path: impl Into<String>, label: Label, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            modality: Modality::Image,
            text: None,
            image_path: Some(path.into()),
            label,
            synthetic: false,
            source: source.into(),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.label > 1 {
            return Err(format!("label {} is not 0 or 1", self.label));
        }
        match (self.modality, &self.text, &self.image_path) {
            (Modality::Text, Some(_), None) | (Modality::Image, None, Some(_)) => Ok(()),
            (Modality::Text, _, _) => Err("text record needs `text` and no `image_path`".into()),
            (Modality::Image, _, _) => Err("image record needs `image_path` and no `text`".into()),
        }
    }
}

/// An ordered set of examples with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    examples: Vec<LabeledExample>,
}

impl Corpus {
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            ex.check().map_err(|message| CorpusError::Schema { line: i + 1, message })?;
            if !seen.insert(ex.id.as_str()) {
                return Err(CorpusError::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Self { examples })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledExample> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus { examples: indices.iter().map(|&i| self.examples[i].clone()).collect() }
    }

    pub fn stats(&self) -> CorpusStats {
        let mut s = CorpusStats { total: self.len() as u64, ..Default::default() };
        for e in &self.examples {
            match e.label {
                0 => s.label_0 += 1,
                _ => s.label_1 += 1,
            }
            match e.modality {
                Modality::Text => s.text += 1,
                Modality::Image => s.image += 1,
            }
            s.synthetic += e.synthetic as u64;
        }
        s
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a LabeledExample;
    type IntoIter = std::slice::Iter<'a, LabeledExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: u64,
    pub label_0: u64,
    pub label_1: u64,
    pub text: u64,
    pub image: u64,
    pub synthetic: u64,
}

/// Parses corpus JSONL. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema { line: i + 1, message };
        let ex: LabeledExample = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        ex.check().map_err(schema)?;
        if !seen.insert(ex.id.clone()) {
            return Err(CorpusError::DuplicateId(ex.id));
        }
        examples.push(ex);
    }
    Ok(Corpus { examples })
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(BufReader::new(fs::File::open(path)?))
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for ex in corpus {
        serde_json::to_writer(&mut out, ex).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_corpus(corpus, std::io::BufWriter::new(fs::File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0, stratified: true }
    }
}

fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Train and test index sets, each sorted ascending. Stratified splits
/// shuffle each class separately and take `round(fraction * n_c)` of it,
/// kept within `[1, n_c - 1]`.
pub fn split_indices(labels: &[Label], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CorpusError::InvalidSpec(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        (0..=1u8).map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect()).collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(CorpusError::InvalidInput(format!("label {bad} is not 0 or 1")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut g) in groups.into_iter().enumerate() {
        if g.len() < 2 {
            return Err(CorpusError::TooFewExamples(if spec.stratified {
                format!("class {c} has {} examples, stratified split needs 2", g.len())
            } else {
                format!("{} examples, split needs 2", g.len())
            }));
        }
        g.shuffle(&mut rng);
        let t = train_count(g.len(), spec.train_fraction);
        train.extend_from_slice(&g[..t]);
        test.extend_from_slice(&g[t..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits into `(train, test)` corpora, preserving input order within each.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    let (tr, te) = split_indices(&corpus.labels(), spec)?;
    Ok((corpus.select(&tr), corpus.select(&te)))
}
