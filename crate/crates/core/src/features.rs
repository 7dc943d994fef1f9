//! Lemma n-gram vocabularies and TF-IDF weighting.
//!
//! Stopwords are removed before n-grams are formed and a removed position
//! breaks adjacency, so no n-gram ever bridges a stopword. Document
//! frequencies count each document at most once per term.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::SparseVector;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("no documents to fit")]
    NoDocuments,
    #[error("invalid n-gram range {0}: need 1 <= lo <= hi <= 3")]
    InvalidNgramRange(NgramRange),
    #[error("max_df fraction {0} outside (0, 1]")]
    InvalidMaxDf(f64),
    #[error(
        "vocabulary is empty after filtering ({n_candidates} candidate terms, min_df={min_df}, \
         max_df={max_df_frac}); relax the document-frequency thresholds"
    )]
    EmptyVocabulary {
        n_candidates: usize,
        min_df: usize,
        max_df_frac: f64,
    },
}

/// Inclusive n-gram order range, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NgramRange(pub usize, pub usize);

impl NgramRange {
    pub const UNIGRAMS: Self = Self(1, 1);

    pub fn lo(self) -> usize {
        self.0
    }

    pub fn hi(self) -> usize {
        self.1
    }

    pub fn validate(self) -> Result<(), FeatureError> {
        if self.0 >= 1 && self.0 <= self.1 && self.1 <= 3 {
            Ok(())
        } else {
            Err(FeatureError::InvalidNgramRange(self))
        }
    }

    /// Ordering used for "smaller range first" tie breaks: by highest order,
    /// then lowest order.
    pub fn size_key(self) -> (usize, usize) {
        (self.1, self.0)
    }

    /// Human label in the style `1, 2, 3-grams`.
    pub fn label(self) -> String {
        let orders: Vec<String> = (self.0..=self.1).map(|n| n.to_string()).collect();
        format!("{}-grams", orders.join(", "))
    }
}

impl fmt::Display for NgramRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl FromStr for NgramRange {
    type Err = String;

    /// Accepts `N` or `LO-HI`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid n-gram range `{s}`"))
        };
        let range = match s.split_once(['-', ',']) {
            Some((lo, hi)) => Self(parse(lo)?, parse(hi)?),
            None => {
                let n = parse(s)?;
                Self(n, n)
            }
        };
        range.validate().map_err(|e| e.to_string())?;
        Ok(range)
    }
}

/// Which terms the `max_df` ceiling applies to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxDfScope {
    #[default]
    AllTerms,
    UnigramsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub ngram_range: NgramRange,
    pub stopwords: BTreeSet<String>,
    pub min_df: usize,
    pub max_df_frac: f64,
    #[serde(default)]
    pub max_df_scope: MaxDfScope,
    #[serde(default = "default_true")]
    pub l2_normalize: bool,
}

fn default_true() -> bool {
    true
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            ngram_range: NgramRange::UNIGRAMS,
            stopwords: BTreeSet::new(),
            min_df: 5,
            max_df_frac: 0.35,
            max_df_scope: MaxDfScope::AllTerms,
            l2_normalize: true,
        }
    }
}

impl VectorizerConfig {
    /// Largest admissible document frequency for `n_docs` documents.
    pub fn max_df_abs(&self, n_docs: usize) -> usize {
        // guard against 0.35 * 400 landing just below 140
        (self.max_df_frac * n_docs as f64 + 1e-9).floor() as usize
    }
}

/// All n-gram occurrences of `doc` (with repetition), lemmas joined by a
/// single space.
pub fn extract_terms(doc: &[String], range: NgramRange, stopwords: &BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::new();
    for run in doc.split(|lemma| stopwords.contains(lemma)) {
        for n in range.lo()..=range.hi() {
            if n > run.len() {
                break;
            }
            out.extend(run.windows(n).map(|w| w.join(" ")));
        }
    }
    out
}

/// Term → column map with document frequencies. Columns follow
/// lexicographic term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs_fitted: usize,
    config: VectorizerConfig,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs_fitted: usize,
    config: VectorizerConfig,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            terms: r.terms,
            doc_freq: r.doc_freq,
            n_docs_fitted: r.n_docs_fitted,
            config: r.config,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            doc_freq: v.doc_freq,
            n_docs_fitted: v.n_docs_fitted,
            config: v.config,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn n_docs_fitted(&self) -> usize {
        self.n_docs_fitted
    }

    pub fn config(&self) -> &VectorizerConfig {
        &self.config
    }

    /// Raw in-vocabulary term counts of one document, by column.
    pub fn count(&self, doc: &[String]) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for term in extract_terms(doc, self.config.ngram_range, &self.config.stopwords) {
            if let Some(&i) = self.index.get(&term) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        counts
    }
}

pub fn build_vocabulary<D: AsRef<[String]>>(
    docs: &[D],
    config: &VectorizerConfig,
) -> Result<Vocabulary, FeatureError> {
    if docs.is_empty() {
        return Err(FeatureError::NoDocuments);
    }
    config.ngram_range.validate()?;
    if !(config.max_df_frac > 0.0 && config.max_df_frac <= 1.0) {
        return Err(FeatureError::InvalidMaxDf(config.max_df_frac));
    }

    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let unique: HashSet<String> =
            extract_terms(doc.as_ref(), config.ngram_range, &config.stopwords)
                .into_iter()
                .collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }

    let n_candidates = df.len();
    let max_df = config.max_df_abs(docs.len());
    let capped = |term: &str| match config.max_df_scope {
        MaxDfScope::AllTerms => true,
        MaxDfScope::UnigramsOnly => !term.contains(' '),
    };
    let (terms, doc_freq): (Vec<String>, Vec<usize>) = df
        .into_iter()
        .filter(|(term, d)| *d >= config.min_df && (!capped(term) || *d <= max_df))
        .unzip();
    if terms.is_empty() {
        return Err(FeatureError::EmptyVocabulary {
            n_candidates,
            min_df: config.min_df,
            max_df_frac: config.max_df_frac,
        });
    }
    Ok(VocabularyRepr {
        terms,
        doc_freq,
        n_docs_fitted: docs.len(),
        config: config.clone(),
    }
    .into())
}

/// Fitted TF-IDF weighting over a vocabulary.
///
/// `idf[t] = ln((1 + n_docs) / (1 + df[t])) + 1`, tf is the raw count, and
/// vectors are scaled to unit Euclidean norm when `l2_normalize` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub l2_normalize: bool,
}

impl TfidfModel {
    pub fn fit(vocabulary: Vocabulary) -> Self {
        let n = vocabulary.n_docs_fitted() as f64;
        let idf = vocabulary
            .doc_freq()
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let l2_normalize = vocabulary.config().l2_normalize;
        Self {
            vocabulary,
            idf,
            l2_normalize,
        }
    }

    pub fn dims(&self) -> usize {
        self.idf.len()
    }

    /// Out-of-vocabulary terms are ignored; an empty result is the zero vector.
    pub fn transform(&self, doc: &[String]) -> SparseVector {
        let counts = self.vocabulary.count(doc);
        let (indices, mut values): (Vec<usize>, Vec<f64>) = counts
            .into_iter()
            .map(|(i, c)| (i, c as f64 * self.idf[i]))
            .unzip();
        if self.l2_normalize {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SparseVector::new(self.dims(), indices, values).expect("counts are sorted and in range")
    }

    pub fn transform_all<D: AsRef<[String]>>(&self, docs: &[D]) -> Vec<SparseVector> {
        docs.iter().map(|d| self.transform(d.as_ref())).collect()
    }
}

pub fn fit_transform<D: AsRef<[String]>>(
    docs: &[D],
    vocabulary: Vocabulary,
) -> (TfidfModel, Vec<SparseVector>) {
    let model = TfidfModel::fit(vocabulary);
    let vectors = model.transform_all(docs);
    (model, vectors)
}

/// Builds the vocabulary and fits TF-IDF in one step.
pub fn fit_vectorizer<D: AsRef<[String]>>(
    docs: &[D],
    config: &VectorizerConfig,
) -> Result<(TfidfModel, Vec<SparseVector>), FeatureError> {
    Ok(fit_transform(docs, build_vocabulary(docs, config)?))
}
