//! Speech corpus ingestion, party labeling, and topic selection.
//!
//! Speeches come from JSONL or TSV exports of a parliamentary corpus (one
//! record per utterance). Party positions are read from a small TSV registry
//! and collapsed to a binary [`Leaning`]. Topic selection keeps a speech when
//! any lexicon lemma occurs in its lemma sequence.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate speech id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: duplicate party id `{id}`")]
    DuplicateParty { line: usize, id: String },
    #[error("line {line}: keyword `{entry}` has more than one lemma; keywords must be single lemmas")]
    MultiwordKeyword { line: usize, entry: String },
    #[error("keyword lexicon {0} is empty")]
    EmptyLexicon(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    #[serde(alias = "MP", alias = "Mp")]
    Mp,
    #[serde(alias = "Chair")]
    Chair,
    #[serde(alias = "Guest")]
    Guest,
}

impl FromStr for SpeakerRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mp" => Ok(Self::Mp),
            "chair" => Ok(Self::Chair),
            "guest" => Ok(Self::Guest),
            other => Err(format!("unknown speaker role `{other}` (expected mp, chair or guest)")),
        }
    }
}

/// One transcribed utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Speech {
    pub id: String,
    pub speaker_id: String,
    pub role: SpeakerRole,
    /// Empty for speakers without a party (typically guests).
    pub party_id: String,
    pub date: Option<NaiveDate>,
    pub text: String,
    pub lemmas: Vec<String>,
    pub word_count: usize,
    /// Set when the record had no lemma annotation and `lemmas` was derived
    /// from lowercased whitespace tokens of `text`.
    pub lemmas_derived: bool,
}

/// Wire form of a speech record shared by the JSONL reader and writer.
#[derive(Debug, Serialize, Deserialize)]
struct SpeechRecord {
    id: String,
    #[serde(default)]
    speaker_id: String,
    role: SpeakerRole,
    #[serde(default)]
    party: String,
    #[serde(default)]
    date: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lemmas: Option<Vec<String>>,
}

impl SpeechRecord {
    fn into_speech(self) -> std::result::Result<Speech, String> {
        let date = match self.date.trim() {
            "" => None,
            d => Some(
                NaiveDate::parse_from_str(d, "%Y-%m-%d")
                    .map_err(|e| format!("invalid date `{d}`: {e}"))?,
            ),
        };
        if self.id.trim().is_empty() {
            return Err("empty `id`".into());
        }
        let (lemmas, lemmas_derived) = match self.lemmas {
            Some(l) if !l.is_empty() => (l.into_iter().map(|s| s.to_lowercase()).collect(), false),
            _ => (fallback_lemmas(&self.text), true),
        };
        Ok(Speech {
            word_count: lemmas.len(),
            id: self.id,
            speaker_id: self.speaker_id,
            role: self.role,
            party_id: self.party,
            date,
            text: self.text,
            lemmas,
            lemmas_derived,
        })
    }

    fn from_speech(s: &Speech) -> Self {
        Self {
            id: s.id.clone(),
            speaker_id: s.speaker_id.clone(),
            role: s.role,
            party: s.party_id.clone(),
            date: s.date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
            text: s.text.clone(),
            lemmas: (!s.lemmas_derived && !s.lemmas.is_empty()).then(|| s.lemmas.clone()),
        }
    }
}

/// Lowercased whitespace tokens, used when a record has no lemma annotation.
pub fn fallback_lemmas(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeechFormat {
    Jsonl,
    Tsv,
}

impl FromStr for SpeechFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Self::Jsonl),
            "tsv" => Ok(Self::Tsv),
            other => Err(format!("unknown speech format `{other}`")),
        }
    }
}

pub fn parse_speeches(path: &Path, format: SpeechFormat) -> Result<Vec<Speech>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    match format {
        SpeechFormat::Jsonl => read_speeches_jsonl(file),
        SpeechFormat::Tsv => read_speeches_tsv(file),
    }
}

fn check_unique(seen: &mut HashSet<String>, id: &str, line: usize) -> Result<()> {
    if !seen.insert(id.to_string()) {
        return Err(CorpusError::DuplicateId {
            line,
            id: id.to_string(),
        });
    }
    Ok(())
}

/// Reads one JSON speech object per line. Blank lines are skipped but still
/// counted for error positions.
pub fn read_speeches_jsonl<R: Read>(reader: R) -> Result<Vec<Speech>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SpeechRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
        let speech = record.into_speech().map_err(|reason| CorpusError::Malformed {
            line: line_no,
            reason,
        })?;
        check_unique(&mut seen, &speech.id, line_no)?;
        out.push(speech);
    }
    Ok(out)
}

/// Reads a tab-separated export with a header row naming at least `id`,
/// `role` and `text`; `speaker_id`, `party`, `date` and `lemmas`
/// (space-separated) are optional columns.
pub fn read_speeches_tsv<R: Read>(reader: R) -> Result<Vec<Speech>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| CorpusError::Malformed {
            line: 1,
            reason: format!("missing column `{name}` in header"),
        })
    };
    let (id_col, role_col, text_col) = (required("id")?, required("role")?, required("text")?);
    let (speaker_col, party_col, date_col, lemma_col) =
        (col("speaker_id"), col("party"), col("date"), col("lemmas"));

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        // header occupies line 1
        let line_no = i + 2;
        let row = row.map_err(|e| CorpusError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).unwrap_or("").to_string();
        let role = row[role_col]
            .parse::<SpeakerRole>()
            .map_err(|reason| CorpusError::Malformed {
                line: line_no,
                reason,
            })?;
        let lemmas = get(lemma_col);
        let record = SpeechRecord {
            id: row[id_col].to_string(),
            speaker_id: get(speaker_col),
            role,
            party: get(party_col),
            date: get(date_col),
            text: row[text_col].to_string(),
            lemmas: (!lemmas.trim().is_empty())
                .then(|| lemmas.split_whitespace().map(String::from).collect()),
        };
        let speech = record.into_speech().map_err(|reason| CorpusError::Malformed {
            line: line_no,
            reason,
        })?;
        check_unique(&mut seen, &speech.id, line_no)?;
        out.push(speech);
    }
    Ok(out)
}

/// Writes speeches as JSONL. Derived lemma sequences are not written, so a
/// re-read reproduces the same fallback.
pub fn write_speeches_jsonl<W: Write>(speeches: &[Speech], mut w: W) -> std::io::Result<()> {
    for s in speeches {
        serde_json::to_writer(&mut w, &SpeechRecord::from_speech(s))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoliticalPosition {
    FarLeft,
    Left,
    CenterLeft,
    Center,
    CenterRight,
    Right,
    FarRight,
    Unknown,
}

impl PoliticalPosition {
    /// Center and Unknown carry no leaning.
    pub fn leaning(self) -> Option<Leaning> {
        match self {
            Self::FarLeft | Self::Left | Self::CenterLeft => Some(Leaning::Left),
            Self::FarRight | Self::Right | Self::CenterRight => Some(Leaning::Right),
            Self::Center | Self::Unknown => None,
        }
    }
}

impl FromStr for PoliticalPosition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "farleft" => Self::FarLeft,
            "left" => Self::Left,
            "centerleft" | "centreleft" => Self::CenterLeft,
            "center" | "centre" => Self::Center,
            "centerright" | "centreright" => Self::CenterRight,
            "right" => Self::Right,
            "farright" => Self::FarRight,
            "unknown" => Self::Unknown,
            _ => return Err(format!("unknown political position `{s}`")),
        })
    }
}

/// Binary classification target. Encoded as −1 (left) and +1 (right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leaning {
    Left,
    Right,
}

impl Leaning {
    pub fn sign(self) -> f64 {
        match self {
            Self::Left => -1.0,
            Self::Right => 1.0,
        }
    }

    /// Positive values map to `Right`; zero and negative values to `Left`.
    pub fn from_decision(value: f64) -> Self {
        if value > 0.0 {
            Self::Right
        } else {
            Self::Left
        }
    }
}

impl fmt::Display for Leaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Left => "left",
            Self::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyInfo {
    pub name: String,
    pub abbreviation: String,
    pub position: PoliticalPosition,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyRegistry {
    pub entries: BTreeMap<String, PartyInfo>,
}

impl PartyRegistry {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        Self::read_tsv(file)
    }

    /// Columns: `party_id`, `name`, `abbreviation`, `position`.
    pub fn read_tsv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            party_id: String,
            name: String,
            abbreviation: String,
            position: String,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .from_reader(reader);
        let mut entries = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| CorpusError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            let position = row
                .position
                .parse()
                .map_err(|reason| CorpusError::Malformed { line, reason })?;
            let id = row.party_id.trim().to_string();
            if entries.contains_key(&id) {
                return Err(CorpusError::DuplicateParty { line, id });
            }
            entries.insert(
                id,
                PartyInfo {
                    name: row.name,
                    abbreviation: row.abbreviation,
                    position,
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn position(&self, party_id: &str) -> PoliticalPosition {
        self.entries
            .get(party_id)
            .map_or(PoliticalPosition::Unknown, |p| p.position)
    }
}

/// Set of single-lemma topic keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordLexicon {
    pub entries: BTreeSet<String>,
    pub source_path: String,
}

impl KeywordLexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// One lemma per line; `#` starts a comment, blank lines are ignored.
    /// Entries are lowercased and deduplicated.
    pub fn parse(text: &str, source_path: &str) -> Result<Self> {
        let entries = parse_lemma_list(text)?;
        if entries.is_empty() {
            return Err(CorpusError::EmptyLexicon(source_path.to_string()));
        }
        Ok(Self {
            entries,
            source_path: source_path.to_string(),
        })
    }

    pub fn from_lemmas<I, S>(lemmas: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let text = lemmas
            .into_iter()
            .map(|s| s.as_ref().to_string())
            .collect::<Vec<_>>()
            .join("\n");
        Self::parse(&text, "<inline>")
    }

    /// File stem of the source, used to tag dataset provenance.
    pub fn id(&self) -> String {
        Path::new(&self.source_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.source_path.clone())
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            entries: self.entries.union(&other.entries).cloned().collect(),
            source_path: format!("{}+{}", self.source_path, other.source_path),
        }
    }
}

/// Shared grammar of keyword and stopword files.
pub fn parse_lemma_list(text: &str) -> Result<BTreeSet<String>> {
    let mut entries = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.split_whitespace().count() > 1 {
            return Err(CorpusError::MultiwordKeyword {
                line: i + 1,
                entry: content.to_string(),
            });
        }
        entries.insert(content.to_lowercase());
    }
    Ok(entries)
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_lemma_list(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSpeech {
    pub speech: SpeechView,
    pub leaning: Leaning,
}

/// Serializable copy of the speech fields the downstream stages use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechView {
    pub id: String,
    pub speaker_id: String,
    pub party_id: String,
    pub lemmas: Vec<String>,
    pub word_count: usize,
    pub lemmas_derived: bool,
}

impl From<&Speech> for SpeechView {
    fn from(s: &Speech) -> Self {
        Self {
            id: s.id.clone(),
            speaker_id: s.speaker_id.clone(),
            party_id: s.party_id.clone(),
            lemmas: s.lemmas.clone(),
            word_count: s.word_count,
            lemmas_derived: s.lemmas_derived,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mp_filter: bool,
    pub lexicon_id: Option<String>,
    pub dropped_non_mp: usize,
    pub dropped_center: usize,
    pub dropped_unknown: usize,
    pub dropped_off_topic: usize,
    pub lemma_fallback: usize,
    /// Selected-speech count per keyword, present after topic selection.
    pub per_keyword_counts: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub speeches: Vec<LabeledSpeech>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.speeches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeches.is_empty()
    }

    pub fn labels(&self) -> Vec<Leaning> {
        self.speeches.iter().map(|s| s.leaning).collect()
    }

    pub fn documents(&self) -> Vec<&[String]> {
        self.speeches.iter().map(|s| s.speech.lemmas.as_slice()).collect()
    }

    /// Dataset restricted to the given positions, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            speeches: indices.iter().map(|&i| self.speeches[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

pub fn filter_mps(speeches: &[Speech]) -> Vec<Speech> {
    speeches
        .iter()
        .filter(|s| s.role == SpeakerRole::Mp)
        .cloned()
        .collect()
}

/// Attaches leanings from the registry. Non-MP speeches and speeches whose
/// party has no leaning (Center, Unknown, unregistered) are dropped and
/// counted.
pub fn assign_leanings(speeches: &[Speech], registry: &PartyRegistry) -> LabeledDataset {
    let mut prov = Provenance {
        mp_filter: true,
        ..Provenance::default()
    };
    let mut kept = Vec::new();
    for s in speeches {
        if s.role != SpeakerRole::Mp {
            prov.dropped_non_mp += 1;
            continue;
        }
        let position = registry.position(&s.party_id);
        match position.leaning() {
            Some(leaning) => {
                if s.lemmas_derived {
                    prov.lemma_fallback += 1;
                }
                kept.push(LabeledSpeech {
                    speech: s.into(),
                    leaning,
                });
            }
            None if position == PoliticalPosition::Center => prov.dropped_center += 1,
            None => prov.dropped_unknown += 1,
        }
    }
    LabeledDataset {
        speeches: kept,
        provenance: prov,
    }
}

/// Keeps speeches containing at least one lexicon lemma. Every keyword a
/// selected speech contains is counted once for that speech.
pub fn select_by_topic(
    dataset: &LabeledDataset,
    lexicon: &KeywordLexicon,
) -> Result<(LabeledDataset, BTreeMap<String, usize>)> {
    if lexicon.entries.is_empty() {
        return Err(CorpusError::EmptyLexicon(lexicon.source_path.clone()));
    }
    let mut counts: BTreeMap<String, usize> =
        lexicon.entries.iter().map(|k| (k.clone(), 0)).collect();
    let mut kept = Vec::new();
    for ls in &dataset.speeches {
        let present: BTreeSet<&str> = ls
            .speech
            .lemmas
            .iter()
            .map(String::as_str)
            .filter(|l| lexicon.entries.contains(*l))
            .collect();
        if present.is_empty() {
            continue;
        }
        for k in present {
            *counts.get_mut(k).expect("keyword from lexicon") += 1;
        }
        kept.push(ls.clone());
    }
    let mut provenance = dataset.provenance.clone();
    provenance.dropped_off_topic += dataset.len() - kept.len();
    provenance.lexicon_id = Some(lexicon.id());
    provenance.per_keyword_counts = Some(counts.clone());
    Ok((
        LabeledDataset {
            speeches: kept,
            provenance,
        },
        counts,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_parties: usize,
    pub n_speakers_total: usize,
    pub n_speakers_left: usize,
    pub n_speakers_right: usize,
    pub n_speeches_total: usize,
    pub n_speeches_left: usize,
    pub n_speeches_right: usize,
    pub share_left: f64,
    pub share_right: f64,
    /// Average words per speech.
    pub avg_words_per_speech: f64,
    /// Median speeches per speaker.
    pub median_speeches_per_speaker: f64,
    pub per_keyword_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(dataset: &LabeledDataset) -> Result<CorpusStats> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut parties = BTreeSet::new();
    let mut per_speaker: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut speakers_left, mut speakers_right) = (BTreeSet::new(), BTreeSet::new());
    let (mut n_left, mut n_right, mut words) = (0usize, 0usize, 0usize);
    for ls in &dataset.speeches {
        let s = &ls.speech;
        if !s.party_id.is_empty() {
            parties.insert(s.party_id.as_str());
        }
        *per_speaker.entry(s.speaker_id.as_str()).or_default() += 1;
        words += s.word_count;
        match ls.leaning {
            Leaning::Left => {
                n_left += 1;
                speakers_left.insert(s.speaker_id.as_str());
            }
            Leaning::Right => {
                n_right += 1;
                speakers_right.insert(s.speaker_id.as_str());
            }
        }
    }
    let n = dataset.len();
    let counts: Vec<f64> = per_speaker.values().map(|&c| c as f64).collect();
    Ok(CorpusStats {
        n_parties: parties.len(),
        n_speakers_total: per_speaker.len(),
        n_speakers_left: speakers_left.len(),
        n_speakers_right: speakers_right.len(),
        n_speeches_total: n,
        n_speeches_left: n_left,
        n_speeches_right: n_right,
        share_left: n_left as f64 / n as f64,
        share_right: n_right as f64 / n as f64,
        avg_words_per_speech: words as f64 / n as f64,
        median_speeches_per_speaker: median(&counts),
        per_keyword_counts: dataset.provenance.per_keyword_counts.clone().unwrap_or_default(),
    })
}

/// Median; for even lengths the mean of the two middle values. NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

/// Per-keyword share of the summed matched-speech counts.
pub fn keyword_shares(counts: &BTreeMap<String, usize>) -> Vec<(String, f64)> {
    let total: usize = counts.values().sum();
    counts
        .iter()
        .map(|(k, &c)| {
            let share = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            (k.clone(), share)
        })
        .collect()
}
