//! Planted-signal corpus generator for tests and demos.
//!
//! Each class owns a set of marker lemmas. A marker is placed in an exact
//! fraction of its own class's speeches and of the other class's speeches
//! (chosen at random), so its document frequency is fixed and stays under
//! the default `max_df`. Every speech also carries one topic keyword, a
//! few stopwords, and uniformly drawn filler lemmas.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    KeywordLexicon, Leaning, PartyInfo, PartyRegistry, PoliticalPosition, SpeakerRole, Speech,
};

pub const TOPIC_KEYWORD: &str = "migrant";
pub const STOPWORDS: [&str; 4] = ["in", "the", "of", "biti"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub per_class: usize,
    pub n_markers: usize,
    /// Fraction of own-class speeches containing each marker.
    pub p_own: f64,
    /// Fraction of other-class speeches containing each marker.
    pub p_other: f64,
    pub n_filler: usize,
    pub filler_per_speech: usize,
    pub speakers_per_class: usize,
    /// Speeches from a centre party, dropped by labeling.
    pub n_center: usize,
    /// Labeled speeches without the topic keyword.
    pub n_off_topic: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            n_markers: 10,
            p_own: 0.6,
            p_other: 0.05,
            n_filler: 500,
            filler_per_speech: 80,
            speakers_per_class: 20,
            n_center: 0,
            n_off_topic: 0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub speeches: Vec<Speech>,
    pub registry: PartyRegistry,
    pub lexicon: KeywordLexicon,
    pub stopwords: BTreeSet<String>,
    pub left_markers: Vec<String>,
    pub right_markers: Vec<String>,
}

pub fn marker(side: Leaning, i: usize) -> String {
    match side {
        Leaning::Left => format!("levica{i:02}"),
        Leaning::Right => format!("desnica{i:02}"),
    }
}

fn party_registry() -> PartyRegistry {
    let parties = [
        ("PL1", "Left Alliance", "LA", PoliticalPosition::Left),
        ("PL2", "Social Democrats", "SD", PoliticalPosition::CenterLeft),
        ("PR1", "National Party", "NP", PoliticalPosition::Right),
        ("PR2", "Christian Democrats", "CD", PoliticalPosition::CenterRight),
        ("PC", "Centre Party", "CP", PoliticalPosition::Center),
    ];
    PartyRegistry {
        entries: parties
            .into_iter()
            .map(|(id, name, abbr, position)| {
                (
                    id.to_string(),
                    PartyInfo {
                        name: name.into(),
                        abbreviation: abbr.into(),
                        position,
                    },
                )
            })
            .collect(),
    }
}

/// Indices of exactly `round(frac·n)` members chosen uniformly.
fn exact_subset(rng: &mut ChaCha8Rng, n: usize, frac: f64) -> Vec<usize> {
    let k = ((frac * n as f64).round() as usize).min(n);
    rand::seq::index::sample(rng, n, k).into_vec()
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let filler: Vec<String> = (0..cfg.n_filler).map(|i| format!("beseda{i:03}")).collect();
    let left_markers: Vec<String> = (0..cfg.n_markers).map(|i| marker(Leaning::Left, i)).collect();
    let right_markers: Vec<String> = (0..cfg.n_markers).map(|i| marker(Leaning::Right, i)).collect();

    // lemma bags per class, before filler
    let mut bags: [Vec<Vec<String>>; 2] = [vec![Vec::new(); cfg.per_class], vec![Vec::new(); cfg.per_class]];
    for (owner, markers) in [(0usize, &left_markers), (1usize, &right_markers)] {
        for m in markers {
            for (class, frac) in [(owner, cfg.p_own), (1 - owner, cfg.p_other)] {
                for d in exact_subset(&mut rng, cfg.per_class, frac) {
                    bags[class][d].push(m.clone());
                }
            }
        }
    }

    let mut speeches = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, id: String, speaker: String, party: &str, mut lemmas: Vec<String>, topic: bool| {
        if topic {
            lemmas.push(TOPIC_KEYWORD.to_string());
        }
        lemmas.extend(STOPWORDS.iter().map(|s| s.to_string()));
        lemmas.extend((0..cfg.filler_per_speech).map(|_| filler[rng.gen_range(0..filler.len())].clone()));
        lemmas.shuffle(rng);
        speeches.push(Speech {
            id,
            speaker_id: speaker,
            role: SpeakerRole::Mp,
            party_id: party.to_string(),
            date: None,
            text: lemmas.join(" "),
            word_count: lemmas.len(),
            lemmas,
            lemmas_derived: false,
        });
    };

    for (class, (prefix, parties)) in [("L", ["PL1", "PL2"]), ("R", ["PR1", "PR2"])].into_iter().enumerate() {
        for (d, bag) in std::mem::take(&mut bags[class]).into_iter().enumerate() {
            let speaker = rng.gen_range(0..cfg.speakers_per_class);
            push(
                &mut rng,
                format!("{prefix}{d:04}"),
                format!("{prefix}-spk{speaker:02}"),
                parties[speaker % 2],
                bag,
                true,
            );
        }
    }
    for d in 0..cfg.n_center {
        push(&mut rng, format!("C{d:04}"), format!("C-spk{:02}", d % 3), "PC", Vec::new(), true);
    }
    for d in 0..cfg.n_off_topic {
        let party = if d % 2 == 0 { "PL1" } else { "PR1" };
        push(&mut rng, format!("O{d:04}"), format!("O-spk{:02}", d % 4), party, Vec::new(), false);
    }

    SyntheticCorpus {
        speeches,
        registry: party_registry(),
        lexicon: KeywordLexicon {
            entries: [TOPIC_KEYWORD.to_string()].into(),
            source_path: "synthetic/migration.txt".into(),
        },
        stopwords: STOPWORDS.iter().map(|s| s.to_string()).collect(),
        left_markers,
        right_markers,
    }
}

/// Input file locations written by [`SyntheticCorpus::write_inputs`].
#[derive(Debug, Clone)]
pub struct InputFiles {
    pub speeches: PathBuf,
    pub registry: PathBuf,
    pub keywords: PathBuf,
    pub stopwords: PathBuf,
}

impl SyntheticCorpus {
    /// Writes speeches (JSONL), party registry (TSV), keyword lexicon and
    /// stopword list into `dir`.
    pub fn write_inputs(&self, dir: &Path) -> std::io::Result<InputFiles> {
        std::fs::create_dir_all(dir)?;
        let files = InputFiles {
            speeches: dir.join("speeches.jsonl"),
            registry: dir.join("parties.tsv"),
            keywords: dir.join("migration.txt"),
            stopwords: dir.join("stopwords.txt"),
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(&files.speeches)?);
        crate::corpus::write_speeches_jsonl(&self.speeches, &mut w)?;
        w.flush()?;

        let mut reg = String::from("party_id\tname\tabbreviation\tposition\n");
        for (id, p) in &self.registry.entries {
            reg.push_str(&format!("{id}\t{}\t{}\t{:?}\n", p.name, p.abbreviation, p.position));
        }
        std::fs::write(&files.registry, reg)?;

        let mut kw = String::from("# topic keywords\n");
        for k in &self.lexicon.entries {
            kw.push_str(k);
            kw.push('\n');
        }
        std::fs::write(&files.keywords, kw)?;

        let sw: Vec<&str> = self.stopwords.iter().map(String::as_str).collect();
        std::fs::write(&files.stopwords, sw.join("\n") + "\n")?;
        Ok(files)
    }
}
