//! Corpus ingestion: line-delimited API and mashup records, description
//! normalization, label vocabularies, and seeded train/validation/test splits.
//!
//! Input layout (one JSON object per line):
//! - `apis.jsonl`: `{"name", "description", "categories": [..]}`
//! - `mashups.jsonl`: same fields plus `"called_apis": [api name, ..]`
//! - optional `abbrev.tsv` / `lemma.tsv`: `token<TAB>replacement` rules.
//!
//! Mashups reference APIs by name in the files; dense integer ids are assigned
//! in file order at load time. Records failing validation abort the load.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Web API record: one entry of the recommendation repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebApi {
    /// Dense index in `[0, L)`, assigned in file order.
    pub id: usize,
    pub name: String,
    /// Normalized functional description.
    pub description: String,
    pub categories: BTreeSet<usize>,
}

/// A mashup record: a labeled query whose description doubles as the
/// requirement text, with the set of APIs it actually calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mashup {
    pub id: usize,
    pub name: String,
    pub description: String,
    pub categories: BTreeSet<usize>,
    /// Non-empty; every id indexes the repository.
    pub called_apis: BTreeSet<usize>,
}

/// The loaded dataset: the API repository, the mashup list, and the shared
/// category name table.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub apis: Vec<WebApi>,
    pub mashups: Vec<Mashup>,
    /// Category id -> name; ids are assigned by first appearance.
    pub categories: Vec<String>,
}

/// Mashup lists partitioned for training; the repository is shared.
#[derive(Debug, Clone)]
pub struct SplitCorpus {
    pub train: Vec<Mashup>,
    pub validation: Vec<Mashup>,
    pub test: Vec<Mashup>,
    pub repository: Vec<WebApi>,
    pub category_count: usize,
}

#[derive(Debug, Deserialize)]
struct ApiRecord {
    name: String,
    description: String,
    #[serde(default)]
    categories: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct MashupRecord {
    name: String,
    description: String,
    #[serde(default)]
    categories: Vec<String>,
    called_apis: Vec<String>,
}

/// Text normalization: lowercasing, punctuation isolation, whitespace
/// collapsing, then optional abbreviation replacement and rule-table
/// lemmatization. Idempotent for a fixed rule configuration.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    abbreviations: HashMap<String, String>,
    lemmas: HashMap<String, String>,
}

impl Preprocessor {
    pub fn new(abbreviations: HashMap<String, String>, lemmas: HashMap<String, String>) -> Self {
        // Keys and values are normalized so replacement output re-normalizes
        // to itself, keeping `run` idempotent.
        let norm = |table: HashMap<String, String>| {
            table
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
                .collect()
        };
        Self {
            abbreviations: norm(abbreviations),
            lemmas: norm(lemmas),
        }
    }

    /// Loads a `token<TAB>replacement` table.
    pub fn load_table(path: &Path) -> Result<HashMap<String, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let token = parts.next().unwrap_or_default().trim();
            let replacement = parts
                .next()
                .ok_or_else(|| Error::parse(path, idx + 1, "expected token<TAB>replacement"))?
                .trim();
            if token.is_empty() {
                return Err(Error::parse(path, idx + 1, "empty token"));
            }
            table.insert(token.to_string(), replacement.to_string());
        }
        Ok(table)
    }

    /// Normalizes raw text. Empty input yields empty output.
    pub fn run(&self, raw: &str) -> String {
        let lowered = raw.to_lowercase();
        let mut tokens: Vec<String> = Vec::new();
        let mut current = String::new();
        for ch in lowered.chars() {
            if ch.is_whitespace() {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            } else if ch.is_alphanumeric() {
                current.push(ch);
            } else {
                // Punctuation and symbols become standalone tokens.
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }

        let mapped: Vec<&str> = tokens
            .iter()
            .map(|t| {
                let t = self.abbreviations.get(t).map(String::as_str).unwrap_or(t);
                self.lemmas.get(t).map(String::as_str).unwrap_or(t)
            })
            .collect();
        mapped.join(" ")
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

/// Interns category names in first-appearance order.
#[derive(Default)]
struct CategoryTable {
    names: Vec<String>,
    by_name: HashMap<String, usize>,
}

impl CategoryTable {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        id
    }
}

/// Loads `apis.jsonl` and `mashups.jsonl` from `dir`, applying `abbrev.tsv`
/// and `lemma.tsv` from the same directory when present.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let abbrev_path = dir.join("abbrev.tsv");
    let lemma_path = dir.join("lemma.tsv");
    let abbreviations = if abbrev_path.is_file() {
        Preprocessor::load_table(&abbrev_path)?
    } else {
        HashMap::new()
    };
    let lemmas = if lemma_path.is_file() {
        Preprocessor::load_table(&lemma_path)?
    } else {
        HashMap::new()
    };
    let pre = Preprocessor::new(abbreviations, lemmas);
    load_corpus_with(dir, &pre)
}

/// Loads a corpus using an explicit preprocessor configuration.
pub fn load_corpus_with(dir: &Path, pre: &Preprocessor) -> Result<Corpus> {
    let apis_path = dir.join("apis.jsonl");
    let mashups_path = dir.join("mashups.jsonl");
    let api_records: Vec<ApiRecord> = read_jsonl(&apis_path)?;
    let mashup_records: Vec<MashupRecord> = read_jsonl(&mashups_path)?;

    if api_records.is_empty() {
        return Err(Error::Integrity(format!(
            "empty API repository in {}",
            apis_path.display()
        )));
    }

    let mut categories = CategoryTable::default();
    let mut api_ids: HashMap<String, usize> = HashMap::new();
    let mut apis = Vec::with_capacity(api_records.len());
    for (idx, record) in api_records.into_iter().enumerate() {
        let description = pre.run(&record.description);
        if description.is_empty() {
            return Err(Error::parse(
                &apis_path,
                idx + 1,
                format!("api {:?} has an empty description after normalization", record.name),
            ));
        }
        if api_ids.insert(record.name.clone(), idx).is_some() {
            return Err(Error::parse(
                &apis_path,
                idx + 1,
                format!("duplicate api name {:?}", record.name),
            ));
        }
        let cats = record.categories.iter().map(|c| categories.intern(c)).collect();
        apis.push(WebApi {
            id: idx,
            name: record.name,
            description,
            categories: cats,
        });
    }

    let mut mashups = Vec::with_capacity(mashup_records.len());
    for (idx, record) in mashup_records.into_iter().enumerate() {
        let description = pre.run(&record.description);
        if description.is_empty() {
            return Err(Error::parse(
                &mashups_path,
                idx + 1,
                format!("mashup {:?} has an empty description after normalization", record.name),
            ));
        }
        if record.called_apis.is_empty() {
            return Err(Error::parse(
                &mashups_path,
                idx + 1,
                format!("mashup {:?} calls no APIs", record.name),
            ));
        }
        let mut called = BTreeSet::new();
        for api_name in &record.called_apis {
            let id = api_ids.get(api_name).ok_or_else(|| {
                Error::Integrity(format!(
                    "mashup {:?} ({}:{}) references unknown api {:?}",
                    record.name,
                    mashups_path.display(),
                    idx + 1,
                    api_name
                ))
            })?;
            called.insert(*id);
        }
        let cats = record.categories.iter().map(|c| categories.intern(c)).collect();
        mashups.push(Mashup {
            id: idx,
            name: record.name,
            description,
            categories: cats,
            called_apis: called,
        });
    }

    Ok(Corpus {
        apis,
        mashups,
        categories: categories.names,
    })
}

impl Corpus {
    /// Repository size L.
    pub fn api_count(&self) -> usize {
        self.apis.len()
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    /// Fraction of (mashup, api) pairs that are positive.
    pub fn positive_pair_rate(&self) -> f64 {
        if self.mashups.is_empty() || self.apis.is_empty() {
            return 0.0;
        }
        let positives: usize = self.mashups.iter().map(|m| m.called_apis.len()).sum();
        positives as f64 / (self.mashups.len() * self.apis.len()) as f64
    }

    /// Mean `|called_apis|` over mashups.
    pub fn mean_apis_per_mashup(&self) -> f64 {
        if self.mashups.is_empty() {
            return 0.0;
        }
        let total: usize = self.mashups.iter().map(|m| m.called_apis.len()).sum();
        total as f64 / self.mashups.len() as f64
    }

    /// Shuffles mashups with a seeded RNG and partitions them. Validation and
    /// test receive `floor(total * r / sum)` mashups each; training takes the
    /// remainder. The repository is never split.
    pub fn split(&self, ratios: [u32; 3], seed: u64) -> Result<SplitCorpus> {
        let total = self.mashups.len();
        let ratio_sum: u64 = ratios.iter().map(|&r| u64::from(r)).sum();
        if ratio_sum == 0 {
            return Err(Error::Config("split ratios sum to zero".into()));
        }
        if total == 0 {
            return Err(Error::Config("cannot split an empty mashup list".into()));
        }

        let mut shuffled = self.mashups.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);

        let val_size = (total as u64 * u64::from(ratios[1]) / ratio_sum) as usize;
        let test_size = (total as u64 * u64::from(ratios[2]) / ratio_sum) as usize;
        let train_size = total - val_size - test_size;

        let sizes = [train_size, val_size, test_size];
        if total as u64 >= ratio_sum {
            for (size, ratio) in sizes.iter().zip(ratios) {
                if *size == 0 && ratio > 0 {
                    return Err(Error::Config(format!(
                        "split produced an empty partition for ratios {ratios:?} over {total} mashups"
                    )));
                }
            }
        }

        let mut iter = shuffled.into_iter();
        let train: Vec<Mashup> = iter.by_ref().take(train_size).collect();
        let validation: Vec<Mashup> = iter.by_ref().take(val_size).collect();
        let test: Vec<Mashup> = iter.collect();

        Ok(SplitCorpus {
            train,
            validation,
            test,
            repository: self.apis.clone(),
            category_count: self.categories.len(),
        })
    }
}

impl SplitCorpus {
    pub fn api_count(&self) -> usize {
        self.repository.len()
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "apis\t{}", self.apis.len())?;
        writeln!(f, "mashups\t{}", self.mashups.len())?;
        writeln!(f, "categories\t{}", self.categories.len())?;
        writeln!(f, "apis_per_mashup\t{:.3}", self.mean_apis_per_mashup())?;
        let cats_per_mashup: usize = self.mashups.iter().map(|m| m.categories.len()).sum();
        let cats_per_api: usize = self.apis.iter().map(|a| a.categories.len()).sum();
        let words = |d: &str| d.split_whitespace().count();
        let mashup_words: usize = self.mashups.iter().map(|m| words(&m.description)).sum();
        let api_words: usize = self.apis.iter().map(|a| words(&a.description)).sum();
        if !self.mashups.is_empty() {
            writeln!(
                f,
                "categories_per_mashup\t{:.3}",
                cats_per_mashup as f64 / self.mashups.len() as f64
            )?;
            writeln!(
                f,
                "words_per_mashup_description\t{:.3}",
                mashup_words as f64 / self.mashups.len() as f64
            )?;
        }
        writeln!(
            f,
            "categories_per_api\t{:.3}",
            cats_per_api as f64 / self.apis.len() as f64
        )?;
        writeln!(
            f,
            "words_per_api_description\t{:.3}",
            api_words as f64 / self.apis.len() as f64
        )?;
        write!(f, "positive_pair_rate\t{:.6}", self.positive_pair_rate())
    }
}

/// Manifest of a split, written by the ingest command so later stages can
/// reproduce the exact partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [u32; 3],
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    pub fn from_split(split: &SplitCorpus, ratios: [u32; 3], seed: u64) -> Self {
        let ids = |ms: &[Mashup]| ms.iter().map(|m| m.id).collect();
        Self {
            seed,
            ratios,
            train: ids(&split.train),
            validation: ids(&split.validation),
            test: ids(&split.test),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, 1, e.to_string()))
    }

    /// Rebuilds a [`SplitCorpus`] from recorded mashup ids.
    pub fn apply(&self, corpus: &Corpus) -> Result<SplitCorpus> {
        let pick = |ids: &[usize]| -> Result<Vec<Mashup>> {
            ids.iter()
                .map(|&id| {
                    corpus
                        .mashups
                        .get(id)
                        .cloned()
                        .ok_or_else(|| Error::Integrity(format!("manifest references unknown mashup id {id}")))
                })
                .collect()
        };
        Ok(SplitCorpus {
            train: pick(&self.train)?,
            validation: pick(&self.validation)?,
            test: pick(&self.test)?,
            repository: corpus.apis.clone(),
            category_count: corpus.categories.len(),
        })
    }

    pub fn default_path(dir: &Path) -> PathBuf {
        dir.join("split_manifest.json")
    }
}
