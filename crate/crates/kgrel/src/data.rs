//! Triple file ingestion, vocabulary construction, split management and
//! relation taxonomies.
//!
//! Datasets are directories holding `train.txt`, `valid.txt` and `test.txt`,
//! each a UTF-8 file of tab-separated `subject\trelation\tobject` lines, plus
//! an optional `taxonomy.tsv` mapping relation labels to one of the letters
//! R, S or C.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{KgError, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// A triple as read from disk, before integer encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl RawTriple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        RawTriple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

/// An integer-encoded triple. Ids index into the [`Vocab`] maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub s: EntityId,
    pub r: RelationId,
    pub o: EntityId,
}

/// Which splits a triple occurs in, as a bitmask.
pub mod split_flags {
    pub const TRAIN: u8 = 0b001;
    pub const VALID: u8 = 0b010;
    pub const TEST: u8 = 0b100;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn flag(self) -> u8 {
        match self {
            Split::Train => split_flags::TRAIN,
            Split::Valid => split_flags::VALID,
            Split::Test => split_flags::TEST,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Dense label <-> id maps for entities and relations.
///
/// Ids are assigned in first-appearance order scanning train, then valid,
/// then test, so a given dataset always encodes the same way.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    pub entity_to_id: HashMap<String, EntityId>,
    pub relation_to_id: HashMap<String, RelationId>,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
}

impl Vocab {
    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entities[id as usize]
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relations[id as usize]
    }
}

/// Encoded splits plus truth indices over their union.
///
/// `sr_index` maps `(s, r)` to every object `o` such that `(s, r, o)` occurs
/// in any split, with a bitmask recording which splits; `ro_index` is the
/// mirror for subjects.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub sr_index: HashMap<(EntityId, RelationId), HashMap<EntityId, u8>>,
    pub ro_index: HashMap<(RelationId, EntityId), HashMap<EntityId, u8>>,
}

impl TripleStore {
    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Bitmask of splits containing `(s, r, o)`; 0 if unknown.
    pub fn membership(&self, s: EntityId, r: RelationId, o: EntityId) -> u8 {
        self.sr_index
            .get(&(s, r))
            .and_then(|m| m.get(&o))
            .copied()
            .unwrap_or(0)
    }

    pub fn objects_of(&self, s: EntityId, r: RelationId) -> Option<&HashMap<EntityId, u8>> {
        self.sr_index.get(&(s, r))
    }

    pub fn subjects_of(&self, r: RelationId, o: EntityId) -> Option<&HashMap<EntityId, u8>> {
        self.ro_index.get(&(r, o))
    }
}

/// One of the three relation types of the R/S/C taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    R,
    S,
    C,
}

impl RelationType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "R" => Some(RelationType::R),
            "S" => Some(RelationType::S),
            "C" => Some(RelationType::C),
            _ => None,
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationType::R => write!(f, "R"),
            RelationType::S => write!(f, "S"),
            RelationType::C => write!(f, "C"),
        }
    }
}

/// Relation id -> R/S/C label, restricted to relations present in the vocab.
#[derive(Debug, Clone, Default)]
pub struct RelationTaxonomy {
    pub label_of: HashMap<RelationId, RelationType>,
    /// Labels in the taxonomy file that did not match any vocab relation.
    pub unknown_labels: Vec<String>,
}

impl RelationTaxonomy {
    pub fn get(&self, r: RelationId) -> Option<RelationType> {
        self.label_of.get(&r).copied()
    }
}

/// Reads one tab-separated split file, preserving file order.
///
/// Duplicate triples within the file are an error unless `dedupe` is set,
/// in which case later occurrences are dropped.
pub fn load_split_opts(path: &Path, dedupe: bool) -> Result<Vec<RawTriple>> {
    let text = fs::read_to_string(path).map_err(|e| KgError::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(KgError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                fields: fields.len(),
            });
        }
        let key = (
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        );
        if !seen.insert(key.clone()) {
            if dedupe {
                continue;
            }
            return Err(KgError::DuplicateTriple {
                path: path.display().to_string(),
                line: idx + 1,
            });
        }
        out.push(RawTriple::new(key.0, key.1, key.2));
    }
    Ok(out)
}

pub fn load_split(path: &Path) -> Result<Vec<RawTriple>> {
    load_split_opts(path, false)
}

/// Builds the entity/relation vocabulary over three splits.
pub fn build_vocab(train: &[RawTriple], valid: &[RawTriple], test: &[RawTriple]) -> Vocab {
    let mut vocab = Vocab::default();
    for t in train.iter().chain(valid).chain(test) {
        for ent in [&t.subject, &t.object] {
            if !vocab.entity_to_id.contains_key(ent) {
                let id = vocab.entities.len() as EntityId;
                vocab.entity_to_id.insert(ent.clone(), id);
                vocab.entities.push(ent.clone());
            }
        }
        if !vocab.relation_to_id.contains_key(&t.relation) {
            let id = vocab.relations.len() as RelationId;
            vocab.relation_to_id.insert(t.relation.clone(), id);
            vocab.relations.push(t.relation.clone());
        }
    }
    vocab
}

fn encode_one(vocab: &Vocab, raw: &RawTriple) -> Result<Triple> {
    let lookup_e = |label: &str| {
        vocab
            .entity_to_id
            .get(label)
            .copied()
            .ok_or_else(|| KgError::UnknownLabel {
                label: label.to_string(),
            })
    };
    let r = vocab
        .relation_to_id
        .get(&raw.relation)
        .copied()
        .ok_or_else(|| KgError::UnknownLabel {
            label: raw.relation.clone(),
        })?;
    Ok(Triple {
        s: lookup_e(&raw.subject)?,
        r,
        o: lookup_e(&raw.object)?,
    })
}

/// Encodes the three splits and builds the truth indices over their union.
pub fn encode_store(
    vocab: &Vocab,
    train: &[RawTriple],
    valid: &[RawTriple],
    test: &[RawTriple],
) -> Result<TripleStore> {
    let mut store = TripleStore::default();
    for (raws, split) in [
        (train, Split::Train),
        (valid, Split::Valid),
        (test, Split::Test),
    ] {
        let flag = split.flag();
        for raw in raws {
            let t = encode_one(vocab, raw)?;
            *store.sr_index.entry((t.s, t.r)).or_default().entry(t.o).or_insert(0) |= flag;
            *store.ro_index.entry((t.r, t.o)).or_default().entry(t.s).or_insert(0) |= flag;
            match split {
                Split::Train => store.train.push(t),
                Split::Valid => store.valid.push(t),
                Split::Test => store.test.push(t),
            }
        }
    }
    Ok(store)
}

/// Maps an encoded triple back to its labels.
pub fn decode(vocab: &Vocab, t: Triple) -> RawTriple {
    RawTriple::new(
        vocab.entity_label(t.s),
        vocab.relation_label(t.r),
        vocab.entity_label(t.o),
    )
}

pub const RESPLIT_HOLDOUT: usize = 20_000;

/// Rebuilds validation and test splits by pooling all three input splits and
/// drawing 20,000 triples each, uniformly without replacement; the remainder
/// becomes the new training split.
pub fn resplit_nell(
    train: &[RawTriple],
    valid: &[RawTriple],
    test: &[RawTriple],
    seed: u64,
) -> Result<(Vec<RawTriple>, Vec<RawTriple>, Vec<RawTriple>)> {
    let mut pool: Vec<RawTriple> = Vec::with_capacity(train.len() + valid.len() + test.len());
    pool.extend_from_slice(train);
    pool.extend_from_slice(valid);
    pool.extend_from_slice(test);
    let need = 2 * RESPLIT_HOLDOUT;
    if pool.len() < need {
        return Err(KgError::ResplitTooSmall {
            got: pool.len(),
            need,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let new_valid = pool.split_off(pool.len() - RESPLIT_HOLDOUT);
    let new_test = pool.split_off(pool.len() - RESPLIT_HOLDOUT);
    Ok((pool, new_valid, new_test))
}

/// Parses a two-column `relation\ttype` taxonomy file.
///
/// Relations missing from the vocab are collected in `unknown_labels`
/// rather than silently dropped.
pub fn load_taxonomy(path: &Path, vocab: &Vocab) -> Result<RelationTaxonomy> {
    let text = fs::read_to_string(path).map_err(|e| KgError::io(path.display().to_string(), e))?;
    parse_taxonomy(&text, &path.display().to_string(), vocab)
}

pub fn parse_taxonomy(text: &str, origin: &str, vocab: &Vocab) -> Result<RelationTaxonomy> {
    let mut tax = RelationTaxonomy::default();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(KgError::MalformedLine {
                path: origin.to_string(),
                line: idx + 1,
                fields: fields.len(),
            });
        }
        let ty = RelationType::parse(fields[1]).ok_or_else(|| KgError::BadTaxonomyLabel {
            path: origin.to_string(),
            line: idx + 1,
            got: fields[1].to_string(),
        })?;
        match vocab.relation_to_id.get(fields[0]) {
            Some(&id) => {
                tax.label_of.insert(id, ty);
            }
            None => tax.unknown_labels.push(fields[0].to_string()),
        }
    }
    Ok(tax)
}

/// Everything loaded from a dataset directory.
pub struct Dataset {
    pub vocab: Vocab,
    pub store: TripleStore,
    pub taxonomy: Option<RelationTaxonomy>,
}

pub const SPLIT_FILES: [&str; 3] = ["train.txt", "valid.txt", "test.txt"];
pub const TAXONOMY_FILE: &str = "taxonomy.tsv";

/// Loads `train.txt`, `valid.txt`, `test.txt` and, when present,
/// `taxonomy.tsv` from a dataset directory.
pub fn load_dataset(dir: &Path, dedupe: bool) -> Result<Dataset> {
    let train = load_split_opts(&dir.join(SPLIT_FILES[0]), dedupe)?;
    let valid = load_split_opts(&dir.join(SPLIT_FILES[1]), dedupe)?;
    let test = load_split_opts(&dir.join(SPLIT_FILES[2]), dedupe)?;
    let vocab = build_vocab(&train, &valid, &test);
    let store = encode_store(&vocab, &train, &valid, &test)?;
    let tax_path = dir.join(TAXONOMY_FILE);
    let taxonomy = if tax_path.exists() {
        Some(load_taxonomy(&tax_path, &vocab)?)
    } else {
        None
    };
    Ok(Dataset {
        vocab,
        store,
        taxonomy,
    })
}

/// Writes triples back out in the same tab-separated layout.
pub fn save_split(path: &Path, triples: &[RawTriple]) -> Result<()> {
    let mut f =
        fs::File::create(path).map_err(|e| KgError::io(path.display().to_string(), e))?;
    for t in triples {
        writeln!(f, "{}\t{}\t{}", t.subject, t.relation, t.object)
            .map_err(|e| KgError::io(path.display().to_string(), e))?;
    }
    Ok(())
}
