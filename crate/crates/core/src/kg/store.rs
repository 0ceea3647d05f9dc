use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// `(head, relation, tail)` as vocabulary indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self { head, relation, tail }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown split '{s}' (train, valid, test)")))
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default)]
struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

/// Vocabularies, the three splits, and the set of known tails for every
/// `(head, relation)` pair across all splits.
#[derive(Clone, Debug, Default)]
pub struct TripleStore {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    filter: HashMap<(usize, usize), HashSet<usize>>,
}

impl TripleStore {
    /// Builds a store from string triples. Indices follow first appearance,
    /// scanning train, then valid, then test.
    pub fn from_named<S: AsRef<str>>(
        train: &[(S, S, S)],
        valid: &[(S, S, S)],
        test: &[(S, S, S)],
    ) -> Self {
        let mut store = Self::default();
        for (split, rows) in [(Split::Train, train), (Split::Valid, valid), (Split::Test, test)] {
            for (h, r, t) in rows {
                store.push(split, h.as_ref(), r.as_ref(), t.as_ref());
            }
        }
        store
    }

    fn push(&mut self, split: Split, h: &str, r: &str, t: &str) {
        let triple = Triple::new(self.entities.intern(h), self.relations.intern(r), self.entities.intern(t));
        self.filter
            .entry((triple.head, triple.relation))
            .or_default()
            .insert(triple.tail);
        match split {
            Split::Train => self.train.push(triple),
            Split::Valid => self.valid.push(triple),
            Split::Test => self.test.push(triple),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn entity_name(&self, i: usize) -> Option<&str> {
        self.entities.names.get(i).map(String::as_str)
    }

    pub fn relation_name(&self, i: usize) -> Option<&str> {
        self.relations.names.get(i).map(String::as_str)
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.index.get(name).copied()
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.index.get(name).copied()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// All tails `t` such that `(head, relation, t)` occurs in any split.
    pub fn known_tails(&self, head: usize, relation: usize) -> Option<&HashSet<usize>> {
        self.filter.get(&(head, relation))
    }
}

/// Reads the three TAB-separated split files. Blank lines are skipped; a
/// trailing `\r` is tolerated.
pub fn load_triples(train: &Path, valid: &Path, test: &Path) -> Result<TripleStore> {
    let mut store = TripleStore::default();
    for (split, path) in [(Split::Train, train), (Split::Valid, valid), (Split::Test, test)] {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (no, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: no + 1,
                msg,
            };
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 TAB-separated fields, found {}", fields.len())));
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(parse_err("empty field".into()));
            }
            store.push(split, fields[0], fields[1], fields[2]);
        }
    }
    Ok(store)
}
