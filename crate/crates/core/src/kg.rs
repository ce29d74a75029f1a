//! Knowledge-graph data model: vocabularies, triples, reverse augmentation and
//! the neighbor/filter indices used by distillation and evaluation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered set of unique names with dense 0-based ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, assigning the next id on first sight.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// `id<TAB>name` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "{id}\t{name}");
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut vocab = Vocab::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: "<vocab>".into(),
                line: i + 1,
                msg: "expected `id<TAB>name`".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Parse {
                path: "<vocab>".into(),
                line: i + 1,
                msg: format!("bad id {id:?}"),
            })?;
            if id != vocab.len() || vocab.lookup(name).is_some() {
                return Err(Error::Parse {
                    path: "<vocab>".into(),
                    line: i + 1,
                    msg: "ids must be contiguous and names unique".into(),
                });
            }
            vocab.intern(name);
        }
        Ok(vocab)
    }
}

/// A `(head, relation, tail)` id triple. Relation ids at or above the
/// original relation count denote reversed relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, rel: usize, tail: usize) -> Self {
        Self { head, rel, tail }
    }

    /// `(t, r + num_rels, h)` for an original relation, and the inverse mapping
    /// for an already reversed one.
    pub fn reversed(self, num_rels: usize) -> Self {
        let rel = if self.rel < num_rels {
            self.rel + num_rels
        } else {
            self.rel - num_rels
        };
        Triple::new(self.tail, rel, self.head)
    }
}

/// Appends `(t, r + num_rels, h)` for every `(h, r, t)`, preserving order.
pub fn add_reverse(triples: &[Triple], num_rels: usize) -> Vec<Triple> {
    let mut out = Vec::with_capacity(triples.len() * 2);
    out.extend_from_slice(triples);
    out.extend(triples.iter().map(|t| t.reversed(num_rels)));
    out
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub train_aug: Vec<Triple>,
}

type NamedTriple = (String, String, String);

fn parse_triples(text: &str, path: &Path) -> Result<Vec<NamedTriple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        out.push((fields[0].into(), fields[1].into(), fields[2].into()));
    }
    Ok(out)
}

/// Reads three `head<TAB>relation<TAB>tail` files.
pub fn load_dataset(
    train_path: impl AsRef<Path>,
    valid_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let mut splits = Vec::with_capacity(3);
    for p in [train_path.as_ref(), valid_path.as_ref(), test_path.as_ref()] {
        let text = fs::read_to_string(p).map_err(|e| Error::from(e).context(p.display().to_string()))?;
        splits.push(parse_triples(&text, p)?);
    }
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Dataset::from_named_splits(&train, &valid, &test)
}

impl Dataset {
    /// Builds vocabularies in first-appearance order over train, valid, test.
    pub fn from_named_splits(train: &[NamedTriple], valid: &[NamedTriple], test: &[NamedTriple]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidDataset("training split is empty".into()));
        }
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut map = |split: &[NamedTriple]| -> Vec<Triple> {
            split
                .iter()
                .map(|(h, r, t)| {
                    let head = entities.intern(h);
                    let rel = relations.intern(r);
                    let tail = entities.intern(t);
                    Triple::new(head, rel, tail)
                })
                .collect()
        };
        let train = map(train);
        let valid = map(valid);
        let test = map(test);
        Ok(Self::from_ids(entities, relations, train, valid, test))
    }

    pub fn from_ids(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Self {
        for (name, split) in [("train", &train), ("valid", &valid), ("test", &test)] {
            let unique: HashSet<_> = split.iter().collect();
            if unique.len() != split.len() {
                log::warn!(
                    "{} duplicate triple(s) in {name} split kept",
                    split.len() - unique.len()
                );
            }
        }
        let train_set: HashSet<_> = train.iter().collect();
        let overlap = valid.iter().chain(&test).filter(|t| train_set.contains(t)).count();
        if overlap > 0 {
            log::warn!("{overlap} valid/test triple(s) also appear in train");
        }
        let train_aug = add_reverse(&train, relations.len());
        Dataset {
            entities,
            relations,
            train,
            valid,
            test,
            train_aug,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Original (un-augmented) relation count.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Relation-table size once reversed relations are included.
    pub fn num_relations_aug(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn neighbor_index(&self) -> NeighborIndex {
        build_neighbor_index(&self.train_aug)
    }

    pub fn filter_index(&self) -> FilterIndex {
        let n = self.num_relations();
        build_filter_index(&[
            add_reverse(&self.train, n),
            add_reverse(&self.valid, n),
            add_reverse(&self.test, n),
        ])
    }

    /// Renders a split back to `head<TAB>relation<TAB>tail` lines.
    pub fn render_split(&self, triples: &[Triple]) -> String {
        let mut out = String::new();
        for t in triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.head),
                self.relations.name(t.rel),
                self.entities.name(t.tail)
            );
        }
        out
    }

    pub fn write_splits(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("train.txt"), self.render_split(&self.train))?;
        fs::write(dir.join("valid.txt"), self.render_split(&self.valid))?;
        fs::write(dir.join("test.txt"), self.render_split(&self.test))?;
        fs::write(dir.join("entities.tsv"), self.entities.dump())?;
        fs::write(dir.join("relations.tsv"), self.relations.dump())?;
        Ok(())
    }
}

/// `(head, rel)` → sorted set of tails, for a total-map lookup.
#[derive(Debug, Clone, Default)]
pub struct QueryIndex {
    map: HashMap<(usize, usize), Vec<usize>>,
}

impl QueryIndex {
    fn from_sets(sets: HashMap<(usize, usize), BTreeSet<usize>>) -> Self {
        let map = sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
        Self { map }
    }

    /// Tails for the query; empty when unknown.
    pub fn get(&self, head: usize, rel: usize) -> &[usize] {
        self.map.get(&(head, rel)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, head: usize, rel: usize, tail: usize) -> bool {
        self.get(head, rel).binary_search(&tail).is_ok()
    }

    pub fn num_queries(&self) -> usize {
        self.map.len()
    }
}

/// Training-graph neighbors `N(h, r)`.
pub type NeighborIndex = QueryIndex;
/// Known-true tails across every split, used by filtered ranking.
pub type FilterIndex = QueryIndex;

pub fn build_neighbor_index(train_aug: &[Triple]) -> NeighborIndex {
    build_filter_index(std::slice::from_ref(&train_aug.to_vec()))
}

pub fn build_filter_index(all_splits_aug: &[Vec<Triple>]) -> FilterIndex {
    let mut sets: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
    for t in all_splits_aug.iter().flatten() {
        sets.entry((t.head, t.rel)).or_default().insert(t.tail);
    }
    QueryIndex::from_sets(sets)
}
