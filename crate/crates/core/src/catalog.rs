//! The type/entity catalog: a subtype DAG, entity memberships and the
//! lemma phrases that describe each type.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::tokenize;

/// Name of the most generic type.
pub const ROOT_TYPE: &str = "Entity";
/// Lemma the root type always carries.
pub const ROOT_LEMMA: &str = "entity";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

impl TypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t#{}", self.0)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e#{}", self.0)
    }
}

/// Bijection between external string ids and dense internal ids.
#[derive(Debug, Clone, Default)]
pub(crate) struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub(crate) fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub(crate) fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub(crate) fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

/// A descriptive phrase for a type, with its case-folded tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lemma {
    pub phrase: String,
    pub tokens: Vec<String>,
}

impl Lemma {
    pub fn new(phrase: &str) -> Self {
        let tokens = tokenize(phrase);
        Lemma {
            phrase: tokens.join(" "),
            tokens,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.tokens.iter().any(|t| t == word)
    }
}

#[derive(Debug, Clone)]
struct Origin {
    file: String,
    line: usize,
}

/// Accumulates catalog records, then validates and closes them in
/// [`CatalogBuilder::build`].
#[derive(Debug, Default)]
pub struct CatalogBuilder {
    type_rows: Vec<(String, Option<String>, Origin)>,
    entity_rows: Vec<(String, String, Origin)>,
    lemma_rows: Vec<(String, String, Origin)>,
}

impl CatalogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `child` with the given parents; no parents declares a root.
    pub fn add_type(&mut self, child: &str, parents: &[&str]) -> &mut Self {
        let line = self.type_rows.len() + 1;
        let origin = || Origin {
            file: "<memory>".into(),
            line,
        };
        if parents.is_empty() {
            self.type_rows.push((child.to_owned(), None, origin()));
        }
        for p in parents {
            self.type_rows
                .push((child.to_owned(), Some((*p).to_owned()), origin()));
        }
        self
    }

    pub fn add_entity(&mut self, entity: &str, types: &[&str]) -> &mut Self {
        for t in types {
            let line = self.entity_rows.len() + 1;
            self.entity_rows.push((
                entity.to_owned(),
                (*t).to_owned(),
                Origin {
                    file: "<memory>".into(),
                    line,
                },
            ));
        }
        self
    }

    pub fn add_lemma(&mut self, type_id: &str, phrase: &str) -> &mut Self {
        let line = self.lemma_rows.len() + 1;
        self.lemma_rows.push((
            type_id.to_owned(),
            phrase.to_owned(),
            Origin {
                file: "<memory>".into(),
                line,
            },
        ));
        self
    }

    fn read_type_file(&mut self, path: &Path) -> Result<()> {
        for (line, fields) in read_tsv(path)? {
            let file = path.display().to_string();
            let child = fields[0].trim();
            if child.is_empty() {
                return Err(Error::Malformed {
                    file,
                    line,
                    message: "empty type id".into(),
                });
            }
            let parent = fields.get(1).map(|p| p.trim()).filter(|p| !p.is_empty());
            self.type_rows.push((
                child.to_owned(),
                parent.map(str::to_owned),
                Origin { file, line },
            ));
        }
        Ok(())
    }

    fn read_entity_file(&mut self, path: &Path) -> Result<()> {
        for (line, fields) in read_tsv(path)? {
            let file = path.display().to_string();
            let entity = fields[0].trim();
            if entity.is_empty() {
                return Err(Error::Malformed {
                    file,
                    line,
                    message: "empty entity id".into(),
                });
            }
            let ty = fields.get(1).map(|p| p.trim()).unwrap_or("");
            if ty.is_empty() {
                return Err(Error::EntityWithoutType {
                    file,
                    line,
                    entity: entity.to_owned(),
                });
            }
            self.entity_rows
                .push((entity.to_owned(), ty.to_owned(), Origin { file, line }));
        }
        Ok(())
    }

    fn read_lemma_file(&mut self, path: &Path) -> Result<()> {
        for (line, fields) in read_tsv(path)? {
            let file = path.display().to_string();
            let (Some(ty), Some(phrase)) = (fields.first(), fields.get(1)) else {
                return Err(Error::Malformed {
                    file,
                    line,
                    message: "expected `type_id<TAB>lemma phrase`".into(),
                });
            };
            self.lemma_rows.push((
                ty.trim().to_owned(),
                phrase.to_owned(),
                Origin { file, line },
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Catalog> {
        let mut types = Interner::default();
        let mut decl_origin: Vec<Origin> = Vec::new();
        for (child, _, origin) in &self.type_rows {
            let id = types.intern(child) as usize;
            if id == decl_origin.len() {
                decl_origin.push(origin.clone());
            }
        }
        let n_types = types.len();

        let mut roots = Vec::new();
        let mut parents: Vec<BTreeSet<TypeId>> = vec![BTreeSet::new(); n_types];
        let mut edge_origin: HashMap<(u32, u32), Origin> = HashMap::new();
        for (child, parent, origin) in &self.type_rows {
            let c = types.get(child).expect("interned above");
            match parent {
                None => {
                    if !roots.contains(&c) {
                        roots.push(c);
                    }
                }
                Some(p) => {
                    let Some(pid) = types.get(p) else {
                        return Err(Error::DanglingReference {
                            file: origin.file.clone(),
                            line: origin.line,
                            what: "type",
                            id: p.clone(),
                        });
                    };
                    parents[c as usize].insert(TypeId(pid));
                    edge_origin.entry((c, pid)).or_insert_with(|| origin.clone());
                }
            }
        }
        let file = self
            .type_rows
            .first()
            .map(|r| r.2.file.clone())
            .unwrap_or_else(|| "<memory>".into());
        let root = match roots.as_slice() {
            [r] => TypeId(*r),
            [] => {
                return Err(Error::BadRoot {
                    file,
                    message: "no root type declared (a line with an empty parent)".into(),
                })
            }
            many => {
                return Err(Error::BadRoot {
                    file,
                    message: format!(
                        "multiple root types declared: {}",
                        many.iter()
                            .map(|&r| types.name(r))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                })
            }
        };
        if !parents[root.index()].is_empty() {
            let o = &decl_origin[root.index()];
            return Err(Error::BadRoot {
                file: o.file.clone(),
                message: format!("root type `{}` also has a parent", types.name(root.0)),
            });
        }
        for t in 0..n_types {
            if t != root.index() && parents[t].is_empty() {
                let o = &decl_origin[t];
                return Err(Error::OrphanType {
                    file: o.file.clone(),
                    line: o.line,
                    type_id: types.name(t as u32).to_owned(),
                });
            }
        }

        let order = topological_order(&parents).map_err(|cycle| {
            let closing = (cycle[cycle.len() - 2].0, cycle[cycle.len() - 1].0);
            let o = &edge_origin[&closing];
            Error::SubtypeCycle {
                file: o.file.clone(),
                line: o.line,
                cycle: cycle.iter().map(|t| types.name(t.0).to_owned()).collect(),
            }
        })?;

        // Ancestor closure, parents first.
        let mut ancestors: Vec<Vec<TypeId>> = vec![Vec::new(); n_types];
        for &t in &order {
            let mut set: BTreeSet<TypeId> = BTreeSet::new();
            set.insert(t);
            for p in &parents[t.index()] {
                set.extend(ancestors[p.index()].iter().copied());
            }
            ancestors[t.index()] = set.into_iter().collect();
        }

        let mut entities = Interner::default();
        let mut direct: Vec<BTreeSet<TypeId>> = Vec::new();
        for (entity, ty, origin) in &self.entity_rows {
            let Some(tid) = types.get(ty) else {
                return Err(Error::DanglingReference {
                    file: origin.file.clone(),
                    line: origin.line,
                    what: "type",
                    id: ty.clone(),
                });
            };
            let eid = entities.intern(entity) as usize;
            if eid == direct.len() {
                direct.push(BTreeSet::new());
            }
            direct[eid].insert(TypeId(tid));
        }
        let entity_types: Vec<Vec<TypeId>> = direct
            .iter()
            .map(|ds| {
                let mut all: BTreeSet<TypeId> = BTreeSet::new();
                for d in ds {
                    all.extend(ancestors[d.index()].iter().copied());
                }
                all.into_iter().collect()
            })
            .collect();
        let mut members: Vec<Vec<EntityId>> = vec![Vec::new(); n_types];
        for (e, ts) in entity_types.iter().enumerate() {
            for t in ts {
                members[t.index()].push(EntityId(e as u32));
            }
        }

        let mut lemmas: Vec<Vec<Lemma>> = vec![Vec::new(); n_types];
        for (ty, phrase, origin) in &self.lemma_rows {
            let Some(tid) = types.get(ty) else {
                return Err(Error::DanglingReference {
                    file: origin.file.clone(),
                    line: origin.line,
                    what: "type",
                    id: ty.clone(),
                });
            };
            let lemma = Lemma::new(phrase);
            if lemma.tokens.is_empty() {
                return Err(Error::Malformed {
                    file: origin.file.clone(),
                    line: origin.line,
                    message: format!("lemma for `{ty}` has no tokens"),
                });
            }
            let slot = &mut lemmas[tid as usize];
            if !slot.contains(&lemma) {
                slot.push(lemma);
            }
        }
        let root_lemma = Lemma::new(ROOT_LEMMA);
        if !lemmas[root.index()].contains(&root_lemma) {
            lemmas[root.index()].push(root_lemma);
        }
        for (t, ls) in lemmas.iter().enumerate() {
            if ls.is_empty() {
                let o = &decl_origin[t];
                return Err(Error::TypeWithoutLemma {
                    file: o.file.clone(),
                    line: o.line,
                    type_id: types.name(t as u32).to_owned(),
                });
            }
        }

        let mut lemma_type_count: HashMap<String, u32> = HashMap::new();
        for ls in &lemmas {
            let words: BTreeSet<&str> = ls
                .iter()
                .flat_map(|l| l.tokens.iter().map(String::as_str))
                .collect();
            for w in words {
                *lemma_type_count.entry(w.to_owned()).or_default() += 1;
            }
        }

        let entity_names = entities.names().iter().map(|n| tokenize(n)).collect();

        Ok(Catalog {
            types,
            entities,
            root,
            parents: parents
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
            ancestors,
            entity_types,
            members,
            lemmas,
            lemma_type_count,
            entity_names,
        })
    }
}

/// Kahn-free DFS ordering; on failure returns the cycle as a closed walk
/// `[a, b, ..., a]` along child -> parent edges.
fn topological_order(parents: &[BTreeSet<TypeId>]) -> std::result::Result<Vec<TypeId>, Vec<TypeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = parents.len();
    let mut mark = vec![Mark::New; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        // (node, remaining parents)
        let mut stack: Vec<(usize, Vec<TypeId>)> =
            vec![(start, parents[start].iter().copied().collect())];
        mark[start] = Mark::Active;
        while let Some((node, rest)) = stack.last_mut() {
            let node = *node;
            match rest.pop() {
                Some(p) => match mark[p.index()] {
                    Mark::New => {
                        mark[p.index()] = Mark::Active;
                        stack.push((p.index(), parents[p.index()].iter().copied().collect()));
                    }
                    Mark::Active => {
                        let from = stack.iter().position(|(n, _)| *n == p.index()).unwrap();
                        let mut cycle: Vec<TypeId> =
                            stack[from..].iter().map(|(n, _)| TypeId(*n as u32)).collect();
                        cycle.push(p);
                        return Err(cycle);
                    }
                    Mark::Done => {}
                },
                None => {
                    mark[node] = Mark::Done;
                    order.push(TypeId(node as u32));
                    stack.pop();
                }
            }
        }
    }
    Ok(order)
}

fn read_tsv(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::to_owned).collect()))
        .collect())
}

/// Immutable, closed catalog. Membership closure is materialized as sorted
/// per-entity type lists.
#[derive(Debug, Clone)]
pub struct Catalog {
    types: Interner,
    entities: Interner,
    root: TypeId,
    parents: Vec<Vec<TypeId>>,
    ancestors: Vec<Vec<TypeId>>,
    entity_types: Vec<Vec<TypeId>>,
    members: Vec<Vec<EntityId>>,
    lemmas: Vec<Vec<Lemma>>,
    lemma_type_count: HashMap<String, u32>,
    entity_names: Vec<Vec<String>>,
}

/// Loads `types.tsv`, `entities.tsv` and `lemmas.tsv`.
pub fn load_catalog(type_file: &Path, entity_file: &Path, lemma_file: &Path) -> Result<Catalog> {
    let mut b = CatalogBuilder::new();
    b.read_type_file(type_file)?;
    b.read_entity_file(entity_file)?;
    b.read_lemma_file(lemma_file)?;
    b.build()
}

impl Catalog {
    pub fn root(&self) -> TypeId {
        self.root
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn type_ids(&self) -> impl Iterator<Item = TypeId> {
        (0..self.types.len() as u32).map(TypeId)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.get(name).map(TypeId)
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn require_type(&self, name: &str) -> Result<TypeId> {
        self.type_id(name)
            .ok_or_else(|| Error::UnknownType(name.to_owned()))
    }

    pub fn require_entity(&self, name: &str) -> Result<EntityId> {
        self.entity_id(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_owned()))
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        self.types.name(t.0)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.0)
    }

    pub fn has_type(&self, t: TypeId) -> bool {
        t.index() < self.types.len()
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        e.index() < self.entities.len()
    }

    pub fn parents(&self, t: TypeId) -> &[TypeId] {
        &self.parents[t.index()]
    }

    /// `t` and all its supertypes, sorted.
    pub fn ancestors(&self, t: TypeId) -> &[TypeId] {
        &self.ancestors[t.index()]
    }

    /// `{t : e ∈+ t}`, sorted by id; always contains the root.
    pub fn types_of(&self, e: EntityId) -> Result<&[TypeId]> {
        self.entity_types
            .get(e.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownEntity(e.to_string()))
    }

    pub fn is_instance(&self, e: EntityId, t: TypeId) -> bool {
        self.entity_types
            .get(e.index())
            .is_some_and(|ts| ts.binary_search(&t).is_ok())
    }

    /// `{e : e ∈+ t}`, sorted by id.
    pub fn members(&self, t: TypeId) -> &[EntityId] {
        &self.members[t.index()]
    }

    /// `|{e : e ∈+ t}| / |E|`.
    pub fn type_generality(&self, t: TypeId) -> Result<f64> {
        if !self.has_type(t) {
            return Err(Error::UnknownType(t.to_string()));
        }
        if self.entities.len() == 0 {
            return Ok(0.0);
        }
        Ok(self.members[t.index()].len() as f64 / self.entities.len() as f64)
    }

    pub fn lemmas(&self, t: TypeId) -> &[Lemma] {
        &self.lemmas[t.index()]
    }

    /// Fraction of all types having `word` in some lemma.
    pub fn type_fraction(&self, word: &str) -> f64 {
        let n = self.lemma_type_count.get(word).copied().unwrap_or(0);
        n as f64 / self.types.len() as f64
    }

    /// Tokens of the entity's catalog name (its id, split on punctuation).
    pub fn entity_name_tokens(&self, e: EntityId) -> &[String] {
        &self.entity_names[e.index()]
    }

    pub(crate) fn entity_names(&self) -> &[String] {
        self.entities.names()
    }
}

/// Hit counts `N_t` over training gold types, with smoothing `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypePriorTable {
    hits: Vec<u32>,
    gamma: f64,
}

impl TypePriorTable {
    pub fn new(catalog: &Catalog, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::HyperParam(format!("gamma must lie in (0,1), got {gamma}")));
        }
        Ok(TypePriorTable {
            hits: vec![0; catalog.num_types()],
            gamma,
        })
    }

    /// One hit per gold type; ancestors are not credited.
    pub fn from_gold_types(
        catalog: &Catalog,
        gold: impl IntoIterator<Item = TypeId>,
        gamma: f64,
    ) -> Result<Self> {
        let mut table = Self::new(catalog, gamma)?;
        for t in gold {
            table.record(t)?;
        }
        Ok(table)
    }

    pub fn record(&mut self, t: TypeId) -> Result<()> {
        let slot = self
            .hits
            .get_mut(t.index())
            .ok_or_else(|| Error::UnknownType(t.to_string()))?;
        *slot += 1;
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::HyperParam(format!("gamma must lie in (0,1), got {gamma}")));
        }
        Ok(TypePriorTable {
            hits: self.hits.clone(),
            gamma,
        })
    }

    pub fn hits(&self, t: TypeId) -> u32 {
        self.hits.get(t.index()).copied().unwrap_or(0)
    }

    pub(crate) fn from_raw(hits: Vec<u32>, gamma: f64) -> Self {
        TypePriorTable { hits, gamma }
    }

    /// `Pr(t|e) = (N_t + γ) / Σ_{t': e ∈+ t'} (N_t' + γ)`, zero off-type.
    pub fn type_prior(&self, catalog: &Catalog, t: TypeId, e: EntityId) -> Result<f64> {
        if !catalog.has_type(t) {
            return Err(Error::UnknownType(t.to_string()));
        }
        let types = catalog.types_of(e)?;
        if types.binary_search(&t).is_err() {
            return Ok(0.0);
        }
        let counts: Vec<u32> = types.iter().map(|u| self.hits[u.index()]).collect();
        let pos = types.binary_search(&t).expect("checked above");
        Ok(smoothed_share(&counts, pos, self.gamma))
    }
}

/// `(counts[i] + γ) / Σ_j (counts[j] + γ)`.
pub fn smoothed_share(counts: &[u32], i: usize, gamma: f64) -> f64 {
    let denom: f64 = counts.iter().map(|&n| n as f64 + gamma).sum();
    (counts[i] as f64 + gamma) / denom
}
