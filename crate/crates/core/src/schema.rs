//! Schema discovery over a tabulated database: minimal keys, entities,
//! combined entity tables, candidate foreign keys, multiplicities, the
//! logical horizon and top-level entities.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Database, EventTypeTable, QualifiedAttr, Timestamp};
use crate::table::Table;

/// A minimal distinguishing attribute set of one event type table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Key(pub Vec<String>);

impl Key {
    fn sorted(mut attrs: Vec<String>) -> Self {
        attrs.sort();
        Key(attrs)
    }
}

/// Rows that agree on `attrs` must agree on every data attribute. Timestamps
/// are not data attributes and never take part.
fn distinguishing(table: &EventTypeTable, attrs: &[usize]) -> bool {
    let mut groups: HashMap<Vec<&Option<String>>, &[Option<String>]> = HashMap::new();
    for row in &table.rows {
        let key: Vec<&Option<String>> = attrs.iter().map(|&i| &row.values[i]).collect();
        match groups.get(&key) {
            None => {
                groups.insert(key, &row.values);
            }
            Some(first) => {
                if *first != row.values.as_slice() {
                    return false;
                }
            }
        }
    }
    true
}

/// Level-wise enumeration of all minimal keys up to `max_arity`, pruning
/// supersets of keys already found.
pub fn discover_keys(table: &EventTypeTable, max_arity: usize) -> Vec<Key> {
    let n = table.data_attrs.len();
    let mut found: Vec<Vec<usize>> = Vec::new();
    if distinguishing(table, &[]) {
        found.push(vec![]);
    } else {
        let mut level: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for arity in 1..=max_arity.min(n) {
            let mut next = Vec::new();
            for cand in &level {
                if found.iter().any(|k| k.iter().all(|a| cand.contains(a))) {
                    continue;
                }
                if distinguishing(table, cand) {
                    found.push(cand.clone());
                } else if arity < max_arity.min(n) {
                    for extra in cand.last().map(|&l| l + 1).unwrap_or(0)..n {
                        let mut bigger = cand.clone();
                        bigger.push(extra);
                        next.push(bigger);
                    }
                }
            }
            level = next;
        }
    }
    let mut keys: Vec<Key> = found
        .into_iter()
        .map(|idxs| {
            Key::sorted(
                idxs.iter()
                    .map(|&i| table.data_attrs[i].clone())
                    .collect(),
            )
        })
        .collect();
    keys.sort();
    keys
}

/// Primary key selection: a hint wins; otherwise the smallest arity, ties
/// broken by the lexicographically least attribute tuple. The empty key is
/// reported by discovery but never auto-assigned.
pub fn select_primary_key(
    table: &EventTypeTable,
    keys: &[Key],
    hint: Option<&[String]>,
) -> Result<Key> {
    if let Some(hint) = hint {
        for attr in hint {
            if table.attr_index(attr).is_none() {
                return Err(Error::Config(format!(
                    "primary-key hint for table {} names unknown attribute {attr}",
                    table.event_type
                )));
            }
        }
        return Ok(Key::sorted(hint.to_vec()));
    }
    keys.iter()
        .filter(|k| !k.0.is_empty())
        .min_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)))
        .cloned()
        .ok_or_else(|| Error::UnresolvedKey {
            table: table.event_type.clone(),
        })
}

/// A set of event type tables sharing one primary key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub identifier: Vec<String>,
    pub tables: Vec<String>,
}

/// An accepted (or candidate) foreign key from an entity attribute set to
/// another entity's identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub source_entity: String,
    pub source_attrs: Vec<String>,
    pub target_entity: String,
}

impl std::fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}.{} -> {}",
            self.source_entity,
            self.source_attrs.join(","),
            self.target_entity
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplicity {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl std::fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Multiplicity::OneToOne => "1-1",
            Multiplicity::OneToMany => "1-n",
            Multiplicity::ManyToOne => "n-1",
            Multiplicity::ManyToMany => "n-m",
        };
        f.write_str(s)
    }
}

/// A candidate inclusion dependency, ranked for user confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkCandidate {
    pub fk: ForeignKey,
    /// Fraction of the target identifier value set covered by the source.
    pub coverage: f64,
    pub name_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErModel {
    pub entities: Vec<Entity>,
    pub foreign_keys: Vec<(ForeignKey, Multiplicity)>,
    /// Logical horizon: entity name -> entities it uniquely (and
    /// transitively) identifies.
    pub horizon: BTreeMap<String, BTreeSet<String>>,
    pub top_level: BTreeSet<String>,
    /// Clusters left without an entity (empty or unresolved key).
    pub unassigned: Vec<String>,
    pub warnings: Vec<String>,
}

impl ErModel {
    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn entity_of_event_type(&self, event_type: &str) -> Option<&Entity> {
        self.entities
            .iter()
            .find(|e| e.tables.iter().any(|t| t == event_type))
    }
}

/// User-facing knobs for schema discovery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    /// Primary-key hints per event type table.
    #[serde(default)]
    pub primary_keys: BTreeMap<String, Vec<String>>,
    /// Entity names keyed by identifier (attributes joined with `,`).
    #[serde(default)]
    pub entity_names: BTreeMap<String, String>,
    /// Accepted foreign keys, as `Source.attr -> Target` strings.
    #[serde(default)]
    pub foreign_keys: Vec<String>,
    #[serde(default = "default_max_arity")]
    pub max_key_arity: usize,
}

fn default_max_arity() -> usize {
    3
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            primary_keys: BTreeMap::new(),
            entity_names: BTreeMap::new(),
            foreign_keys: Vec::new(),
            max_key_arity: default_max_arity(),
        }
    }
}

fn auto_entity_name(identifier: &[String]) -> String {
    let base: Vec<String> = identifier
        .iter()
        .map(|a| {
            a.strip_suffix("ID")
                .or_else(|| a.strip_suffix("Id"))
                .unwrap_or(a)
                .to_string()
        })
        .collect();
    base.join("_")
}

/// Partition clusters by primary-key attribute set. Clusters whose key is
/// empty or unresolved (and not hinted) stay unassigned.
pub fn group_entities(
    db: &Database,
    config: &SchemaConfig,
) -> Result<(Vec<Entity>, Vec<String>, Vec<String>)> {
    let mut by_identifier: BTreeMap<Vec<String>, Vec<String>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    let mut warnings = Vec::new();
    for cluster in &db.clusters {
        let table = &cluster.table;
        let keys = discover_keys(table, config.max_key_arity);
        let hint = config.primary_keys.get(&table.event_type);
        match select_primary_key(table, &keys, hint.map(|v| v.as_slice())) {
            Ok(pk) => {
                by_identifier
                    .entry(pk.0)
                    .or_default()
                    .push(table.event_type.clone());
            }
            Err(_) => {
                warnings.push(format!(
                    "table {} has no usable key (discovered: {:?}); left unassigned",
                    table.event_type, keys
                ));
                unassigned.push(table.event_type.clone());
            }
        }
    }
    let entities = by_identifier
        .into_iter()
        .map(|(identifier, tables)| {
            let auto = auto_entity_name(&identifier);
            let name = config
                .entity_names
                .get(&identifier.join(","))
                .cloned()
                .unwrap_or(auto);
            Entity {
                name,
                identifier,
                tables,
            }
        })
        .collect();
    Ok((entities, unassigned, warnings))
}

/// A combined entity table plus column roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedEntity {
    pub table: Table,
    pub id_cols: Vec<usize>,
    /// timestamp column per member event type, keyed by event type name
    pub ts_cols: BTreeMap<String, usize>,
    pub data_cols: Vec<usize>,
}

/// Combine the entity's event type tables into one table with a row per
/// identifier value. Each event type contributes its timestamp as a column
/// named by the event type; same-named non-key attributes unify when their
/// values agree per identifier value and are renamed apart otherwise.
pub fn merge_entity_table(db: &Database, entity: &Entity) -> MergedEntity {
    // identifier values in order of first appearance in the raw log
    let mut ids: Vec<Vec<Option<String>>> = Vec::new();
    let mut id_index: HashMap<Vec<Option<String>>, usize> = HashMap::new();
    let mut appearances: Vec<(usize, Vec<Option<String>>)> = Vec::new();
    for event_type in &entity.tables {
        let table = &db.cluster(event_type).unwrap().table;
        for row in &table.rows {
            let id: Vec<Option<String>> = entity
                .identifier
                .iter()
                .map(|a| table.value(row, a).map(String::from))
                .collect();
            appearances.push((row.source_index, id));
        }
    }
    appearances.sort();
    for (_, id) in appearances {
        if !id_index.contains_key(&id) {
            id_index.insert(id.clone(), ids.len());
            ids.push(id);
        }
    }

    // decide which shared non-key attributes unify
    let mut attr_owners: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for event_type in &entity.tables {
        let table = &db.cluster(event_type).unwrap().table;
        for attr in &table.data_attrs {
            if !entity.identifier.contains(attr) {
                attr_owners
                    .entry(attr.clone())
                    .or_default()
                    .push(event_type.clone());
            }
        }
    }
    // per-id value of attr in each owning table (first non-null wins per table)
    let attr_value = |event_type: &str, attr: &str, id_idx: usize| -> Option<String> {
        let table = &db.cluster(event_type).unwrap().table;
        let mut rows: Vec<_> = table
            .rows
            .iter()
            .filter(|row| {
                let id: Vec<Option<String>> = entity
                    .identifier
                    .iter()
                    .map(|a| table.value(row, a).map(String::from))
                    .collect();
                id_index.get(&id) == Some(&id_idx)
            })
            .collect();
        rows.sort_by_key(|r| r.source_index);
        rows.iter().find_map(|row| table.value(row, attr).map(String::from))
    };
    let mut unified: BTreeMap<String, bool> = BTreeMap::new();
    for (attr, owners) in &attr_owners {
        let mut ok = true;
        'ids: for id_idx in 0..ids.len() {
            let mut seen: Option<String> = None;
            for owner in owners {
                if let Some(v) = attr_value(owner, attr, id_idx) {
                    match &seen {
                        None => seen = Some(v),
                        Some(prev) if prev != &v => {
                            ok = false;
                            break 'ids;
                        }
                        _ => {}
                    }
                }
            }
        }
        unified.insert(attr.clone(), ok);
    }

    let mut attrs: Vec<QualifiedAttr> = entity
        .identifier
        .iter()
        .map(|a| QualifiedAttr::new(entity.name.clone(), a.clone()))
        .collect();
    let id_cols: Vec<usize> = (0..attrs.len()).collect();
    let mut ts_cols = BTreeMap::new();
    for event_type in &entity.tables {
        ts_cols.insert(event_type.clone(), attrs.len());
        attrs.push(QualifiedAttr::new(entity.name.clone(), event_type.clone()));
    }
    let mut data_cols = Vec::new();
    // (column, owning tables) for data attributes
    let mut data_plan: Vec<(Vec<String>, String)> = Vec::new();
    for (attr, owners) in &attr_owners {
        if unified[attr] {
            data_plan.push((owners.clone(), attr.clone()));
            data_cols.push(attrs.len());
            attrs.push(QualifiedAttr::new(entity.name.clone(), attr.clone()));
        } else {
            for owner in owners {
                data_plan.push((vec![owner.clone()], attr.clone()));
                data_cols.push(attrs.len());
                attrs.push(QualifiedAttr::new(owner.clone(), attr.clone()));
            }
        }
    }

    let mut table = Table::new(entity.name.clone(), attrs);
    for (id_idx, id) in ids.iter().enumerate() {
        let mut row: Vec<Option<String>> = id.clone();
        for event_type in &entity.tables {
            let t = &db.cluster(event_type).unwrap().table;
            let ts: Option<Timestamp> = t
                .rows
                .iter()
                .filter(|r| {
                    let rid: Vec<Option<String>> = entity
                        .identifier
                        .iter()
                        .map(|a| t.value(r, a).map(String::from))
                        .collect();
                    id_index.get(&rid) == Some(&id_idx)
                })
                .map(|r| r.timestamp)
                .min();
            row.push(ts.map(|t| t.to_string()));
        }
        for (owners, attr) in &data_plan {
            let v = owners.iter().find_map(|o| attr_value(o, attr, id_idx));
            row.push(v);
        }
        table.rows.push(row);
    }
    MergedEntity {
        table,
        id_cols,
        ts_cols,
        data_cols,
    }
}

/// Dice coefficient over character bigrams, used only for ranking candidates.
fn name_similarity(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let bigrams = |s: &str| -> HashSet<(char, char)> {
        let chars: Vec<char> = s.to_lowercase().chars().collect();
        chars.windows(2).map(|w| (w[0], w[1])).collect()
    };
    let (ba, bb) = (bigrams(a), bigrams(b));
    if ba.is_empty() || bb.is_empty() {
        return 0.0;
    }
    let common = ba.intersection(&bb).count() as f64;
    2.0 * common / (ba.len() + bb.len()) as f64
}

/// Candidate foreign keys: a source attribute whose non-null value set is
/// included in another entity's identifier value set. Self and identity
/// inclusions are excluded; results are ranked for user confirmation.
pub fn discover_inclusion_deps(merged: &BTreeMap<String, MergedEntity>) -> Vec<FkCandidate> {
    let mut out = Vec::new();
    for (src_name, src) in merged {
        for (dst_name, dst) in merged {
            if src_name == dst_name || dst.id_cols.len() != 1 {
                continue;
            }
            let dst_ids: HashSet<&str> = dst
                .table
                .rows
                .iter()
                .filter_map(|r| r[dst.id_cols[0]].as_deref())
                .collect();
            if dst_ids.is_empty() {
                continue;
            }
            let dst_id_attr = &dst.table.attrs[dst.id_cols[0]].attr;
            for &col in src.id_cols.iter().chain(&src.data_cols) {
                let attr = &src.table.attrs[col];
                let values: HashSet<&str> = src
                    .table
                    .rows
                    .iter()
                    .filter_map(|r| r[col].as_deref())
                    .collect();
                if values.is_empty() || !values.is_subset(&dst_ids) {
                    continue;
                }
                out.push(FkCandidate {
                    fk: ForeignKey {
                        source_entity: src_name.clone(),
                        source_attrs: vec![attr.attr.clone()],
                        target_entity: dst_name.clone(),
                    },
                    coverage: values.len() as f64 / dst_ids.len() as f64,
                    name_similarity: name_similarity(&attr.attr, dst_id_attr),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.coverage
            .partial_cmp(&a.coverage)
            .unwrap()
            .then(b.name_similarity.partial_cmp(&a.name_similarity).unwrap())
            .then_with(|| format!("{}", a.fk).cmp(&format!("{}", b.fk)))
    });
    out
}

/// Instance pairs related by a foreign key: source instance id -> matched
/// target instance ids.
pub fn fk_pairs(
    merged: &BTreeMap<String, MergedEntity>,
    fk: &ForeignKey,
) -> BTreeMap<Vec<String>, BTreeSet<Vec<String>>> {
    let src = &merged[&fk.source_entity];
    let dst = &merged[&fk.target_entity];
    let dst_ids: HashSet<Vec<String>> = dst
        .table
        .rows
        .iter()
        .filter_map(|r| {
            dst.id_cols
                .iter()
                .map(|&c| r[c].clone())
                .collect::<Option<Vec<_>>>()
        })
        .collect();
    let src_cols: Vec<usize> = fk
        .source_attrs
        .iter()
        .filter_map(|a| src.table.col_named(a))
        .collect();
    let mut pairs: BTreeMap<Vec<String>, BTreeSet<Vec<String>>> = BTreeMap::new();
    for row in &src.table.rows {
        let sid: Option<Vec<String>> = src.id_cols.iter().map(|&c| row[c].clone()).collect();
        let val: Option<Vec<String>> = src_cols.iter().map(|&c| row[c].clone()).collect();
        if let (Some(sid), Some(val)) = (sid, val) {
            if dst_ids.contains(&val) {
                pairs.entry(sid).or_default().insert(val);
            }
        }
    }
    pairs
}

/// Multiplicity of a foreign key, read off the data by counting distinct
/// matches per side.
pub fn multiplicity(merged: &BTreeMap<String, MergedEntity>, fk: &ForeignKey) -> Multiplicity {
    let pairs = fk_pairs(merged, fk);
    let src_many = {
        // more than one source instance pointing at the same target
        let mut per_dst: BTreeMap<&Vec<String>, usize> = BTreeMap::new();
        for (_, dsts) in &pairs {
            for d in dsts {
                *per_dst.entry(d).or_default() += 1;
            }
        }
        per_dst.values().any(|&n| n > 1)
    };
    let dst_many = pairs.values().any(|d| d.len() > 1);
    match (src_many, dst_many) {
        (false, false) => Multiplicity::OneToOne,
        (false, true) => Multiplicity::OneToMany,
        (true, false) => Multiplicity::ManyToOne,
        (true, true) => Multiplicity::ManyToMany,
    }
}

/// Per-instance creation timestamps: the earliest event timestamp in the
/// instance.
pub fn creation_times(
    db: &Database,
    entity: &Entity,
) -> BTreeMap<Vec<String>, Timestamp> {
    let mut out: BTreeMap<Vec<String>, Timestamp> = BTreeMap::new();
    for event_type in &entity.tables {
        let table = &db.cluster(event_type).unwrap().table;
        for row in &table.rows {
            let id: Option<Vec<String>> = entity
                .identifier
                .iter()
                .map(|a| table.value(row, a).map(String::from))
                .collect();
            if let Some(id) = id {
                out.entry(id)
                    .and_modify(|t| *t = (*t).min(row.timestamp))
                    .or_insert(row.timestamp);
            }
        }
    }
    out
}

/// Uniquely-identifying instance maps along single foreign-key hops:
/// (from, to) -> from-instance -> the single to-instance it identifies.
type UniqueMaps = BTreeMap<(String, String), BTreeMap<Vec<String>, Vec<String>>>;

fn unique_hops(
    merged: &BTreeMap<String, MergedEntity>,
    fks: &[ForeignKey],
    warnings: &mut Vec<String>,
) -> UniqueMaps {
    let mut hops: UniqueMaps = BTreeMap::new();
    for fk in fks {
        let pairs = fk_pairs(merged, fk);
        // forward: source instance -> target instance
        if pairs.values().all(|d| d.len() <= 1) && !pairs.is_empty() {
            if pairs.len() < 3 {
                warnings.push(format!(
                    "uniqueness of {} -> {} judged on only {} instances",
                    fk.source_entity,
                    fk.target_entity,
                    pairs.len()
                ));
            }
            let map = pairs
                .iter()
                .filter_map(|(s, d)| d.iter().next().map(|d| (s.clone(), d.clone())))
                .collect();
            hops.insert((fk.source_entity.clone(), fk.target_entity.clone()), map);
        }
        // reverse: target instance -> the single source instance, when unique
        let mut rev: BTreeMap<Vec<String>, BTreeSet<Vec<String>>> = BTreeMap::new();
        for (s, dsts) in &pairs {
            for d in dsts {
                rev.entry(d.clone()).or_default().insert(s.clone());
            }
        }
        if rev.values().all(|s| s.len() <= 1) && !rev.is_empty() {
            if rev.len() < 3 {
                warnings.push(format!(
                    "uniqueness of {} -> {} judged on only {} instances",
                    fk.target_entity,
                    fk.source_entity,
                    rev.len()
                ));
            }
            let map = rev
                .iter()
                .filter_map(|(d, s)| s.iter().next().map(|s| (d.clone(), s.clone())))
                .collect();
            hops.insert((fk.target_entity.clone(), fk.source_entity.clone()), map);
        }
    }
    hops
}

/// Logical horizon: transitive closure of unique identification, together
/// with the composed instance maps (needed for precedence).
pub fn logical_horizon_maps(
    merged: &BTreeMap<String, MergedEntity>,
    fks: &[ForeignKey],
    warnings: &mut Vec<String>,
) -> UniqueMaps {
    let mut maps = unique_hops(merged, fks, warnings);
    loop {
        let mut added = false;
        let keys: Vec<(String, String)> = maps.keys().cloned().collect();
        for (a, b) in &keys {
            for (c, d) in &keys {
                if b != c || a == d || maps.contains_key(&(a.clone(), d.clone())) {
                    continue;
                }
                let first = &maps[&(a.clone(), b.clone())];
                let second = &maps[&(c.clone(), d.clone())];
                let composed: BTreeMap<Vec<String>, Vec<String>> = first
                    .iter()
                    .filter_map(|(x, y)| second.get(y).map(|z| (x.clone(), z.clone())))
                    .collect();
                if !composed.is_empty() {
                    maps.insert((a.clone(), d.clone()), composed);
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    maps
}

pub fn logical_horizon(maps: &UniqueMaps) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (from, to) in maps.keys() {
        out.entry(from.clone()).or_default().insert(to.clone());
    }
    out
}

/// An entity precedes another when the latter uniquely identifies it and the
/// identified instance is always created strictly earlier. Top-level entities
/// are those preceded by no other entity.
pub fn top_level_entities(
    db: &Database,
    entities: &[Entity],
    maps: &UniqueMaps,
) -> BTreeSet<String> {
    let creations: BTreeMap<&str, BTreeMap<Vec<String>, Timestamp>> = entities
        .iter()
        .map(|e| (e.name.as_str(), creation_times(db, e)))
        .collect();
    let mut preceded: BTreeSet<String> = BTreeSet::new();
    for ((identifier, identified), map) in maps {
        // identified ∈ H(identifier): does `identified` precede `identifier`?
        let id_creation = &creations[identifier.as_str()];
        let target_creation = &creations[identified.as_str()];
        let mut pairs = 0usize;
        let earlier = map.iter().all(|(from, to)| {
            match (id_creation.get(from), target_creation.get(to)) {
                (Some(cf), Some(ct)) => {
                    pairs += 1;
                    ct < cf
                }
                _ => true,
            }
        });
        if earlier && pairs > 0 {
            preceded.insert(identifier.clone());
        }
    }
    entities
        .iter()
        .filter(|e| !preceded.contains(&e.name))
        .map(|e| e.name.clone())
        .collect()
}

fn parse_fk_spec(spec: &str) -> Result<ForeignKey> {
    let (src, dst) = spec
        .split_once("->")
        .ok_or_else(|| Error::Config(format!("foreign key `{spec}`: expected `Src.attr -> Dst`")))?;
    let src = src.trim();
    let dst = dst.trim();
    let (src_entity, attrs) = src
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("foreign key `{spec}`: missing source attribute")))?;
    Ok(ForeignKey {
        source_entity: src_entity.trim().to_string(),
        source_attrs: attrs.split(',').map(|a| a.trim().to_string()).collect(),
        target_entity: dst.split('.').next().unwrap_or(dst).trim().to_string(),
    })
}

/// Everything downstream stages need from schema discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryOutcome {
    pub er: ErModel,
    pub merged: BTreeMap<String, MergedEntity>,
    pub candidates: Vec<FkCandidate>,
}

/// Full schema discovery: keys, entities, combined tables, FK candidates,
/// confirmed FKs (from config), multiplicities, horizon and top-level set.
pub fn discover_schema(db: &Database, config: &SchemaConfig) -> Result<DiscoveryOutcome> {
    let (entities, unassigned, mut warnings) = group_entities(db, config)?;
    let merged: BTreeMap<String, MergedEntity> = entities
        .iter()
        .map(|e| (e.name.clone(), merge_entity_table(db, e)))
        .collect();
    let candidates = discover_inclusion_deps(&merged);

    let mut accepted = Vec::new();
    for spec in &config.foreign_keys {
        let fk = parse_fk_spec(spec)?;
        if !merged.contains_key(&fk.source_entity) || !merged.contains_key(&fk.target_entity) {
            return Err(Error::Config(format!(
                "accepted foreign key `{spec}` references an unknown entity"
            )));
        }
        let mult = multiplicity(&merged, &fk);
        accepted.push((fk, mult));
    }

    let fks: Vec<ForeignKey> = accepted.iter().map(|(fk, _)| fk.clone()).collect();
    let maps = logical_horizon_maps(&merged, &fks, &mut warnings);
    let horizon = logical_horizon(&maps);
    let top_level = top_level_entities(db, &entities, &maps);

    Ok(DiscoveryOutcome {
        er: ErModel {
            entities,
            foreign_keys: accepted,
            horizon,
            top_level,
            unassigned,
            warnings,
        },
        merged,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_raw_log, tabulate};

    fn example_db() -> Database {
        tabulate(&parse_raw_log(include_str!("../fixtures/build_to_order.log")).unwrap())
    }

    fn example_config() -> SchemaConfig {
        let mut config = SchemaConfig::default();
        config
            .primary_keys
            .insert("ReassignSupplier".into(), vec!["MOrderID".into()]);
        config
            .entity_names
            .insert("POrderID".into(), "PurchaseOrder".into());
        config
            .entity_names
            .insert("MOrderID".into(), "MaterialOrder".into());
        config
            .foreign_keys
            .push("MaterialOrder.POrderID -> PurchaseOrder".into());
        config
    }

    #[test]
    fn receive_po_key_is_porder_id() {
        let db = example_db();
        let keys = discover_keys(&db.cluster("ReceivePO").unwrap().table, 3);
        assert_eq!(keys, vec![Key(vec!["POrderID".into()])]);
    }

    #[test]
    fn create_mo_key_is_morder_id_only() {
        let db = example_db();
        let keys = discover_keys(&db.cluster("CreateMO").unwrap().table, 3);
        // {POrderID, supplier} fails: the rows for MOrderID 5 and 6 share
        // (3, supp5)
        assert_eq!(keys, vec![Key(vec!["MOrderID".into()])]);
    }

    #[test]
    fn single_row_table_has_vacuous_empty_key() {
        let db = example_db();
        let keys = discover_keys(&db.cluster("ReassignSupplier").unwrap().table, 3);
        assert_eq!(keys, vec![Key(vec![])]);
    }

    #[test]
    fn primary_key_policy() {
        let table = EventTypeTable {
            event_type: "T".into(),
            data_attrs: vec!["A".into(), "B".into(), "C".into()],
            rows: vec![],
        };
        let pick = |keys: &[Key]| select_primary_key(&table, keys, None).unwrap();
        assert_eq!(
            pick(&[Key(vec!["MOrderID".into()])]).0,
            vec!["MOrderID".to_string()]
        );
        assert_eq!(
            pick(&[Key(vec!["A".into()]), Key(vec!["B".into()])]).0,
            vec!["A".to_string()]
        );
        assert_eq!(
            pick(&[Key(vec!["A".into(), "B".into()]), Key(vec!["C".into()])]).0,
            vec!["C".to_string()]
        );
        assert!(select_primary_key(&table, &[Key(vec![])], None).is_err());
    }

    #[test]
    fn example_log_groups_into_two_entities() {
        let db = example_db();
        let (entities, unassigned, warnings) = group_entities(&db, &example_config()).unwrap();
        assert!(unassigned.is_empty(), "unassigned {unassigned:?}: {warnings:?}");
        assert_eq!(entities.len(), 2);
        let po = entities.iter().find(|e| e.name == "PurchaseOrder").unwrap();
        assert_eq!(po.identifier, vec!["POrderID".to_string()]);
        let mut po_tables = po.tables.clone();
        po_tables.sort();
        assert_eq!(po_tables, vec!["ClosePO", "InvoicePO", "ReceivePO", "ShipPO"]);
        let mo = entities.iter().find(|e| e.name == "MaterialOrder").unwrap();
        assert_eq!(mo.identifier, vec!["MOrderID".to_string()]);
        assert_eq!(mo.tables.len(), 6);
    }

    #[test]
    fn merged_purchase_order_matches_reference_table() {
        let db = example_db();
        let (entities, _, _) = group_entities(&db, &example_config()).unwrap();
        let po = entities.iter().find(|e| e.name == "PurchaseOrder").unwrap();
        let merged = merge_entity_table(&db, po);
        assert_eq!(merged.table.rows.len(), 3);
        let get = |row: usize, event_type: &str| -> &str {
            merged.table.rows[row][merged.ts_cols[event_type]]
                .as_deref()
                .unwrap()
        };
        assert_eq!(get(0, "ReceivePO"), "11-24,17:12");
        assert_eq!(get(0, "ShipPO"), "11-25,12:11");
        assert_eq!(get(0, "InvoicePO"), "11-26,09:30");
        assert_eq!(get(0, "ClosePO"), "12-03,14:34");
    }

    #[test]
    fn conflicting_shared_attribute_renamed_apart() {
        let log = parse_raw_log(
            "01-01,10:00 A id=1, x=p\n01-01,11:00 B id=1, x=q\n01-01,12:00 A id=2, x=r\n01-01,13:00 B id=2, x=r\n",
        )
        .unwrap();
        let db = tabulate(&log);
        let entity = Entity {
            name: "E".into(),
            identifier: vec!["id".into()],
            tables: vec!["A".into(), "B".into()],
        };
        let merged = merge_entity_table(&db, &entity);
        let names: Vec<String> = merged.table.attrs.iter().map(|a| a.to_string()).collect();
        assert!(names.contains(&"A.x".to_string()));
        assert!(names.contains(&"B.x".to_string()));
    }

    #[test]
    fn build_to_order_candidate_fk() {
        let db = example_db();
        let outcome = discover_schema(&db, &example_config()).unwrap();
        assert!(outcome.candidates.iter().any(|c| {
            c.fk.source_entity == "MaterialOrder"
                && c.fk.source_attrs == vec!["POrderID".to_string()]
                && c.fk.target_entity == "PurchaseOrder"
        }));
        // the top-ranked candidate is the real foreign key
        assert_eq!(outcome.candidates[0].fk.source_entity, "MaterialOrder");
        assert_eq!(outcome.candidates[0].coverage, 1.0);
    }

    #[test]
    fn mutually_inclusive_ids_candidates_both_directions() {
        let log = parse_raw_log("01-01,10:00 A aid=1\n01-01,11:00 B bid=1\n").unwrap();
        let db = tabulate(&log);
        let mut merged = BTreeMap::new();
        for (name, table) in [("EA", "A"), ("EB", "B")] {
            let entity = Entity {
                name: name.into(),
                identifier: vec![if name == "EA" { "aid".into() } else { "bid".into() }],
                tables: vec![table.into()],
            };
            merged.insert(name.to_string(), merge_entity_table(&db, &entity));
        }
        let cands = discover_inclusion_deps(&merged);
        assert!(cands.iter().any(|c| c.fk.source_entity == "EA" && c.fk.target_entity == "EB"));
        assert!(cands.iter().any(|c| c.fk.source_entity == "EB" && c.fk.target_entity == "EA"));
    }

    #[test]
    fn fk_multiplicity_is_many_to_one() {
        let db = example_db();
        let outcome = discover_schema(&db, &example_config()).unwrap();
        let (fk, mult) = &outcome.er.foreign_keys[0];
        assert_eq!(fk.source_entity, "MaterialOrder");
        assert_eq!(*mult, Multiplicity::ManyToOne);
    }

    #[test]
    fn horizon_and_top_level() {
        let db = example_db();
        let outcome = discover_schema(&db, &example_config()).unwrap();
        let h = &outcome.er.horizon;
        assert!(h["MaterialOrder"].contains("PurchaseOrder"));
        assert!(!h.contains_key("PurchaseOrder") || !h["PurchaseOrder"].contains("MaterialOrder"));
        assert_eq!(
            outcome.er.top_level.iter().collect::<Vec<_>>(),
            vec!["PurchaseOrder"]
        );
    }

    /// All minimal distinguishing subsets, by exhaustive enumeration.
    fn brute_force_keys(table: &EventTypeTable) -> Vec<Key> {
        let n = table.data_attrs.len();
        let mut dist: Vec<Vec<usize>> = Vec::new();
        for mask in 0u32..(1 << n) {
            let attrs: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if distinguishing(table, &attrs) {
                dist.push(attrs);
            }
        }
        let minimal: Vec<Vec<usize>> = dist
            .iter()
            .filter(|a| {
                !dist
                    .iter()
                    .any(|b| b.len() < a.len() && b.iter().all(|x| a.contains(x)))
            })
            .cloned()
            .collect();
        let mut keys: Vec<Key> = minimal
            .into_iter()
            .map(|idxs| {
                Key::sorted(idxs.iter().map(|&i| table.data_attrs[i].clone()).collect())
            })
            .collect();
        keys.sort();
        keys
    }

    proptest::proptest! {
        #[test]
        fn level_wise_matches_brute_force(
            rows in proptest::collection::vec(
                proptest::collection::vec(proptest::option::of(0u8..3), 4),
                0..12,
            )
        ) {
            let table = EventTypeTable {
                event_type: "T".into(),
                data_attrs: (0..4).map(|i| format!("a{i}")).collect(),
                rows: rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, vals)| crate::ingest::TableRow {
                        timestamp: "01-01,00:00".parse().unwrap(),
                        values: vals.into_iter().map(|v| v.map(|x| x.to_string())).collect(),
                        source_index: i,
                    })
                    .collect(),
            };
            proptest::prop_assert_eq!(discover_keys(&table, 4), brute_force_keys(&table));
        }
    }

    #[test]
    fn entity_without_fks_has_empty_horizon() {
        let log = parse_raw_log("01-01,10:00 A id=1\n").unwrap();
        let db = tabulate(&log);
        let mut config = SchemaConfig::default();
        config.primary_keys.insert("A".into(), vec!["id".into()]);
        let outcome = discover_schema(&db, &config).unwrap();
        assert!(outcome.er.horizon.is_empty());
        assert_eq!(outcome.er.top_level.len(), 1);
    }
}
