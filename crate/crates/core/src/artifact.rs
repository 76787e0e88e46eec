//! Artifact views over a discovered ER model and per-artifact lifecycle log
//! extraction via key-relation path joins.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Database, QualifiedAttr, Timestamp};
use crate::schema::{fk_pairs, DiscoveryOutcome, ForeignKey, Multiplicity};
use crate::table::Table;

/// One key-relation step between two entities, walked in either direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub fk: ForeignKey,
    /// true when walked from the foreign key's source entity to its target
    pub forward: bool,
}

impl Hop {
    pub fn from_entity(&self) -> &str {
        if self.forward {
            &self.fk.source_entity
        } else {
            &self.fk.target_entity
        }
    }

    pub fn to_entity(&self) -> &str {
        if self.forward {
            &self.fk.target_entity
        } else {
            &self.fk.source_entity
        }
    }
}

pub type Path = Vec<Hop>;

/// Render a path as the attribute pairs it equates, e.g.
/// `((MaterialOrder.POrderID, PurchaseOrder.POrderID))`. The identity path
/// shows the identifier paired with itself.
pub fn render_path(outcome: &DiscoveryOutcome, start: &str, path: &Path) -> String {
    let id_attr = |entity: &str| -> String {
        outcome
            .er
            .entity(entity)
            .map(|e| e.identifier.join(","))
            .unwrap_or_default()
    };
    if path.is_empty() {
        let a = id_attr(start);
        return format!("(({start}.{a}, {start}.{a}))");
    }
    let pairs: Vec<String> = path
        .iter()
        .map(|h| {
            format!(
                "({}.{}, {}.{})",
                h.fk.source_entity,
                h.fk.source_attrs.join(","),
                h.fk.target_entity,
                id_attr(&h.fk.target_entity)
            )
        })
        .collect();
    format!("({})", pairs.join(", "))
}

/// Shortest key-relation path between two entities: fewest hops, ties broken
/// by expanding neighbours in lexicographic entity-name order.
pub fn path(outcome: &DiscoveryOutcome, from: &str, to: &str) -> Result<Path> {
    if from == to {
        return Ok(Vec::new());
    }
    let mut adjacent: BTreeMap<&str, Vec<Hop>> = BTreeMap::new();
    for (fk, _) in &outcome.er.foreign_keys {
        adjacent
            .entry(fk.source_entity.as_str())
            .or_default()
            .push(Hop {
                fk: fk.clone(),
                forward: true,
            });
        adjacent
            .entry(fk.target_entity.as_str())
            .or_default()
            .push(Hop {
                fk: fk.clone(),
                forward: false,
            });
    }
    for hops in adjacent.values_mut() {
        hops.sort_by(|a, b| a.to_entity().cmp(b.to_entity()));
    }
    let mut queue: VecDeque<(String, Path)> = VecDeque::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    queue.push_back((from.to_string(), Vec::new()));
    seen.insert(from.to_string());
    while let Some((at, walked)) = queue.pop_front() {
        for hop in adjacent.get(at.as_str()).map(|v| v.as_slice()).unwrap_or(&[]) {
            let next = hop.to_entity().to_string();
            if !seen.insert(next.clone()) {
                continue;
            }
            let mut extended = walked.clone();
            extended.push(hop.clone());
            if next == to {
                return Ok(extended);
            }
            queue.push_back((next, extended));
        }
    }
    Err(Error::Unpathable {
        from: from.to_string(),
        to: to.to_string(),
    })
}

/// Materialize the path join over combined entity tables: the equi-join of
/// the tables along the path, equal to selection over their cross product.
pub fn join_path(outcome: &DiscoveryOutcome, start: &str, path: &[Hop]) -> Result<Table> {
    let mut current = outcome.merged[start].table.clone();
    for hop in path {
        let other = &outcome.merged[hop.to_entity()].table;
        let (src_table, src_entity) = if hop.forward {
            (&current, hop.fk.source_entity.as_str())
        } else {
            (other, hop.fk.source_entity.as_str())
        };
        let src_cols: Vec<usize> = hop
            .fk
            .source_attrs
            .iter()
            .map(|a| {
                src_table
                    .col(&QualifiedAttr::new(src_entity, a.as_str()))
                    .or_else(|| src_table.col_named(a))
                    .ok_or_else(|| Error::InvalidView(format!("missing column {src_entity}.{a}")))
            })
            .collect::<Result<_>>()?;
        let target = outcome
            .er
            .entity(&hop.fk.target_entity)
            .ok_or_else(|| Error::InvalidView(format!("unknown entity {}", hop.fk.target_entity)))?;
        let dst_table = if hop.forward { other } else { &current };
        let dst_cols: Vec<usize> = target
            .identifier
            .iter()
            .map(|a| {
                dst_table
                    .col(&QualifiedAttr::new(hop.fk.target_entity.as_str(), a.as_str()))
                    .ok_or_else(|| {
                        Error::InvalidView(format!("missing column {}.{a}", hop.fk.target_entity))
                    })
            })
            .collect::<Result<_>>()?;
        let on: Vec<(usize, usize)> = if hop.forward {
            src_cols.into_iter().zip(dst_cols).collect()
        } else {
            dst_cols.into_iter().zip(src_cols).collect()
        };
        current = current.join(other, &on);
    }
    Ok(current)
}

/// A ranked artifact suggestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub entity: String,
    /// top-level entities must become artifacts
    pub mandatory: bool,
    pub event_type_count: usize,
    /// entities this one must not be merged with (n-m relations)
    pub merge_forbidden: Vec<String>,
}

/// Heuristic artifact suggestions: top-level entities are mandatory separate
/// artifacts; the rest are merge-or-promote candidates ranked by event-type
/// count. Entities without event types are excluded.
pub fn suggest_artifacts(outcome: &DiscoveryOutcome) -> Vec<Suggestion> {
    let mut out = Vec::new();
    for entity in &outcome.er.entities {
        if entity.tables.is_empty() {
            continue;
        }
        let mut merge_forbidden = Vec::new();
        for (fk, mult) in &outcome.er.foreign_keys {
            if *mult == Multiplicity::ManyToMany {
                if fk.source_entity == entity.name {
                    merge_forbidden.push(fk.target_entity.clone());
                } else if fk.target_entity == entity.name {
                    merge_forbidden.push(fk.source_entity.clone());
                }
            }
        }
        out.push(Suggestion {
            entity: entity.name.clone(),
            mandatory: outcome.er.top_level.contains(&entity.name),
            event_type_count: entity.tables.len(),
            merge_forbidden,
        });
    }
    out.sort_by(|a, b| {
        b.mandatory
            .cmp(&a.mandatory)
            .then(b.event_type_count.cmp(&a.event_type_count))
            .then_with(|| a.entity.cmp(&b.entity))
    });
    out
}

/// Per-event-type extraction spec: the owning entity and the key-relation
/// path from it to the artifact's main entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionSpec {
    pub event_type: String,
    pub entity: String,
    pub path: Path,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub entities: Vec<String>,
    pub main_entity: String,
    pub specs: Vec<ExtractionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactView {
    pub artifacts: Vec<Artifact>,
}

/// User selection of one artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactSelection {
    pub name: String,
    pub entities: Vec<String>,
    pub main_entity: String,
}

/// Validate selections against the ER model and derive extraction specs.
pub fn build_view(
    outcome: &DiscoveryOutcome,
    selections: &[ArtifactSelection],
) -> Result<ArtifactView> {
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    let mut artifacts = Vec::new();
    for sel in selections {
        if !sel.entities.contains(&sel.main_entity) {
            return Err(Error::InvalidView(format!(
                "artifact {}: main entity {} is not a member",
                sel.name, sel.main_entity
            )));
        }
        let top_members: Vec<&String> = sel
            .entities
            .iter()
            .filter(|e| outcome.er.top_level.contains(*e))
            .collect();
        if top_members.len() > 1 {
            return Err(Error::InvalidView(format!(
                "artifact {}: more than one top-level entity ({})",
                sel.name,
                top_members
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        if let Some(top) = top_members.first() {
            if **top != sel.main_entity {
                return Err(Error::InvalidView(format!(
                    "artifact {}: top-level member {top} must be the main entity",
                    sel.name
                )));
            }
        }
        let mut specs = Vec::new();
        for entity_name in &sel.entities {
            let entity = outcome.er.entity(entity_name).ok_or_else(|| {
                Error::InvalidView(format!("artifact {}: unknown entity {entity_name}", sel.name))
            })?;
            if !covered.insert(entity_name) {
                return Err(Error::InvalidView(format!(
                    "entity {entity_name} belongs to more than one artifact"
                )));
            }
            let p = path(outcome, entity_name, &sel.main_entity)?;
            for event_type in &entity.tables {
                specs.push(ExtractionSpec {
                    event_type: event_type.clone(),
                    entity: entity_name.clone(),
                    path: p.clone(),
                });
            }
        }
        artifacts.push(Artifact {
            name: sel.name.clone(),
            entities: sel.entities.clone(),
            main_entity: sel.main_entity.clone(),
            specs,
        });
    }
    for top in &outcome.er.top_level {
        if !covered.contains(top.as_str()) {
            return Err(Error::InvalidView(format!(
                "top-level entity {top} is not covered by any artifact"
            )));
        }
    }
    Ok(ArtifactView { artifacts })
}

/// An event attributed to the artifact instance for which it occurred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceAwareEvent {
    #[serde(rename = "type")]
    pub event_type: String,
    #[serde(rename = "ts")]
    pub timestamp: Timestamp,
    #[serde(skip)]
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactCase {
    pub id: Vec<String>,
    pub events: Vec<InstanceAwareEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleLog {
    pub artifact: String,
    pub cases: Vec<ArtifactCase>,
}

impl LifecycleLog {
    /// One case per line: `{"id": [...], "events": [{"type","ts"}...]}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for case in &self.cases {
            out.push_str(&serde_json::to_string(case).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(artifact: &str, text: &str) -> Result<LifecycleLog> {
        let mut cases = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            cases.push(serde_json::from_str(line)?);
        }
        Ok(LifecycleLog {
            artifact: artifact.to_string(),
            cases,
        })
    }

    /// Event-type sequences of all cases, for mining.
    pub fn traces(&self) -> Vec<Vec<String>> {
        self.cases
            .iter()
            .map(|c| c.events.iter().map(|e| e.event_type.clone()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    /// events dropped because the path join found no partner row
    pub orphans: BTreeMap<String, usize>,
}

/// Extract one lifecycle log per artifact. Every non-null timestamp cell of a
/// member event type becomes an event of the main-entity instance(s) its key
/// path leads to; cases are ordered by timestamp with raw-log order breaking
/// ties.
pub fn extract_logs(
    db: &Database,
    outcome: &DiscoveryOutcome,
    view: &ArtifactView,
) -> Result<(Vec<LifecycleLog>, ExtractionReport)> {
    let mut report = ExtractionReport::default();
    let mut logs = Vec::new();
    for artifact in &view.artifacts {
        // per-hop instance maps, in walk direction
        let mut cases: BTreeMap<Vec<String>, Vec<InstanceAwareEvent>> = BTreeMap::new();
        let mut first_seen: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for spec in &artifact.specs {
            let entity = outcome.er.entity(&spec.entity).unwrap();
            let table = &db.cluster(&spec.event_type).unwrap().table;
            for row in &table.rows {
                let id: Option<Vec<String>> = entity
                    .identifier
                    .iter()
                    .map(|a| table.value(row, a).map(String::from))
                    .collect();
                let Some(id) = id else {
                    *report.orphans.entry(spec.event_type.clone()).or_default() += 1;
                    continue;
                };
                let mut instances: BTreeSet<Vec<String>> = BTreeSet::from([id]);
                for hop in &spec.path {
                    let pairs = fk_pairs(&outcome.merged, &hop.fk);
                    let mut next = BTreeSet::new();
                    for inst in &instances {
                        if hop.forward {
                            if let Some(dsts) = pairs.get(inst) {
                                next.extend(dsts.iter().cloned());
                            }
                        } else {
                            for (src, dsts) in &pairs {
                                if dsts.contains(inst) {
                                    next.insert(src.clone());
                                }
                            }
                        }
                    }
                    instances = next;
                }
                if instances.is_empty() {
                    *report.orphans.entry(spec.event_type.clone()).or_default() += 1;
                }
                for inst in instances {
                    first_seen
                        .entry(inst.clone())
                        .and_modify(|i| *i = (*i).min(row.source_index))
                        .or_insert(row.source_index);
                    cases.entry(inst).or_default().push(InstanceAwareEvent {
                        event_type: spec.event_type.clone(),
                        timestamp: row.timestamp,
                        source_index: row.source_index,
                    });
                }
            }
        }
        let mut ordered: Vec<(Vec<String>, Vec<InstanceAwareEvent>)> = cases.into_iter().collect();
        ordered.sort_by_key(|(id, _)| first_seen[id]);
        let cases = ordered
            .into_iter()
            .map(|(id, mut events)| {
                events.sort_by_key(|e| (e.timestamp, e.source_index));
                ArtifactCase { id, events }
            })
            .collect();
        logs.push(LifecycleLog {
            artifact: artifact.name.clone(),
            cases,
        });
    }
    Ok((logs, report))
}
