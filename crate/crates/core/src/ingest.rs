//! Raw log parsing and tabulation into 2NF event type clusters.
//!
//! A raw log is a case-less sequence of events, each carrying a timestamp and
//! attribute-value pairs. Repeated attribute names on one event encode
//! multi-valued attributes. Tabulation produces one event type table per type
//! (single-valued attributes only, nulls where an event lacks an attribute)
//! plus one side table per multi-valued attribute.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar timestamp with minute precision. The year is optional; logs that
/// omit it are ordered by (month, day, time) alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub year: Option<u16>,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(y) = self.year {
            write!(f, "{y:04}-")?;
        }
        write!(
            f,
            "{:02}-{:02},{:02}:{:02}",
            self.month, self.day, self.hour, self.minute
        )
    }
}

impl FromStr for Timestamp {
    type Err = String;

    /// Accepts `MM-DD,HH:MM` or `YYYY-MM-DD,HH:MM`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (date, time) = s
            .split_once(',')
            .ok_or_else(|| format!("malformed timestamp `{s}`"))?;
        let date_parts: Vec<&str> = date.split('-').collect();
        let (year, month, day) = match date_parts.as_slice() {
            [m, d] => (None, *m, *d),
            [y, m, d] => (
                Some(
                    y.parse::<u16>()
                        .map_err(|_| format!("malformed year in `{s}`"))?,
                ),
                *m,
                *d,
            ),
            _ => return Err(format!("malformed date in `{s}`")),
        };
        let (hour, minute) = time
            .split_once(':')
            .ok_or_else(|| format!("malformed time in `{s}`"))?;
        let parse = |v: &str, what: &str, max: u8| -> std::result::Result<u8, String> {
            let n: u8 = v
                .parse()
                .map_err(|_| format!("malformed {what} in `{s}`"))?;
            if n > max {
                return Err(format!("{what} out of range in `{s}`"));
            }
            Ok(n)
        };
        Ok(Timestamp {
            year,
            month: parse(month, "month", 12)?,
            day: parse(day, "day", 31)?,
            hour: parse(hour, "hour", 23)?,
            minute: parse(minute, "minute", 59)?,
        })
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One event of the raw log. Repeated names in `attrs` encode a multi-valued
/// attribute; values are kept as strings (domain typing is deferred to
/// condition evaluation).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_type: String,
    pub timestamp: Timestamp,
    pub attrs: Vec<(String, String)>,
}

/// A finite, case-less sequence of events. File order is the total order on
/// events; timestamps out of file order are reported as warnings, never
/// reordered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLog {
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Parse the native whitespace-tolerant line format:
/// `<MM-DD,HH:MM>  <EventType>  attr=value, attr=(v1,v2), ...`
pub fn parse_raw_log(text: &str) -> Result<RawLog> {
    let mut events = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        events.push(parse_line(line, line_no)?);
    }
    Ok(with_order_warnings(events))
}

fn parse_line(line: &str, line_no: usize) -> Result<Event> {
    let mut parts = line.splitn(3, char::is_whitespace);
    let ts_text = parts.next().unwrap_or_default();
    let timestamp: Timestamp = ts_text.parse().map_err(|message| Error::Parse {
        line: line_no,
        message,
    })?;
    let rest = parts.next().map(|t| {
        let mut s = t.to_string();
        if let Some(r) = parts.next() {
            s.push(' ');
            s.push_str(r);
        }
        s
    });
    let rest = rest.unwrap_or_default();
    let mut tail = rest.trim().splitn(2, char::is_whitespace);
    let event_type = tail.next().unwrap_or_default().to_string();
    if event_type.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "missing event type".into(),
        });
    }
    let mut attrs = Vec::new();
    let mut scalar_seen: BTreeMap<String, String> = BTreeMap::new();
    let attr_text = tail.next().unwrap_or_default().trim();
    if !attr_text.is_empty() {
        for chunk in split_attr_list(attr_text) {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let (name, value) = chunk.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `attr=value`, got `{chunk}`"),
            })?;
            let name = name.trim();
            let value = value.trim();
            if let Some(inner) = value.strip_prefix('(').and_then(|v| v.strip_suffix(')')) {
                for v in inner.split(',') {
                    attrs.push((name.to_string(), v.trim().to_string()));
                }
            } else {
                if let Some(prev) = scalar_seen.get(name) {
                    if prev != value {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!(
                                "duplicate scalar attribute `{name}` with conflicting values \
                                 `{prev}` and `{value}`"
                            ),
                        });
                    }
                }
                scalar_seen.insert(name.to_string(), value.to_string());
                attrs.push((name.to_string(), value.to_string()));
            }
        }
    }
    Ok(Event {
        event_type,
        timestamp,
        attrs,
    })
}

/// Split a comma-separated attribute list, keeping parenthesized value lists
/// together.
fn split_attr_list(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur);
    }
    out
}

/// Parse CSV with declared timestamp and event-type columns; every other
/// column becomes a data attribute, empty cells are absent attributes.
pub fn parse_csv_log(text: &str, ts_col: &str, type_col: &str) -> Result<RawLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let ts_idx = headers
        .iter()
        .position(|h| h == ts_col)
        .ok_or_else(|| Error::Config(format!("timestamp column `{ts_col}` not found")))?;
    let type_idx = headers
        .iter()
        .position(|h| h == type_col)
        .ok_or_else(|| Error::Config(format!("event type column `{type_col}` not found")))?;
    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line_no = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let timestamp: Timestamp =
            record
                .get(ts_idx)
                .unwrap_or_default()
                .parse()
                .map_err(|message| Error::Parse {
                    line: line_no,
                    message,
                })?;
        let event_type = record.get(type_idx).unwrap_or_default().to_string();
        if event_type.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty event type".into(),
            });
        }
        let mut attrs = Vec::new();
        for (j, value) in record.iter().enumerate() {
            if j == ts_idx || j == type_idx || value.is_empty() {
                continue;
            }
            attrs.push((headers[j].to_string(), value.to_string()));
        }
        events.push(Event {
            event_type,
            timestamp,
            attrs,
        });
    }
    Ok(with_order_warnings(events))
}

fn with_order_warnings(events: Vec<Event>) -> RawLog {
    let mut warnings = Vec::new();
    for pair in events.windows(2) {
        if pair[1].timestamp < pair[0].timestamp {
            warnings.push(format!(
                "event `{}` at {} is out of temporal order (previous at {}); keeping file order",
                pair[1].event_type, pair[1].timestamp, pair[0].timestamp
            ));
        }
    }
    RawLog { events, warnings }
}

/// Serialize back to the native line format. Parsing the output yields an
/// identical log.
pub fn to_native(log: &RawLog) -> String {
    let mut out = String::new();
    for event in &log.events {
        out.push_str(&event.timestamp.to_string());
        out.push_str("  ");
        out.push_str(&event.event_type);
        let mut grouped: IndexMap<&str, Vec<&str>> = IndexMap::new();
        for (name, value) in &event.attrs {
            grouped.entry(name).or_default().push(value);
        }
        let mut first = true;
        for (name, values) in grouped {
            out.push_str(if first { "  " } else { ", " });
            first = false;
            if values.len() == 1 {
                out.push_str(&format!("{name}={}", values[0]));
            } else {
                out.push_str(&format!("{name}=({})", values.join(",")));
            }
        }
        out.push('\n');
    }
    out
}

/// One row of an event type table: the timestamp, the values of the table's
/// single-valued data attributes (null where absent), and the position of the
/// source event in the raw log (tie-break for deterministic ordering).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub timestamp: Timestamp,
    pub values: Vec<Option<String>>,
    pub source_index: usize,
}

/// 2NF table of all events of one type. The schema is the union of the
/// single-valued attribute names seen for the type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeTable {
    pub event_type: String,
    pub data_attrs: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl EventTypeTable {
    pub fn attr_index(&self, attr: &str) -> Option<usize> {
        self.data_attrs.iter().position(|a| a == attr)
    }

    pub fn value<'a>(&self, row: &'a TableRow, attr: &str) -> Option<&'a str> {
        self.attr_index(attr)
            .and_then(|i| row.values[i].as_deref())
    }
}

/// Side table for one multi-valued attribute of one event type: one row per
/// (event, value) pair. Rows reference the owner table by row index; the
/// owner's primary key columns become available once keys are selected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiValuedTable {
    pub event_type: String,
    pub attr: String,
    /// (owner row index, value)
    pub rows: Vec<(usize, String)>,
}

/// Event type cluster: the main 2NF table plus its side tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub table: EventTypeTable,
    pub side_tables: Vec<MultiValuedTable>,
}

/// A column reference qualified by table (or entity) name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QualifiedAttr {
    pub table: String,
    pub attr: String,
}

impl QualifiedAttr {
    pub fn new(table: impl Into<String>, attr: impl Into<String>) -> Self {
        QualifiedAttr {
            table: table.into(),
            attr: attr.into(),
        }
    }
}

impl fmt::Display for QualifiedAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.attr)
    }
}

/// One foreign-primary key link: a tuple of attribute pairs, source side
/// first. Side-table links are present by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRelation {
    pub pairs: Vec<(QualifiedAttr, QualifiedAttr)>,
    #[serde(default)]
    pub by_construction: bool,
}

/// Event type clusters plus the key relation set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Database {
    pub clusters: Vec<Cluster>,
    pub key_relation: Vec<KeyRelation>,
}

impl Database {
    pub fn cluster(&self, event_type: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.table.event_type == event_type)
    }
}

/// Tabulate a raw log into one cluster per event type.
///
/// An attribute is classified multi-valued for a type as soon as any event of
/// that type repeats it; it is then excluded from the main table entirely.
pub fn tabulate(log: &RawLog) -> Database {
    // First pass: schema per event type, in order of first appearance.
    let mut schemas: IndexMap<&str, IndexSet<&str>> = IndexMap::new();
    let mut multi_valued: IndexMap<&str, IndexSet<&str>> = IndexMap::new();
    for event in &log.events {
        let schema = schemas.entry(&event.event_type).or_default();
        let multi = multi_valued.entry(&event.event_type).or_default();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (name, _) in &event.attrs {
            *counts.entry(name).or_default() += 1;
            schema.insert(name);
        }
        for (name, n) in counts {
            if n > 1 {
                multi.insert(name);
            }
        }
    }

    let mut clusters = Vec::new();
    for (event_type, schema) in &schemas {
        let multi = &multi_valued[event_type];
        let data_attrs: Vec<String> = schema
            .iter()
            .filter(|a| !multi.contains(*a))
            .map(|a| a.to_string())
            .collect();
        let mut table = EventTypeTable {
            event_type: event_type.to_string(),
            data_attrs,
            rows: Vec::new(),
        };
        let mut side_tables: Vec<MultiValuedTable> = multi
            .iter()
            .map(|attr| MultiValuedTable {
                event_type: event_type.to_string(),
                attr: attr.to_string(),
                rows: Vec::new(),
            })
            .collect();
        for (source_index, event) in log.events.iter().enumerate() {
            if &event.event_type != event_type {
                continue;
            }
            let row_index = table.rows.len();
            let values = table
                .data_attrs
                .iter()
                .map(|attr| {
                    event
                        .attrs
                        .iter()
                        .find(|(name, _)| name == attr)
                        .map(|(_, value)| value.clone())
                })
                .collect();
            table.rows.push(TableRow {
                timestamp: event.timestamp,
                values,
                source_index,
            });
            for side in &mut side_tables {
                for (name, value) in &event.attrs {
                    if name == &side.attr {
                        side.rows.push((row_index, value.clone()));
                    }
                }
            }
        }
        clusters.push(Cluster { table, side_tables });
    }

    // By-construction links from each side table to its owner. The concrete
    // key columns are only known after primary key selection; the link is
    // recorded at table level.
    let key_relation = clusters
        .iter()
        .flat_map(|cluster| {
            cluster.side_tables.iter().map(|side| KeyRelation {
                pairs: vec![(
                    QualifiedAttr::new(
                        format!("{}.{}", side.event_type, side.attr),
                        "owner",
                    ),
                    QualifiedAttr::new(side.event_type.clone(), "row"),
                )],
                by_construction: true,
            })
        })
        .collect();

    Database {
        clusters,
        key_relation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_log() -> RawLog {
        let text = include_str!("../fixtures/build_to_order.log");
        parse_raw_log(text).unwrap()
    }

    #[test]
    fn parses_single_valued_line() {
        let log = parse_raw_log("11-24,17:12  ReceivePO  items=(it0), POrderID=1").unwrap();
        assert_eq!(log.events.len(), 1);
        let e = &log.events[0];
        assert_eq!(e.event_type, "ReceivePO");
        assert_eq!(e.timestamp.to_string(), "11-24,17:12");
        assert_eq!(
            e.attrs,
            vec![
                ("items".to_string(), "it0".to_string()),
                ("POrderID".to_string(), "1".to_string())
            ]
        );
    }

    #[test]
    fn expands_multi_valued_attribute() {
        let log =
            parse_raw_log("11-25,08:53 ReceivePO items=(it0,it1,it2,it3), POrderID=2").unwrap();
        let items: Vec<_> = log.events[0]
            .attrs
            .iter()
            .filter(|(n, _)| n == "items")
            .map(|(_, v)| v.as_str())
            .collect();
        assert_eq!(items, vec!["it0", "it1", "it2", "it3"]);
    }

    #[test]
    fn empty_input_gives_empty_log() {
        let log = parse_raw_log("").unwrap();
        assert!(log.events.is_empty());
    }

    #[test]
    fn malformed_timestamp_reports_line() {
        let err = parse_raw_log("11-24,17:12 A x=1\nnot-a-date B y=2").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn conflicting_duplicate_scalar_is_error() {
        assert!(parse_raw_log("11-24,17:12 A x=1, x=2").is_err());
        assert!(parse_raw_log("11-24,17:12 A x=1, x=1").is_ok());
    }

    #[test]
    fn out_of_order_timestamps_warn_but_keep_file_order() {
        let log = parse_raw_log("11-25,10:00 A x=1\n11-24,09:00 B y=2").unwrap();
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.warnings.len(), 1);
        assert_eq!(log.events[0].event_type, "A");
    }

    #[test]
    fn native_round_trip() {
        let log = example_log();
        let text = to_native(&log);
        let reparsed = parse_raw_log(&text).unwrap();
        assert_eq!(log.events, reparsed.events);
    }

    #[test]
    fn example_log_tabulates_to_ten_clusters() {
        let db = tabulate(&example_log());
        assert_eq!(db.clusters.len(), 10);
    }

    #[test]
    fn receive_po_cluster_matches_reference_tables() {
        let db = tabulate(&example_log());
        let cluster = db.cluster("ReceivePO").unwrap();
        assert_eq!(cluster.table.rows.len(), 3);
        assert_eq!(cluster.table.data_attrs, vec!["POrderID".to_string()]);
        assert_eq!(cluster.side_tables.len(), 1);
        assert_eq!(cluster.side_tables[0].attr, "items");
        assert_eq!(cluster.side_tables[0].rows.len(), 7);
    }

    #[test]
    fn create_mo_cluster_has_six_rows() {
        let db = tabulate(&example_log());
        let cluster = db.cluster("CreateMO").unwrap();
        assert_eq!(cluster.table.rows.len(), 6);
        let mut attrs = cluster.table.data_attrs.clone();
        attrs.sort();
        assert_eq!(attrs, vec!["MOrderID", "POrderID", "supplier"]);
    }

    #[test]
    fn single_event_without_attrs() {
        let log = parse_raw_log("01-01,00:00 Ping").unwrap();
        let db = tabulate(&log);
        assert_eq!(db.clusters.len(), 1);
        let cluster = &db.clusters[0];
        assert_eq!(cluster.table.rows.len(), 1);
        assert!(cluster.table.data_attrs.is_empty());
        assert!(cluster.side_tables.is_empty());
    }

    #[test]
    fn row_and_value_conservation() {
        let log = example_log();
        let db = tabulate(&log);
        for cluster in &db.clusters {
            let expected = log
                .events
                .iter()
                .filter(|e| e.event_type == cluster.table.event_type)
                .count();
            assert_eq!(cluster.table.rows.len(), expected);
        }
        // every (attribute, value) pair of every event appears exactly once
        // across its cluster
        let total_pairs: usize = log.events.iter().map(|e| e.attrs.len()).sum();
        let stored_pairs: usize = db
            .clusters
            .iter()
            .map(|c| {
                let main: usize = c
                    .table
                    .rows
                    .iter()
                    .map(|r| r.values.iter().flatten().count())
                    .sum();
                let side: usize = c.side_tables.iter().map(|s| s.rows.len()).sum();
                main + side
            })
            .sum();
        assert_eq!(total_pairs, stored_pairs);
    }

    #[test]
    fn csv_parsing_with_declared_columns() {
        // commas inside the timestamp must be quoted in CSV
        let log = parse_csv_log(
            "ts,activity,POrderID\n\"11-24,17:12\",ReceivePO,1\n",
            "ts",
            "activity",
        )
        .unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.events[0].event_type, "ReceivePO");
        assert_eq!(
            log.events[0].attrs,
            vec![("POrderID".to_string(), "1".to_string())]
        );
    }
}
