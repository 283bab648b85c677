//! Audit-event parsing: line-delimited JSON records and the CSV variant,
//! with record-level rejection and a parse report.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, EventRecord, Label, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn parse(s: &str) -> Option<InputFormat> {
        match s {
            "jsonl" | "json" => Some(InputFormat::Jsonl),
            "csv" => Some(InputFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParserConfig {
    pub format: InputFormat,
    /// Extra edge labels accepted beyond the canonical nine.
    pub extra_edge_labels: Vec<String>,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            format: InputFormat::Jsonl,
            extra_edge_labels: Vec::new(),
        }
    }
}

/// Per-stream parse accounting. `skipped` counts comment/header lines
/// (`#`-prefixed) and blank lines, which are not rejections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
    /// (1-based line number, reason) for every rejected line.
    pub rejections: Vec<(usize, String)>,
}

impl ParseReport {
    fn reject(&mut self, line: usize, reason: impl Into<String>) {
        self.rejected += 1;
        self.rejections.push((line, reason.into()));
    }
}

/// Wire shape of one JSONL event line.
#[derive(Deserialize)]
struct RawEvent {
    src: String,
    sk: String,
    dst: String,
    dk: String,
    e: String,
    t: i64,
    #[serde(default)]
    sf: Option<usize>,
    #[serde(default)]
    df: Option<usize>,
}

fn validate(raw: RawEvent, cfg: &ParserConfig) -> std::result::Result<EventRecord, String> {
    if raw.src.is_empty() || raw.dst.is_empty() {
        return Err("empty entity id".into());
    }
    if raw.src == raw.dst {
        return Err(format!("self-loop event on {}", raw.src));
    }
    if raw.t < 0 {
        return Err(format!("negative timestamp {}", raw.t));
    }
    let src_kind = NodeKind::parse(&raw.sk).ok_or_else(|| format!("unknown node kind {:?}", raw.sk))?;
    let dst_kind = NodeKind::parse(&raw.dk).ok_or_else(|| format!("unknown node kind {:?}", raw.dk))?;
    let edge_kind = match EdgeKind::parse_canonical(&raw.e) {
        Some(k) => k,
        None if cfg.extra_edge_labels.iter().any(|l| l == &raw.e) => EdgeKind::Other(raw.e),
        None => return Err(format!("unknown edge label {:?}", raw.e)),
    };
    Ok(EventRecord {
        src_id: raw.src,
        src_kind,
        dst_id: raw.dst,
        dst_kind,
        edge_kind,
        timestamp: raw.t,
        src_feature: raw.sf,
        dst_feature: raw.df,
    })
}

/// Parse an event stream. Valid records are yielded in input order;
/// malformed lines are rejected individually and counted in the report.
pub fn parse_events<R: BufRead>(
    reader: R,
    cfg: &ParserConfig,
) -> Result<(Vec<EventRecord>, ParseReport)> {
    match cfg.format {
        InputFormat::Jsonl => parse_jsonl(reader, cfg),
        InputFormat::Csv => parse_csv(reader, cfg),
    }
}

fn parse_jsonl<R: BufRead>(
    reader: R,
    cfg: &ParserConfig,
) -> Result<(Vec<EventRecord>, ParseReport)> {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            report.skipped += 1;
            continue;
        }
        match serde_json::from_str::<RawEvent>(trimmed) {
            Ok(raw) => match validate(raw, cfg) {
                Ok(ev) => {
                    events.push(ev);
                    report.accepted += 1;
                }
                Err(reason) => report.reject(lineno, reason),
            },
            Err(e) => report.reject(lineno, format!("malformed record: {e}")),
        }
    }
    Ok((events, report))
}

fn parse_csv<R: BufRead>(reader: R, cfg: &ParserConfig) -> Result<(Vec<EventRecord>, ParseReport)> {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    for record in csv_reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                // csv reports the position of the failing record
                let lineno = e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(0);
                report.reject(lineno, format!("malformed record: {e}"));
                continue;
            }
        };
        let lineno = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        if record.len() != 6 {
            report.reject(lineno, format!("expected 6 columns, got {}", record.len()));
            continue;
        }
        let t = match record[5].trim().parse::<i64>() {
            Ok(t) => t,
            Err(_) => {
                report.reject(lineno, format!("bad timestamp {:?}", &record[5]));
                continue;
            }
        };
        let raw = RawEvent {
            src: record[0].to_string(),
            sk: record[1].to_string(),
            dst: record[2].to_string(),
            dk: record[3].to_string(),
            e: record[4].to_string(),
            t,
            sf: None,
            df: None,
        };
        match validate(raw, cfg) {
            Ok(ev) => {
                events.push(ev);
                report.accepted += 1;
            }
            Err(reason) => report.reject(lineno, reason),
        }
    }
    Ok((events, report))
}

/// Serialize one event as a JSONL line (the inverse of the parser).
pub fn event_to_json_line(ev: &EventRecord) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("src".into(), ev.src_id.clone().into());
    obj.insert("sk".into(), ev.src_kind.as_str().into());
    obj.insert("dst".into(), ev.dst_id.clone().into());
    obj.insert("dk".into(), ev.dst_kind.as_str().into());
    obj.insert("e".into(), ev.edge_kind.as_str().into());
    obj.insert("t".into(), ev.timestamp.into());
    if let Some(sf) = ev.src_feature {
        obj.insert("sf".into(), sf.into());
    }
    if let Some(df) = ev.dst_feature {
        obj.insert("df".into(), df.into());
    }
    serde_json::Value::Object(obj).to_string()
}

/// Load a ground-truth sidecar: `<key>\t<benign|malicious>` per line.
/// Keys are entity ids (node-level) or graph indices (graph-level);
/// interpretation is up to the caller.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, Label>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, flag) = line.split_once('\t').ok_or_else(|| {
            Error::Data(format!("{}:{}: expected <key>\\t<flag>", path.display(), i + 1))
        })?;
        let label = Label::parse(flag.trim()).ok_or_else(|| {
            Error::Data(format!("{}:{}: unknown flag {:?}", path.display(), i + 1, flag))
        })?;
        map.insert(key.to_string(), label);
    }
    Ok(map)
}

pub fn save_labels(path: &Path, labels: &BTreeMap<String, Label>) -> Result<()> {
    let mut out = String::new();
    for (k, v) in labels {
        out.push_str(&format!("{k}\t{}\n", v.as_str()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_the_documented_example() {
        let line = r#"{"src":"p1","sk":"Process","dst":"f1","dk":"File","e":"read","t":100}"#;
        let (events, report) = parse_events(Cursor::new(line), &ParserConfig::default()).unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(
            events[0],
            EventRecord {
                src_id: "p1".into(),
                src_kind: NodeKind::Process,
                dst_id: "f1".into(),
                dst_kind: NodeKind::File,
                edge_kind: EdgeKind::Read,
                timestamp: 100,
                src_feature: None,
                dst_feature: None,
            }
        );
    }

    #[test]
    fn rejects_malformed_lines_individually() {
        let input = "\
{\"src\":\"p1\",\"sk\":\"Process\",\"dst\":\"f1\",\"dk\":\"File\",\"e\":\"read\",\"t\":100}
not json
{\"src\":\"p1\",\"sk\":\"Process\",\"dst\":\"n1\",\"dk\":\"Network\",\"e\":\"send\",\"t\":200}";
        let (events, report) =
            parse_events(Cursor::new(input), &ParserConfig::default()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(report.rejected, 1);
        assert_eq!(report.rejections[0].0, 2);
    }

    #[test]
    fn rejects_unknown_edge_label_unless_extended() {
        let line = r#"{"src":"p1","sk":"Process","dst":"f1","dk":"File","e":"mmap","t":1}"#;
        let (events, report) =
            parse_events(Cursor::new(line), &ParserConfig::default()).unwrap();
        assert!(events.is_empty());
        assert_eq!(report.rejected, 1);
        assert!(report.rejections[0].1.contains("mmap"));

        let cfg = ParserConfig {
            extra_edge_labels: vec!["mmap".into()],
            ..Default::default()
        };
        let (events, report) = parse_events(Cursor::new(line), &cfg).unwrap();
        assert_eq!(report.rejected, 0);
        assert_eq!(events[0].edge_kind, EdgeKind::Other("mmap".into()));
    }

    #[test]
    fn rejects_semantic_violations() {
        let bad = [
            r#"{"src":"","sk":"Process","dst":"f1","dk":"File","e":"read","t":1}"#,
            r#"{"src":"x","sk":"Process","dst":"x","dk":"Process","e":"fork","t":1}"#,
            r#"{"src":"a","sk":"Process","dst":"b","dk":"File","e":"read","t":-5}"#,
            r#"{"src":"a","sk":"Blob","dst":"b","dk":"File","e":"read","t":1}"#,
        ];
        for line in bad {
            let (events, report) =
                parse_events(Cursor::new(line), &ParserConfig::default()).unwrap();
            assert!(events.is_empty(), "should reject: {line}");
            assert_eq!(report.rejected, 1);
        }
    }

    #[test]
    fn skips_comment_and_blank_lines() {
        let input = "# header\n\n{\"src\":\"p\",\"sk\":\"Process\",\"dst\":\"f\",\"dk\":\"File\",\"e\":\"read\",\"t\":1}\n";
        let (events, report) =
            parse_events(Cursor::new(input), &ParserConfig::default()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(report.skipped, 2);
        assert_eq!(report.rejected, 0);
    }

    #[test]
    fn csv_variant_same_six_columns() {
        let input = "p1,Process,f1,File,read,100\np1,Process,n1,Network,send,200\nbroken,row\n";
        let cfg = ParserConfig {
            format: InputFormat::Csv,
            ..Default::default()
        };
        let (events, report) = parse_events(Cursor::new(input), &cfg).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(report.rejected, 1);
        assert_eq!(events[1].edge_kind, EdgeKind::Send);
    }

    #[test]
    fn json_line_round_trips_including_feature_overrides() {
        let ev = EventRecord {
            src_id: "p1".into(),
            src_kind: NodeKind::Process,
            dst_id: "n1".into(),
            dst_kind: NodeKind::Network,
            edge_kind: EdgeKind::Connect,
            timestamp: 42,
            src_feature: Some(2),
            dst_feature: None,
        };
        let line = event_to_json_line(&ev);
        let (events, report) =
            parse_events(Cursor::new(line), &ParserConfig::default()).unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(events[0], ev);
    }

    #[test]
    fn labels_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        let mut labels = BTreeMap::new();
        labels.insert("g0".to_string(), Label::Benign);
        labels.insert("g1".to_string(), Label::Malicious);
        save_labels(&path, &labels).unwrap();
        assert_eq!(load_labels(&path).unwrap(), labels);
    }
}
