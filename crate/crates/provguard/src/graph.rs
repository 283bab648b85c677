//! Provenance graph substrate: typed nodes, timestamped typed edges, and the
//! construction / reduction / cleanup transforms applied to audit events.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three system-entity kinds a provenance node can have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Process,
    File,
    Network,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Process, NodeKind::File, NodeKind::Network];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Process => "Process",
            NodeKind::File => "File",
            NodeKind::Network => "Network",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        match s {
            "Process" | "process" => Some(NodeKind::Process),
            "File" | "file" => Some(NodeKind::File),
            "Network" | "network" => Some(NodeKind::Network),
            _ => None,
        }
    }

    /// Position in [`NodeKind::ALL`]; also the default one-hot feature index.
    pub fn index(self) -> usize {
        match self {
            NodeKind::Process => 0,
            NodeKind::File => 1,
            NodeKind::Network => 2,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Edge labels. The nine canonical labels form a closed set; `Other` exists
/// only for deployments that extend the vocabulary via config.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Read,
    Write,
    Connect,
    Send,
    Recv,
    Exec,
    Load,
    Fork,
    Clone,
    Other(String),
}

impl EdgeKind {
    pub const CANONICAL: [EdgeKind; 9] = [
        EdgeKind::Read,
        EdgeKind::Write,
        EdgeKind::Connect,
        EdgeKind::Send,
        EdgeKind::Recv,
        EdgeKind::Exec,
        EdgeKind::Load,
        EdgeKind::Fork,
        EdgeKind::Clone,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            EdgeKind::Read => "read",
            EdgeKind::Write => "write",
            EdgeKind::Connect => "connect",
            EdgeKind::Send => "send",
            EdgeKind::Recv => "recv",
            EdgeKind::Exec => "exec",
            EdgeKind::Load => "load",
            EdgeKind::Fork => "fork",
            EdgeKind::Clone => "clone",
            EdgeKind::Other(s) => s,
        }
    }

    /// Parse a canonical label. Unknown labels are *not* mapped to `Other`
    /// here; extended vocabularies are opted into at the parser level.
    pub fn parse_canonical(s: &str) -> Option<EdgeKind> {
        match s {
            "read" => Some(EdgeKind::Read),
            "write" => Some(EdgeKind::Write),
            "connect" => Some(EdgeKind::Connect),
            "send" => Some(EdgeKind::Send),
            "recv" => Some(EdgeKind::Recv),
            "exec" => Some(EdgeKind::Exec),
            "load" => Some(EdgeKind::Load),
            "fork" => Some(EdgeKind::Fork),
            "clone" => Some(EdgeKind::Clone),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for EdgeKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EdgeKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(EdgeKind::parse_canonical(&s).unwrap_or(EdgeKind::Other(s)))
    }
}

/// Benign / malicious ground-truth flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "benign" | "Benign" | "0" => Some(Label::Benign),
            "malicious" | "Malicious" | "1" => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }
}

/// One audit event: the (src, dst, timestamp, edge type) quadruple plus the
/// endpoint kinds. Feature overrides only appear in datasets written back
/// after a feature-level attack; absent means "feature = kind index".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub src_id: String,
    pub src_kind: NodeKind,
    pub dst_id: String,
    pub dst_kind: NodeKind,
    pub edge_kind: EdgeKind,
    /// Nanoseconds since epoch; never negative.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_feature: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// One-hot feature index. Starts as `kind.index()`; feature augmentation
    /// and feature attacks may move it anywhere in the node vocabulary.
    pub feature: usize,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Index into `ProvenanceGraph::nodes`.
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub timestamp: i64,
}

/// A directed provenance graph. Nodes keep insertion order; an id index is
/// maintained on the side. Immutable once a pipeline stage hands it on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    /// Whole-graph ground truth, when the dataset is graph-level.
    pub label: Option<Label>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ProvenanceGraph {
    pub fn new() -> Self {
        ProvenanceGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            label: None,
            index: HashMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Rebuild the id index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
    }

    /// Insert a node or return the existing index. Same id with a different
    /// kind is corrupted input and a hard error.
    pub fn upsert_node(&mut self, id: &str, kind: NodeKind) -> Result<usize> {
        if let Some(&i) = self.index.get(id) {
            let existing = self.nodes[i].kind;
            if existing != kind {
                return Err(Error::KindConflict {
                    id: id.to_string(),
                    existing: existing.as_str().to_string(),
                    new: kind.as_str().to_string(),
                });
            }
            return Ok(i);
        }
        let i = self.nodes.len();
        self.nodes.push(Node {
            id: id.to_string(),
            kind,
            feature: kind.index(),
            label: None,
        });
        self.index.insert(id.to_string(), i);
        Ok(i)
    }

    /// Insert a node with a fresh, non-colliding id derived from `base`.
    /// Returns the node index.
    pub fn insert_unique_node(&mut self, base: &str, kind: NodeKind) -> usize {
        let mut id = base.to_string();
        let mut n = 0u32;
        while self.index.contains_key(&id) {
            n += 1;
            id = format!("{base}_{n}");
        }
        let i = self.nodes.len();
        self.index.insert(id.clone(), i);
        self.nodes.push(Node {
            id,
            kind,
            feature: kind.index(),
            label: None,
        });
        i
    }

    /// Append an edge between existing nodes. Self-loops are structurally
    /// invalid in a provenance graph.
    pub fn add_edge(&mut self, src: usize, dst: usize, kind: EdgeKind, timestamp: i64) {
        assert!(src < self.nodes.len() && dst < self.nodes.len(), "edge endpoint out of range");
        assert_ne!(src, dst, "self-loop edges are not representable");
        self.edges.push(Edge {
            src,
            dst,
            kind,
            timestamp,
        });
    }

    pub fn remove_edge(&mut self, edge_idx: usize) {
        self.edges.remove(edge_idx);
    }

    pub fn set_feature(&mut self, node_idx: usize, feature: usize) {
        self.nodes[node_idx].feature = feature;
    }

    pub fn set_node_label(&mut self, node_idx: usize, label: Label) {
        self.nodes[node_idx].label = Some(label);
    }

    /// Apply a node-level ground-truth map; ids absent from the graph are
    /// ignored (they may have been removed by reduction).
    pub fn apply_node_labels(&mut self, labels: &BTreeMap<String, Label>) {
        for (id, label) in labels {
            if let Some(&i) = self.index.get(id) {
                self.nodes[i].label = Some(*label);
            }
        }
    }

    pub fn degree(&self, node_idx: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.src == node_idx || e.dst == node_idx)
            .count()
    }

    pub fn max_timestamp(&self) -> i64 {
        self.edges.iter().map(|e| e.timestamp).max().unwrap_or(0)
    }

    /// Indices of nodes carrying a malicious ground-truth flag.
    pub fn malicious_nodes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.label == Some(Label::Malicious))
            .map(|(i, _)| i)
            .collect()
    }

    /// Whether an exact (src, dst, kind) edge is already present.
    pub fn has_edge(&self, src: usize, dst: usize, kind: &EdgeKind) -> bool {
        self.edges
            .iter()
            .any(|e| e.src == src && e.dst == dst && e.kind == *kind)
    }

    /// Remove a set of nodes (by index) together with their incident edges,
    /// remapping the survivors. Node order is preserved.
    pub fn remove_nodes(&mut self, victims: &HashSet<usize>) {
        if victims.is_empty() {
            return;
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut kept = Vec::with_capacity(self.nodes.len() - victims.len());
        for (i, node) in self.nodes.drain(..).enumerate() {
            if !victims.contains(&i) {
                remap[i] = kept.len();
                kept.push(node);
            }
        }
        self.nodes = kept;
        self.edges.retain(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX);
        for e in &mut self.edges {
            e.src = remap[e.src];
            e.dst = remap[e.dst];
        }
        self.reindex();
    }

    /// Convert the graph back into event records (one per edge), carrying
    /// feature overrides for nodes whose feature no longer equals their kind.
    pub fn to_events(&self) -> Vec<EventRecord> {
        self.edges
            .iter()
            .map(|e| {
                let s = &self.nodes[e.src];
                let d = &self.nodes[e.dst];
                EventRecord {
                    src_id: s.id.clone(),
                    src_kind: s.kind,
                    dst_id: d.id.clone(),
                    dst_kind: d.kind,
                    edge_kind: e.kind.clone(),
                    timestamp: e.timestamp,
                    src_feature: (s.feature != s.kind.index()).then_some(s.feature),
                    dst_feature: (d.feature != d.kind.index()).then_some(d.feature),
                }
            })
            .collect()
    }

    /// Deterministic textual serialization for golden-file testing:
    /// sorted node lines, then sorted edge tuples.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if let Some(label) = self.label {
            out.push_str(&format!("graph label={}\n", label.as_str()));
        }
        let mut node_lines: Vec<String> = self
            .nodes
            .iter()
            .map(|n| {
                let mut line = format!("node {} {} f={}", n.id, n.kind, n.feature);
                if let Some(l) = n.label {
                    line.push_str(&format!(" label={}", l.as_str()));
                }
                line
            })
            .collect();
        node_lines.sort();
        let mut edge_lines: Vec<String> = self
            .edges
            .iter()
            .map(|e| {
                format!(
                    "edge {} {} {} t={}",
                    self.nodes[e.src].id, self.nodes[e.dst].id, e.kind, e.timestamp
                )
            })
            .collect();
        edge_lines.sort();
        for l in node_lines.into_iter().chain(edge_lines) {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

impl Default for ProvenanceGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Build a graph from events: one node per distinct (id, kind), one edge per
/// event, insertion order preserved. Kind conflicts and self-loop events are
/// hard errors; the parser rejects both before they get here.
pub fn build_graph(events: &[EventRecord]) -> Result<ProvenanceGraph> {
    if events.is_empty() {
        return Err(Error::Data("build_graph requires at least one event".into()));
    }
    let mut g = ProvenanceGraph::new();
    for ev in events {
        if ev.src_id == ev.dst_id {
            return Err(Error::Data(format!(
                "self-loop event on {} (timestamp {})",
                ev.src_id, ev.timestamp
            )));
        }
        let s = g.upsert_node(&ev.src_id, ev.src_kind)?;
        let d = g.upsert_node(&ev.dst_id, ev.dst_kind)?;
        apply_feature_override(&mut g, s, ev.src_feature, &ev.src_id)?;
        apply_feature_override(&mut g, d, ev.dst_feature, &ev.dst_id)?;
        g.add_edge(s, d, ev.edge_kind.clone(), ev.timestamp);
    }
    Ok(g)
}

fn apply_feature_override(
    g: &mut ProvenanceGraph,
    idx: usize,
    feature: Option<usize>,
    id: &str,
) -> Result<()> {
    let Some(f) = feature else { return Ok(()) };
    let node = &g.nodes[idx];
    if node.feature != node.kind.index() && node.feature != f {
        return Err(Error::Data(format!(
            "conflicting feature overrides for {id}: {} vs {f}",
            node.feature
        )));
    }
    g.nodes[idx].feature = f;
    Ok(())
}

/// Causal-persistent edge reduction: within each (src, dst, kind) group,
/// drop edges that fall at most `window_ns` after the retained representative;
/// the earliest edge of each burst is retained and restarts the window.
pub fn reduce_cpr(g: &ProvenanceGraph, window_ns: i64) -> ProvenanceGraph {
    assert!(window_ns > 0, "reduction window must be positive");
    // Group edge positions by (src, dst, kind).
    let mut groups: BTreeMap<(usize, usize, EdgeKind), Vec<usize>> = BTreeMap::new();
    for (i, e) in g.edges.iter().enumerate() {
        groups
            .entry((e.src, e.dst, e.kind.clone()))
            .or_default()
            .push(i);
    }
    let mut retain = vec![false; g.edges.len()];
    for positions in groups.values() {
        let mut by_time = positions.clone();
        by_time.sort_by_key(|&i| (g.edges[i].timestamp, i));
        let mut rep_ts: Option<i64> = None;
        for &i in &by_time {
            let ts = g.edges[i].timestamp;
            match rep_ts {
                Some(rep) if ts - rep <= window_ns => {} // merged into the burst
                _ => {
                    retain[i] = true;
                    rep_ts = Some(ts);
                }
            }
        }
    }
    let mut out = g.clone();
    let mut pos = 0usize;
    out.edges.retain(|_| {
        let keep = retain[pos];
        pos += 1;
        keep
    });
    out
}

/// Remove degree-0 nodes. Nodes that only ever appeared in rejected events
/// never enter the graph, so orphan removal covers the faulty-node case too.
pub fn cleanup(g: &ProvenanceGraph) -> ProvenanceGraph {
    let mut connected = vec![false; g.nodes.len()];
    for e in &g.edges {
        connected[e.src] = true;
        connected[e.dst] = true;
    }
    let victims: HashSet<usize> = (0..g.nodes.len()).filter(|&i| !connected[i]).collect();
    let mut out = g.clone();
    out.remove_nodes(&victims);
    out
}

/// Split an event stream into windows of `batch_events` events and turn each
/// window into an independent graph via build → reduce → cleanup. The final
/// partial window is kept.
pub fn batch_split(
    events: &[EventRecord],
    batch_events: usize,
    window_ns: i64,
) -> Result<Vec<ProvenanceGraph>> {
    assert!(batch_events > 0, "batch size must be positive");
    events
        .chunks(batch_events)
        .map(|chunk| {
            let g = build_graph(chunk)?;
            Ok(cleanup(&reduce_cpr(&g, window_ns)))
        })
        .collect()
}
