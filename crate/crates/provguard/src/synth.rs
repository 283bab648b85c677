//! Seeded synthetic dataset generator.
//!
//! Benign graphs are drawn from three behavioral templates, each built from
//! legal edge patterns only:
//!
//! - **browsing**: one process talking to several network endpoints and
//!   reading a handful of files
//! - **build**: a root process forking compiler children that read sources
//!   and write objects, with a linker stage, all tools exec'd from files
//! - **service**: a daemon reading config, forking workers that exchange
//!   network traffic and append to logs
//!
//! Malicious graphs are a benign instance whose root process has been
//! exploited: it forks a dropper (exec'd from a payload file) that fans out
//! beaconing children. The attack motif sits inside ordinary background
//! activity, the way real intrusions do.
//!
//! Sizes jitter per instance under the dataset seed, so the benign class
//! has intra-template diversity while the templates stay structurally
//! distinct (see `motif_signature`).

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{EdgeKind, EventRecord, Label, NodeKind, ProvenanceGraph};
use crate::parse::event_to_json_line;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Independent graphs with graph-level ground truth.
    GraphLevel,
    /// Event streams with node-level ground truth.
    NodeLevel,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Profile> {
        match s {
            "graph" | "graph_level" => Some(Profile::GraphLevel),
            "node" | "node_level" => Some(Profile::NodeLevel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub profile: Profile,
    /// Total benign instances; the last `holdout` of them form the benign
    /// part of the test set.
    pub benign: usize,
    pub malicious: usize,
    pub holdout: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            profile: Profile::GraphLevel,
            benign: 100,
            malicious: 25,
            holdout: 25,
            seed: 42,
        }
    }
}

/// Generated dataset, still in event form: one event list per instance
/// graph. Test labels map graph indices (graph level) or entity ids (node
/// level) to flags.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub profile: Profile,
    pub train: Vec<Vec<EventRecord>>,
    pub test: Vec<Vec<EventRecord>>,
    pub test_labels: BTreeMap<String, Label>,
}

const STEP: i64 = 2_000_000_000; // 2 s, outlives the default reduction window

struct EventSink {
    events: Vec<EventRecord>,
    t: i64,
}

impl EventSink {
    fn new(t0: i64) -> Self {
        EventSink {
            events: Vec::new(),
            t: t0,
        }
    }

    fn emit(&mut self, src: &str, sk: NodeKind, dst: &str, dk: NodeKind, kind: EdgeKind) {
        self.t += STEP;
        self.events.push(EventRecord {
            src_id: src.to_string(),
            src_kind: sk,
            dst_id: dst.to_string(),
            dst_kind: dk,
            edge_kind: kind,
            timestamp: self.t,
            src_feature: None,
            dst_feature: None,
        });
    }

    /// Same edge again within the reduction window (burst realism; CPR
    /// merges it away).
    fn emit_burst_repeat(&mut self) {
        if let Some(last) = self.events.last().cloned() {
            self.events.push(EventRecord {
                timestamp: last.timestamp + 100_000_000, // +100 ms
                ..last
            });
        }
    }
}

fn browsing(prefix: &str, rng: &mut ChaCha8Rng) -> Vec<EventRecord> {
    let mut sink = EventSink::new(0);
    let p = format!("{prefix}browser");
    let webs = rng.random_range(5..=9);
    let files = rng.random_range(4..=7);
    let tabs = rng.random_range(1..=3);
    for tab in 0..tabs {
        // Renderer processes fetch pages (always with responses) and write
        // their tab cache; distinctly two-way traffic plus file output.
        let renderer = format!("{prefix}tab{tab}");
        sink.emit(&p, NodeKind::Process, &renderer, NodeKind::Process, EdgeKind::Fork);
        sink.emit(
            &renderer,
            NodeKind::Process,
            &format!("{prefix}tabcache{tab}"),
            NodeKind::File,
            EdgeKind::Write,
        );
    }
    for w in 0..webs {
        let net = format!("{prefix}site{w}");
        let src = if w % 3 == 0 {
            p.clone()
        } else {
            format!("{prefix}tab{}", w % tabs.max(1))
        };
        sink.emit(&src, NodeKind::Process, &net, NodeKind::Network, EdgeKind::Connect);
        sink.emit(&src, NodeKind::Process, &net, NodeKind::Network, EdgeKind::Send);
        sink.emit(&src, NodeKind::Process, &net, NodeKind::Network, EdgeKind::Recv);
    }
    for f in 0..files {
        let file = format!("{prefix}cache{f}");
        sink.emit(&p, NodeKind::Process, &file, NodeKind::File, EdgeKind::Read);
        if f == 0 {
            sink.emit_burst_repeat();
        }
    }
    sink.emit(
        &p,
        NodeKind::Process,
        &format!("{prefix}history"),
        NodeKind::File,
        EdgeKind::Write,
    );
    sink.events
}

fn build_like(prefix: &str, rng: &mut ChaCha8Rng) -> Vec<EventRecord> {
    let mut sink = EventSink::new(0);
    let root = format!("{prefix}make");
    let cc = format!("{prefix}cc_bin");
    let children = rng.random_range(3..=6);
    let mut objects = Vec::new();
    for c in 0..children {
        let child = format!("{prefix}cc{c}");
        sink.emit(&root, NodeKind::Process, &child, NodeKind::Process, EdgeKind::Fork);
        sink.emit(&cc, NodeKind::File, &child, NodeKind::Process, EdgeKind::Exec);
        let sources = rng.random_range(2..=3);
        for s in 0..sources {
            sink.emit(
                &child,
                NodeKind::Process,
                &format!("{prefix}src{c}_{s}"),
                NodeKind::File,
                EdgeKind::Read,
            );
        }
        let obj = format!("{prefix}obj{c}");
        sink.emit(&child, NodeKind::Process, &obj, NodeKind::File, EdgeKind::Write);
        objects.push(obj);
    }
    let linker = format!("{prefix}ld");
    sink.emit(&root, NodeKind::Process, &linker, NodeKind::Process, EdgeKind::Fork);
    sink.emit(
        &format!("{prefix}ld_bin"),
        NodeKind::File,
        &linker,
        NodeKind::Process,
        EdgeKind::Load,
    );
    for obj in &objects {
        sink.emit(&linker, NodeKind::Process, obj, NodeKind::File, EdgeKind::Read);
    }
    sink.emit(
        &linker,
        NodeKind::Process,
        &format!("{prefix}binary"),
        NodeKind::File,
        EdgeKind::Write,
    );
    sink.events
}

fn service(prefix: &str, rng: &mut ChaCha8Rng) -> Vec<EventRecord> {
    let mut sink = EventSink::new(0);
    let daemon = format!("{prefix}daemon");
    for c in 0..rng.random_range(1..=2) {
        sink.emit(
            &daemon,
            NodeKind::Process,
            &format!("{prefix}conf{c}"),
            NodeKind::File,
            EdgeKind::Read,
        );
    }
    sink.emit(
        &daemon,
        NodeKind::Process,
        &format!("{prefix}pid"),
        NodeKind::File,
        EdgeKind::Write,
    );
    let workers = rng.random_range(2..=4);
    for w in 0..workers {
        let worker = format!("{prefix}worker{w}");
        sink.emit(&daemon, NodeKind::Process, &worker, NodeKind::Process, EdgeKind::Clone);
        let peers = rng.random_range(1..=3);
        for n in 0..peers {
            let peer = format!("{prefix}peer{w}_{n}");
            sink.emit(&worker, NodeKind::Process, &peer, NodeKind::Network, EdgeKind::Recv);
            sink.emit(&worker, NodeKind::Process, &peer, NodeKind::Network, EdgeKind::Send);
        }
        sink.emit(
            &worker,
            NodeKind::Process,
            &format!("{prefix}log{w}"),
            NodeKind::File,
            EdgeKind::Write,
        );
    }
    sink.events
}

fn benign_instance(template: usize, prefix: &str, rng: &mut ChaCha8Rng) -> Vec<EventRecord> {
    match template % 3 {
        0 => browsing(prefix, rng),
        1 => build_like(prefix, rng),
        _ => service(prefix, rng),
    }
}

/// Root process id of a benign template instance (the exploited host in
/// malicious graphs).
fn template_root(template: usize, prefix: &str) -> String {
    match template % 3 {
        0 => format!("{prefix}browser"),
        1 => format!("{prefix}make"),
        _ => format!("{prefix}daemon"),
    }
}

/// A malicious instance embeds the attack in benign background activity,
/// matching how real intrusions sit inside ordinary host behavior: a benign
/// template instance whose root process is exploited into exec'ing a
/// dropper that fans out beaconing children. Returns the events plus the
/// ids of the attack entities (the exploited host itself stays benign).
fn malicious_instance(
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> (Vec<EventRecord>, std::collections::BTreeSet<String>) {
    let template = rng.random_range(0..3usize);
    let mut events = benign_instance(template, prefix, rng);
    let background: std::collections::BTreeSet<String> = events
        .iter()
        .flat_map(|e| [e.src_id.clone(), e.dst_id.clone()])
        .collect();
    let host = template_root(template, prefix);
    let t0 = events.last().map_or(0, |e| e.timestamp);
    let mut sink = EventSink::new(t0);

    let dropper = format!("{prefix}dropper");
    sink.emit(&host, NodeKind::Process, &dropper, NodeKind::Process, EdgeKind::Fork);
    sink.emit(
        &format!("{prefix}payload"),
        NodeKind::File,
        &dropper,
        NodeKind::Process,
        EdgeKind::Exec,
    );
    // Bots mimic worker/tab behavior closely (they even drop staging files)
    // but beacon one-way and never read local inputs.
    let fanout = rng.random_range(6..=10);
    for c in 0..fanout {
        let child = format!("{prefix}bot{c}");
        sink.emit(&dropper, NodeKind::Process, &child, NodeKind::Process, EdgeKind::Fork);
        let c2 = format!("{prefix}c2_{}", c % 2);
        sink.emit(&child, NodeKind::Process, &c2, NodeKind::Network, EdgeKind::Connect);
        for _ in 0..rng.random_range(1..=2) {
            sink.emit(&child, NodeKind::Process, &c2, NodeKind::Network, EdgeKind::Send);
        }
        if rng.random_bool(0.4) {
            sink.emit(
                &child,
                NodeKind::Process,
                &format!("{prefix}stage{}", c % 3),
                NodeKind::File,
                EdgeKind::Write,
            );
        }
        if rng.random_bool(0.3) {
            sink.emit(
                &child,
                NodeKind::Process,
                &format!("{prefix}loot"),
                NodeKind::File,
                EdgeKind::Read,
            );
        }
    }
    let motif_ids: std::collections::BTreeSet<String> = sink
        .events
        .iter()
        .flat_map(|e| [e.src_id.clone(), e.dst_id.clone()])
        .filter(|id| !background.contains(id))
        .collect();
    events.extend(sink.events);
    (events, motif_ids)
}

/// Generate the dataset in event form. Deterministic: identical config
/// (including seed) yields identical events.
pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut test_labels = BTreeMap::new();
    let holdout = cfg.holdout.min(cfg.benign);
    let train_benign = cfg.benign - holdout;

    let benign_events: Vec<Vec<EventRecord>> = (0..cfg.benign)
        .map(|i| {
            let mut rng = seed::rng(seed::derive2(cfg.seed, stream::SYNTH, i as u64));
            benign_instance(i, &format!("b{i}_"), &mut rng)
        })
        .collect();
    let malicious_instances: Vec<(Vec<EventRecord>, std::collections::BTreeSet<String>)> = (0
        ..cfg.malicious)
        .map(|i| {
            let mut rng =
                seed::rng(seed::derive2(cfg.seed, stream::SYNTH, 1_000_000 + i as u64));
            malicious_instance(&format!("m{i}_"), &mut rng)
        })
        .collect();

    match cfg.profile {
        Profile::GraphLevel => {
            for events in benign_events.iter().take(train_benign) {
                train.push(events.clone());
            }
            for events in benign_events.iter().skip(train_benign) {
                test_labels.insert(test.len().to_string(), Label::Benign);
                test.push(events.clone());
            }
            for (events, _) in &malicious_instances {
                test_labels.insert(test.len().to_string(), Label::Malicious);
                test.push(events.clone());
            }
        }
        Profile::NodeLevel => {
            // One graph per instance here too; entity-level ground truth is
            // what distinguishes the profile. Only the attack entities are
            // malicious; the background of an exploited instance stays
            // benign.
            for events in benign_events.iter().take(train_benign) {
                train.push(events.clone());
            }
            for events in benign_events.iter().skip(train_benign) {
                for ev in events {
                    test_labels.insert(ev.src_id.clone(), Label::Benign);
                    test_labels.insert(ev.dst_id.clone(), Label::Benign);
                }
                test.push(events.clone());
            }
            for (events, motif_ids) in &malicious_instances {
                for ev in events {
                    for id in [&ev.src_id, &ev.dst_id] {
                        let label = if motif_ids.contains(id) {
                            Label::Malicious
                        } else {
                            Label::Benign
                        };
                        test_labels.insert(id.clone(), label);
                    }
                }
                test.push(events.clone());
            }
        }
    }
    SynthDataset {
        profile: cfg.profile,
        train,
        test,
        test_labels,
    }
}

/// Write a dataset to `dir`: `train/` and `test/` with one event file per
/// instance graph, plus `test_labels.tsv` (graph indices for the graph
/// profile, entity ids for the node profile).
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<()> {
    let write_split = |name: &str, graphs: &[Vec<EventRecord>]| -> Result<()> {
        let split_dir = dir.join(name);
        std::fs::create_dir_all(&split_dir)?;
        for (i, events) in graphs.iter().enumerate() {
            let mut out = String::new();
            for ev in events {
                out.push_str(&event_to_json_line(ev));
                out.push('\n');
            }
            std::fs::write(split_dir.join(format!("g{i:05}.jsonl")), out)?;
        }
        Ok(())
    };
    write_split("train", &ds.train)?;
    write_split("test", &ds.test)?;
    crate::parse::save_labels(&dir.join("test_labels.tsv"), &ds.test_labels)?;
    Ok(())
}

/// One representative instance of each benign template, for documentation
/// and the non-isomorphism check.
pub fn template_motifs() -> [Vec<EventRecord>; 3] {
    let mut rng = seed::rng(0);
    [
        browsing("t0_", &mut rng),
        build_like("t1_", &mut rng),
        service("t2_", &mut rng),
    ]
}

/// Cheap isomorphism-invariant signature: the sorted multiset of
/// (kind, sorted outgoing labels, sorted incoming labels) per node.
pub fn motif_signature(g: &ProvenanceGraph) -> Vec<(NodeKind, Vec<String>, Vec<String>)> {
    let mut sig: Vec<(NodeKind, Vec<String>, Vec<String>)> = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut outs: Vec<String> = g
                .edges()
                .iter()
                .filter(|e| e.src == i)
                .map(|e| e.kind.to_string())
                .collect();
            let mut ins: Vec<String> = g
                .edges()
                .iter()
                .filter(|e| e.dst == i)
                .map(|e| e.kind.to_string())
                .collect();
            outs.sort();
            ins.sort();
            (n.kind, outs, ins)
        })
        .collect();
    sig.sort();
    sig
}
