//! Seeded graph-manipulation attacks for robustness evaluation.
//!
//! Detection phase (pollution of the graphs under analysis):
//! - GSPA, structure pollution: add edges from malicious to benign nodes
//! - GFPA, feature pollution: overwrite malicious node features with benign ones
//! - CGPA: GSPA at rate y/2 followed by GFPA at rate y/2
//!
//! Training phase (poisoning of the training graphs):
//! - SPA, structure poisoning: node insertions plus edge adds / rewires
//! - FPA, feature poisoning: pairwise feature swaps across random nodes
//!
//! Attackers are not bound by the augmentation rule table: they prefer
//! plausible labels when one exists (mimicry) but will forge arbitrary ones.
//! Attacks are pure seeded transforms and never consult the detector or the
//! encoder.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, Label, NodeKind, ProvenanceGraph};
use crate::rules::LogicRuleSet;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackPhase {
    Detection,
    Training,
}

impl AttackPhase {
    pub fn parse(s: &str) -> Option<AttackPhase> {
        match s {
            "detection" => Some(AttackPhase::Detection),
            "training" => Some(AttackPhase::Training),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackPhase::Detection => "detection",
            AttackPhase::Training => "training",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    Gspa,
    Gfpa,
    Cgpa,
    Spa,
    Fpa,
}

impl AttackKind {
    pub fn parse(s: &str) -> Option<AttackKind> {
        match s.to_ascii_lowercase().as_str() {
            "gspa" => Some(AttackKind::Gspa),
            "gfpa" => Some(AttackKind::Gfpa),
            "cgpa" => Some(AttackKind::Cgpa),
            "spa" => Some(AttackKind::Spa),
            "fpa" => Some(AttackKind::Fpa),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Gspa => "gspa",
            AttackKind::Gfpa => "gfpa",
            AttackKind::Cgpa => "cgpa",
            AttackKind::Spa => "spa",
            AttackKind::Fpa => "fpa",
        }
    }

    /// The phase each attack kind belongs to.
    pub fn phase(self) -> AttackPhase {
        match self {
            AttackKind::Gspa | AttackKind::Gfpa | AttackKind::Cgpa => AttackPhase::Detection,
            AttackKind::Spa | AttackKind::Fpa => AttackPhase::Training,
        }
    }
}

/// Which nodes an attack targets: ground-truth malicious nodes (node-level
/// datasets) or uniformly sampled nodes (graph-level datasets without node
/// ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetPolicy {
    MaliciousNodes,
    Random,
}

impl TargetPolicy {
    pub fn parse(s: &str) -> Option<TargetPolicy> {
        match s {
            "malicious" | "malicious_nodes" => Some(TargetPolicy::MaliciousNodes),
            "random" => Some(TargetPolicy::Random),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TargetPolicy::MaliciousNodes => "malicious_nodes",
            TargetPolicy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub phase: AttackPhase,
    pub kind: AttackKind,
    pub rate: f64,
    pub seed: u64,
    pub target_policy: TargetPolicy,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, rate: f64, seed: u64, target_policy: TargetPolicy) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Usage(format!("attack rate must be in [0,1], got {rate}")));
        }
        Ok(AttackSpec {
            phase: kind.phase(),
            kind,
            rate,
            seed,
            target_policy,
        })
    }

    /// Parse a CLI descriptor such as `cgpa:y=0.2:seed=7:policy=random`.
    pub fn parse_descriptor(descriptor: &str) -> Result<Self> {
        let mut parts = descriptor.split(':');
        let kind_str = parts.next().unwrap_or_default();
        let kind = AttackKind::parse(kind_str)
            .ok_or_else(|| Error::Usage(format!("unknown attack kind {kind_str:?}")))?;
        let mut rate = None;
        let mut spec_seed = 0u64;
        let mut policy = TargetPolicy::Random;
        let mut phase = None;
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("bad descriptor field {part:?}")))?;
            match key {
                "y" | "rate" => {
                    rate = Some(value.parse::<f64>().map_err(|_| {
                        Error::Usage(format!("bad attack rate {value:?}"))
                    })?);
                }
                "seed" => {
                    spec_seed = value
                        .parse::<u64>()
                        .map_err(|_| Error::Usage(format!("bad seed {value:?}")))?;
                }
                "policy" => {
                    policy = TargetPolicy::parse(value)
                        .ok_or_else(|| Error::Usage(format!("bad policy {value:?}")))?;
                }
                "phase" => {
                    phase = Some(AttackPhase::parse(value).ok_or_else(|| {
                        Error::Usage(format!("bad phase {value:?}"))
                    })?);
                }
                other => return Err(Error::Usage(format!("unknown descriptor key {other:?}"))),
            }
        }
        let rate = rate.ok_or_else(|| Error::Usage("descriptor needs y=<rate>".into()))?;
        let spec = AttackSpec::new(kind, rate, spec_seed, policy)?;
        if let Some(p) = phase {
            if p != spec.phase {
                return Err(Error::Usage(format!(
                    "{} is a {}-phase attack, not {}",
                    kind.as_str(),
                    spec.phase.as_str(),
                    p.as_str()
                )));
            }
        }
        Ok(spec)
    }

    fn with(&self, kind: AttackKind, rate: f64, seed: u64) -> AttackSpec {
        AttackSpec {
            phase: kind.phase(),
            kind,
            rate,
            seed,
            target_policy: self.target_policy,
        }
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:y={}:seed={}:policy={}",
            self.kind.as_str(),
            self.rate,
            self.seed,
            self.target_policy.as_str()
        )
    }
}

fn ceil_rate(rate: f64, n: usize) -> usize {
    (rate * n as f64).ceil() as usize
}

/// Targeted node indices under the spec's policy.
fn targets(g: &ProvenanceGraph, spec: &AttackSpec) -> Result<Vec<usize>> {
    match spec.target_policy {
        TargetPolicy::MaliciousNodes => {
            let m = g.malicious_nodes();
            if m.is_empty() {
                return Err(Error::Data(
                    "attack targets malicious nodes but the graph has none".into(),
                ));
            }
            Ok(m)
        }
        TargetPolicy::Random => Ok((0..g.node_count()).collect()),
    }
}

fn sample<'a, T>(items: &'a [T], rng: &mut ChaCha8Rng) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Structure pollution: add `ceil(y · |targets|)` new edges from targeted
/// nodes to benign nodes, with a plausible label when the kind pair allows
/// one and an arbitrary label otherwise. Never removes anything.
pub fn gspa(g: &ProvenanceGraph, spec: &AttackSpec) -> Result<ProvenanceGraph> {
    expect_kind(spec, AttackKind::Gspa)?;
    let target_set = targets(g, spec)?;
    let additions = ceil_rate(spec.rate, target_set.len());
    let mut out = g.clone();
    if additions == 0 {
        return Ok(out);
    }
    let rules = LogicRuleSet::default();
    let mut rng = seed::rng(seed::derive(spec.seed, stream::ATTACK_STRUCT));
    // "benign" pool: everything not targeted; if the whole graph is
    // targeted, any other node serves as the camouflage endpoint.
    let benign: Vec<usize> = match spec.target_policy {
        TargetPolicy::MaliciousNodes => (0..g.node_count())
            .filter(|i| g.node(*i).label != Some(Label::Malicious))
            .collect(),
        TargetPolicy::Random => (0..g.node_count()).collect(),
    };
    let ts = out.max_timestamp();
    for _ in 0..additions {
        let mut src;
        let mut dst;
        loop {
            src = *sample(&target_set, &mut rng);
            dst = if benign.is_empty() {
                rng.random_range(0..out.node_count())
            } else {
                *sample(&benign, &mut rng)
            };
            if src != dst {
                break;
            }
        }
        let legal = rules.labels_for(out.node(src).kind, out.node(dst).kind);
        let label = if legal.is_empty() {
            EdgeKind::CANONICAL[rng.random_range(0..EdgeKind::CANONICAL.len())].clone()
        } else {
            legal[rng.random_range(0..legal.len())].clone()
        };
        out.add_edge(src, dst, label, ts);
    }
    Ok(out)
}

/// Feature pollution: overwrite `ceil(y · |targets|)` targeted nodes'
/// feature indices with those of sampled benign donors, preferring same-kind
/// donors. Topology is untouched.
pub fn gfpa(g: &ProvenanceGraph, spec: &AttackSpec) -> Result<ProvenanceGraph> {
    expect_kind(spec, AttackKind::Gfpa)?;
    let target_set = targets(g, spec)?;
    let count = ceil_rate(spec.rate, target_set.len());
    let mut out = g.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut rng = seed::rng(seed::derive(spec.seed, stream::ATTACK_FEAT));
    let donors: Vec<usize> = match spec.target_policy {
        TargetPolicy::MaliciousNodes => (0..g.node_count())
            .filter(|i| g.node(*i).label != Some(Label::Malicious))
            .collect(),
        TargetPolicy::Random => (0..g.node_count()).collect(),
    };
    if donors.is_empty() {
        // nothing to mimic in an all-malicious graph
        return Ok(out);
    }
    let chosen = rand::seq::index::sample(&mut rng, target_set.len(), count.min(target_set.len()));
    for ti in chosen {
        let v = target_set[ti];
        let same_kind: Vec<usize> = donors
            .iter()
            .copied()
            .filter(|&d| d != v && g.node(d).kind == g.node(v).kind)
            .collect();
        let donor = if same_kind.is_empty() {
            // cross-kind fallback: the forged one-hot index is reinterpreted
            // in the donor's position
            let pool: Vec<usize> = donors.iter().copied().filter(|&d| d != v).collect();
            if pool.is_empty() {
                continue;
            }
            *sample(&pool, &mut rng)
        } else {
            *sample(&same_kind, &mut rng)
        };
        let f = out.node(donor).feature;
        out.set_feature(v, f);
    }
    Ok(out)
}

/// Combined pollution: structure at rate y/2, then features at rate y/2,
/// with sub-seeds derived from the spec seed.
pub fn cgpa(g: &ProvenanceGraph, spec: &AttackSpec) -> Result<ProvenanceGraph> {
    expect_kind(spec, AttackKind::Cgpa)?;
    let half = spec.rate * 0.5;
    let s = gspa(g, &spec.with(AttackKind::Gspa, half, seed::derive(spec.seed, 1)))?;
    gfpa(&s, &spec.with(AttackKind::Gfpa, half, seed::derive(spec.seed, 2)))
}

/// Structure poisoning of training graphs: per graph, `ceil(0.5y · |V|)`
/// node insertions with attacker-chosen edges and `ceil(0.5y · |E|)` edge
/// operations (fair coin between adding a random edge and rewiring an
/// existing edge's destination).
pub fn spa(train_graphs: &[ProvenanceGraph], spec: &AttackSpec) -> Result<Vec<ProvenanceGraph>> {
    expect_kind(spec, AttackKind::Spa)?;
    train_graphs
        .iter()
        .enumerate()
        .map(|(gi, g)| spa_one(g, spec, seed::derive2(spec.seed, stream::ATTACK_GRAPH, gi as u64)))
        .collect()
}

fn spa_one(g: &ProvenanceGraph, spec: &AttackSpec, graph_seed: u64) -> Result<ProvenanceGraph> {
    let node_ops = ceil_rate(0.5 * spec.rate, g.node_count());
    let edge_ops = ceil_rate(0.5 * spec.rate, g.edge_count());
    let mut out = g.clone();
    if node_ops == 0 && edge_ops == 0 {
        return Ok(out);
    }
    let mut rng = seed::rng(graph_seed);
    let ts = out.max_timestamp();
    for _ in 0..node_ops {
        let kind = NodeKind::ALL[rng.random_range(0..NodeKind::ALL.len())];
        let idx = out.insert_unique_node("atk_node", kind);
        let fanout = rng.random_range(1..=3usize);
        for _ in 0..fanout {
            let other = rng.random_range(0..out.node_count() - 1);
            let other = if other >= idx { other + 1 } else { other };
            let label = EdgeKind::CANONICAL[rng.random_range(0..EdgeKind::CANONICAL.len())].clone();
            if rng.random_bool(0.5) {
                out.add_edge(idx, other, label, ts);
            } else {
                out.add_edge(other, idx, label, ts);
            }
        }
    }
    for _ in 0..edge_ops {
        if rng.random_bool(0.5) || out.edge_count() == 0 {
            // insert an arbitrary edge between distinct random nodes
            let n = out.node_count();
            let (mut a, mut b) = (0, 0);
            while a == b {
                a = rng.random_range(0..n);
                b = rng.random_range(0..n);
            }
            let label = EdgeKind::CANONICAL[rng.random_range(0..EdgeKind::CANONICAL.len())].clone();
            out.add_edge(a, b, label, ts);
        } else {
            // rewire an existing edge's destination
            let ei = rng.random_range(0..out.edge_count());
            let kind = out.edges()[ei].kind.clone();
            let (s, t) = (out.edges()[ei].src, out.edges()[ei].timestamp);
            let mut new_dst = rng.random_range(0..out.node_count());
            let mut guard = 0;
            while new_dst == s && guard < 16 {
                new_dst = rng.random_range(0..out.node_count());
                guard += 1;
            }
            if new_dst != s {
                out.remove_edge(ei);
                out.add_edge(s, new_dst, kind, t);
            }
        }
    }
    Ok(crate::graph::cleanup(&out))
}

/// Feature poisoning of training graphs: per graph, `ceil(y · |V|)` nodes
/// are selected and their features swapped in disjoint pairs, ignoring node
/// kinds. Applying the same swap plan twice restores the original.
pub fn fpa(train_graphs: &[ProvenanceGraph], spec: &AttackSpec) -> Result<Vec<ProvenanceGraph>> {
    expect_kind(spec, AttackKind::Fpa)?;
    Ok(train_graphs
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let plan = fpa_swap_plan(g, spec, gi);
            apply_swaps(g, &plan)
        })
        .collect())
}

/// The disjoint swap pairs FPA would apply to one graph.
pub fn fpa_swap_plan(g: &ProvenanceGraph, spec: &AttackSpec, graph_index: usize) -> Vec<(usize, usize)> {
    let count = ceil_rate(spec.rate, g.node_count());
    if count < 2 {
        return Vec::new();
    }
    let mut rng = seed::rng(seed::derive2(
        seed::derive(spec.seed, stream::ATTACK_FEAT),
        stream::ATTACK_GRAPH,
        graph_index as u64,
    ));
    let chosen = rand::seq::index::sample(&mut rng, g.node_count(), count.min(g.node_count()));
    let chosen: Vec<usize> = chosen.into_iter().collect();
    chosen.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

pub fn apply_swaps(g: &ProvenanceGraph, swaps: &[(usize, usize)]) -> ProvenanceGraph {
    let mut out = g.clone();
    for &(a, b) in swaps {
        let fa = out.node(a).feature;
        let fb = out.node(b).feature;
        out.set_feature(a, fb);
        out.set_feature(b, fa);
    }
    out
}

fn expect_kind(spec: &AttackSpec, kind: AttackKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Usage(format!(
            "spec kind {} does not match operation {}",
            spec.kind.as_str(),
            kind.as_str()
        )));
    }
    if spec.phase != kind.phase() {
        return Err(Error::Usage(format!(
            "{} is a {}-phase attack",
            kind.as_str(),
            kind.phase().as_str()
        )));
    }
    Ok(())
}

/// Dispatch an attack over a dataset.
///
/// Detection attacks perturb the graphs under analysis: when graph-level
/// ground truth is present only malicious graphs are touched (the attacker
/// camouflages their own activity); otherwise every graph is. Training
/// attacks poison every graph. Per-graph sub-seeds derive from the spec seed.
pub fn apply_attack(graphs: &[ProvenanceGraph], spec: &AttackSpec) -> Result<Vec<ProvenanceGraph>> {
    match spec.kind {
        AttackKind::Spa => spa(graphs, spec),
        AttackKind::Fpa => fpa(graphs, spec),
        AttackKind::Gspa | AttackKind::Gfpa | AttackKind::Cgpa => {
            let any_graph_labels = graphs.iter().any(|g| g.label.is_some());
            graphs
                .iter()
                .enumerate()
                .map(|(gi, g)| {
                    let touched = match spec.target_policy {
                        TargetPolicy::MaliciousNodes => !g.malicious_nodes().is_empty(),
                        TargetPolicy::Random => {
                            !any_graph_labels || g.label == Some(Label::Malicious)
                        }
                    };
                    if !touched {
                        return Ok(g.clone());
                    }
                    let sub = AttackSpec {
                        seed: seed::derive2(spec.seed, stream::ATTACK_GRAPH, gi as u64),
                        ..spec.clone()
                    };
                    match spec.kind {
                        AttackKind::Gspa => gspa(g, &sub),
                        AttackKind::Gfpa => gfpa(g, &sub),
                        AttackKind::Cgpa => cgpa(g, &sub),
                        _ => unreachable!(),
                    }
                })
                .collect()
        }
    }
}
