//! Logic-aware graph augmentation: seeded edge / node / feature perturbation
//! that never forges an edge outside the causality rule table.
//!
//! Perturbation intensity is a ratio `gamma`: an op with `gamma` perturbs
//! `ceil(gamma * n)` slots, where `n` is the edge count (EA) or node count
//! (NA, FA) of the input graph. Ceiling means any `gamma > 0` touches at
//! least one slot on a nonempty graph.

use std::collections::{BTreeSet, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeKind, ProvenanceGraph};
use crate::rules::LogicRuleSet;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentationKind {
    /// Edge augmentation: add rule-compliant edges or remove existing ones.
    Edge,
    /// Node augmentation: insert nodes with legal attachments or remove
    /// nodes along with their incident edges.
    Node,
    /// Feature augmentation: swap feature indices between same-kind nodes.
    Feature,
}

impl AugmentationKind {
    pub fn parse(s: &str) -> Option<AugmentationKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ea" | "edge" => Some(AugmentationKind::Edge),
            "na" | "node" => Some(AugmentationKind::Node),
            "fa" | "feature" => Some(AugmentationKind::Feature),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationKind::Edge => "ea",
            AugmentationKind::Node => "na",
            AugmentationKind::Feature => "fa",
        }
    }
}

/// A parameterized, seeded description of the perturbations to apply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub kinds: BTreeSet<AugmentationKind>,
    pub gamma: f64,
    pub seed: u64,
    pub rules: LogicRuleSet,
}

impl AugmentationPlan {
    pub fn new(kinds: BTreeSet<AugmentationKind>, gamma: f64, seed: u64) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Usage("augmentation plan needs at least one kind".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Usage(format!("gamma must be in [0,1], got {gamma}")));
        }
        Ok(AugmentationPlan {
            kinds,
            gamma,
            seed,
            rules: LogicRuleSet::default(),
        })
    }

    pub fn all_kinds(gamma: f64, seed: u64) -> Result<Self> {
        Self::new(
            BTreeSet::from([
                AugmentationKind::Edge,
                AugmentationKind::Node,
                AugmentationKind::Feature,
            ]),
            gamma,
            seed,
        )
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut plan = self.clone();
        plan.seed = seed;
        plan
    }
}

/// Number of perturbation slots for a ratio over `n` elements.
pub fn slot_count(gamma: f64, n: usize) -> usize {
    (gamma * n as f64).ceil() as usize
}

/// Edge augmentation. Each slot is a fair coin between adding a sampled
/// legal edge and removing a sampled existing one; a slot with no legal
/// addition candidate falls back to removal, and removal is skipped when it
/// would empty the edge set.
pub fn augment_edges(g: &ProvenanceGraph, plan: &AugmentationPlan) -> ProvenanceGraph {
    let slots = slot_count(plan.gamma, g.edge_count());
    if slots == 0 {
        return g.clone();
    }
    let mut rng = seed::rng(seed::derive(plan.seed, stream::EDGE_AUG));
    let mut out = g.clone();
    let mut removed_any = false;
    for _ in 0..slots {
        if rng.random_bool(0.5) {
            if !try_add_edge(&mut out, plan, &mut rng) {
                removed_any |= try_remove_edge(&mut out, &mut rng);
            }
        } else {
            removed_any |= try_remove_edge(&mut out, &mut rng);
        }
    }
    if removed_any {
        out = crate::graph::cleanup(&out);
    }
    out
}

fn try_add_edge(out: &mut ProvenanceGraph, plan: &AugmentationPlan, rng: &mut ChaCha8Rng) -> bool {
    let n = out.node_count();
    if n < 2 {
        return false;
    }
    for _ in 0..64 {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let labels = plan.rules.labels_for(out.node(u).kind, out.node(v).kind);
        if labels.is_empty() {
            continue; // forbidden kind pair, resample
        }
        let open: Vec<_> = labels
            .iter()
            .filter(|l| !out.has_edge(u, v, l))
            .collect();
        if open.is_empty() {
            continue;
        }
        let label = open[rng.random_range(0..open.len())].clone();
        let ts = out.max_timestamp();
        out.add_edge(u, v, label, ts);
        return true;
    }
    false
}

fn try_remove_edge(out: &mut ProvenanceGraph, rng: &mut ChaCha8Rng) -> bool {
    if out.edge_count() <= 1 {
        return false; // never empty the edge set
    }
    let idx = rng.random_range(0..out.edge_count());
    out.remove_edge(idx);
    true
}

/// Node augmentation. Additions insert a node of a sampled kind with 1–3
/// legal edges to existing nodes; removals delete a node together with its
/// incident edges, restricted to nodes whose removal neither empties the
/// edge set nor orphans a neighbor.
pub fn augment_nodes(g: &ProvenanceGraph, plan: &AugmentationPlan) -> ProvenanceGraph {
    let slots = slot_count(plan.gamma, g.node_count());
    if slots == 0 {
        return g.clone();
    }
    let mut rng = seed::rng(seed::derive(plan.seed, stream::NODE_AUG));
    let mut out = g.clone();
    for _ in 0..slots {
        if rng.random_bool(0.5) {
            add_node_slot(&mut out, plan, &mut rng);
        } else {
            let candidates = removal_candidates(&out);
            if candidates.is_empty() {
                continue;
            }
            let v = candidates[rng.random_range(0..candidates.len())];
            out.remove_nodes(&HashSet::from([v]));
        }
    }
    out
}

fn add_node_slot(out: &mut ProvenanceGraph, plan: &AugmentationPlan, rng: &mut ChaCha8Rng) {
    for _ in 0..10 {
        let kind = NodeKind::ALL[rng.random_range(0..NodeKind::ALL.len())];
        // (existing node, edge direction) pairs with at least one legal label.
        let mut hosts: Vec<(usize, bool)> = Vec::new();
        for (i, node) in out.nodes().iter().enumerate() {
            if plan.rules.is_allowed_pair(kind, node.kind) {
                hosts.push((i, true)); // new → existing
            }
            if plan.rules.is_allowed_pair(node.kind, kind) {
                hosts.push((i, false)); // existing → new
            }
        }
        if hosts.is_empty() {
            continue; // e.g. a Network node into an all-Network graph
        }
        let fanout = rng.random_range(1..=3usize);
        let ts = out.max_timestamp();
        let new_idx = out.insert_unique_node("aug_node", kind);
        let mut made = 0;
        let mut guard = 0;
        while made < fanout && guard < 32 {
            guard += 1;
            let (host, outgoing) = hosts[rng.random_range(0..hosts.len())];
            let (s, d) = if outgoing { (new_idx, host) } else { (host, new_idx) };
            let labels = plan.rules.labels_for(out.node(s).kind, out.node(d).kind);
            let label = labels[rng.random_range(0..labels.len())].clone();
            if !out.has_edge(s, d, &label) {
                out.add_edge(s, d, label, ts);
                made += 1;
            }
        }
        return;
    }
    log::warn!("node augmentation slot skipped: no legal attachment after 10 kind samples");
}

/// Nodes that can be removed without emptying the edge set or orphaning a
/// neighbor.
fn removal_candidates(g: &ProvenanceGraph) -> Vec<usize> {
    let n = g.node_count();
    let mut degree = vec![0usize; n];
    for e in g.edges() {
        degree[e.src] += 1;
        degree[e.dst] += 1;
    }
    (0..n)
        .filter(|&v| {
            let incident = degree[v];
            if g.edge_count() <= incident {
                return false; // would leave no edges
            }
            // every neighbor must keep at least one edge
            let mut shared = vec![0usize; n];
            for e in g.edges() {
                if e.src == v && e.dst != v {
                    shared[e.dst] += 1;
                } else if e.dst == v && e.src != v {
                    shared[e.src] += 1;
                }
            }
            (0..n).all(|u| u == v || shared[u] == 0 || degree[u] > shared[u])
        })
        .collect()
}

/// Feature augmentation: each selected node swaps its feature index with a
/// uniformly sampled node of the same kind. Topology and kinds are untouched;
/// a node whose kind has no other member is skipped.
pub fn augment_features(g: &ProvenanceGraph, plan: &AugmentationPlan) -> ProvenanceGraph {
    let slots = slot_count(plan.gamma, g.node_count());
    if slots == 0 {
        return g.clone();
    }
    let mut rng = seed::rng(seed::derive(plan.seed, stream::FEAT_AUG));
    let mut out = g.clone();
    let selected = rand::seq::index::sample(&mut rng, out.node_count(), slots);
    for v in selected {
        let donors: Vec<usize> = (0..out.node_count())
            .filter(|&w| w != v && out.node(w).kind == out.node(v).kind)
            .collect();
        if donors.is_empty() {
            continue;
        }
        let w = donors[rng.random_range(0..donors.len())];
        let fv = out.node(v).feature;
        let fw = out.node(w).feature;
        out.set_feature(v, fw);
        out.set_feature(w, fv);
    }
    out
}

/// Generate `n_views` perturbed views, applying the plan's enabled
/// augmentations in EA → NA → FA order with per-view derived sub-seeds.
pub fn make_views(
    g: &ProvenanceGraph,
    plan: &AugmentationPlan,
    n_views: usize,
) -> Result<Vec<ProvenanceGraph>> {
    if n_views < 2 {
        return Err(Error::Usage(format!(
            "need at least 2 views, requested {n_views}"
        )));
    }
    Ok((0..n_views)
        .map(|i| {
            let sub = plan.with_seed(seed::derive2(plan.seed, stream::VIEW, i as u64));
            apply_plan(g, &sub)
        })
        .collect())
}

/// Apply the plan's enabled augmentations once, in EA → NA → FA order.
pub fn apply_plan(g: &ProvenanceGraph, plan: &AugmentationPlan) -> ProvenanceGraph {
    let mut out = g.clone();
    if plan.kinds.contains(&AugmentationKind::Edge) {
        out = augment_edges(&out, plan);
    }
    if plan.kinds.contains(&AugmentationKind::Node) {
        out = augment_nodes(&out, plan);
    }
    if plan.kinds.contains(&AugmentationKind::Feature) {
        out = augment_features(&out, plan);
    }
    out
}

/// Audit helper: edges of `output` that neither existed in `input` (by id
/// triple) nor satisfy the rule set. Augmentation must never produce any.
pub fn forged_violations(
    input: &ProvenanceGraph,
    output: &ProvenanceGraph,
    rules: &LogicRuleSet,
) -> Vec<String> {
    let mut violations = Vec::new();
    for e in output.edges() {
        let s = output.node(e.src);
        let d = output.node(e.dst);
        let preexisting = match (input.node_index(&s.id), input.node_index(&d.id)) {
            (Some(si), Some(di)) => input.has_edge(si, di, &e.kind),
            _ => false,
        };
        if !preexisting && !rules.permits(s.kind, d.kind, &e.kind) {
            violations.push(format!("{} -{}-> {} ({} -> {})", s.id, e.kind, d.id, s.kind, d.kind));
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EdgeKind, EventRecord};

    fn ev(src: &str, sk: NodeKind, dst: &str, dk: NodeKind, kind: EdgeKind, t: i64) -> EventRecord {
        EventRecord {
            src_id: src.into(),
            src_kind: sk,
            dst_id: dst.into(),
            dst_kind: dk,
            edge_kind: kind,
            timestamp: t,
            src_feature: None,
            dst_feature: None,
        }
    }

    /// 10-edge, 8-node mixed-kind fixture.
    fn fixture() -> ProvenanceGraph {
        build_graph(&[
            ev("p0", NodeKind::Process, "p1", NodeKind::Process, EdgeKind::Fork, 1),
            ev("p0", NodeKind::Process, "p2", NodeKind::Process, EdgeKind::Fork, 2),
            ev("p1", NodeKind::Process, "f0", NodeKind::File, EdgeKind::Read, 3),
            ev("p1", NodeKind::Process, "f1", NodeKind::File, EdgeKind::Write, 4),
            ev("p2", NodeKind::Process, "n0", NodeKind::Network, EdgeKind::Connect, 5),
            ev("p2", NodeKind::Process, "n0", NodeKind::Network, EdgeKind::Send, 6),
            ev("f0", NodeKind::File, "p2", NodeKind::Process, EdgeKind::Exec, 7),
            ev("p0", NodeKind::Process, "f1", NodeKind::File, EdgeKind::Read, 8),
            ev("p1", NodeKind::Process, "n1", NodeKind::Network, EdgeKind::Recv, 9),
            ev("f1", NodeKind::File, "p0", NodeKind::Process, EdgeKind::Load, 10),
        ])
        .unwrap()
    }

    fn plan(kinds: &[AugmentationKind], gamma: f64, seed: u64) -> AugmentationPlan {
        AugmentationPlan::new(kinds.iter().copied().collect(), gamma, seed).unwrap()
    }

    #[test]
    fn gamma_zero_is_identity_for_every_op() {
        let g = fixture();
        for kinds in [
            AugmentationKind::Edge,
            AugmentationKind::Node,
            AugmentationKind::Feature,
        ] {
            let p = plan(&[kinds], 0.0, 7);
            assert_eq!(apply_plan(&g, &p).dump(), g.dump());
        }
        let p = plan(
            &[AugmentationKind::Edge, AugmentationKind::Node, AugmentationKind::Feature],
            0.0,
            7,
        );
        let views = make_views(&g, &p, 3).unwrap();
        for v in views {
            assert_eq!(v.dump(), g.dump());
        }
    }

    #[test]
    fn edge_augmentation_respects_slot_budget() {
        // 10 edges, gamma 0.2 → exactly 2 slots: |E'| within ±2 and all
        // edges either legal or pre-existing.
        let g = fixture();
        for seed in 0..50u64 {
            let p = plan(&[AugmentationKind::Edge], 0.2, seed);
            let out = augment_edges(&g, &p);
            let e = out.edge_count() as i64;
            assert!((8..=12).contains(&e), "|E'|={e} out of range for seed {seed}");
            assert!(forged_violations(&g, &out, &p.rules).is_empty());
        }
    }

    #[test]
    fn edge_augmentation_never_forges_forbidden_pairs() {
        // A graph that is all Files and Networks: no legal addition exists
        // anywhere, every add slot must fall back to removal.
        let g = build_graph(&[
            ev("f0", NodeKind::File, "p0", NodeKind::Process, EdgeKind::Exec, 1),
            ev("p0", NodeKind::Process, "n0", NodeKind::Network, EdgeKind::Send, 2),
            ev("p0", NodeKind::Process, "n1", NodeKind::Network, EdgeKind::Send, 3),
        ])
        .unwrap();
        for seed in 0..100u64 {
            let p = plan(&[AugmentationKind::Edge], 1.0, seed);
            let out = augment_edges(&g, &p);
            assert!(forged_violations(&g, &out, &p.rules).is_empty(), "seed {seed}");
            assert!(out.edge_count() >= 1, "edge set emptied at seed {seed}");
        }
    }

    #[test]
    fn node_augmentation_keeps_invariants_on_small_chain() {
        // 5-node chain, gamma 0.2 → exactly 1 slot.
        let g = build_graph(&[
            ev("p0", NodeKind::Process, "p1", NodeKind::Process, EdgeKind::Fork, 1),
            ev("p1", NodeKind::Process, "p2", NodeKind::Process, EdgeKind::Fork, 2),
            ev("p2", NodeKind::Process, "f0", NodeKind::File, EdgeKind::Write, 3),
            ev("p2", NodeKind::Process, "n0", NodeKind::Network, EdgeKind::Connect, 4),
        ])
        .unwrap();
        assert_eq!(g.node_count(), 5);
        for seed in 0..50u64 {
            let p = plan(&[AugmentationKind::Node], 0.2, seed);
            let out = augment_nodes(&g, &p);
            let dv = (out.node_count() as i64 - 5).abs();
            assert!(dv <= 1, "node delta {dv} exceeds 1 slot at seed {seed}");
            assert!(forged_violations(&g, &out, &p.rules).is_empty());
            assert!(out.edge_count() >= 1);
            for i in 0..out.node_count() {
                assert!(out.degree(i) >= 1, "orphan after NA at seed {seed}");
            }
        }
    }

    #[test]
    fn injected_network_nodes_only_receive_process_edges() {
        let g = fixture();
        let mut saw_network_add = false;
        for seed in 0..200u64 {
            let p = plan(&[AugmentationKind::Node], 1.0, seed);
            let out = augment_nodes(&g, &p);
            for (i, n) in out.nodes().iter().enumerate() {
                if n.id.starts_with("aug_node") && n.kind == NodeKind::Network {
                    saw_network_add = true;
                    for e in out.edges() {
                        if e.dst == i {
                            assert_eq!(out.node(e.src).kind, NodeKind::Process);
                            assert!(matches!(
                                e.kind,
                                EdgeKind::Connect | EdgeKind::Send | EdgeKind::Recv
                            ));
                        }
                        assert_ne!(e.src, i, "network node must have no outgoing edges");
                    }
                }
            }
            if saw_network_add {
                break;
            }
        }
        assert!(saw_network_add, "no seed produced a Network insertion");
    }

    #[test]
    fn feature_swap_stays_within_kind_and_preserves_topology() {
        let mut g = fixture();
        // Desynchronize some features so swaps are observable.
        g.set_feature(0, 2);
        let before_dump_topology: Vec<_> = g
            .edges()
            .iter()
            .map(|e| (e.src, e.dst, e.kind.clone()))
            .collect();
        let mut features_before: Vec<usize> = g.nodes().iter().map(|n| n.feature).collect();
        features_before.sort_unstable();

        let p = plan(&[AugmentationKind::Feature], 0.8, 11);
        let out = augment_features(&g, &p);

        let after_topology: Vec<_> = out
            .edges()
            .iter()
            .map(|e| (e.src, e.dst, e.kind.clone()))
            .collect();
        assert_eq!(before_dump_topology, after_topology);
        for (a, b) in g.nodes().iter().zip(out.nodes()) {
            assert_eq!(a.kind, b.kind, "feature augmentation must not change kinds");
        }
        let mut features_after: Vec<usize> = out.nodes().iter().map(|n| n.feature).collect();
        features_after.sort_unstable();
        assert_eq!(features_before, features_after, "swaps preserve the multiset");
    }

    #[test]
    fn lone_kind_nodes_are_skipped_by_feature_swap() {
        // Single File node: any slot landing on it must be skipped.
        let g = build_graph(&[
            ev("p0", NodeKind::Process, "f0", NodeKind::File, EdgeKind::Read, 1),
            ev("p0", NodeKind::Process, "p1", NodeKind::Process, EdgeKind::Fork, 2),
        ])
        .unwrap();
        let p = plan(&[AugmentationKind::Feature], 1.0, 3);
        let out = augment_features(&g, &p);
        let f0 = out.node_index("f0").unwrap();
        assert_eq!(out.node(f0).feature, NodeKind::File.index());
        assert_eq!(out.dump(), g.dump());
    }

    #[test]
    fn views_are_deterministic_and_distinct_at_high_gamma() {
        let g = fixture();
        let p = plan(
            &[AugmentationKind::Edge, AugmentationKind::Node, AugmentationKind::Feature],
            0.5,
            99,
        );
        let a = make_views(&g, &p, 2).unwrap();
        let b = make_views(&g, &p, 2).unwrap();
        assert_eq!(a[0].dump(), b[0].dump());
        assert_eq!(a[1].dump(), b[1].dump());
        assert_ne!(a[0].dump(), g.dump());
        assert_ne!(a[0].dump(), a[1].dump());
    }

    #[test]
    fn make_views_requires_two() {
        let g = fixture();
        let p = plan(&[AugmentationKind::Edge], 0.5, 1);
        assert!(make_views(&g, &p, 1).is_err());
    }

    #[test]
    fn slot_count_is_monotone_in_gamma() {
        for n in [1usize, 7, 50] {
            let mut last = 0;
            for step in 0..=10 {
                let gamma = step as f64 / 10.0;
                let s = slot_count(gamma, n);
                assert!(s >= last);
                last = s;
            }
            assert_eq!(slot_count(1.0, n), n);
        }
        assert!(slot_count(0.01, 10) >= 1, "ceiling perturbs at least one slot");
    }

    #[test]
    fn preexisting_illegal_edges_are_retained_not_forged() {
        // Raw logs can contain rule-violating edges (e.g. Network→Process
        // recv flow); augmentation keeps them and only polices new edges.
        let g = build_graph(&[
            ev("n0", NodeKind::Network, "p0", NodeKind::Process, EdgeKind::Recv, 1),
            ev("p0", NodeKind::Process, "f0", NodeKind::File, EdgeKind::Read, 2),
            ev("p0", NodeKind::Process, "f1", NodeKind::File, EdgeKind::Write, 3),
        ])
        .unwrap();
        let p = plan(&[AugmentationKind::Edge], 0.5, 5);
        let out = augment_edges(&g, &p);
        assert!(forged_violations(&g, &out, &p.rules).is_empty());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = ProvenanceGraph> {
            prop::collection::vec((0usize..5, 0usize..5, 0usize..3, 0usize..9, 0i64..100), 2..30)
                .prop_filter_map("valid graph", |raw| {
                    let events: Vec<EventRecord> = raw
                        .into_iter()
                        .filter_map(|(s, d, dk, ek, t)| {
                            let dst_kind = NodeKind::ALL[dk];
                            let src = format!("p{s}");
                            let dst = match dst_kind {
                                NodeKind::Process => format!("p{d}"),
                                NodeKind::File => format!("f{d}"),
                                NodeKind::Network => format!("n{d}"),
                            };
                            if src == dst {
                                return None;
                            }
                            Some(EventRecord {
                                src_id: src,
                                src_kind: NodeKind::Process,
                                dst_id: dst,
                                dst_kind: dst_kind,
                                edge_kind: EdgeKind::CANONICAL[ek].clone(),
                                timestamp: t,
                                src_feature: None,
                                dst_feature: None,
                            })
                        })
                        .collect();
                    if events.is_empty() {
                        return None;
                    }
                    build_graph(&events).ok()
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn no_forged_rule_violations(g in arb_graph(), gamma in 0.0f64..=1.0, seed in 0u64..1_000) {
                let p = AugmentationPlan::all_kinds(gamma, seed).unwrap();
                let out = apply_plan(&g, &p);
                prop_assert!(forged_violations(&g, &out, &p.rules).is_empty());
            }

            #[test]
            fn deterministic_given_plan(g in arb_graph(), gamma in 0.0f64..=1.0, seed in 0u64..1_000) {
                let p = AugmentationPlan::all_kinds(gamma, seed).unwrap();
                prop_assert_eq!(apply_plan(&g, &p).dump(), apply_plan(&g, &p).dump());
            }

            #[test]
            fn edge_cardinality_bound(g in arb_graph(), gamma in 0.0f64..=1.0, seed in 0u64..1_000) {
                let p = AugmentationPlan::new(
                    BTreeSet::from([AugmentationKind::Edge]), gamma, seed).unwrap();
                let out = augment_edges(&g, &p);
                let budget = slot_count(gamma, g.edge_count()) as i64;
                let delta = (out.edge_count() as i64 - g.edge_count() as i64).abs();
                prop_assert!(delta <= budget);
            }

            #[test]
            fn node_cardinality_bound(g in arb_graph(), gamma in 0.0f64..=1.0, seed in 0u64..1_000) {
                let p = AugmentationPlan::new(
                    BTreeSet::from([AugmentationKind::Node]), gamma, seed).unwrap();
                let out = augment_nodes(&g, &p);
                let budget = slot_count(gamma, g.node_count()) as i64;
                let delta = (out.node_count() as i64 - g.node_count() as i64).abs();
                prop_assert!(delta <= budget);
            }
        }
    }
}
