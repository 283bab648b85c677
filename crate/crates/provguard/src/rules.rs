//! The causality rule table that constrains what augmentation may forge.
//!
//! Allowed patterns:
//!
//! | source  | destination | labels            |
//! |---------|-------------|-------------------|
//! | Process | File        | read, write       |
//! | Process | Network     | connect, send, recv |
//! | File    | Process     | exec, load        |
//! | Process | Process     | fork, clone       |
//!
//! Everything else is forbidden: Network→Process (a socket cannot cause a
//! process directly), File↔Network (no direct communication), Network→Network
//! (meaningless), and File→File (files do not act on files). Note that real
//! audit streams may still contain such edges — e.g. recv-style data flow
//! recorded as Network→Process — and the pipeline keeps them; the rule set
//! only constrains edges *forged* by augmentation, never what logs contain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeKind, NodeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicRuleSet {
    allowed: BTreeMap<(NodeKind, NodeKind), Vec<EdgeKind>>,
}

impl Default for LogicRuleSet {
    fn default() -> Self {
        let mut allowed = BTreeMap::new();
        allowed.insert(
            (NodeKind::Process, NodeKind::File),
            vec![EdgeKind::Read, EdgeKind::Write],
        );
        allowed.insert(
            (NodeKind::Process, NodeKind::Network),
            vec![EdgeKind::Connect, EdgeKind::Send, EdgeKind::Recv],
        );
        allowed.insert(
            (NodeKind::File, NodeKind::Process),
            vec![EdgeKind::Exec, EdgeKind::Load],
        );
        allowed.insert(
            (NodeKind::Process, NodeKind::Process),
            vec![EdgeKind::Fork, EdgeKind::Clone],
        );
        LogicRuleSet { allowed }
    }
}

impl LogicRuleSet {
    /// Whether forging an edge with this (src kind, dst kind, label) triple
    /// is permitted.
    pub fn permits(&self, src: NodeKind, dst: NodeKind, kind: &EdgeKind) -> bool {
        self.allowed
            .get(&(src, dst))
            .is_some_and(|labels| labels.contains(kind))
    }

    /// Labels permitted for a kind pair; empty when the pair is forbidden.
    pub fn labels_for(&self, src: NodeKind, dst: NodeKind) -> &[EdgeKind] {
        self.allowed
            .get(&(src, dst))
            .map_or(&[], Vec::as_slice)
    }

    pub fn is_allowed_pair(&self, src: NodeKind, dst: NodeKind) -> bool {
        !self.labels_for(src, dst).is_empty()
    }

    pub fn allowed_pairs(&self) -> impl Iterator<Item = (NodeKind, NodeKind)> + '_ {
        self.allowed.keys().copied()
    }

    /// The complement of the allowed pairs over all nine ordered kind pairs.
    pub fn forbidden_pairs(&self) -> Vec<(NodeKind, NodeKind)> {
        let mut out = Vec::new();
        for s in NodeKind::ALL {
            for d in NodeKind::ALL {
                if !self.is_allowed_pair(s, d) {
                    out.push((s, d));
                }
            }
        }
        out
    }
}
