//! Graph encoder: one-hot feature encoding, a two-layer single-head
//! attention encoder with mean readout, and a two-layer projection head.
//!
//! Layer math, for node `v` with neighborhood N(v) (every edge incident to
//! `v`, either direction, so both endpoints of an interaction see it) plus
//! an internal self-edge:
//!
//! ```text
//! m_uv  = W · [h_u ‖ onehot(edge kind)]        (self-edge uses a zero edge block)
//! s_uv  = LeakyReLU(aᵀ [m_uv ‖ m_vv])
//! α_uv  = softmax over N(v) ∪ {v} of s_uv
//! h'_v  = ReLU( Σ_u α_uv · m_uv + b )
//! ```
//!
//! The graph embedding is the mean of the final node embeddings. The
//! projection head is `p̂ = W2 · ReLU(W1 z + b1) + b2`. Backward passes are
//! hand-derived and checked against central finite differences in the tests.

pub mod loss;
pub mod train;


use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, NodeKind, ProvenanceGraph};
use crate::linalg::{axpy, dot, Matrix};
use crate::seed;

const LEAKY_SLOPE: f64 = 0.2;

/// Fixed, persisted ordering of node and edge kinds; one-hot indices are
/// positions in these lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVocab {
    node_kinds: Vec<NodeKind>,
    edge_kinds: Vec<EdgeKind>,
}

impl FeatureVocab {
    /// The three node kinds and nine canonical edge labels.
    pub fn standard() -> Self {
        FeatureVocab {
            node_kinds: NodeKind::ALL.to_vec(),
            edge_kinds: EdgeKind::CANONICAL.to_vec(),
        }
    }

    pub fn with_extra_edge_labels(labels: &[String]) -> Self {
        let mut v = Self::standard();
        for l in labels {
            v.edge_kinds.push(EdgeKind::Other(l.clone()));
        }
        v
    }

    pub fn node_dim(&self) -> usize {
        self.node_kinds.len()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_kinds.len()
    }

    pub fn edge_index(&self, kind: &EdgeKind) -> Option<usize> {
        self.edge_kinds.iter().position(|k| k == kind)
    }
}

/// One-hot node feature matrix, |V| × node_dim, row v hot at the node's
/// feature index.
pub fn encode_features(g: &ProvenanceGraph, vocab: &FeatureVocab) -> Result<Matrix> {
    let dim = vocab.node_dim();
    let mut x = Matrix::zeros(g.node_count(), dim);
    for (i, node) in g.nodes().iter().enumerate() {
        if node.feature >= dim {
            return Err(Error::Data(format!(
                "node {} has feature index {} outside the {dim}-kind vocabulary",
                node.id, node.feature
            )));
        }
        x.set(i, node.feature, 1.0);
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatLayer {
    /// out_dim × (in_dim + edge_dim)
    pub weight: Matrix,
    pub bias: Vec<f64>,
    /// 2 · out_dim attention vector
    pub attn: Vec<f64>,
}

impl GatLayer {
    fn new(in_dim: usize, edge_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_dim + edge_dim;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut weight = Matrix::zeros(out_dim, fan_in);
        for w in &mut weight.data {
            *w = rng.random_range(-bound..=bound);
        }
        // Biases start at zero: a shared bias offset dominates the small
        // initial activations and pins every projection onto one direction,
        // which stalls the cosine-based loss at the uniform plateau.
        let bias = vec![0.0; out_dim];
        let attn_bound = 1.0 / ((2 * out_dim) as f64).sqrt();
        let attn = (0..2 * out_dim)
            .map(|_| rng.random_range(-attn_bound..=attn_bound))
            .collect();
        GatLayer { weight, bias, attn }
    }

    fn out_dim(&self) -> usize {
        self.weight.rows
    }

    /// m = W · [h ‖ onehot(edge)] without materializing the concatenation.
    fn message(&self, h: &[f64], in_dim: usize, edge_col: Option<usize>) -> Vec<f64> {
        let mut m = vec![0.0; self.out_dim()];
        for r in 0..self.out_dim() {
            let row = self.weight.row(r);
            let mut acc = 0.0;
            for (a, b) in row[..in_dim].iter().zip(h) {
                acc += a * b;
            }
            if let Some(c) = edge_col {
                acc += row[in_dim + c];
            }
            m[r] = acc;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub vocab: FeatureVocab,
    pub layer0: GatLayer,
    pub layer1: GatLayer,
    pub proj_w1: Matrix,
    pub proj_b1: Vec<f64>,
    pub proj_w2: Matrix,
    pub proj_b2: Vec<f64>,
    pub hidden_dim: usize,
    pub out_dim: usize,
    /// Concatenate the edge one-hot onto neighbor messages. Off switches the
    /// encoder to node features only (ablation).
    pub edge_features: bool,
}

impl EncoderModel {
    pub fn new(
        vocab: FeatureVocab,
        hidden_dim: usize,
        out_dim: usize,
        edge_features: bool,
        init_seed: u64,
    ) -> Self {
        let mut rng = seed::rng(init_seed);
        let edge_dim = if edge_features { vocab.edge_dim() } else { 0 };
        let layer0 = GatLayer::new(vocab.node_dim(), edge_dim, hidden_dim, &mut rng);
        let layer1 = GatLayer::new(hidden_dim, edge_dim, out_dim, &mut rng);
        let bound = 1.0 / (out_dim as f64).sqrt();
        let mut proj_w1 = Matrix::zeros(out_dim, out_dim);
        let mut proj_w2 = Matrix::zeros(out_dim, out_dim);
        for w in &mut proj_w1.data {
            *w = rng.random_range(-bound..=bound);
        }
        let proj_b1 = (0..out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        for w in &mut proj_w2.data {
            *w = rng.random_range(-bound..=bound);
        }
        let proj_b2 = (0..out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        EncoderModel {
            vocab,
            layer0,
            layer1,
            proj_w1,
            proj_b1,
            proj_w2,
            proj_b2,
            hidden_dim,
            out_dim,
            edge_features,
        }
    }

    fn edge_column(&self, kind: &EdgeKind) -> Result<Option<usize>> {
        if !self.edge_features {
            return Ok(None);
        }
        self.vocab
            .edge_index(kind)
            .map(Some)
            .ok_or_else(|| Error::Data(format!("edge kind {kind} not in vocabulary")))
    }

    /// Full forward pass with cached intermediates for backprop.
    pub fn forward(&self, g: &ProvenanceGraph) -> Result<ForwardTrace> {
        if g.node_count() == 0 {
            return Err(Error::Data("cannot encode an empty graph".into()));
        }
        let x = encode_features(g, &self.vocab)?;
        // Undirected neighbor slot lists, shared by both layers (self slot
        // last). Each edge contributes a slot to both endpoints so that
        // structural changes touching a node are visible to it regardless of
        // edge direction.
        let mut slots: Vec<Vec<(usize, Option<usize>)>> = vec![Vec::new(); g.node_count()];
        for e in g.edges() {
            let col = self.edge_column(&e.kind)?;
            slots[e.dst].push((e.src, col));
            slots[e.src].push((e.dst, col));
        }
        for (v, s) in slots.iter_mut().enumerate() {
            s.push((v, None)); // self-edge, zero edge block
        }
        let t0 = layer_forward(&self.layer0, &x, &slots);
        let t1 = layer_forward(&self.layer1, &t0.output, &slots);
        let n = g.node_count() as f64;
        let mut z = vec![0.0; self.out_dim];
        for v in 0..g.node_count() {
            axpy(&mut z, t1.output.row(v), 1.0 / n);
        }
        Ok(ForwardTrace {
            layer0: t0,
            layer1: t1,
            graph_embedding: z,
        })
    }

    /// p̂ = W2 · ReLU(W1 z + b1) + b2
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        self.project_trace(z).output
    }

    pub fn project_trace(&self, z: &[f64]) -> ProjectionTrace {
        let mut hidden_pre = self.proj_w1.matvec(z);
        for (h, b) in hidden_pre.iter_mut().zip(&self.proj_b1) {
            *h += b;
        }
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
        let mut output = self.proj_w2.matvec(&hidden);
        for (o, b) in output.iter_mut().zip(&self.proj_b2) {
            *o += b;
        }
        ProjectionTrace {
            input: z.to_vec(),
            hidden_pre,
            hidden,
            output,
        }
    }

    /// Node- or graph-level embeddings for detection. Node rows are ordered
    /// by sorted node id.
    pub fn embed(&self, g: &ProvenanceGraph, level: EmbedLevel) -> Result<Embedding> {
        let trace = self.forward(g)?;
        match level {
            EmbedLevel::Graph => Ok(Embedding::Graph(trace.graph_embedding)),
            EmbedLevel::Node => {
                let mut rows: Vec<(String, Vec<f64>)> = g
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.id.clone(), trace.layer1.output.row(i).to_vec()))
                    .collect();
                rows.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(Embedding::Node(rows))
            }
        }
    }

    /// Accumulate gradients for one view given dL/dp̂.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        ptrace: &ProjectionTrace,
        d_output: &[f64],
        grads: &mut Gradients,
    ) {
        // Projection head.
        grads.proj_w2.add_outer(d_output, &ptrace.hidden, 1.0);
        axpy(&mut grads.proj_b2, d_output, 1.0);
        let mut d_hidden = self.proj_w2.matvec_t(d_output);
        for (dh, pre) in d_hidden.iter_mut().zip(&ptrace.hidden_pre) {
            if *pre <= 0.0 {
                *dh = 0.0;
            }
        }
        grads.proj_w1.add_outer(&d_hidden, &ptrace.input, 1.0);
        axpy(&mut grads.proj_b1, &d_hidden, 1.0);
        let d_z = self.proj_w1.matvec_t(&d_hidden);

        // Mean readout: every node row receives dz / |V|.
        let n_nodes = trace.layer1.output.rows;
        let mut d_h1 = Matrix::zeros(n_nodes, self.out_dim);
        for v in 0..n_nodes {
            axpy(d_h1.row_mut(v), &d_z, 1.0 / n_nodes as f64);
        }

        let d_h0 = layer_backward(
            &self.layer1,
            &trace.layer1,
            &d_h1,
            &mut grads.layer1_w,
            &mut grads.layer1_b,
            &mut grads.layer1_a,
        );
        layer_backward(
            &self.layer0,
            &trace.layer0,
            &d_h0,
            &mut grads.layer0_w,
            &mut grads.layer0_b,
            &mut grads.layer0_a,
        );
    }

    /// θ ← θ − lr · g
    pub fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        self.layer0.weight.add_scaled(&grads.layer0_w, -lr);
        axpy(&mut self.layer0.bias, &grads.layer0_b, -lr);
        axpy(&mut self.layer0.attn, &grads.layer0_a, -lr);
        self.layer1.weight.add_scaled(&grads.layer1_w, -lr);
        axpy(&mut self.layer1.bias, &grads.layer1_b, -lr);
        axpy(&mut self.layer1.attn, &grads.layer1_a, -lr);
        self.proj_w1.add_scaled(&grads.proj_w1, -lr);
        axpy(&mut self.proj_b1, &grads.proj_b1, -lr);
        self.proj_w2.add_scaled(&grads.proj_w2, -lr);
        axpy(&mut self.proj_b2, &grads.proj_b2, -lr);
    }

    /// Parameter tensors in a fixed order, for persistence checks and
    /// finite-difference sweeps.
    pub fn param_tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        vec![
            ("layer0.weight", &mut self.layer0.weight.data),
            ("layer0.bias", &mut self.layer0.bias),
            ("layer0.attn", &mut self.layer0.attn),
            ("layer1.weight", &mut self.layer1.weight.data),
            ("layer1.bias", &mut self.layer1.bias),
            ("layer1.attn", &mut self.layer1.attn),
            ("proj.w1", &mut self.proj_w1.data),
            ("proj.b1", &mut self.proj_b1),
            ("proj.w2", &mut self.proj_w2.data),
            ("proj.b2", &mut self.proj_b2),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedLevel {
    Node,
    Graph,
}

impl EmbedLevel {
    pub fn parse(s: &str) -> Option<EmbedLevel> {
        match s {
            "node" => Some(EmbedLevel::Node),
            "graph" => Some(EmbedLevel::Graph),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Embedding {
    /// (entity id, vector), ordered by id.
    Node(Vec<(String, Vec<f64>)>),
    Graph(Vec<f64>),
}

/// One attention slot: source node, edge one-hot column, and the cached
/// message / score / weight.
#[derive(Debug, Clone)]
struct SlotTrace {
    src: usize,
    edge_col: Option<usize>,
    msg: Vec<f64>,
    score_pre: f64,
    alpha: f64,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    input: Matrix,
    slots: Vec<Vec<SlotTrace>>,
    pre_act: Matrix,
    pub output: Matrix,
}

impl LayerTrace {
    /// Attention weights per node, self slot last.
    pub fn attention_weights(&self) -> Vec<Vec<f64>> {
        self.slots
            .iter()
            .map(|s| s.iter().map(|t| t.alpha).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layer0: LayerTrace,
    pub layer1: LayerTrace,
    pub graph_embedding: Vec<f64>,
}

impl ForwardTrace {
    pub fn node_embeddings(&self) -> &Matrix {
        &self.layer1.output
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionTrace {
    pub input: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn layer_forward(
    layer: &GatLayer,
    input: &Matrix,
    slots: &[Vec<(usize, Option<usize>)>],
) -> LayerTrace {
    let n = input.rows;
    let in_dim = input.cols;
    let out = layer.out_dim();
    let (a_src, a_self) = layer.attn.split_at(out);
    let mut all_slots: Vec<Vec<SlotTrace>> = Vec::with_capacity(n);
    let mut pre_act = Matrix::zeros(n, out);
    let mut output = Matrix::zeros(n, out);
    // Self messages first; each node's slot scores reference its own.
    let self_msgs: Vec<Vec<f64>> = (0..n)
        .map(|v| layer.message(input.row(v), in_dim, None))
        .collect();
    for v in 0..n {
        let self_term = dot(a_self, &self_msgs[v]);
        let mut traces: Vec<SlotTrace> = slots[v]
            .iter()
            .map(|&(src, edge_col)| {
                let msg = if src == v && edge_col.is_none() {
                    self_msgs[v].clone()
                } else {
                    layer.message(input.row(src), in_dim, edge_col)
                };
                let score_pre = dot(a_src, &msg) + self_term;
                SlotTrace {
                    src,
                    edge_col,
                    msg,
                    score_pre,
                    alpha: 0.0,
                }
            })
            .collect();
        // softmax over LeakyReLU'd scores, max-shifted
        let max_s = traces
            .iter()
            .map(|t| leaky_relu(t.score_pre))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for t in &mut traces {
            t.alpha = (leaky_relu(t.score_pre) - max_s).exp();
            denom += t.alpha;
        }
        let row = pre_act.row_mut(v);
        row.copy_from_slice(&layer.bias);
        for t in &mut traces {
            t.alpha /= denom;
            for (r, m) in row.iter_mut().zip(&t.msg) {
                *r += t.alpha * m;
            }
        }
        for (o, &p) in output.row_mut(v).iter_mut().zip(pre_act.row(v)) {
            *o = p.max(0.0);
        }
        all_slots.push(traces);
    }
    LayerTrace {
        input: input.clone(),
        slots: all_slots,
        pre_act,
        output,
    }
}

/// Backward through one attention layer. Returns dL/d(input).
fn layer_backward(
    layer: &GatLayer,
    trace: &LayerTrace,
    d_out: &Matrix,
    d_weight: &mut Matrix,
    d_bias: &mut [f64],
    d_attn: &mut [f64],
) -> Matrix {
    let n = trace.input.rows;
    let in_dim = trace.input.cols;
    let out = layer.out_dim();
    let (a_src, a_self) = layer.attn.split_at(out);
    let mut d_input = Matrix::zeros(n, in_dim);

    for v in 0..n {
        let slots = &trace.slots[v];
        // ReLU on the aggregate
        let mut d_agg = d_out.row(v).to_vec();
        for (d, &pre) in d_agg.iter_mut().zip(trace.pre_act.row(v)) {
            if pre <= 0.0 {
                *d = 0.0;
            }
        }
        axpy(d_bias, &d_agg, 1.0);

        // dα and the message-path gradient α·d_agg
        let d_alpha: Vec<f64> = slots.iter().map(|t| dot(&d_agg, &t.msg)).collect();
        let mut d_msgs: Vec<Vec<f64>> = slots
            .iter()
            .map(|t| {
                let mut dm = vec![0.0; out];
                axpy(&mut dm, &d_agg, t.alpha);
                dm
            })
            .collect();

        // softmax backward: ds_i = α_i (dα_i − Σ_w α_w dα_w)
        let mix: f64 = slots.iter().zip(&d_alpha).map(|(t, da)| t.alpha * da).sum();
        // self-message gradient accumulated across every slot's score
        let mut d_self_msg = vec![0.0; out];
        let self_slot = slots.len() - 1; // self slot is appended last
        for (i, t) in slots.iter().enumerate() {
            let ds = t.alpha * (d_alpha[i] - mix);
            let ds_pre = if t.score_pre > 0.0 { ds } else { LEAKY_SLOPE * ds };
            // score = a_src · m_i + a_self · m_self
            axpy(&mut d_attn[..out], &t.msg, ds_pre);
            axpy(&mut d_attn[out..], &slots[self_slot].msg, ds_pre);
            axpy(&mut d_msgs[i], a_src, ds_pre);
            axpy(&mut d_self_msg, a_self, ds_pre);
        }
        axpy(&mut d_msgs[self_slot], &d_self_msg, 1.0);

        // messages → weights and inputs
        for (t, dm) in slots.iter().zip(&d_msgs) {
            let h = trace.input.row(t.src);
            for r in 0..out {
                let w_row = d_weight.row_mut(r);
                let g = dm[r];
                for c in 0..in_dim {
                    w_row[c] += g * h[c];
                }
                if let Some(e) = t.edge_col {
                    w_row[in_dim + e] += g;
                }
            }
            let d_h = d_input.row_mut(t.src);
            for r in 0..out {
                let g = dm[r];
                let w_row = layer.weight.row(r);
                for c in 0..in_dim {
                    d_h[c] += g * w_row[c];
                }
            }
        }
    }
    d_input
}

/// Gradient accumulator shaped like an [`EncoderModel`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layer0_w: Matrix,
    pub layer0_b: Vec<f64>,
    pub layer0_a: Vec<f64>,
    pub layer1_w: Matrix,
    pub layer1_b: Vec<f64>,
    pub layer1_a: Vec<f64>,
    pub proj_w1: Matrix,
    pub proj_b1: Vec<f64>,
    pub proj_w2: Matrix,
    pub proj_b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(m: &EncoderModel) -> Self {
        Gradients {
            layer0_w: Matrix::zeros(m.layer0.weight.rows, m.layer0.weight.cols),
            layer0_b: vec![0.0; m.layer0.bias.len()],
            layer0_a: vec![0.0; m.layer0.attn.len()],
            layer1_w: Matrix::zeros(m.layer1.weight.rows, m.layer1.weight.cols),
            layer1_b: vec![0.0; m.layer1.bias.len()],
            layer1_a: vec![0.0; m.layer1.attn.len()],
            proj_w1: Matrix::zeros(m.proj_w1.rows, m.proj_w1.cols),
            proj_b1: vec![0.0; m.proj_b1.len()],
            proj_w2: Matrix::zeros(m.proj_w2.rows, m.proj_w2.cols),
            proj_b2: vec![0.0; m.proj_b2.len()],
        }
    }

    /// Same ordering as [`EncoderModel::param_tensors_mut`].
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("layer0.weight", &self.layer0_w.data),
            ("layer0.bias", &self.layer0_b),
            ("layer0.attn", &self.layer0_a),
            ("layer1.weight", &self.layer1_w.data),
            ("layer1.bias", &self.layer1_b),
            ("layer1.attn", &self.layer1_a),
            ("proj.w1", &self.proj_w1.data),
            ("proj.b1", &self.proj_b1),
            ("proj.w2", &self.proj_w2.data),
            ("proj.b2", &self.proj_b2),
        ]
    }
}
