//! DNN workloads as dependency graphs of layers.
//!
//! Layers are either static-weight (FC / im2col-shaped conv), dynamic matmuls
//! whose stationary operand is produced at runtime (attention score and
//! attention-times-value), or elementwise operations that run on the special
//! function unit and occupy no crossbar resources.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LayerId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    StaticFc,
    StaticConv,
    DynamicMatMul,
    Elementwise,
}

impl LayerKind {
    /// Whether the layer occupies crossbar cells at all.
    pub fn bears_weights(self) -> bool {
        !matches!(self, LayerKind::Elementwise)
    }

    /// Whether the stationary operand must be rewritten for every inference.
    pub fn is_dynamic(self) -> bool {
        matches!(self, LayerKind::DynamicMatMul)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: LayerId,
    pub kind: LayerKind,
    /// Kernel length: weights per output neuron (rows of the stationary
    /// operand on the crossbar).
    pub in_dim: u32,
    /// Output neurons / kernels (column groups on the crossbar).
    pub out_dim: u32,
    /// Input vectors processed per inference (tokens, or conv windows for
    /// im2col-shaped convolutions).
    #[serde(rename = "tokens")]
    pub tokens_or_windows: u32,
    #[serde(default = "default_weight_bits")]
    pub weight_bits: u32,
    /// True when the stationary operand arrives transposed and is routed
    /// through the transposing bank group (the score matmul's key operand).
    #[serde(default)]
    pub transposed_operand: bool,
}

fn default_weight_bits() -> u32 {
    8
}

impl Layer {
    /// Output activation elements produced per inference.
    pub fn output_elements(&self) -> u64 {
        self.out_dim as u64 * self.tokens_or_windows as u64
    }
}

/// Crossbar cells needed to hold the layer's stationary operand, with each
/// weight split across `weight_bits / cell_bits` consecutive cells.
/// Elementwise layers cost nothing.
pub fn weight_footprint(layer: &Layer, cell_bits: u32) -> Result<u64> {
    if !layer.kind.bears_weights() {
        return Ok(0);
    }
    if cell_bits == 0 || layer.weight_bits % cell_bits != 0 {
        return Err(Error::InvalidArgument(format!(
            "cell_bits {} does not divide weight_bits {} (layer {})",
            cell_bits, layer.weight_bits, layer.id
        )));
    }
    Ok(layer.in_dim as u64 * layer.out_dim as u64 * (layer.weight_bits / cell_bits) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub name: String,
    pub layers: Vec<Layer>,
    pub edges: Vec<(LayerId, LayerId)>,
}

impl NetworkGraph {
    pub fn layer(&self, id: LayerId) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Producers of `id` in edge insertion order.
    pub fn producers(&self, id: LayerId) -> Vec<LayerId> {
        self.edges
            .iter()
            .filter(|(_, c)| *c == id)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn consumers(&self, id: LayerId) -> Vec<LayerId> {
        self.edges
            .iter()
            .filter(|(p, _)| *p == id)
            .map(|(_, c)| *c)
            .collect()
    }

    /// Kahn topological order, breaking ties by lowest layer id so the order
    /// is stable across runs.
    pub fn topo_order(&self) -> Result<Vec<LayerId>> {
        let mut indegree: std::collections::BTreeMap<LayerId, usize> =
            self.layers.iter().map(|l| (l.id, 0)).collect();
        for (p, c) in &self.edges {
            if !indegree.contains_key(p) || !indegree.contains_key(c) {
                return Err(Error::InvalidGraph {
                    name: self.name.clone(),
                    violations: vec![format!("edge ({p},{c}) references unknown layer")],
                });
            }
            *indegree.get_mut(c).unwrap() += 1;
        }
        let mut ready: std::collections::BTreeSet<LayerId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.layers.len());
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for c in self.consumers(next) {
                let d = indegree.get_mut(&c).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != self.layers.len() {
            return Err(Error::InvalidGraph {
                name: self.name.clone(),
                violations: vec!["not a DAG".into()],
            });
        }
        Ok(order)
    }

    /// Stationary-operand producer of a dynamic matmul: the last producer (in
    /// edge order) whose per-inference output element count matches the
    /// matmul's stationary operand size.
    pub fn stationary_producer(&self, matmul: LayerId) -> Option<LayerId> {
        let layer = self.layer(matmul)?;
        if !layer.kind.is_dynamic() {
            return None;
        }
        let operand = layer.in_dim as u64 * layer.out_dim as u64;
        self.producers(matmul)
            .into_iter()
            .filter(|p| {
                self.layer(*p)
                    .map(|pl| pl.output_elements() == operand)
                    .unwrap_or(false)
            })
            .next_back()
    }

    /// Collects all invariant violations. An empty list means the graph is
    /// well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let mut ids = std::collections::BTreeSet::new();
        for l in &self.layers {
            if !ids.insert(l.id) {
                violations.push(format!("duplicate layer id {}", l.id));
            }
            if l.in_dim < 1 || l.out_dim < 1 || l.tokens_or_windows < 1 {
                violations.push(format!("layer {} has a zero dimension", l.id));
            }
            if l.kind.bears_weights() && l.weight_bits == 0 {
                violations.push(format!("layer {} has zero weight_bits", l.id));
            }
        }
        for (p, c) in &self.edges {
            if !ids.contains(p) || !ids.contains(c) {
                violations.push(format!("edge ({p},{c}) references unknown layer"));
            }
        }
        if !violations.is_empty() {
            return violations;
        }
        if self.topo_order().is_err() {
            violations.push("not a DAG".into());
        }
        for l in &self.layers {
            if !l.kind.is_dynamic() {
                continue;
            }
            let producers = self.producers(l.id);
            if producers.len() != 2 {
                violations.push(format!(
                    "dynamic matmul {} must have exactly one producer per operand (found {})",
                    l.id,
                    producers.len()
                ));
                continue;
            }
            if self.stationary_producer(l.id).is_none() {
                violations.push(format!(
                    "dynamic matmul {} ({}x{} operand) matches no producer output: {}",
                    l.id,
                    l.in_dim,
                    l.out_dim,
                    producers
                        .iter()
                        .map(|p| {
                            let pl = self.layer(*p).unwrap();
                            format!("layer {} yields {} elements", p, pl.output_elements())
                        })
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
        }
        violations
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGraph {
                name: self.name.clone(),
                violations,
            })
        }
    }
}

struct GraphBuilder {
    name: String,
    layers: Vec<Layer>,
    edges: Vec<(LayerId, LayerId)>,
}

impl GraphBuilder {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            layers: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn push(&mut self, kind: LayerKind, in_dim: u32, out_dim: u32, tokens: u32) -> LayerId {
        let id = self.layers.len() as LayerId;
        self.layers.push(Layer {
            id,
            kind,
            in_dim,
            out_dim,
            tokens_or_windows: tokens,
            weight_bits: default_weight_bits(),
            transposed_operand: false,
        });
        id
    }

    fn edge(&mut self, p: LayerId, c: LayerId) {
        self.edges.push((p, c));
    }

    fn finish(self) -> NetworkGraph {
        NetworkGraph {
            name: self.name,
            layers: self.layers,
            edges: self.edges,
        }
    }
}

/// Appends one encoder block to the builder and returns its output layer.
///
/// The block follows the standard attention dataflow: Q/K/V FCs feed the
/// score matmul (key operand transposed), softmax feeds the
/// attention-times-value matmul, then the output FC, a residual add+norm, and
/// the two FFN FCs with an activation in between. Head parallelism is folded
/// into the two dynamic matmuls as extra kernel groups, so a block always
/// contributes six static FCs and two dynamic matmuls.
fn append_encoder_block(
    b: &mut GraphBuilder,
    input: Option<LayerId>,
    d_model: u32,
    d_ff: u32,
    heads: u32,
    seq_len: u32,
) -> LayerId {
    let d_head = d_model / heads;
    let q = b.push(LayerKind::StaticFc, d_model, d_model, seq_len);
    let k = b.push(LayerKind::StaticFc, d_model, d_model, seq_len);
    let v = b.push(LayerKind::StaticFc, d_model, d_model, seq_len);
    let score = b.push(LayerKind::DynamicMatMul, d_head, heads * seq_len, seq_len);
    b.layers[score as usize].transposed_operand = true;
    let softmax = b.push(LayerKind::Elementwise, heads * seq_len, heads * seq_len, seq_len);
    let attn_v = b.push(LayerKind::DynamicMatMul, seq_len, d_model, seq_len);
    let out_fc = b.push(LayerKind::StaticFc, d_model, d_model, seq_len);
    let norm1 = b.push(LayerKind::Elementwise, d_model, d_model, seq_len);
    let ffn1 = b.push(LayerKind::StaticFc, d_model, d_ff, seq_len);
    let act = b.push(LayerKind::Elementwise, d_ff, d_ff, seq_len);
    let ffn2 = b.push(LayerKind::StaticFc, d_ff, d_model, seq_len);
    let norm2 = b.push(LayerKind::Elementwise, d_model, d_model, seq_len);

    if let Some(prev) = input {
        b.edge(prev, q);
        b.edge(prev, k);
        b.edge(prev, v);
        b.edge(prev, norm1); // residual
    }
    b.edge(q, score);
    b.edge(k, score);
    b.edge(score, softmax);
    b.edge(softmax, attn_v);
    b.edge(v, attn_v);
    b.edge(attn_v, out_fc);
    b.edge(out_fc, norm1);
    b.edge(norm1, ffn1);
    b.edge(ffn1, act);
    b.edge(act, ffn2);
    b.edge(ffn2, norm2);
    b.edge(norm1, norm2); // residual
    norm2
}

/// Builds a single transformer encoder block.
pub fn build_encoder_block(d_model: u32, d_ff: u32, heads: u32, seq_len: u32) -> Result<NetworkGraph> {
    build_encoder_stack(1, d_model, d_ff, heads, seq_len)
}

/// Builds a stack of encoder blocks chained output-to-input.
pub fn build_encoder_stack(
    blocks: u32,
    d_model: u32,
    d_ff: u32,
    heads: u32,
    seq_len: u32,
) -> Result<NetworkGraph> {
    if blocks < 1 || d_model < 1 || d_ff < 1 || heads < 1 || seq_len < 1 {
        return Err(Error::InvalidArgument(
            "encoder dimensions must all be at least 1".into(),
        ));
    }
    if d_model % heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "d_model {d_model} is not divisible by heads {heads}"
        )));
    }
    let mut b = GraphBuilder::new(format!(
        "encoder{blocks}x_d{d_model}_ff{d_ff}_h{heads}_s{seq_len}"
    ));
    let mut prev = None;
    for _ in 0..blocks {
        prev = Some(append_encoder_block(&mut b, prev, d_model, d_ff, heads, seq_len));
    }
    let g = b.finish();
    g.ensure_valid()?;
    Ok(g)
}
