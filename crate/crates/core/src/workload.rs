//! Decode-step operation graph of a decoder-only transformer.
//!
//! One token step of autoregressive decoding turns every MatMul into a
//! matrix-vector product. Projection and feed-forward layers carry 1-bit
//! (ternary) weights with 8-bit activations; the attention-head products
//! multiply two 8-bit activation tensors (the query against the cached keys,
//! and the cached values against the score vector).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of a decoder-only LLM at a fixed context length.
///
/// `context_len` counts every cached token including the one being generated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub d: u64,
    pub h: u64,
    pub d_ff: u64,
    pub n_layers: u64,
    pub context_len: u64,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        d: u64,
        h: u64,
        d_ff: u64,
        n_layers: u64,
        context_len: u64,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            d,
            h,
            d_ff,
            n_layers,
            context_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidModel {
            name: self.name.clone(),
            reason,
        };
        for (field, value) in [
            ("d", self.d),
            ("h", self.h),
            ("d_ff", self.d_ff),
            ("n_layers", self.n_layers),
            ("context_len", self.context_len),
        ] {
            if value == 0 {
                return Err(invalid(format!("{field} must be at least 1")));
            }
        }
        if self.d % self.h != 0 {
            return Err(invalid(format!(
                "d not divisible by h ({} mod {} = {})",
                self.d,
                self.h,
                self.d % self.h
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> u64 {
        self.d / self.h
    }

    pub fn with_context(&self, context_len: u64) -> Result<Self> {
        let mut spec = self.clone();
        spec.context_len = context_len;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatMulRole {
    ProjQ,
    ProjK,
    ProjV,
    ProjX,
    FFIntermediate,
    FFOutput,
    AttnScore,
    AttnContext,
}

impl MatMulRole {
    pub fn precision(self) -> Precision {
        match self {
            MatMulRole::AttnScore | MatMulRole::AttnContext => Precision::W8A8,
            _ => Precision::W1A8,
        }
    }

    pub fn is_attention(self) -> bool {
        self.precision() == Precision::W8A8
    }
}

impl fmt::Display for MatMulRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    /// 1-bit (ternary) weights, 8-bit activations.
    W1A8,
    /// 8-bit operands on both sides.
    W8A8,
}

/// `(m × k) · (k × n)`; during decode `n` is always 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatMulOp {
    pub role: MatMulRole,
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub precision: Precision,
    pub head_index: Option<u64>,
    pub layer_index: u64,
}

impl MatMulOp {
    fn new(role: MatMulRole, m: u64, k: u64, layer_index: u64, head_index: Option<u64>) -> Self {
        Self {
            role,
            m,
            k,
            n: 1,
            precision: role.precision(),
            head_index,
            layer_index,
        }
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NonlinearKind {
    Softmax,
    Gelu,
    LayerNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    /// Nonlinear functional unit beside the systolic array.
    TpuNfu,
    /// Postprocessing unit inside a PIM processing element.
    PimPost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonlinearOp {
    pub kind: NonlinearKind,
    pub element_count: u64,
    pub layer_index: u64,
    pub placement: Placement,
}

impl NonlinearOp {
    fn new(kind: NonlinearKind, element_count: u64, layer_index: u64) -> Self {
        let placement = match kind {
            NonlinearKind::Softmax => Placement::TpuNfu,
            NonlinearKind::Gelu | NonlinearKind::LayerNorm => Placement::PimPost,
        };
        Self {
            kind,
            element_count,
            layer_index,
            placement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    MatMul(MatMulOp),
    Nonlinear(NonlinearOp),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpGraph {
    pub model: ModelSpec,
    pub ops: Vec<Op>,
}

impl OpGraph {
    pub fn matmuls(&self) -> impl Iterator<Item = &MatMulOp> + '_ {
        self.ops.iter().filter_map(|op| match op {
            Op::MatMul(mm) => Some(mm),
            Op::Nonlinear(_) => None,
        })
    }

    pub fn nonlinears(&self) -> impl Iterator<Item = &NonlinearOp> + '_ {
        self.ops.iter().filter_map(|op| match op {
            Op::Nonlinear(nl) => Some(nl),
            Op::MatMul(_) => None,
        })
    }

    /// Ops belonging to one decoder layer, in execution order.
    pub fn layer(&self, layer_index: u64) -> impl Iterator<Item = &Op> + '_ {
        self.ops.iter().filter(move |op| match op {
            Op::MatMul(mm) => mm.layer_index == layer_index,
            Op::Nonlinear(nl) => nl.layer_index == layer_index,
        })
    }
}

/// Builds the op list of one decode step.
///
/// Per layer: Q/K/V projections, per-head scores, softmax, per-head context,
/// output projection, LayerNorm, FF intermediate, GELU, FF output, LayerNorm.
pub fn build_op_graph(model: &ModelSpec) -> Result<OpGraph> {
    model.validate()?;
    let d = model.d;
    let dh = model.head_dim();
    let l = model.context_len;
    let ops_per_layer = 10 + 2 * model.h as usize;
    let mut ops = Vec::with_capacity(ops_per_layer * model.n_layers as usize);

    for layer in 0..model.n_layers {
        for role in [MatMulRole::ProjQ, MatMulRole::ProjK, MatMulRole::ProjV] {
            ops.push(Op::MatMul(MatMulOp::new(role, d, d, layer, None)));
        }
        for head in 0..model.h {
            ops.push(Op::MatMul(MatMulOp::new(
                MatMulRole::AttnScore,
                l,
                dh,
                layer,
                Some(head),
            )));
        }
        ops.push(Op::Nonlinear(NonlinearOp::new(
            NonlinearKind::Softmax,
            l * model.h,
            layer,
        )));
        for head in 0..model.h {
            ops.push(Op::MatMul(MatMulOp::new(
                MatMulRole::AttnContext,
                dh,
                l,
                layer,
                Some(head),
            )));
        }
        ops.push(Op::MatMul(MatMulOp::new(MatMulRole::ProjX, d, d, layer, None)));
        ops.push(Op::Nonlinear(NonlinearOp::new(NonlinearKind::LayerNorm, d, layer)));
        ops.push(Op::MatMul(MatMulOp::new(
            MatMulRole::FFIntermediate,
            model.d_ff,
            d,
            layer,
            None,
        )));
        ops.push(Op::Nonlinear(NonlinearOp::new(NonlinearKind::Gelu, model.d_ff, layer)));
        ops.push(Op::MatMul(MatMulOp::new(
            MatMulRole::FFOutput,
            d,
            model.d_ff,
            layer,
            None,
        )));
        ops.push(Op::Nonlinear(NonlinearOp::new(NonlinearKind::LayerNorm, d, layer)));
    }

    Ok(OpGraph {
        model: model.clone(),
        ops,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCounts {
    pub low: u64,
    pub high: u64,
}

impl MacCounts {
    pub fn total(&self) -> u64 {
        self.low + self.high
    }

    pub fn low_fraction(&self) -> f64 {
        self.low as f64 / self.total() as f64
    }
}

/// Sums MACs per precision class over the graph.
pub fn mac_counts(graph: &OpGraph) -> MacCounts {
    graph
        .matmuls()
        .fold(MacCounts { low: 0, high: 0 }, |mut acc, op| {
            match op.precision {
                Precision::W1A8 => acc.low += op.macs(),
                Precision::W8A8 => acc.high += op.macs(),
            }
            acc
        })
}

/// Closed-form MAC counts; must agree with [`mac_counts`] on the built graph.
pub fn mac_counts_closed_form(model: &ModelSpec) -> MacCounts {
    let (d, n) = (model.d, model.n_layers);
    MacCounts {
        low: n * (4 * d * d + 2 * d * model.d_ff),
        high: n * 2 * model.context_len * d,
    }
}

/// Share of MACs that run at 1-bit weight precision. Independent of layer count.
pub fn low_precision_fraction(model: &ModelSpec) -> Result<f64> {
    model.validate()?;
    let per_layer = ModelSpec {
        n_layers: 1,
        ..model.clone()
    };
    Ok(mac_counts_closed_form(&per_layer).low_fraction())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelSpec {
        ModelSpec::new("unit", 1, 1, 1, 1, 1).unwrap()
    }

    #[test]
    fn rejects_indivisible_heads() {
        let err = ModelSpec::new("bad", 10, 3, 16, 1, 8).unwrap_err();
        assert!(err.to_string().contains("d not divisible by h"), "{err}");
    }

    #[test]
    fn rejects_zero_fields() {
        assert!(ModelSpec::new("z", 8, 2, 0, 1, 8).is_err());
        assert!(ModelSpec::new("z", 8, 2, 8, 1, 0).is_err());
    }

    #[test]
    fn unit_model_graph() {
        let g = build_op_graph(&unit()).unwrap();
        let mms: Vec<_> = g.matmuls().collect();
        assert_eq!(mms.len(), 8);
        assert!(mms.iter().all(|op| (op.m, op.k, op.n) == (1, 1, 1)));
        assert_eq!(
            mms.iter().filter(|op| op.precision == Precision::W1A8).count(),
            6
        );
        let counts = mac_counts(&g);
        assert_eq!((counts.low, counts.high), (6, 2));
        assert_eq!(counts.low_fraction(), 0.75);
        assert_eq!(low_precision_fraction(&unit()).unwrap(), 0.75);
    }

    #[test]
    fn layer_order() {
        let m = ModelSpec::new("tiny", 4, 2, 8, 2, 3).unwrap();
        let g = build_op_graph(&m).unwrap();
        let tags: Vec<String> = g
            .layer(1)
            .map(|op| match op {
                Op::MatMul(mm) => format!("{:?}", mm.role),
                Op::Nonlinear(nl) => format!("{:?}", nl.kind),
            })
            .collect();
        assert_eq!(
            tags,
            [
                "ProjQ", "ProjK", "ProjV", "AttnScore", "AttnScore", "Softmax", "AttnContext",
                "AttnContext", "ProjX", "LayerNorm", "FFIntermediate", "Gelu", "FFOutput",
                "LayerNorm"
            ]
        );
    }

    #[test]
    fn nonlinear_placement_and_sizes() {
        let m = ModelSpec::new("tiny", 8, 2, 32, 1, 5).unwrap();
        let g = build_op_graph(&m).unwrap();
        for nl in g.nonlinears() {
            match nl.kind {
                NonlinearKind::Softmax => {
                    assert_eq!(nl.placement, Placement::TpuNfu);
                    assert_eq!(nl.element_count, 10);
                }
                NonlinearKind::Gelu => {
                    assert_eq!(nl.placement, Placement::PimPost);
                    assert_eq!(nl.element_count, 32);
                }
                NonlinearKind::LayerNorm => {
                    assert_eq!(nl.placement, Placement::PimPost);
                    assert_eq!(nl.element_count, 8);
                }
            }
        }
        assert_eq!(g.nonlinears().count(), 4);
    }

    #[test]
    fn opt_6_7b_shapes() {
        let m = ModelSpec::new("opt-6.7b", 4096, 32, 16384, 32, 128).unwrap();
        let g = build_op_graph(&m).unwrap();
        let layer0: Vec<&MatMulOp> = g.matmuls().filter(|op| op.layer_index == 0).collect();
        let count = |m_: u64, k: u64, role: fn(MatMulRole) -> bool| {
            layer0
                .iter()
                .filter(|op| op.m == m_ && op.k == k && op.n == 1 && role(op.role))
                .count()
        };
        assert_eq!(count(4096, 4096, |r| !r.is_attention()), 4);
        assert_eq!(count(128, 128, |r| r == MatMulRole::AttnScore), 32);
        assert_eq!(count(128, 128, |r| r == MatMulRole::AttnContext), 32);
        assert_eq!(count(16384, 4096, |r| r == MatMulRole::FFIntermediate), 1);
        assert_eq!(count(4096, 16384, |r| r == MatMulRole::FFOutput), 1);
        assert_eq!(layer0.len(), 70);
    }
}
