//! Transformer building blocks over [`Graph`].
//!
//! Blocks are pre-norm: `x + Attn(LN(x))` then `x + FF(LN(x))`, with a final
//! layer norm at the end of each stack.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: store.glorot(format!("{name}.weight"), input, output, rng),
            bias: store.zeros(format!("{name}.bias"), 1, output),
            input,
            output,
        }
    }

    /// Zero weights and bias: the layer outputs zeros until trained.
    pub fn zeroed(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Self {
        Self {
            weight: store.zeros(format!("{name}.weight"), input, output),
            bias: store.zeros(format!("{name}.bias"), 1, output),
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.ones(format!("{name}.gain"), 1, dim),
            shift: store.zeros(format!("{name}.shift"), 1, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.layer_norm(x);
        let a = g.param(self.gain);
        let b = g.param(self.shift);
        let y = g.mul_row(n, a);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            out: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        q_group: usize,
        memory: Var,
        k_group: usize,
    ) -> Var {
        let q = self.query.forward(g, x);
        let k = self.key.forward(g, memory);
        let v = self.value.forward(g, memory);
        let a = g.attention(q, k, v, self.heads, q_group, k_group);
        self.out.forward(g, a)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.up.forward(g, x);
        let h = g.gelu(h);
        self.down.forward(g, h)
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    norm_attn: LayerNorm,
    attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff: FeedForward,
}

/// Stack of self-attention blocks; attention is restricted to row groups.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    blocks: Vec<EncoderBlock>,
    final_norm: LayerNorm,
}

impl TransformerEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        blocks: usize,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Self {
        let blocks = (0..blocks)
            .map(|i| {
                let p = format!("{name}.block{i}");
                EncoderBlock {
                    norm_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), dim),
                    attn: MultiHeadAttention::new(store, &format!("{p}.attn"), dim, heads, rng),
                    norm_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), dim),
                    ff: FeedForward::new(store, &format!("{p}.ff"), dim, ff_dim, rng),
                }
            })
            .collect();
        Self {
            blocks,
            final_norm: LayerNorm::new(store, &format!("{name}.ln_final"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var, group: usize) -> Var {
        for b in &self.blocks {
            let h = b.norm_attn.forward(g, x);
            let a = b.attn.forward(g, h, group, h, group);
            x = g.add(x, a);
            let h = b.norm_ff.forward(g, x);
            let f = b.ff.forward(g, h);
            x = g.add(x, f);
        }
        self.final_norm.forward(g, x)
    }
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    norm_self: LayerNorm,
    self_attn: MultiHeadAttention,
    norm_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff: FeedForward,
}

/// Query tokens self-attend within their group and cross-attend to the
/// matching group of memory tokens.
#[derive(Debug, Clone)]
pub struct TransformerDecoder {
    blocks: Vec<DecoderBlock>,
    final_norm: LayerNorm,
}

impl TransformerDecoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        blocks: usize,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Self {
        let blocks = (0..blocks)
            .map(|i| {
                let p = format!("{name}.block{i}");
                DecoderBlock {
                    norm_self: LayerNorm::new(store, &format!("{p}.ln_self"), dim),
                    self_attn: MultiHeadAttention::new(
                        store,
                        &format!("{p}.self_attn"),
                        dim,
                        heads,
                        rng,
                    ),
                    norm_cross: LayerNorm::new(store, &format!("{p}.ln_cross"), dim),
                    cross_attn: MultiHeadAttention::new(
                        store,
                        &format!("{p}.cross_attn"),
                        dim,
                        heads,
                        rng,
                    ),
                    norm_ff: LayerNorm::new(store, &format!("{p}.ln_ff"), dim),
                    ff: FeedForward::new(store, &format!("{p}.ff"), dim, ff_dim, rng),
                }
            })
            .collect();
        Self {
            blocks,
            final_norm: LayerNorm::new(store, &format!("{name}.ln_final"), dim),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        mut x: Var,
        q_group: usize,
        memory: Var,
        k_group: usize,
    ) -> Var {
        for b in &self.blocks {
            let h = b.norm_self.forward(g, x);
            let a = b.self_attn.forward(g, h, q_group, h, q_group);
            x = g.add(x, a);
            let h = b.norm_cross.forward(g, x);
            let c = b.cross_attn.forward(g, h, q_group, memory, k_group);
            x = g.add(x, c);
            let h = b.norm_ff.forward(g, x);
            let f = b.ff.forward(g, h);
            x = g.add(x, f);
        }
        self.final_norm.forward(g, x)
    }
}
