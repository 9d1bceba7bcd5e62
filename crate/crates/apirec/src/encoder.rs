//! Transformer text encoder: token/position/segment embeddings, stacked
//! multi-head self-attention blocks with GELU feedforwards (post-block layer
//! norm), a tanh pooler over the `[CLS]` state, and masked mean pooling.
//!
//! The default shape matches a two-layer, 128-wide encoder with two heads.
//! Forward graphs are recorded on an [`autograd::Tape`] so training can reuse
//! the exact inference arithmetic; padded positions receive `-inf` attention
//! logits and are zeroed in the returned hidden states, which makes masked
//! inputs provably inert.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::tokenizer::TokenizedSequence;

/// Variance of layer norm denominators is guarded by this epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Encoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    /// Hidden width F.
    pub hidden: usize,
    pub heads: usize,
    pub feedforward: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    /// Applied during training only.
    pub dropout: f64,
}

impl EncoderConfig {
    /// Two layers, 128 hidden, two heads, 512 feedforward, 256 positions.
    pub fn default_shape(vocab_size: usize) -> Self {
        Self {
            layers: 2,
            hidden: 128,
            heads: 2,
            feedforward: 512,
            max_positions: 256,
            vocab_size,
            dropout: 0.1,
        }
    }

    /// A small shape for tests and fixtures.
    pub fn tiny(vocab_size: usize, hidden: usize, layers: usize, heads: usize, max_positions: usize) -> Self {
        Self {
            layers,
            hidden,
            heads,
            feedforward: hidden * 4,
            max_positions,
            vocab_size,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden width {} must divide evenly over {} heads",
                self.hidden, self.heads
            )));
        }
        if self.vocab_size == 0 || self.max_positions == 0 {
            return Err(Error::Config("vocab size and position table must be non-empty".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Weights of one attention + feedforward block. Linear weights are stored
/// `[in, out]` so application is `x . W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Scalar> {
    pub attn_query_weight: Array2<T>,
    pub attn_query_bias: Array2<T>,
    pub attn_key_weight: Array2<T>,
    pub attn_key_bias: Array2<T>,
    pub attn_value_weight: Array2<T>,
    pub attn_value_bias: Array2<T>,
    pub attn_output_weight: Array2<T>,
    pub attn_output_bias: Array2<T>,
    pub attn_norm_gain: Array2<T>,
    pub attn_norm_bias: Array2<T>,
    pub ff_inner_weight: Array2<T>,
    pub ff_inner_bias: Array2<T>,
    pub ff_outer_weight: Array2<T>,
    pub ff_outer_bias: Array2<T>,
    pub ff_norm_gain: Array2<T>,
    pub ff_norm_bias: Array2<T>,
}

/// Full encoder parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T: Scalar> {
    pub config: EncoderConfig,
    pub token_embedding: Array2<T>,
    pub position_embedding: Array2<T>,
    pub segment_embedding: Array2<T>,
    pub embed_norm_gain: Array2<T>,
    pub embed_norm_bias: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub pooler_weight: Array2<T>,
    pub pooler_bias: Array2<T>,
}

/// Contextual embedding plus the pooled `[CLS]` summary. Rows of padded
/// positions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub hidden: Array2<f32>,
    pub pooler: Array1<f32>,
}

/// Draws from N(0, sigma^2) truncated to two standard deviations.
fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f32 {
    loop {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        if z.abs() <= 2.0 {
            return (z * sigma) as f32;
        }
    }
}

pub(crate) fn init_weight(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| truncated_normal(rng, 0.02))
}

impl EncoderParams<f32> {
    /// Random initialization: truncated normal (sigma 0.02) weights, zero
    /// biases, unit layer-norm gains.
    pub fn init(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let f = config.hidden;
        let ones = |cols: usize| Array2::<f32>::ones((1, cols));
        let zeros = |cols: usize| Array2::<f32>::zeros((1, cols));
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                attn_query_weight: init_weight(rng, f, f),
                attn_query_bias: zeros(f),
                attn_key_weight: init_weight(rng, f, f),
                attn_key_bias: zeros(f),
                attn_value_weight: init_weight(rng, f, f),
                attn_value_bias: zeros(f),
                attn_output_weight: init_weight(rng, f, f),
                attn_output_bias: zeros(f),
                attn_norm_gain: ones(f),
                attn_norm_bias: zeros(f),
                ff_inner_weight: init_weight(rng, f, config.feedforward),
                ff_inner_bias: zeros(config.feedforward),
                ff_outer_weight: init_weight(rng, config.feedforward, f),
                ff_outer_bias: zeros(f),
                ff_norm_gain: ones(f),
                ff_norm_bias: zeros(f),
            })
            .collect();
        Ok(Self {
            token_embedding: init_weight(rng, config.vocab_size, f),
            position_embedding: init_weight(rng, config.max_positions, f),
            segment_embedding: init_weight(rng, 2, f),
            embed_norm_gain: ones(f),
            embed_norm_bias: zeros(f),
            layers,
            pooler_weight: init_weight(rng, f, f),
            pooler_bias: zeros(f),
            config,
        })
    }

    pub fn to_f64(&self) -> EncoderParams<f64> {
        let widen = |a: &Array2<f32>| a.mapv(f64::from);
        EncoderParams {
            config: self.config.clone(),
            token_embedding: widen(&self.token_embedding),
            position_embedding: widen(&self.position_embedding),
            segment_embedding: widen(&self.segment_embedding),
            embed_norm_gain: widen(&self.embed_norm_gain),
            embed_norm_bias: widen(&self.embed_norm_bias),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_query_weight: widen(&l.attn_query_weight),
                    attn_query_bias: widen(&l.attn_query_bias),
                    attn_key_weight: widen(&l.attn_key_weight),
                    attn_key_bias: widen(&l.attn_key_bias),
                    attn_value_weight: widen(&l.attn_value_weight),
                    attn_value_bias: widen(&l.attn_value_bias),
                    attn_output_weight: widen(&l.attn_output_weight),
                    attn_output_bias: widen(&l.attn_output_bias),
                    attn_norm_gain: widen(&l.attn_norm_gain),
                    attn_norm_bias: widen(&l.attn_norm_bias),
                    ff_inner_weight: widen(&l.ff_inner_weight),
                    ff_inner_bias: widen(&l.ff_inner_bias),
                    ff_outer_weight: widen(&l.ff_outer_weight),
                    ff_outer_bias: widen(&l.ff_outer_bias),
                    ff_norm_gain: widen(&l.ff_norm_gain),
                    ff_norm_bias: widen(&l.ff_norm_bias),
                })
                .collect(),
            pooler_weight: widen(&self.pooler_weight),
            pooler_bias: widen(&self.pooler_bias),
        }
    }
}

impl<T: Scalar> EncoderParams<T> {
    /// Tensor names and references, in a stable order. Names are relative;
    /// checkpoint archives prepend `encoder.`.
    pub fn named(&self) -> Vec<(String, &Array2<T>)> {
        let mut out: Vec<(String, &Array2<T>)> = vec![
            ("token_embedding".into(), &self.token_embedding),
            ("position_embedding".into(), &self.position_embedding),
            ("segment_embedding".into(), &self.segment_embedding),
            ("embed_norm_gain".into(), &self.embed_norm_gain),
            ("embed_norm_bias".into(), &self.embed_norm_bias),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.attn_query_weight"), &layer.attn_query_weight));
            out.push((format!("layer{i}.attn_query_bias"), &layer.attn_query_bias));
            out.push((format!("layer{i}.attn_key_weight"), &layer.attn_key_weight));
            out.push((format!("layer{i}.attn_key_bias"), &layer.attn_key_bias));
            out.push((format!("layer{i}.attn_value_weight"), &layer.attn_value_weight));
            out.push((format!("layer{i}.attn_value_bias"), &layer.attn_value_bias));
            out.push((format!("layer{i}.attn_output_weight"), &layer.attn_output_weight));
            out.push((format!("layer{i}.attn_output_bias"), &layer.attn_output_bias));
            out.push((format!("layer{i}.attn_norm_gain"), &layer.attn_norm_gain));
            out.push((format!("layer{i}.attn_norm_bias"), &layer.attn_norm_bias));
            out.push((format!("layer{i}.ff_inner_weight"), &layer.ff_inner_weight));
            out.push((format!("layer{i}.ff_inner_bias"), &layer.ff_inner_bias));
            out.push((format!("layer{i}.ff_outer_weight"), &layer.ff_outer_weight));
            out.push((format!("layer{i}.ff_outer_bias"), &layer.ff_outer_bias));
            out.push((format!("layer{i}.ff_norm_gain"), &layer.ff_norm_gain));
            out.push((format!("layer{i}.ff_norm_bias"), &layer.ff_norm_bias));
        }
        out.push(("pooler_weight".into(), &self.pooler_weight));
        out.push(("pooler_bias".into(), &self.pooler_bias));
        out
    }

    /// Mutable variant of [`EncoderParams::named`], same order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Array2<T>)> {
        let mut out: Vec<(String, &mut Array2<T>)> = vec![
            ("token_embedding".into(), &mut self.token_embedding),
            ("position_embedding".into(), &mut self.position_embedding),
            ("segment_embedding".into(), &mut self.segment_embedding),
            ("embed_norm_gain".into(), &mut self.embed_norm_gain),
            ("embed_norm_bias".into(), &mut self.embed_norm_bias),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.attn_query_weight"), &mut layer.attn_query_weight));
            out.push((format!("layer{i}.attn_query_bias"), &mut layer.attn_query_bias));
            out.push((format!("layer{i}.attn_key_weight"), &mut layer.attn_key_weight));
            out.push((format!("layer{i}.attn_key_bias"), &mut layer.attn_key_bias));
            out.push((format!("layer{i}.attn_value_weight"), &mut layer.attn_value_weight));
            out.push((format!("layer{i}.attn_value_bias"), &mut layer.attn_value_bias));
            out.push((format!("layer{i}.attn_output_weight"), &mut layer.attn_output_weight));
            out.push((format!("layer{i}.attn_output_bias"), &mut layer.attn_output_bias));
            out.push((format!("layer{i}.attn_norm_gain"), &mut layer.attn_norm_gain));
            out.push((format!("layer{i}.attn_norm_bias"), &mut layer.attn_norm_bias));
            out.push((format!("layer{i}.ff_inner_weight"), &mut layer.ff_inner_weight));
            out.push((format!("layer{i}.ff_inner_bias"), &mut layer.ff_inner_bias));
            out.push((format!("layer{i}.ff_outer_weight"), &mut layer.ff_outer_weight));
            out.push((format!("layer{i}.ff_outer_bias"), &mut layer.ff_outer_bias));
            out.push((format!("layer{i}.ff_norm_gain"), &mut layer.ff_norm_gain));
            out.push((format!("layer{i}.ff_norm_bias"), &mut layer.ff_norm_bias));
        }
        out.push(("pooler_weight".into(), &mut self.pooler_weight));
        out.push(("pooler_bias".into(), &mut self.pooler_bias));
        out
    }

    fn validate_sequence(&self, seq: &TokenizedSequence) -> Result<()> {
        if seq.len() > self.config.max_positions {
            return Err(Error::Shape(format!(
                "sequence length {} exceeds position table {}",
                seq.len(),
                self.config.max_positions
            )));
        }
        for &id in &seq.ids {
            if id as usize >= self.config.vocab_size {
                return Err(Error::Shape(format!(
                    "token id {id} out of range for vocab size {}",
                    self.config.vocab_size
                )));
            }
        }
        Ok(())
    }
}

/// Dropout state threaded through training forwards.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask<T: Scalar>(&mut self, rows: usize, cols: usize) -> Array2<T> {
        let keep = 1.0 - self.rate;
        let scale = T::c(1.0 / keep);
        Array2::from_shape_fn((rows, cols), |_| {
            if self.rng.gen::<f64>() < keep {
                scale
            } else {
                T::zero()
            }
        })
    }
}

fn apply_dropout<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    dropout: &mut Option<&mut Dropout<'_>>,
) -> Var {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let (rows, cols) = tape.value(x).dim();
            let mask = d.mask(rows, cols);
            tape.mul_const(x, mask)
        }
        _ => x,
    }
}

/// Tape handles for every encoder tensor, inserted once per tape.
pub struct EncoderVars {
    pub token_embedding: Var,
    pub position_embedding: Var,
    pub segment_embedding: Var,
    pub embed_norm_gain: Var,
    pub embed_norm_bias: Var,
    pub layers: Vec<LayerVars>,
    pub pooler_weight: Var,
    pub pooler_bias: Var,
    /// Leaf vars in [`EncoderParams::named`] order, for gradient collection.
    pub ordered: Vec<Var>,
}

pub struct LayerVars {
    pub attn_query_weight: Var,
    pub attn_query_bias: Var,
    pub attn_key_weight: Var,
    pub attn_key_bias: Var,
    pub attn_value_weight: Var,
    pub attn_value_bias: Var,
    pub attn_output_weight: Var,
    pub attn_output_bias: Var,
    pub attn_norm_gain: Var,
    pub attn_norm_bias: Var,
    pub ff_inner_weight: Var,
    pub ff_inner_bias: Var,
    pub ff_outer_weight: Var,
    pub ff_outer_bias: Var,
    pub ff_norm_gain: Var,
    pub ff_norm_bias: Var,
}

impl<T: Scalar> EncoderParams<T> {
    /// Copies every tensor onto the tape as a leaf.
    pub fn insert_leaves(&self, tape: &mut Tape<T>) -> EncoderVars {
        let mut ordered = Vec::new();
        let mut leaf = |tape: &mut Tape<T>, a: &Array2<T>| {
            let v = tape.leaf(a.clone());
            ordered.push(v);
            v
        };
        let token_embedding = leaf(tape, &self.token_embedding);
        let position_embedding = leaf(tape, &self.position_embedding);
        let segment_embedding = leaf(tape, &self.segment_embedding);
        let embed_norm_gain = leaf(tape, &self.embed_norm_gain);
        let embed_norm_bias = leaf(tape, &self.embed_norm_bias);
        let layers = self
            .layers
            .iter()
            .map(|l| LayerVars {
                attn_query_weight: leaf(tape, &l.attn_query_weight),
                attn_query_bias: leaf(tape, &l.attn_query_bias),
                attn_key_weight: leaf(tape, &l.attn_key_weight),
                attn_key_bias: leaf(tape, &l.attn_key_bias),
                attn_value_weight: leaf(tape, &l.attn_value_weight),
                attn_value_bias: leaf(tape, &l.attn_value_bias),
                attn_output_weight: leaf(tape, &l.attn_output_weight),
                attn_output_bias: leaf(tape, &l.attn_output_bias),
                attn_norm_gain: leaf(tape, &l.attn_norm_gain),
                attn_norm_bias: leaf(tape, &l.attn_norm_bias),
                ff_inner_weight: leaf(tape, &l.ff_inner_weight),
                ff_inner_bias: leaf(tape, &l.ff_inner_bias),
                ff_outer_weight: leaf(tape, &l.ff_outer_weight),
                ff_outer_bias: leaf(tape, &l.ff_outer_bias),
                ff_norm_gain: leaf(tape, &l.ff_norm_gain),
                ff_norm_bias: leaf(tape, &l.ff_norm_bias),
            })
            .collect();
        let pooler_weight = leaf(tape, &self.pooler_weight);
        let pooler_bias = leaf(tape, &self.pooler_bias);
        EncoderVars {
            token_embedding,
            position_embedding,
            segment_embedding,
            embed_norm_gain,
            embed_norm_bias,
            layers,
            pooler_weight,
            pooler_bias,
            ordered,
        }
    }
}

/// Forward-pass handles: final hidden states (padded rows zeroed), the pooled
/// `[CLS]` vector, and per-layer-per-head attention distributions.
pub struct ForwardGraph {
    pub hidden: Var,
    pub pooler: Var,
    pub attention: Vec<Var>,
}

/// Embedding sublayer: token + position + segment lookups, summed and
/// layer-normalized.
pub fn build_embed<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &EncoderVars,
    seq: &TokenizedSequence,
    dropout: &mut Option<&mut Dropout<'_>>,
    eps: T,
) -> Var {
    let ids: Vec<usize> = seq.ids.iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (0..seq.len()).collect();
    let segments: Vec<usize> = seq.segment_ids.iter().map(|&s| s as usize).collect();
    let tok = tape.gather(vars.token_embedding, &ids);
    let pos = tape.gather(vars.position_embedding, &positions);
    let seg = tape.gather(vars.segment_embedding, &segments);
    let sum = tape.add(tok, pos);
    let sum = tape.add(sum, seg);
    let normed = tape.layer_norm(sum, vars.embed_norm_gain, vars.embed_norm_bias, eps);
    apply_dropout(tape, normed, dropout)
}

/// Additive attention bias: 0 on attended columns, `-inf` on masked columns.
fn attention_bias<T: Scalar>(mask: &[u8]) -> Array2<T> {
    let len = mask.len();
    Array2::from_shape_fn((len, len), |(_, col)| {
        if mask[col] == 1 {
            T::zero()
        } else {
            T::neg_infinity()
        }
    })
}

/// One attention + feedforward block. Returns the block output and one
/// attention matrix per head.
pub fn build_block<T: Scalar>(
    tape: &mut Tape<T>,
    layer: &LayerVars,
    hidden: Var,
    mask: &[u8],
    config: &EncoderConfig,
    dropout: &mut Option<&mut Dropout<'_>>,
    eps: T,
) -> (Var, Vec<Var>) {
    let dim = config.head_dim();
    let scale = T::c(1.0 / (dim as f64).sqrt());
    let bias = attention_bias::<T>(mask);

    let q = tape.matmul(hidden, layer.attn_query_weight);
    let q = tape.add_bias(q, layer.attn_query_bias);
    let k = tape.matmul(hidden, layer.attn_key_weight);
    let k = tape.add_bias(k, layer.attn_key_bias);
    let v = tape.matmul(hidden, layer.attn_value_weight);
    let v = tape.add_bias(v, layer.attn_value_bias);

    let mut attn_vars = Vec::with_capacity(config.heads);
    let mut merged: Option<Var> = None;
    for head in 0..config.heads {
        let start = head * dim;
        let qh = tape.slice_cols(q, start, dim);
        let kh = tape.slice_cols(k, start, dim);
        let vh = tape.slice_cols(v, start, dim);
        let scores = tape.matmul_tb(qh, kh);
        let scores = tape.scale(scores, scale);
        let scores = tape.add_const(scores, &bias);
        let attn = tape.softmax_rows(scores);
        attn_vars.push(attn);
        let ctx = tape.matmul(attn, vh);
        merged = Some(match merged {
            None => ctx,
            Some(prev) => tape.concat_cols(prev, ctx),
        });
    }
    let ctx = merged.expect("at least one head");
    let proj = tape.matmul(ctx, layer.attn_output_weight);
    let proj = tape.add_bias(proj, layer.attn_output_bias);
    let proj = apply_dropout(tape, proj, dropout);
    let residual = tape.add(hidden, proj);
    let attn_out = tape.layer_norm(residual, layer.attn_norm_gain, layer.attn_norm_bias, eps);

    let inner = tape.matmul(attn_out, layer.ff_inner_weight);
    let inner = tape.add_bias(inner, layer.ff_inner_bias);
    let inner = tape.gelu(inner);
    let outer = tape.matmul(inner, layer.ff_outer_weight);
    let outer = tape.add_bias(outer, layer.ff_outer_bias);
    let outer = apply_dropout(tape, outer, dropout);
    let residual = tape.add(attn_out, outer);
    let out = tape.layer_norm(residual, layer.ff_norm_gain, layer.ff_norm_bias, eps);
    (out, attn_vars)
}

/// Full forward: embedding, stacked blocks, padded-row zeroing, pooler.
pub fn build_forward<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &EncoderVars,
    config: &EncoderConfig,
    seq: &TokenizedSequence,
    mut dropout: Option<&mut Dropout<'_>>,
) -> ForwardGraph {
    let eps = T::c(LAYER_NORM_EPS);
    let mut hidden = build_embed(tape, vars, seq, &mut dropout, eps);
    let mut attention = Vec::new();
    for layer in &vars.layers {
        let (out, attn) = build_block(tape, layer, hidden, &seq.attention_mask, config, &mut dropout, eps);
        hidden = out;
        attention.extend(attn);
    }
    // Zero padded rows so masked inputs cannot leak into the output.
    let row_mask = Array2::from_shape_fn((seq.len(), config.hidden), |(row, _)| {
        if seq.attention_mask[row] == 1 {
            T::one()
        } else {
            T::zero()
        }
    });
    let hidden = tape.mul_const(hidden, row_mask);

    let cls = tape.slice_rows(hidden, 0, 1);
    let pooled = tape.matmul(cls, vars.pooler_weight);
    let pooled = tape.add_bias(pooled, vars.pooler_bias);
    let pooler = tape.tanh(pooled);
    ForwardGraph {
        hidden,
        pooler,
        attention,
    }
}

impl EncoderParams<f32> {
    /// Embedding sublayer output for `seq`.
    pub fn embed(&self, seq: &TokenizedSequence) -> Result<Array2<f32>> {
        self.validate_sequence(seq)?;
        let mut tape = Tape::new();
        let vars = self.insert_leaves(&mut tape);
        let out = build_embed(&mut tape, &vars, seq, &mut None, LAYER_NORM_EPS as f32);
        Ok(tape.value(out).clone())
    }

    /// Applies block `layer_index` to an externally supplied hidden matrix.
    /// Returns the block output and one attention matrix per head.
    pub fn attention_block(
        &self,
        hidden: &Array2<f32>,
        mask: &[u8],
        layer_index: usize,
    ) -> Result<(Array2<f32>, Vec<Array2<f32>>)> {
        if hidden.nrows() != mask.len() {
            return Err(Error::Shape(format!(
                "mask length {} does not match {} hidden rows",
                mask.len(),
                hidden.nrows()
            )));
        }
        if hidden.ncols() != self.config.hidden {
            return Err(Error::Shape(format!(
                "hidden width {} does not match config {}",
                hidden.ncols(),
                self.config.hidden
            )));
        }
        let layer = self
            .layers
            .get(layer_index)
            .ok_or_else(|| Error::Shape(format!("no layer {layer_index}")))?;
        let _ = layer;
        let mut tape = Tape::new();
        let vars = self.insert_leaves(&mut tape);
        let input = tape.leaf(hidden.clone());
        let (out, attn) = build_block(
            &mut tape,
            &vars.layers[layer_index],
            input,
            mask,
            &self.config,
            &mut None,
            LAYER_NORM_EPS as f32,
        );
        let weights = attn.iter().map(|&a| tape.value(a).clone()).collect();
        Ok((tape.value(out).clone(), weights))
    }

    /// Full deterministic forward pass.
    pub fn forward(&self, seq: &TokenizedSequence) -> Result<EncoderOutput> {
        Ok(self.forward_with_attention(seq)?.0)
    }

    /// Forward pass that also returns every attention distribution
    /// (layer-major, head-minor).
    pub fn forward_with_attention(
        &self,
        seq: &TokenizedSequence,
    ) -> Result<(EncoderOutput, Vec<Array2<f32>>)> {
        self.validate_sequence(seq)?;
        let mut tape = Tape::new();
        let vars = self.insert_leaves(&mut tape);
        let graph = build_forward(&mut tape, &vars, &self.config, seq, None);
        let output = EncoderOutput {
            hidden: tape.value(graph.hidden).clone(),
            pooler: tape.value(graph.pooler).row(0).to_owned(),
        };
        let attention = graph.attention.iter().map(|&a| tape.value(a).clone()).collect();
        Ok((output, attention))
    }
}

/// Arithmetic mean of the hidden rows whose mask bit is 1.
pub fn mean_pool(output: &EncoderOutput, mask: &[u8]) -> Result<Array1<f32>> {
    if mask.len() != output.hidden.nrows() {
        return Err(Error::Shape(format!(
            "mask length {} does not match {} hidden rows",
            mask.len(),
            output.hidden.nrows()
        )));
    }
    let count = mask.iter().filter(|&&m| m == 1).count();
    if count == 0 {
        return Err(Error::Shape("mean_pool over a fully masked sequence".into()));
    }
    let mut sum = Array1::<f32>::zeros(output.hidden.ncols());
    for (row, &m) in output.hidden.axis_iter(Axis(0)).zip(mask) {
        if m == 1 {
            sum += &row;
        }
    }
    Ok(sum / count as f32)
}
