//! Pairwise matcher: jointly encodes a requirement description with one
//! candidate API description and scores the pair, so self-attention spans
//! both texts. Scoring a whole candidate set yields the similarity vector
//! the pipeline fuses with the filter's scores.
//!
//! An alternative mode encodes the two texts separately and scores the
//! concatenated pooler vectors; it exists for ablation and keeps the same
//! checkpoint layout with one extra task layer.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Scalar, Tape, Var};
use crate::encoder::{build_forward, init_weight, EncoderParams};
use crate::error::{Error, Result};
use crate::filter::{CandidateSet, ScoreSpace, ScoreVector};
use crate::tokenizer::{encode_pair, encode_single, Vocab};

/// How a pair of texts is turned into one similarity score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatchMode {
    /// One joint `[CLS] a [SEP] b [SEP]` pass; score from the pooler.
    #[default]
    CrossEncode,
    /// Two independent passes; score from the concatenated poolers.
    BiEncodeConcat,
}

/// Task layer of the matcher. `task_*` maps one pooler vector to a logit;
/// `concat_*` maps two concatenated pooler vectors for the separate-encoding
/// mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchHead<T: Scalar> {
    pub task_weight: Array2<T>,
    pub task_bias: Array2<T>,
    pub concat_weight: Array2<T>,
    pub concat_bias: Array2<T>,
    pub mode: MatchMode,
}

impl MatchHead<f32> {
    pub fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            task_weight: init_weight(rng, hidden, 1),
            task_bias: Array2::zeros((1, 1)),
            concat_weight: init_weight(rng, 2 * hidden, 1),
            concat_bias: Array2::zeros((1, 1)),
            mode: MatchMode::CrossEncode,
        }
    }

    pub fn to_f64(&self) -> MatchHead<f64> {
        let widen = |a: &Array2<f32>| a.mapv(f64::from);
        MatchHead {
            task_weight: widen(&self.task_weight),
            task_bias: widen(&self.task_bias),
            concat_weight: widen(&self.concat_weight),
            concat_bias: widen(&self.concat_bias),
            mode: self.mode,
        }
    }
}

impl<T: Scalar> MatchHead<T> {
    pub fn hidden(&self) -> usize {
        self.task_weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.hidden();
        if self.task_weight.dim() != (f, 1)
            || self.task_bias.dim() != (1, 1)
            || self.concat_weight.dim() != (2 * f, 1)
            || self.concat_bias.dim() != (1, 1)
        {
            return Err(Error::Shape("matcher head tensor shapes are inconsistent".into()));
        }
        Ok(())
    }

    pub fn named(&self) -> Vec<(String, &Array2<T>)> {
        vec![
            ("task_weight".into(), &self.task_weight),
            ("task_bias".into(), &self.task_bias),
            ("concat_weight".into(), &self.concat_weight),
            ("concat_bias".into(), &self.concat_bias),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Array2<T>)> {
        vec![
            ("task_weight".into(), &mut self.task_weight),
            ("task_bias".into(), &mut self.task_bias),
            ("concat_weight".into(), &mut self.concat_weight),
            ("concat_bias".into(), &mut self.concat_bias),
        ]
    }

    pub fn insert_leaves(&self, tape: &mut Tape<T>) -> MatchVars {
        let mut ordered = Vec::new();
        let mut leaf = |tape: &mut Tape<T>, a: &Array2<T>| {
            let v = tape.leaf(a.clone());
            ordered.push(v);
            v
        };
        MatchVars {
            task_weight: leaf(tape, &self.task_weight),
            task_bias: leaf(tape, &self.task_bias),
            concat_weight: leaf(tape, &self.concat_weight),
            concat_bias: leaf(tape, &self.concat_bias),
            ordered,
        }
    }
}

/// Tape handles for a [`MatchHead`].
pub struct MatchVars {
    pub task_weight: Var,
    pub task_bias: Var,
    pub concat_weight: Var,
    pub concat_bias: Var,
    pub ordered: Vec<Var>,
}

/// Cross-encode scoring subgraph: pooler `[1,F]` to sigmoid logit `[1,1]`.
pub fn build_pair_score<T: Scalar>(tape: &mut Tape<T>, vars: &MatchVars, pooler: Var) -> Var {
    let logit = tape.matmul(pooler, vars.task_weight);
    let logit = tape.add_bias(logit, vars.task_bias);
    tape.sigmoid(logit)
}

/// Separate-encoding scoring subgraph over two pooler vectors.
pub fn build_concat_score<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &MatchVars,
    pooler_a: Var,
    pooler_b: Var,
) -> Var {
    let joint = tape.concat_cols(pooler_a, pooler_b);
    let logit = tape.matmul(joint, vars.concat_weight);
    let logit = tape.add_bias(logit, vars.concat_bias);
    tape.sigmoid(logit)
}

/// Similarity of one (requirement, API description) pair in [0, 1].
///
/// Both texts must be non-empty after preprocessing; `max_len` caps the
/// sequence length (the joint sequence in cross-encode mode, each side in
/// separate mode).
pub fn similarity(
    mashup_text: &str,
    api_text: &str,
    encoder: &EncoderParams<f32>,
    head: &MatchHead<f32>,
    vocab: &Vocab,
    max_len: usize,
) -> Result<f32> {
    head.validate()?;
    if head.hidden() != encoder.config.hidden {
        return Err(Error::Shape(format!(
            "matcher head width {} does not match encoder width {}",
            head.hidden(),
            encoder.config.hidden
        )));
    }
    let mut tape: Tape<f32> = Tape::new();
    let enc_vars = encoder.insert_leaves(&mut tape);
    let head_vars = head.insert_leaves(&mut tape);
    let score = match head.mode {
        MatchMode::CrossEncode => {
            let seq = encode_pair(mashup_text, api_text, vocab, max_len)?;
            let graph = build_forward(&mut tape, &enc_vars, &encoder.config, &seq, None);
            build_pair_score(&mut tape, &head_vars, graph.pooler)
        }
        MatchMode::BiEncodeConcat => {
            let seq_a = encode_single(mashup_text, vocab, max_len)?;
            let seq_b = encode_single(api_text, vocab, max_len)?;
            let graph_a = build_forward(&mut tape, &enc_vars, &encoder.config, &seq_a, None);
            let graph_b = build_forward(&mut tape, &enc_vars, &encoder.config, &seq_b, None);
            build_concat_score(&mut tape, &head_vars, graph_a.pooler, graph_b.pooler)
        }
    };
    Ok(tape.value(score)[[0, 0]])
}

/// Scores every candidate against the query text, preserving candidate order.
pub fn score_candidates(
    query_text: &str,
    candidates: &CandidateSet,
    descriptions: &dyn Fn(usize) -> Option<String>,
    encoder: &EncoderParams<f32>,
    head: &MatchHead<f32>,
    vocab: &Vocab,
    max_len: usize,
) -> Result<ScoreVector> {
    let mut scores = Vec::with_capacity(candidates.len());
    for &api_id in &candidates.api_ids {
        let text = descriptions(api_id).ok_or_else(|| {
            Error::Integrity(format!("candidate api {api_id} has no description"))
        })?;
        scores.push(similarity(query_text, &text, encoder, head, vocab, max_len)?);
    }
    Ok(ScoreVector {
        scores,
        space: ScoreSpace::Candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use rand::SeedableRng;

    fn vocab() -> Vocab {
        let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for t in ["alpha", "beta", "gamma", "delta"] {
            tokens.push(t.into());
        }
        Vocab::from_tokens(tokens).unwrap()
    }

    fn encoder(seed: u64) -> EncoderParams<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncoderParams::init(EncoderConfig::tiny(16, 8, 1, 2, 16), &mut rng).unwrap()
    }

    #[test]
    fn zero_task_layer_scores_half() {
        let enc = encoder(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut head = MatchHead::init(8, &mut rng);
        head.task_weight.fill(0.0);
        head.task_bias.fill(0.0);
        let s = similarity("alpha beta", "gamma", &enc, &head, &vocab(), 16).unwrap();
        assert_eq!(s, 0.5);
    }

    #[test]
    fn similarity_is_generally_asymmetric() {
        let enc = encoder(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = MatchHead::init(8, &mut rng);
        let ab = similarity("alpha beta", "gamma delta", &enc, &head, &vocab(), 16).unwrap();
        let ba = similarity("gamma delta", "alpha beta", &enc, &head, &vocab(), 16).unwrap();
        assert_ne!(ab, ba);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let enc = encoder(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let head = MatchHead::init(8, &mut rng);
        for (a, b) in [("alpha", "beta"), ("gamma delta", "alpha"), ("beta", "beta")] {
            let s = similarity(a, b, &enc, &head, &vocab(), 16).unwrap();
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn separate_encoding_mode_differs_from_cross_encoding() {
        let enc = encoder(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut head = MatchHead::init(8, &mut rng);
        let cross = similarity("alpha beta", "gamma", &enc, &head, &vocab(), 16).unwrap();
        head.mode = MatchMode::BiEncodeConcat;
        let separate = similarity("alpha beta", "gamma", &enc, &head, &vocab(), 16).unwrap();
        assert_ne!(cross, separate);
        assert!(separate > 0.0 && separate < 1.0);
    }

    #[test]
    fn empty_side_is_rejected() {
        let enc = encoder(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = MatchHead::init(8, &mut rng);
        assert!(similarity("", "alpha", &enc, &head, &vocab(), 16).is_err());
        assert!(similarity("alpha", "", &enc, &head, &vocab(), 16).is_err());
    }

    fn candidate_fixture() -> (CandidateSet, Vec<String>) {
        let descriptions = vec![
            "alpha beta".to_string(),
            "gamma".to_string(),
            "delta alpha".to_string(),
        ];
        let cands = CandidateSet {
            api_ids: vec![2, 0, 1],
            filter_scores: vec![0.9, 0.8, 0.7],
        };
        (cands, descriptions)
    }

    #[test]
    fn score_candidates_is_elementwise() {
        let enc = encoder(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let head = MatchHead::init(8, &mut rng);
        let (cands, descs) = candidate_fixture();
        let lookup = |id: usize| descs.get(id).cloned();
        let v_m = score_candidates("alpha beta", &cands, &lookup, &enc, &head, &vocab(), 16).unwrap();
        assert_eq!(v_m.space, ScoreSpace::Candidates);
        assert_eq!(v_m.len(), 3);
        for (j, &api_id) in cands.api_ids.iter().enumerate() {
            let direct =
                similarity("alpha beta", &descs[api_id], &enc, &head, &vocab(), 16).unwrap();
            assert_eq!(v_m.scores[j], direct);
        }
    }

    #[test]
    fn permuting_candidates_permutes_scores() {
        let enc = encoder(12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let head = MatchHead::init(8, &mut rng);
        let (cands, descs) = candidate_fixture();
        let lookup = |id: usize| descs.get(id).cloned();
        let base = score_candidates("alpha", &cands, &lookup, &enc, &head, &vocab(), 16).unwrap();
        let permuted = CandidateSet {
            api_ids: vec![cands.api_ids[1], cands.api_ids[2], cands.api_ids[0]],
            filter_scores: vec![0.8, 0.7, 0.9],
        };
        let v = score_candidates("alpha", &permuted, &lookup, &enc, &head, &vocab(), 16).unwrap();
        assert_eq!(v.scores[0], base.scores[1]);
        assert_eq!(v.scores[1], base.scores[2]);
        assert_eq!(v.scores[2], base.scores[0]);
    }

    #[test]
    fn changing_one_description_changes_only_that_element() {
        let enc = encoder(14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let head = MatchHead::init(8, &mut rng);
        let (cands, mut descs) = candidate_fixture();
        let base = {
            let lookup = |id: usize| descs.get(id).cloned();
            score_candidates("alpha", &cands, &lookup, &enc, &head, &vocab(), 16).unwrap()
        };
        descs[0] = "beta beta".to_string(); // candidate api 0 sits at index 1
        let lookup = |id: usize| descs.get(id).cloned();
        let altered = score_candidates("alpha", &cands, &lookup, &enc, &head, &vocab(), 16).unwrap();
        assert_eq!(base.scores[0], altered.scores[0]);
        assert_ne!(base.scores[1], altered.scores[1]);
        assert_eq!(base.scores[2], altered.scores[2]);
    }

    #[test]
    fn missing_description_is_an_error() {
        let enc = encoder(16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let head = MatchHead::init(8, &mut rng);
        let cands = CandidateSet {
            api_ids: vec![9],
            filter_scores: vec![0.5],
        };
        let lookup = |_: usize| None;
        assert!(
            score_candidates("alpha", &cands, &lookup, &enc, &head, &vocab(), 16).is_err()
        );
    }
}
