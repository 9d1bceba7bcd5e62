//! Multi-label relevance filter: scores every repository API (or every
//! category) from the encoded requirement description and selects the top-H
//! candidate set.
//!
//! Two feature branches feed the score head: the pooled `[CLS]` vector and
//! the masked mean of the token states. Each branch passes through its own
//! affine map, the results are concatenated, and a fusion layer with a
//! sigmoid yields one score per label. Either branch can be disabled for
//! ablations, which replaces that branch's feature vector with zeros while
//! keeping parameter shapes intact.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Scalar, Tape, Var};
use crate::encoder::{init_weight, mean_pool, EncoderOutput};
use crate::error::{Error, Result};

/// Label space a score vector ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreSpace {
    /// One score per repository API (length L).
    Repository,
    /// One score per candidate, aligned with a [`CandidateSet`].
    Candidates,
    /// One score per category.
    Categories,
}

/// Scores in [0,1] over a declared label space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f32>,
    pub space: ScoreSpace,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Dual-branch fusion head. Linear weights are `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionHead<T: Scalar> {
    pub pooler_weight: Array2<T>,
    pub pooler_bias: Array2<T>,
    pub mean_weight: Array2<T>,
    pub mean_bias: Array2<T>,
    pub fusion_weight: Array2<T>,
    pub fusion_bias: Array2<T>,
    /// Branch toggles for ablations; at least one must stay enabled.
    pub pooler_enabled: bool,
    pub mean_enabled: bool,
}

impl FusionHead<f32> {
    pub fn init(hidden: usize, labels: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            pooler_weight: init_weight(rng, hidden, labels),
            pooler_bias: Array2::zeros((1, labels)),
            mean_weight: init_weight(rng, hidden, labels),
            mean_bias: Array2::zeros((1, labels)),
            fusion_weight: init_weight(rng, 2 * labels, labels),
            fusion_bias: Array2::zeros((1, labels)),
            pooler_enabled: true,
            mean_enabled: true,
        }
    }

    pub fn to_f64(&self) -> FusionHead<f64> {
        let widen = |a: &Array2<f32>| a.mapv(f64::from);
        FusionHead {
            pooler_weight: widen(&self.pooler_weight),
            pooler_bias: widen(&self.pooler_bias),
            mean_weight: widen(&self.mean_weight),
            mean_bias: widen(&self.mean_bias),
            fusion_weight: widen(&self.fusion_weight),
            fusion_bias: widen(&self.fusion_bias),
            pooler_enabled: self.pooler_enabled,
            mean_enabled: self.mean_enabled,
        }
    }
}

impl<T: Scalar> FusionHead<T> {
    /// Number of labels K.
    pub fn labels(&self) -> usize {
        self.pooler_weight.ncols()
    }

    /// Encoder width F this head expects.
    pub fn hidden(&self) -> usize {
        self.pooler_weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (f, k) = (self.hidden(), self.labels());
        let expect = |name: &str, a: &Array2<T>, dim: (usize, usize)| {
            if a.dim() == dim {
                Ok(())
            } else {
                Err(Error::Shape(format!(
                    "filter head tensor {name} has shape {:?}, expected {dim:?}",
                    a.dim()
                )))
            }
        };
        expect("pooler_weight", &self.pooler_weight, (f, k))?;
        expect("pooler_bias", &self.pooler_bias, (1, k))?;
        expect("mean_weight", &self.mean_weight, (f, k))?;
        expect("mean_bias", &self.mean_bias, (1, k))?;
        expect("fusion_weight", &self.fusion_weight, (2 * k, k))?;
        expect("fusion_bias", &self.fusion_bias, (1, k))?;
        if !self.pooler_enabled && !self.mean_enabled {
            return Err(Error::Config("both fusion branches disabled".into()));
        }
        Ok(())
    }

    pub fn named(&self) -> Vec<(String, &Array2<T>)> {
        vec![
            ("pooler_weight".into(), &self.pooler_weight),
            ("pooler_bias".into(), &self.pooler_bias),
            ("mean_weight".into(), &self.mean_weight),
            ("mean_bias".into(), &self.mean_bias),
            ("fusion_weight".into(), &self.fusion_weight),
            ("fusion_bias".into(), &self.fusion_bias),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Array2<T>)> {
        vec![
            ("pooler_weight".into(), &mut self.pooler_weight),
            ("pooler_bias".into(), &mut self.pooler_bias),
            ("mean_weight".into(), &mut self.mean_weight),
            ("mean_bias".into(), &mut self.mean_bias),
            ("fusion_weight".into(), &mut self.fusion_weight),
            ("fusion_bias".into(), &mut self.fusion_bias),
        ]
    }

    /// Copies head tensors onto a tape.
    pub fn insert_leaves(&self, tape: &mut Tape<T>) -> FusionVars {
        let mut ordered = Vec::new();
        let mut leaf = |tape: &mut Tape<T>, a: &Array2<T>| {
            let v = tape.leaf(a.clone());
            ordered.push(v);
            v
        };
        FusionVars {
            pooler_weight: leaf(tape, &self.pooler_weight),
            pooler_bias: leaf(tape, &self.pooler_bias),
            mean_weight: leaf(tape, &self.mean_weight),
            mean_bias: leaf(tape, &self.mean_bias),
            fusion_weight: leaf(tape, &self.fusion_weight),
            fusion_bias: leaf(tape, &self.fusion_bias),
            pooler_enabled: self.pooler_enabled,
            mean_enabled: self.mean_enabled,
            ordered,
        }
    }
}

/// Tape handles for a [`FusionHead`].
pub struct FusionVars {
    pub pooler_weight: Var,
    pub pooler_bias: Var,
    pub mean_weight: Var,
    pub mean_bias: Var,
    pub fusion_weight: Var,
    pub fusion_bias: Var,
    pub pooler_enabled: bool,
    pub mean_enabled: bool,
    pub ordered: Vec<Var>,
}

/// Builds the fusion score graph on a tape. `pooler_feat` is `[1, F]` and
/// `hidden` is the encoder output whose unmasked rows feed the mean branch.
/// Returns the `[1, K]` sigmoid scores.
pub fn build_fusion_scores<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &FusionVars,
    pooler_feat: Var,
    hidden: Var,
    mask: &[u8],
) -> Var {
    let keep: Vec<bool> = mask.iter().map(|&m| m == 1).collect();
    let hidden_cols = tape.value(hidden).ncols();

    let pooler_input = if vars.pooler_enabled {
        pooler_feat
    } else {
        tape.leaf(Array2::zeros((1, hidden_cols)))
    };
    let mean_input = if vars.mean_enabled {
        tape.mean_rows(hidden, &keep)
    } else {
        tape.leaf(Array2::zeros((1, hidden_cols)))
    };

    let u_p = tape.matmul(pooler_input, vars.pooler_weight);
    let u_p = tape.add_bias(u_p, vars.pooler_bias);
    let u_m = tape.matmul(mean_input, vars.mean_weight);
    let u_m = tape.add_bias(u_m, vars.mean_bias);
    let joint = tape.concat_cols(u_p, u_m);
    let fused = tape.matmul(joint, vars.fusion_weight);
    let fused = tape.add_bias(fused, vars.fusion_bias);
    tape.sigmoid(fused)
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn fusion_scores(enc: &EncoderOutput, mask: &[u8], head: &FusionHead<f32>) -> Result<Vec<f32>> {
    head.validate()?;
    if enc.pooler.len() != head.hidden() {
        return Err(Error::Shape(format!(
            "encoder width {} does not match head width {}",
            enc.pooler.len(),
            head.hidden()
        )));
    }
    let pooler_feat = if head.pooler_enabled {
        enc.pooler.clone()
    } else {
        Array1::zeros(head.hidden())
    };
    let mean_feat = if head.mean_enabled {
        mean_pool(enc, mask)?
    } else {
        Array1::zeros(head.hidden())
    };

    let u_p = pooler_feat.insert_axis(Axis(0)).dot(&head.pooler_weight) + &head.pooler_bias.row(0);
    let u_m = mean_feat.insert_axis(Axis(0)).dot(&head.mean_weight) + &head.mean_bias.row(0);
    let mut joint = Array2::zeros((1, 2 * head.labels()));
    joint.slice_mut(ndarray::s![.., ..head.labels()]).assign(&u_p);
    joint.slice_mut(ndarray::s![.., head.labels()..]).assign(&u_m);
    let fused = joint.dot(&head.fusion_weight) + &head.fusion_bias.row(0);
    Ok(fused.row(0).iter().map(|&x| sigmoid(x)).collect())
}

/// API relevance scores over the full repository.
pub fn relevance_scores(
    enc: &EncoderOutput,
    mask: &[u8],
    head: &FusionHead<f32>,
) -> Result<ScoreVector> {
    Ok(ScoreVector {
        scores: fusion_scores(enc, mask, head)?,
        space: ScoreSpace::Repository,
    })
}

/// Category scores: identical arithmetic over the category label space.
pub fn category_scores(
    enc: &EncoderOutput,
    mask: &[u8],
    head: &FusionHead<f32>,
) -> Result<ScoreVector> {
    Ok(ScoreVector {
        scores: fusion_scores(enc, mask, head)?,
        space: ScoreSpace::Categories,
    })
}

/// The filter's top-H selection, in descending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub api_ids: Vec<usize>,
    pub filter_scores: Vec<f32>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.api_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.api_ids.is_empty()
    }
}

/// Indices sorted by descending score; ties break toward the smaller index.
pub fn rank_descending(scores: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Ranks repository scores and keeps the H best ids; ties break toward the
/// smaller api id.
pub fn select_candidates(v_r: &ScoreVector, h: usize) -> Result<CandidateSet> {
    if v_r.space != ScoreSpace::Repository {
        return Err(Error::Config("candidate selection needs repository-space scores".into()));
    }
    if h > v_r.len() {
        return Err(Error::Config(format!(
            "candidate count {h} exceeds repository size {}",
            v_r.len()
        )));
    }
    let mut order = rank_descending(&v_r.scores);
    order.truncate(h);
    let filter_scores = order.iter().map(|&id| v_r.scores[id]).collect();
    Ok(CandidateSet {
        api_ids: order,
        filter_scores,
    })
}
