//! Fine-tuning driver: binary cross entropy over multi-hot or pairwise
//! targets, Adam, the two-phase learning-rate schedule, per-epoch validation
//! with best-checkpoint selection, and early stopping.

mod adam;
mod sampler;

pub use adam::Adam;
pub use sampler::{sample_pairs, PairBatch, TrainingPair};

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::corpus::SplitCorpus;
use crate::encoder::{build_forward, Dropout, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::filter::{build_fusion_scores, rank_descending, select_candidates, FusionHead, ScoreSpace};
use crate::matcher::{build_concat_score, build_pair_score, MatchHead, MatchMode};
use crate::metrics::{ndcg_at, IdcgMode, QueryJudgment};
use crate::tokenizer::{encode_pair, encode_single, TokenizedSequence, Vocab};

/// Prediction clamp used by the loss.
pub const BCE_EPS: f32 = 1e-7;

/// Which model a training run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainTask {
    FilterApi,
    FilterCategory,
    Matcher,
}

impl fmt::Display for TrainTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainTask::FilterApi => write!(f, "filter-api"),
            TrainTask::FilterCategory => write!(f, "filter-category"),
            TrainTask::Matcher => write!(f, "matcher"),
        }
    }
}

/// Training hyperparameters. The defaults follow the task: the filter runs
/// 15 epochs dropping the learning rate after 6, the matcher 20 epochs
/// dropping after 16, both from 1e-3 to 1e-5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TrainTask,
    pub encoder: EncoderConfig,
    pub epochs: usize,
    /// Epoch index at which the learning rate drops.
    pub phase_boundary: usize,
    pub lr_high: f32,
    pub lr_low: f32,
    pub batch_size: usize,
    /// Matcher only: negatives sampled per positive pair.
    pub negatives_per_positive: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Validation selection metric is NDCG at this cutoff.
    pub selection_n: usize,
    pub seed: u64,
    /// Sequence cap for tokenization; at most `encoder.max_positions`.
    pub max_len: usize,
    /// Candidate count used when validating the matcher hierarchically.
    pub matcher_validation_h: usize,
    pub matcher_mode: MatchMode,
    /// Filter-branch ablation toggles.
    pub filter_pooler_enabled: bool,
    pub filter_mean_enabled: bool,
    /// Warm-start the encoder from this checkpoint instead of random
    /// initialization (also the knob for sharing a fine-tuned encoder
    /// between the API and category tasks).
    pub init_encoder_from: Option<PathBuf>,
}

impl TrainConfig {
    fn base(task: TrainTask, encoder: EncoderConfig, epochs: usize, phase_boundary: usize) -> Self {
        let max_len = encoder.max_positions;
        Self {
            task,
            encoder,
            epochs,
            phase_boundary,
            lr_high: 1e-3,
            lr_low: 1e-5,
            batch_size: 32,
            negatives_per_positive: 5,
            patience: 3,
            selection_n: 5,
            seed: 0,
            max_len,
            matcher_validation_h: 45,
            matcher_mode: MatchMode::CrossEncode,
            filter_pooler_enabled: true,
            filter_mean_enabled: true,
            init_encoder_from: None,
        }
    }

    pub fn filter_api(encoder: EncoderConfig) -> Self {
        Self::base(TrainTask::FilterApi, encoder, 15, 6)
    }

    pub fn filter_category(encoder: EncoderConfig) -> Self {
        Self::base(TrainTask::FilterCategory, encoder, 15, 6)
    }

    pub fn matcher(encoder: EncoderConfig) -> Self {
        Self::base(TrainTask::Matcher, encoder, 20, 16)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.phase_boundary >= self.epochs {
            return Err(Error::Config(format!(
                "phase boundary {} must precede epoch count {}",
                self.phase_boundary, self.epochs
            )));
        }
        if !(self.lr_high > self.lr_low && self.lr_low > 0.0) {
            return Err(Error::Config("learning rates must satisfy high > low > 0".into()));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("need at least one negative per positive".into()));
        }
        if self.batch_size == 0 || self.selection_n == 0 {
            return Err(Error::Config("batch size and selection cutoff must be positive".into()));
        }
        if self.max_len > self.encoder.max_positions {
            return Err(Error::Config(format!(
                "max_len {} exceeds the encoder position table {}",
                self.max_len, self.encoder.max_positions
            )));
        }
        Ok(())
    }
}

/// The two-phase learning rate: `lr_high` before the boundary epoch,
/// `lr_low` from the boundary on.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f32 {
    if epoch < config.phase_boundary {
        config.lr_high
    } else {
        config.lr_low
    }
}

/// Mean binary cross entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(pred: &[f32], target: &[f32]) -> Result<f32> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction length {} != target length {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty prediction vector".into()));
    }
    let mut total = 0.0f64;
    for (&p, &t) in pred.iter().zip(target) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS) as f64;
        let t = t as f64;
        total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok((total / pred.len() as f64) as f32)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={}\tlr={:e}\ttrain_loss={:.6}",
            self.epoch, self.lr, self.train_loss
        )?;
        match self.val_metric {
            Some(m) => write!(f, "\tval_ndcg={:.6}", m),
            None => write!(f, "\tval_ndcg=n/a"),
        }
    }
}

/// Result of a training run: the best-validation checkpoint plus the log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// The per-epoch log as delimited text, one line per epoch.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for record in &self.log {
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }
}

fn initial_encoder(config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<EncoderParams<f32>> {
    match &config.init_encoder_from {
        None => EncoderParams::init(config.encoder.clone(), rng),
        Some(path) => {
            let loaded = Checkpoint::load(path)?;
            let mut base = loaded.encoder;
            let mut expected = config.encoder.clone();
            expected.dropout = base.config.dropout;
            if base.config != expected {
                return Err(Error::Compatibility(format!(
                    "warm-start encoder configuration {:?} does not match requested {:?}",
                    base.config, config.encoder
                )));
            }
            base.config.dropout = config.encoder.dropout;
            Ok(base)
        }
    }
}

/// Gathers parameter gradients (encoder first, then head) and applies Adam.
fn optimizer_step(
    adam: &mut Adam,
    encoder: &mut EncoderParams<f32>,
    head_named: Vec<(String, &mut Array2<f32>)>,
    grads: &crate::autograd::Gradients<f32>,
    leaf_order: &[Var],
    lr: f32,
) {
    let mut params: Vec<&mut Array2<f32>> = encoder
        .named_mut()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    params.extend(head_named.into_iter().map(|(_, t)| t));
    debug_assert_eq!(params.len(), leaf_order.len());
    let grad_refs: Vec<Option<&Array2<f32>>> = leaf_order.iter().map(|&v| grads.get(v)).collect();
    adam.step(&mut params, &grad_refs, lr);
}

fn judgment_metric(
    scores: &[f32],
    truth: &BTreeSet<usize>,
    n: usize,
) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let ranked: Vec<usize> = rank_descending(scores).into_iter().take(n).collect();
    let judgment = QueryJudgment::new(ranked, truth.clone()).ok()?;
    Some(ndcg_at(&judgment, n, IdcgMode::Capped))
}

struct BestTracker {
    metric: f64,
    epoch: usize,
    non_improving: usize,
}

impl BestTracker {
    fn new() -> Self {
        Self {
            metric: f64::NEG_INFINITY,
            epoch: 0,
            non_improving: 0,
        }
    }

    /// Returns (improved, should_stop).
    fn observe(&mut self, metric: f64, epoch: usize, patience: usize) -> (bool, bool) {
        if metric > self.metric {
            self.metric = metric;
            self.epoch = epoch;
            self.non_improving = 0;
            (true, false)
        } else {
            self.non_improving += 1;
            (false, self.non_improving >= patience)
        }
    }
}

/// Fine-tunes the multi-label filter on API calls (or mashup categories).
///
/// The target for each mashup is the multi-hot vector over the label space;
/// the epoch with the best validation NDCG wins. With an empty validation
/// list the final epoch is kept and early stopping is disabled.
pub fn train_filter(split: &SplitCorpus, vocab: &Vocab, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let label_space = match config.task {
        TrainTask::FilterApi => ScoreSpace::Repository,
        TrainTask::FilterCategory => ScoreSpace::Categories,
        TrainTask::Matcher => {
            return Err(Error::Config("train_filter cannot train the matcher task".into()))
        }
    };
    if split.train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let labels = match label_space {
        ScoreSpace::Repository => split.api_count(),
        ScoreSpace::Categories => split.category_count,
        ScoreSpace::Candidates => unreachable!(),
    };
    if labels == 0 {
        return Err(Error::Config("label space is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = initial_encoder(config, &mut rng)?;
    let mut head = FusionHead::init(config.encoder.hidden, labels, &mut rng);
    head.pooler_enabled = config.filter_pooler_enabled;
    head.mean_enabled = config.filter_mean_enabled;
    head.validate()?;

    let truth_of = |m: &crate::corpus::Mashup| -> BTreeSet<usize> {
        match label_space {
            ScoreSpace::Repository => m.called_apis.clone(),
            ScoreSpace::Categories => m.categories.clone(),
            ScoreSpace::Candidates => unreachable!(),
        }
    };

    let encode = |m: &crate::corpus::Mashup| encode_single(&m.description, vocab, config.max_len);
    let train_seqs: Vec<TokenizedSequence> =
        split.train.iter().map(encode).collect::<Result<_>>()?;
    let train_truth: Vec<BTreeSet<usize>> = split.train.iter().map(truth_of).collect();
    let val_seqs: Vec<TokenizedSequence> =
        split.validation.iter().map(encode).collect::<Result<_>>()?;
    let val_truth: Vec<BTreeSet<usize>> = split.validation.iter().map(truth_of).collect();

    let mut targets: Vec<Array2<f32>> = Vec::with_capacity(train_truth.len());
    for truth in &train_truth {
        let mut t = Array2::zeros((1, labels));
        for &label in truth {
            if label >= labels {
                return Err(Error::Integrity(format!("label {label} outside space of {labels}")));
            }
            t[[0, label]] = 1.0;
        }
        targets.push(t);
    }

    let mut adam = Adam::new();
    let mut log = Vec::new();
    let mut tracker = BestTracker::new();
    let mut best: Option<(EncoderParams<f32>, FusionHead<f32>)> = None;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut sample_count = 0usize;

        for batch in order.chunks(config.batch_size) {
            let mut tape: Tape<f32> = Tape::new();
            let enc_vars = encoder.insert_leaves(&mut tape);
            let head_vars = head.insert_leaves(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &index in batch {
                let seq = &train_seqs[index];
                let mut dropout = Dropout {
                    rate: config.encoder.dropout,
                    rng: &mut rng,
                };
                let graph = build_forward(&mut tape, &enc_vars, &config.encoder, seq, Some(&mut dropout));
                let scores = build_fusion_scores(
                    &mut tape,
                    &head_vars,
                    graph.pooler,
                    graph.hidden,
                    &seq.attention_mask,
                );
                let loss = tape.bce_mean(scores, targets[index].clone(), BCE_EPS);
                losses.push(loss);
            }
            let total = losses
                .iter()
                .skip(1)
                .fold(losses[0], |acc, &l| tape.add(acc, l));
            let mean_loss = tape.scale(total, 1.0 / batch.len() as f32);
            let loss_value = tape.value(mean_loss)[[0, 0]];
            if !loss_value.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss_value} at epoch {epoch} (lr {lr:e})"
                )));
            }
            loss_sum += loss_value as f64 * batch.len() as f64;
            sample_count += batch.len();

            let grads = tape.backward(mean_loss);
            let leaf_order: Vec<Var> = enc_vars
                .ordered
                .iter()
                .chain(head_vars.ordered.iter())
                .copied()
                .collect();
            optimizer_step(&mut adam, &mut encoder, head.named_mut(), &grads, &leaf_order, lr);
        }

        let train_loss = loss_sum / sample_count.max(1) as f64;
        let val_metric = filter_validation(&encoder, &head, &val_seqs, &val_truth, config.selection_n);
        log.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_metric,
        });
        tracing::info!(epoch, lr, train_loss, ?val_metric, task = %config.task, "epoch complete");

        match val_metric {
            Some(metric) => {
                let (improved, stop) = tracker.observe(metric, epoch, config.patience);
                if improved {
                    best = Some((encoder.clone(), head.clone()));
                }
                if stop {
                    stopped_early = true;
                    break;
                }
            }
            None => {
                tracker.metric = -train_loss;
                tracker.epoch = epoch;
                best = Some((encoder.clone(), head.clone()));
            }
        }
    }

    let (best_encoder, best_head) = best.unwrap_or((encoder, head));
    let meta = CheckpointMeta {
        encoder: config.encoder.clone(),
        api_count: split.api_count(),
        category_count: split.category_count,
        seed: config.seed,
        filter_space: Some(label_space),
        filter_pooler_enabled: config.filter_pooler_enabled,
        filter_mean_enabled: config.filter_mean_enabled,
        matcher_mode: None,
    };
    let checkpoint = Checkpoint {
        encoder: best_encoder,
        filter: Some(best_head),
        matcher: None,
        meta,
    };
    checkpoint.validate()?;
    Ok(TrainOutcome {
        checkpoint,
        log,
        best_epoch: tracker.epoch,
        best_metric: tracker.metric,
        stopped_early,
    })
}

fn filter_validation(
    encoder: &EncoderParams<f32>,
    head: &FusionHead<f32>,
    val_seqs: &[TokenizedSequence],
    val_truth: &[BTreeSet<usize>],
    n: usize,
) -> Option<f64> {
    if val_seqs.is_empty() {
        return None;
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (seq, truth) in val_seqs.iter().zip(val_truth) {
        let out = encoder.forward(seq).ok()?;
        let scores = crate::filter::relevance_scores(&out, &seq.attention_mask, head).ok()?;
        if let Some(metric) = judgment_metric(&scores.scores, truth, n) {
            total += metric;
            count += 1;
        }
    }
    if count == 0 {
        None
    } else {
        Some(total / count as f64)
    }
}

/// Fine-tunes the pairwise matcher on sampled positive/negative pairs.
///
/// Validation runs the deployed path: the supplied filter checkpoint selects
/// candidates for each validation mashup and the matcher's ordering of those
/// candidates is scored, so model selection optimizes hierarchical behavior.
pub fn train_matcher(
    split: &SplitCorpus,
    vocab: &Vocab,
    config: &TrainConfig,
    filter_ckpt: &Checkpoint,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.task != TrainTask::Matcher {
        return Err(Error::Config("train_matcher requires the matcher task".into()));
    }
    if split.train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let filter_head = filter_ckpt
        .filter
        .as_ref()
        .ok_or_else(|| Error::Compatibility("validation filter checkpoint lacks a filter head".into()))?;
    if filter_head.labels() != split.api_count() {
        return Err(Error::Compatibility(format!(
            "validation filter scores {} labels but the repository holds {}",
            filter_head.labels(),
            split.api_count()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = initial_encoder(config, &mut rng)?;
    let mut head = MatchHead::init(config.encoder.hidden, &mut rng);
    head.mode = config.matcher_mode;

    let mut adam = Adam::new();
    let mut log = Vec::new();
    let mut tracker = BestTracker::new();
    let mut best: Option<(EncoderParams<f32>, MatchHead<f32>)> = None;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config);
        let batches = sample_pairs(
            &split.train,
            split.api_count(),
            config.negatives_per_positive,
            config.batch_size,
            &mut rng,
        );
        let mut loss_sum = 0.0f64;
        let mut pair_count = 0usize;

        for batch in &batches {
            let mut tape: Tape<f32> = Tape::new();
            let enc_vars = encoder.insert_leaves(&mut tape);
            let head_vars = head.insert_leaves(&mut tape);
            let mut losses = Vec::with_capacity(batch.pairs.len());
            for pair in &batch.pairs {
                let mashup = &split.train[pair.mashup_index];
                let api = &split.repository[pair.api_id];
                let mut dropout = Dropout {
                    rate: config.encoder.dropout,
                    rng: &mut rng,
                };
                let score = match head.mode {
                    MatchMode::CrossEncode => {
                        let seq = encode_pair(&mashup.description, &api.description, vocab, config.max_len)?;
                        let graph =
                            build_forward(&mut tape, &enc_vars, &config.encoder, &seq, Some(&mut dropout));
                        build_pair_score(&mut tape, &head_vars, graph.pooler)
                    }
                    MatchMode::BiEncodeConcat => {
                        let seq_a = encode_single(&mashup.description, vocab, config.max_len)?;
                        let seq_b = encode_single(&api.description, vocab, config.max_len)?;
                        let graph_a =
                            build_forward(&mut tape, &enc_vars, &config.encoder, &seq_a, Some(&mut dropout));
                        let mut dropout_b = Dropout {
                            rate: config.encoder.dropout,
                            rng: &mut rng,
                        };
                        let graph_b =
                            build_forward(&mut tape, &enc_vars, &config.encoder, &seq_b, Some(&mut dropout_b));
                        build_concat_score(&mut tape, &head_vars, graph_a.pooler, graph_b.pooler)
                    }
                };
                let target = Array2::from_elem((1, 1), pair.label);
                losses.push(tape.bce_mean(score, target, BCE_EPS));
            }
            let total = losses
                .iter()
                .skip(1)
                .fold(losses[0], |acc, &l| tape.add(acc, l));
            let mean_loss = tape.scale(total, 1.0 / batch.pairs.len() as f32);
            let loss_value = tape.value(mean_loss)[[0, 0]];
            if !loss_value.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss_value} at epoch {epoch} (lr {lr:e})"
                )));
            }
            loss_sum += loss_value as f64 * batch.pairs.len() as f64;
            pair_count += batch.pairs.len();

            let grads = tape.backward(mean_loss);
            let leaf_order: Vec<Var> = enc_vars
                .ordered
                .iter()
                .chain(head_vars.ordered.iter())
                .copied()
                .collect();
            optimizer_step(&mut adam, &mut encoder, head.named_mut(), &grads, &leaf_order, lr);
        }

        let train_loss = loss_sum / pair_count.max(1) as f64;
        let val_metric = matcher_validation(&encoder, &head, filter_ckpt, split, vocab, config)?;
        log.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_metric,
        });
        tracing::info!(epoch, lr, train_loss, ?val_metric, task = %config.task, "epoch complete");

        match val_metric {
            Some(metric) => {
                let (improved, stop) = tracker.observe(metric, epoch, config.patience);
                if improved {
                    best = Some((encoder.clone(), head.clone()));
                }
                if stop {
                    stopped_early = true;
                    break;
                }
            }
            None => {
                tracker.metric = -train_loss;
                tracker.epoch = epoch;
                best = Some((encoder.clone(), head.clone()));
            }
        }
    }

    let (best_encoder, best_head) = best.unwrap_or((encoder, head));
    let meta = CheckpointMeta {
        encoder: config.encoder.clone(),
        api_count: split.api_count(),
        category_count: split.category_count,
        seed: config.seed,
        filter_space: None,
        filter_pooler_enabled: true,
        filter_mean_enabled: true,
        matcher_mode: Some(config.matcher_mode),
    };
    let checkpoint = Checkpoint {
        encoder: best_encoder,
        filter: None,
        matcher: Some(best_head),
        meta,
    };
    checkpoint.validate()?;
    Ok(TrainOutcome {
        checkpoint,
        log,
        best_epoch: tracker.epoch,
        best_metric: tracker.metric,
        stopped_early,
    })
}

fn matcher_validation(
    encoder: &EncoderParams<f32>,
    head: &MatchHead<f32>,
    filter_ckpt: &Checkpoint,
    split: &SplitCorpus,
    vocab: &Vocab,
    config: &TrainConfig,
) -> Result<Option<f64>> {
    if split.validation.is_empty() {
        return Ok(None);
    }
    let filter_head = filter_ckpt.filter.as_ref().expect("checked by caller");
    let h = config.matcher_validation_h.min(split.api_count());
    let mut total = 0.0f64;
    let mut count = 0usize;
    for mashup in &split.validation {
        let seq = encode_single(&mashup.description, vocab, config.max_len)?;
        let out = filter_ckpt.encoder.forward(&seq)?;
        let v_r = crate::filter::relevance_scores(&out, &seq.attention_mask, filter_head)?;
        let candidates = select_candidates(&v_r, h)?;
        let v_m = crate::matcher::score_candidates(
            &mashup.description,
            &candidates,
            &|id| split.repository.get(id).map(|a| a.description.clone()),
            encoder,
            head,
            vocab,
            config.max_len,
        )?;
        // Rank candidates by matcher score, ties toward the smaller api id.
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            v_m.scores[b]
                .partial_cmp(&v_m.scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(candidates.api_ids[a].cmp(&candidates.api_ids[b]))
        });
        let ranked: Vec<usize> = order
            .into_iter()
            .take(config.selection_n)
            .map(|i| candidates.api_ids[i])
            .collect();
        if mashup.called_apis.is_empty() {
            continue;
        }
        if let Ok(judgment) = QueryJudgment::new(ranked, mashup.called_apis.clone()) {
            total += ndcg_at(&judgment, config.selection_n, IdcgMode::Capped);
            count += 1;
        }
    }
    Ok(if count == 0 {
        None
    } else {
        Some(total / count as f64)
    })
}

#[cfg(test)]
mod tests;
