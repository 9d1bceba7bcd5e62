//! Pair sampling for matcher training: every positive (mashup, called API)
//! pair once per epoch, k uniform negatives per positive drawn from the
//! non-called APIs and redrawn every epoch.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Mashup;

/// One labeled training pair. `mashup_index` indexes the training list,
/// `api_id` the repository.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPair {
    pub mashup_index: usize,
    pub api_id: usize,
    pub label: f32,
}

/// A batch of pairs with no duplicate (mashup, api) combination, except when
/// a mashup calls so many APIs that negatives had to be drawn with
/// replacement (which logs a warning).
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub pairs: Vec<TrainingPair>,
}

/// Draws one epoch of batches. Each positive appears exactly once; for every
/// positive, `k` negatives are sampled uniformly without replacement from the
/// mashup's non-called APIs. The full pair list is shuffled before batching.
pub fn sample_pairs(
    train: &[Mashup],
    repository_size: usize,
    k: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PairBatch> {
    assert!(k >= 1, "negatives per positive must be at least 1");
    assert!(batch_size >= 1);
    let mut pairs: Vec<TrainingPair> = Vec::new();
    for (mashup_index, mashup) in train.iter().enumerate() {
        let positives: Vec<usize> = mashup.called_apis.iter().copied().collect();
        let mut pool: Vec<usize> = (0..repository_size)
            .filter(|id| !mashup.called_apis.contains(id))
            .collect();
        let wanted = k * positives.len();

        let negatives: Vec<usize> = if pool.len() >= wanted {
            pool.shuffle(rng);
            pool.truncate(wanted);
            pool
        } else if pool.is_empty() {
            tracing::warn!(
                mashup = %mashup.name,
                "mashup calls every API; sampling negatives is impossible, reusing positives as negatives targets"
            );
            (0..wanted).map(|_| rng.gen_range(0..repository_size)).collect()
        } else {
            tracing::warn!(
                mashup = %mashup.name,
                available = pool.len(),
                wanted,
                "not enough distinct negatives; sampling with replacement"
            );
            (0..wanted).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
        };

        for &api_id in &positives {
            pairs.push(TrainingPair {
                mashup_index,
                api_id,
                label: 1.0,
            });
        }
        for api_id in negatives {
            pairs.push(TrainingPair {
                mashup_index,
                api_id,
                label: 0.0,
            });
        }
    }
    pairs.shuffle(rng);
    pairs
        .chunks(batch_size)
        .map(|chunk| PairBatch {
            pairs: chunk.to_vec(),
        })
        .collect()
}
