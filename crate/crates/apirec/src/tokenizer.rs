//! Subword tokenization: greedy longest-match WordPiece over a fixed
//! vocabulary, plus the `[CLS]`/`[SEP]` single- and pair-sequence framing the
//! encoder consumes.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Continuation prefix for non-initial word pieces.
pub const CONTINUATION_PREFIX: &str = "##";

const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Token table loaded from a `vocab.txt` (one token per line, line number =
/// id). The four special tokens must be present.
#[derive(Debug, Clone)]
pub struct Vocab {
    by_token: HashMap<String, u32>,
    tokens: Vec<String>,
    pad_id: u32,
    unk_id: u32,
    cls_id: u32,
    sep_id: u32,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut by_token = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if by_token.insert(token.clone(), id as u32).is_some() {
                return Err(Error::Tokenize(format!("duplicate vocab token {token:?}")));
            }
        }
        let lookup = |name: &str| {
            by_token
                .get(name)
                .copied()
                .ok_or_else(|| Error::Tokenize(format!("vocab is missing required token {name}")))
        };
        let [pad, unk, cls, sep] = SPECIAL_TOKENS;
        let [pad_id, unk_id, cls_id, sep_id] = [lookup(pad)?, lookup(unk)?, lookup(cls)?, lookup(sep)?];
        Ok(Self {
            by_token,
            tokens,
            pad_id,
            unk_id,
            cls_id,
            sep_id,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end().to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.by_token.get(token).copied()
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn cls_id(&self) -> u32 {
        self.cls_id
    }

    pub fn sep_id(&self) -> u32 {
        self.sep_id
    }

    /// Greedy longest-match-first segmentation of one whitespace-free word.
    /// If the word cannot be segmented it maps to a single `[UNK]`.
    pub fn wordpiece(&self, word: &str) -> Vec<u32> {
        debug_assert!(!word.is_empty() && !word.contains(char::is_whitespace));
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut matched = None;
            while start < end {
                let mut piece: String = if start > 0 {
                    CONTINUATION_PREFIX.to_string()
                } else {
                    String::new()
                };
                piece.extend(&chars[start..end]);
                if let Some(id) = self.id(&piece) {
                    matched = Some(id);
                    break;
                }
                end -= 1;
            }
            match matched {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                // Unsegmentable word: the whole word becomes [UNK].
                None => return vec![self.unk_id],
            }
        }
        pieces
    }

    /// Splits on whitespace and wordpieces each token.
    fn subwords(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .flat_map(|w| self.wordpiece(w))
            .collect()
    }
}

/// Model input for one sequence: token ids, segment ids, and the attention
/// mask, padded to a fixed length. `n_t` counts the real (non-pad) tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub n_t: usize,
}

impl TokenizedSequence {
    fn assemble(mut ids: Vec<u32>, mut segment_ids: Vec<u8>, max_len: usize, pad_id: u32) -> Self {
        let n_t = ids.len();
        debug_assert!(n_t <= max_len);
        debug_assert_eq!(segment_ids.len(), n_t);
        let mut attention_mask = vec![1u8; n_t];
        ids.resize(max_len, pad_id);
        segment_ids.resize(max_len, 0);
        attention_mask.resize(max_len, 0);
        Self {
            ids,
            segment_ids,
            attention_mask,
            n_t,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Lays out `[CLS] text [SEP]` padded to `max_len`, truncating the text to
/// `max_len - 2` subwords. All segment ids are 0.
pub fn encode_single(text: &str, vocab: &Vocab, max_len: usize) -> Result<TokenizedSequence> {
    if max_len < 3 {
        return Err(Error::Tokenize(format!(
            "max_len {max_len} cannot hold [CLS] token [SEP]"
        )));
    }
    let mut subwords = vocab.subwords(text);
    if subwords.is_empty() {
        return Err(Error::Tokenize("empty text after tokenization".into()));
    }
    subwords.truncate(max_len - 2);

    let mut ids = Vec::with_capacity(subwords.len() + 2);
    ids.push(vocab.cls_id());
    ids.extend(&subwords);
    ids.push(vocab.sep_id());
    let segments = vec![0u8; ids.len()];
    Ok(TokenizedSequence::assemble(ids, segments, max_len, vocab.pad_id()))
}

/// Lays out `[CLS] a [SEP] b [SEP]` padded to `max_len`. Segment id 0 covers
/// `[CLS] a [SEP]`, segment id 1 covers `b [SEP]`, pads are 0. When the pair
/// exceeds the budget, one subword is dropped at a time from whichever side is
/// currently longer (ties drop from `b`).
pub fn encode_pair(
    text_a: &str,
    text_b: &str,
    vocab: &Vocab,
    max_len: usize,
) -> Result<TokenizedSequence> {
    if max_len < 5 {
        return Err(Error::Tokenize(format!(
            "max_len {max_len} cannot hold [CLS] a [SEP] b [SEP]"
        )));
    }
    let mut a = vocab.subwords(text_a);
    let mut b = vocab.subwords(text_b);
    if a.is_empty() || b.is_empty() {
        return Err(Error::Tokenize("empty pair side after tokenization".into()));
    }
    let budget = max_len - 3;
    while a.len() + b.len() > budget {
        if a.len() > b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }

    let mut ids = Vec::with_capacity(a.len() + b.len() + 3);
    let mut segments = Vec::with_capacity(ids.capacity());
    ids.push(vocab.cls_id());
    ids.extend(&a);
    ids.push(vocab.sep_id());
    segments.resize(ids.len(), 0u8);
    ids.extend(&b);
    ids.push(vocab.sep_id());
    segments.resize(ids.len(), 1u8);
    Ok(TokenizedSequence::assemble(ids, segments, max_len, vocab.pad_id()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_vocab() -> Vocab {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for t in [
            "map", "##ping", "##s", "api", "maps", "weather", "forecast", "a", "b", "c", "!",
        ] {
            tokens.push(t.to_string());
        }
        Vocab::from_tokens(tokens).unwrap()
    }

    #[test]
    fn wordpiece_exact_match() {
        let v = fixture_vocab();
        assert_eq!(v.wordpiece("api"), vec![v.id("api").unwrap()]);
    }

    #[test]
    fn wordpiece_unknown_word() {
        let v = fixture_vocab();
        assert_eq!(v.wordpiece("zzz"), vec![v.unk_id()]);
        // A matchable head with an unmatchable tail also collapses to [UNK].
        assert_eq!(v.wordpiece("mapzz"), vec![v.unk_id()]);
    }

    #[test]
    fn wordpiece_greedy_longest_match() {
        let v = fixture_vocab();
        assert_eq!(
            v.wordpiece("mapping"),
            vec![v.id("map").unwrap(), v.id("##ping").unwrap()]
        );
        assert_eq!(
            v.wordpiece("mappings"),
            vec![v.id("map").unwrap(), v.id("##ping").unwrap(), v.id("##s").unwrap()]
        );
        // "maps" matches whole before "map" + "##s" would.
        assert_eq!(v.wordpiece("maps"), vec![v.id("maps").unwrap()]);
    }

    #[test]
    fn encode_single_layout() {
        let v = fixture_vocab();
        let seq = encode_single("weather forecast api", &v, 16).unwrap();
        assert_eq!(seq.len(), 16);
        assert_eq!(seq.ids[0], v.cls_id());
        assert_eq!(seq.ids[4], v.sep_id());
        assert_eq!(seq.n_t, 5);
        assert_eq!(&seq.attention_mask[..5], &[1, 1, 1, 1, 1]);
        assert!(seq.attention_mask[5..].iter().all(|&m| m == 0));
        assert!(seq.segment_ids.iter().all(|&s| s == 0));
        assert!(seq.ids[5..].iter().all(|&id| id == v.pad_id()));
    }

    #[test]
    fn encode_single_boundary_fills_exactly() {
        let v = fixture_vocab();
        let seq = encode_single("a b c", &v, 5).unwrap();
        assert_eq!(seq.n_t, 5);
        assert!(seq.attention_mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn encode_single_truncates_head() {
        let v = fixture_vocab();
        let text = vec!["a"; 300].join(" ");
        let seq = encode_single(&text, &v, 256).unwrap();
        assert_eq!(seq.n_t, 256);
        let content = seq.ids[1..255]
            .iter()
            .filter(|&&id| id == v.id("a").unwrap())
            .count();
        assert_eq!(content, 254);
    }

    #[test]
    fn encode_single_rejects_empty() {
        let v = fixture_vocab();
        assert!(encode_single("", &v, 16).is_err());
        assert!(encode_single("   ", &v, 16).is_err());
    }

    #[test]
    fn encode_pair_layout() {
        let v = fixture_vocab();
        // a: 3 subwords, b: 4 subwords, max_len 16 -> n_t = 10.
        let seq = encode_pair("a b c", "a b c a", &v, 16).unwrap();
        assert_eq!(seq.n_t, 10);
        assert_eq!(seq.ids[0], v.cls_id());
        assert_eq!(seq.ids[4], v.sep_id());
        assert_eq!(seq.ids[9], v.sep_id());
        assert_eq!(&seq.segment_ids[..10], &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert!(seq.segment_ids[10..].iter().all(|&s| s == 0));
        assert!(seq.attention_mask[10..].iter().all(|&m| m == 0));
    }

    #[test]
    fn encode_pair_exact_fit() {
        let v = fixture_vocab();
        let seq = encode_pair("a", "b", &v, 5).unwrap();
        assert_eq!(seq.n_t, 5);
        assert!(seq.attention_mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn encode_pair_longest_first_truncation() {
        let v = fixture_vocab();
        let a = vec!["a"; 200].join(" ");
        let b = vec!["b"; 200].join(" ");
        let seq = encode_pair(&a, &b, &v, 256).unwrap();
        assert_eq!(seq.n_t, 256);
        let count = |id: u32| seq.ids.iter().filter(|&&x| x == id).count();
        // Ties drop from b first, so a keeps one more subword.
        assert_eq!(count(v.id("a").unwrap()), 127);
        assert_eq!(count(v.id("b").unwrap()), 126);
    }

    #[test]
    fn encode_pair_rejects_empty_side() {
        let v = fixture_vocab();
        assert!(encode_pair("a", "", &v, 16).is_err());
        assert!(encode_pair("", "a", &v, 16).is_err());
    }

    #[test]
    fn vocab_requires_special_tokens() {
        assert!(Vocab::from_tokens(vec!["a".into(), "b".into()]).is_err());
        let dup = vec!["[PAD]".into(), "[UNK]".into(), "[CLS]".into(), "[SEP]".into(), "a".into(), "a".into()];
        assert!(Vocab::from_tokens(dup).is_err());
    }

    #[test]
    fn pair_order_changes_segments_not_length() {
        let v = fixture_vocab();
        let ab = encode_pair("a b", "c", &v, 16).unwrap();
        let ba = encode_pair("c", "a b", &v, 16).unwrap();
        assert_eq!(ab.n_t, ba.n_t);
        assert_ne!(ab.segment_ids, ba.segment_ids);
    }
}
