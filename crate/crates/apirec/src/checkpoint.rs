//! Checkpoint archives: named 2-D tensors in a text header followed by raw
//! 32-bit little-endian row-major data, with a JSON metadata sidecar.
//!
//! Archive layout:
//!
//! ```text
//! tensor-archive v1 <count>
//! <name> <rows> <cols> <byte offset into data section>
//! ...
//! data
//! <raw f32 bytes>
//! ```
//!
//! Encoder tensors use the `encoder.` prefix, filter-head tensors `filter.`,
//! matcher-head tensors `matcher.`. The sidecar (`<file>.meta.json`) records
//! the encoder configuration, label-space sizes, and the training seed.
//! Writes go to a temp file in the target directory and are renamed into
//! place.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams, LayerParams};
use crate::error::{Error, Result};
use crate::filter::{FusionHead, ScoreSpace};
use crate::matcher::{MatchHead, MatchMode};

const MAGIC: &str = "tensor-archive v1";

/// Sidecar metadata stored next to the tensor archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub encoder: EncoderConfig,
    /// Repository size L the artifact was trained against.
    pub api_count: usize,
    pub category_count: usize,
    pub seed: u64,
    /// Label space of the filter head, when one is present.
    pub filter_space: Option<ScoreSpace>,
    #[serde(default = "default_true")]
    pub filter_pooler_enabled: bool,
    #[serde(default = "default_true")]
    pub filter_mean_enabled: bool,
    pub matcher_mode: Option<MatchMode>,
}

fn default_true() -> bool {
    true
}

/// A parameter bundle: the encoder plus optional filter and matcher heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderParams<f32>,
    pub filter: Option<FusionHead<f32>>,
    pub matcher: Option<MatchHead<f32>>,
    pub meta: CheckpointMeta,
}

/// Serializes tensors into the archive format at `path` (atomically).
pub fn write_archive(path: &Path, tensors: &[(String, &Array2<f32>)]) -> Result<()> {
    let mut names = std::collections::HashSet::new();
    for (name, _) in tensors {
        if name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("tensor name {name:?} contains whitespace")));
        }
        if !names.insert(name.as_str()) {
            return Err(Error::Checkpoint(format!("duplicate tensor name {name:?}")));
        }
    }

    let mut header = format!("{MAGIC} {}\n", tensors.len());
    let mut offset = 0usize;
    for (name, tensor) in tensors {
        let (rows, cols) = tensor.dim();
        header.push_str(&format!("{name} {rows} {cols} {offset}\n"));
        offset += rows * cols * 4;
    }
    header.push_str("data\n");

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    for (_, tensor) in tensors {
        let standard = tensor.as_standard_layout();
        let mut bytes = Vec::with_capacity(standard.len() * 4);
        for &v in standard.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        tmp.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads every tensor of an archive, in header order.
pub fn read_archive(path: &Path) -> Result<Vec<(String, Array2<f32>)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;

    // The header is ASCII lines; scan for the terminating "data\n".
    let mut line_start = 0usize;
    let mut entries: Vec<(String, usize, usize, usize)> = Vec::new();
    let mut expected: Option<usize> = None;
    let mut data_start = None;
    let mut line_no = 0usize;
    while line_start < bytes.len() {
        let rel_end = bytes[line_start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, line_no + 1, "unterminated header line"))?;
        let line = std::str::from_utf8(&bytes[line_start..line_start + rel_end])
            .map_err(|_| Error::parse(path, line_no + 1, "non-utf8 header"))?;
        line_no += 1;
        line_start += rel_end + 1;
        if line_no == 1 {
            let rest = line.strip_prefix(MAGIC).ok_or_else(|| {
                Error::parse(path, 1, format!("bad magic, expected {MAGIC:?}"))
            })?;
            expected = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| Error::parse(path, 1, "bad tensor count"))?,
            );
            continue;
        }
        if line == "data" {
            data_start = Some(line_start);
            break;
        }
        let mut parts = line.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "missing tensor name"))?;
        let nums: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::parse(path, line_no, "bad integer")))
            .collect::<Result<_>>()?;
        if nums.len() != 3 {
            return Err(Error::parse(path, line_no, "expected: name rows cols offset"));
        }
        entries.push((name.to_string(), nums[0], nums[1], nums[2]));
    }
    let data_start =
        data_start.ok_or_else(|| Error::parse(path, line_no, "missing data marker"))?;
    let expected = expected.unwrap_or(0);
    if entries.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{} declares {expected} tensors but lists {}",
            path.display(),
            entries.len()
        )));
    }

    let data = &bytes[data_start..];
    let mut tensors = Vec::with_capacity(entries.len());
    for (name, rows, cols, offset) in entries {
        let len = rows * cols * 4;
        let end = offset
            .checked_add(len)
            .filter(|&e| e <= data.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("tensor {name} overruns the data section"))
            })?;
        let mut values = Vec::with_capacity(rows * cols);
        for chunk in data[offset..end].chunks_exact(4) {
            values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        let array = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        tensors.push((name, array));
    }
    Ok(tensors)
}

fn zeros_like_config(config: &EncoderConfig) -> EncoderParams<f32> {
    let f = config.hidden;
    let layer = || LayerParams {
        attn_query_weight: Array2::zeros((f, f)),
        attn_query_bias: Array2::zeros((1, f)),
        attn_key_weight: Array2::zeros((f, f)),
        attn_key_bias: Array2::zeros((1, f)),
        attn_value_weight: Array2::zeros((f, f)),
        attn_value_bias: Array2::zeros((1, f)),
        attn_output_weight: Array2::zeros((f, f)),
        attn_output_bias: Array2::zeros((1, f)),
        attn_norm_gain: Array2::zeros((1, f)),
        attn_norm_bias: Array2::zeros((1, f)),
        ff_inner_weight: Array2::zeros((f, config.feedforward)),
        ff_inner_bias: Array2::zeros((1, config.feedforward)),
        ff_outer_weight: Array2::zeros((config.feedforward, f)),
        ff_outer_bias: Array2::zeros((1, f)),
        ff_norm_gain: Array2::zeros((1, f)),
        ff_norm_bias: Array2::zeros((1, f)),
    };
    EncoderParams {
        token_embedding: Array2::zeros((config.vocab_size, f)),
        position_embedding: Array2::zeros((config.max_positions, f)),
        segment_embedding: Array2::zeros((2, f)),
        embed_norm_gain: Array2::zeros((1, f)),
        embed_norm_bias: Array2::zeros((1, f)),
        layers: (0..config.layers).map(|_| layer()).collect(),
        pooler_weight: Array2::zeros((f, f)),
        pooler_bias: Array2::zeros((1, f)),
        config: config.clone(),
    }
}

fn fill_named(
    target: Vec<(String, &mut Array2<f32>)>,
    map: &mut HashMap<String, Array2<f32>>,
    prefix: &str,
) -> Result<()> {
    for (name, slot) in target {
        let full = format!("{prefix}{name}");
        let tensor = map
            .remove(&full)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {full}")))?;
        if tensor.dim() != slot.dim() {
            return Err(Error::Checkpoint(format!(
                "tensor {full} has shape {:?}, expected {:?}",
                tensor.dim(),
                slot.dim()
            )));
        }
        *slot = tensor;
    }
    Ok(())
}

impl Checkpoint {
    /// All tensors with their archive names, encoder first.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f32>)> {
        let mut out: Vec<(String, &Array2<f32>)> = self
            .encoder
            .named()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t))
            .collect();
        if let Some(filter) = &self.filter {
            out.extend(filter.named().into_iter().map(|(n, t)| (format!("filter.{n}"), t)));
        }
        if let Some(matcher) = &self.matcher {
            out.extend(matcher.named().into_iter().map(|(n, t)| (format!("matcher.{n}"), t)));
        }
        out
    }

    /// Consistency checks: unique names, head shapes, meta agreement.
    pub fn validate(&self) -> Result<()> {
        self.encoder.config.validate()?;
        let mut names = std::collections::HashSet::new();
        for (name, _) in self.named_tensors() {
            if !names.insert(name.clone()) {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
        }
        if let Some(filter) = &self.filter {
            filter.validate()?;
            if filter.hidden() != self.encoder.config.hidden {
                return Err(Error::Checkpoint("filter head width mismatch".into()));
            }
            let expected = match self.meta.filter_space {
                Some(ScoreSpace::Repository) => self.meta.api_count,
                Some(ScoreSpace::Categories) => self.meta.category_count,
                _ => {
                    return Err(Error::Checkpoint(
                        "filter head present but metadata declares no label space".into(),
                    ))
                }
            };
            if filter.labels() != expected {
                return Err(Error::Checkpoint(format!(
                    "filter head scores {} labels but metadata declares {expected}",
                    filter.labels()
                )));
            }
        }
        if let Some(matcher) = &self.matcher {
            matcher.validate()?;
            if matcher.hidden() != self.encoder.config.hidden {
                return Err(Error::Checkpoint("matcher head width mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        path.with_file_name(name)
    }

    /// Writes the archive and its sidecar atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_archive(path, &self.named_tensors())?;
        let meta_path = Self::meta_path(path);
        let json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Checkpoint(format!("metadata serialization: {e}")))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(json.as_bytes())
            .map_err(|e| Error::io(&meta_path, e))?;
        tmp.persist(&meta_path).map_err(|e| Error::io(&meta_path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = Self::meta_path(path);
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::parse(&meta_path, 1, e.to_string()))?;
        meta.encoder.validate()?;

        let mut map: HashMap<String, Array2<f32>> = HashMap::new();
        for (name, tensor) in read_archive(path)? {
            if map.insert(name.clone(), tensor).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
        }

        let mut encoder = zeros_like_config(&meta.encoder);
        fill_named(encoder.named_mut(), &mut map, "encoder.")?;

        let filter = match meta.filter_space {
            Some(space) => {
                let labels = match space {
                    ScoreSpace::Repository => meta.api_count,
                    ScoreSpace::Categories => meta.category_count,
                    ScoreSpace::Candidates => {
                        return Err(Error::Checkpoint(
                            "filter head cannot live in candidate space".into(),
                        ))
                    }
                };
                let mut head = FusionHead {
                    pooler_weight: Array2::zeros((meta.encoder.hidden, labels)),
                    pooler_bias: Array2::zeros((1, labels)),
                    mean_weight: Array2::zeros((meta.encoder.hidden, labels)),
                    mean_bias: Array2::zeros((1, labels)),
                    fusion_weight: Array2::zeros((2 * labels, labels)),
                    fusion_bias: Array2::zeros((1, labels)),
                    pooler_enabled: meta.filter_pooler_enabled,
                    mean_enabled: meta.filter_mean_enabled,
                };
                fill_named(head.named_mut(), &mut map, "filter.")?;
                Some(head)
            }
            None => None,
        };

        let matcher = match meta.matcher_mode {
            Some(mode) => {
                let f = meta.encoder.hidden;
                let mut head = MatchHead {
                    task_weight: Array2::zeros((f, 1)),
                    task_bias: Array2::zeros((1, 1)),
                    concat_weight: Array2::zeros((2 * f, 1)),
                    concat_bias: Array2::zeros((1, 1)),
                    mode,
                };
                fill_named(head.named_mut(), &mut map, "matcher.")?;
                Some(head)
            }
            None => None,
        };

        if !map.is_empty() {
            let mut extra: Vec<String> = map.into_keys().collect();
            extra.sort();
            return Err(Error::Checkpoint(format!(
                "archive holds unexpected tensors: {}",
                extra.join(", ")
            )));
        }

        let checkpoint = Self {
            encoder,
            filter,
            matcher,
            meta,
        };
        checkpoint.validate()?;
        Ok(checkpoint)
    }
}

/// Reshapes a published bias tensor (either `[1,n]` or `[n,1]`) into `[1,n]`.
fn as_row(name: &str, tensor: Array2<f32>) -> Result<Array2<f32>> {
    if tensor.nrows() == 1 {
        Ok(tensor)
    } else if tensor.ncols() == 1 {
        Ok(tensor.reversed_axes().as_standard_layout().to_owned())
    } else {
        Err(Error::Checkpoint(format!("{name} is not a vector")))
    }
}

/// Imports an archive whose tensors carry published encoder names
/// (`bert.embeddings.word_embeddings.weight`, ...).
///
/// Published linear weights are `[out, in]` and get transposed into this
/// crate's `[in, out]` layout; `LayerNorm.gamma`/`beta` and
/// `LayerNorm.weight`/`bias` are both accepted. The position table is
/// truncated to `max_positions` rows. Head count cannot be inferred from
/// shapes, so it is an argument.
pub fn import_pretrained(
    path: &Path,
    heads: usize,
    max_positions: usize,
) -> Result<EncoderParams<f32>> {
    fn take(map: &mut HashMap<String, Array2<f32>>, name: &str) -> Result<Array2<f32>> {
        map.remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("pretrained archive is missing {name}")))
    }

    fn take_norm(
        map: &mut HashMap<String, Array2<f32>>,
        base: &str,
        suffixes: [&str; 2],
    ) -> Result<Array2<f32>> {
        let primary = format!("{base}.{}", suffixes[0]);
        let fallback = format!("{base}.{}", suffixes[1]);
        let tensor = map
            .remove(&primary)
            .or_else(|| map.remove(&fallback))
            .ok_or_else(|| Error::Checkpoint(format!("pretrained archive is missing {primary}")))?;
        as_row(base, tensor)
    }

    let mut map: HashMap<String, Array2<f32>> = HashMap::new();
    for (name, tensor) in read_archive(path)? {
        map.insert(name, tensor);
    }

    let token_embedding = take(&mut map, "bert.embeddings.word_embeddings.weight")?;
    let position_table = take(&mut map, "bert.embeddings.position_embeddings.weight")?;
    let segment_embedding = take(&mut map, "bert.embeddings.token_type_embeddings.weight")?;
    let embed_norm_gain = take_norm(&mut map, "bert.embeddings.LayerNorm", ["gamma", "weight"])?;
    let embed_norm_bias = take_norm(&mut map, "bert.embeddings.LayerNorm", ["beta", "bias"])?;

    let hidden = token_embedding.ncols();
    if max_positions > position_table.nrows() {
        return Err(Error::Checkpoint(format!(
            "requested {max_positions} positions but the table holds {}",
            position_table.nrows()
        )));
    }
    let position_embedding = position_table
        .slice(ndarray::s![..max_positions, ..])
        .to_owned();

    let transpose =
        |t: Array2<f32>| -> Array2<f32> { t.reversed_axes().as_standard_layout().to_owned() };

    let mut layers = Vec::new();
    let mut feedforward = 0usize;
    for index in 0.. {
        let base = format!("bert.encoder.layer.{index}");
        if !map.contains_key(&format!("{base}.attention.self.query.weight")) {
            break;
        }
        let ff_inner_weight = transpose(take(&mut map, &format!("{base}.intermediate.dense.weight"))?);
        feedforward = ff_inner_weight.ncols();
        let layer = LayerParams {
            attn_query_weight: transpose(take(&mut map, &format!("{base}.attention.self.query.weight"))?),
            attn_query_bias: as_row(
                "query.bias",
                take(&mut map, &format!("{base}.attention.self.query.bias"))?,
            )?,
            attn_key_weight: transpose(take(&mut map, &format!("{base}.attention.self.key.weight"))?),
            attn_key_bias: as_row(
                "key.bias",
                take(&mut map, &format!("{base}.attention.self.key.bias"))?,
            )?,
            attn_value_weight: transpose(take(&mut map, &format!("{base}.attention.self.value.weight"))?),
            attn_value_bias: as_row(
                "value.bias",
                take(&mut map, &format!("{base}.attention.self.value.bias"))?,
            )?,
            attn_output_weight: transpose(take(&mut map, &format!("{base}.attention.output.dense.weight"))?),
            attn_output_bias: as_row(
                "attention.output.bias",
                take(&mut map, &format!("{base}.attention.output.dense.bias"))?,
            )?,
            attn_norm_gain: take_norm(&mut map, &format!("{base}.attention.output.LayerNorm"), ["gamma", "weight"])?,
            attn_norm_bias: take_norm(&mut map, &format!("{base}.attention.output.LayerNorm"), ["beta", "bias"])?,
            ff_inner_weight,
            ff_inner_bias: as_row(
                "intermediate.bias",
                take(&mut map, &format!("{base}.intermediate.dense.bias"))?,
            )?,
            ff_outer_weight: transpose(take(&mut map, &format!("{base}.output.dense.weight"))?),
            ff_outer_bias: as_row(
                "output.bias",
                take(&mut map, &format!("{base}.output.dense.bias"))?,
            )?,
            ff_norm_gain: take_norm(&mut map, &format!("{base}.output.LayerNorm"), ["gamma", "weight"])?,
            ff_norm_bias: take_norm(&mut map, &format!("{base}.output.LayerNorm"), ["beta", "bias"])?,
        };
        layers.push(layer);
    }
    if layers.is_empty() {
        return Err(Error::Checkpoint("pretrained archive holds no encoder layers".into()));
    }

    let pooler_weight = transpose(
        map.remove("bert.pooler.dense.weight")
            .ok_or_else(|| Error::Checkpoint("missing bert.pooler.dense.weight".into()))?,
    );
    let pooler_bias = as_row(
        "pooler.bias",
        map.remove("bert.pooler.dense.bias")
            .ok_or_else(|| Error::Checkpoint("missing bert.pooler.dense.bias".into()))?,
    )?;

    let config = EncoderConfig {
        layers: layers.len(),
        hidden,
        heads,
        feedforward,
        max_positions,
        vocab_size: token_embedding.nrows(),
        dropout: 0.1,
    };
    config.validate()?;
    Ok(EncoderParams {
        config,
        token_embedding,
        position_embedding,
        segment_embedding,
        embed_norm_gain,
        embed_norm_bias,
        layers,
        pooler_weight,
        pooler_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint(seed: u64) -> Checkpoint {
        let config = EncoderConfig::tiny(24, 8, 2, 2, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(config.clone(), &mut rng).unwrap();
        let filter = FusionHead::init(8, 5, &mut rng);
        let matcher = MatchHead::init(8, &mut rng);
        Checkpoint {
            encoder,
            filter: Some(filter),
            matcher: Some(matcher),
            meta: CheckpointMeta {
                encoder: config,
                api_count: 5,
                category_count: 3,
                seed,
                filter_space: Some(ScoreSpace::Repository),
                filter_pooler_enabled: true,
                filter_mean_enabled: true,
                matcher_mode: Some(MatchMode::CrossEncode),
            },
        }
    }

    #[test]
    fn archive_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint(1);
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt, loaded);
    }

    #[test]
    fn equation_symbols_present_exactly_once() {
        let ckpt = sample_checkpoint(2);
        let names: Vec<String> = ckpt.named_tensors().into_iter().map(|(n, _)| n).collect();
        for required in [
            "filter.pooler_weight",
            "filter.pooler_bias",
            "filter.mean_weight",
            "filter.mean_bias",
            "filter.fusion_weight",
            "filter.fusion_bias",
            "matcher.task_weight",
            "matcher.task_bias",
        ] {
            assert_eq!(
                names.iter().filter(|n| n.as_str() == required).count(),
                1,
                "{required} must appear exactly once"
            );
        }
        let unique: std::collections::HashSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn save_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        let ckpt = sample_checkpoint(3);
        ckpt.save(&a).unwrap();
        ckpt.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(
            std::fs::read(Checkpoint::meta_path(&a)).unwrap(),
            std::fs::read(Checkpoint::meta_path(&b)).unwrap()
        );
    }

    #[test]
    fn truncated_archive_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint(4);
        ckpt.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn missing_tensor_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint(5);
        // Write the archive without the matcher tensors but keep metadata
        // claiming a matcher is present.
        let tensors: Vec<(String, &Array2<f32>)> = ckpt
            .named_tensors()
            .into_iter()
            .filter(|(n, _)| !n.starts_with("matcher."))
            .collect();
        write_archive(&path, &tensors).unwrap();
        let json = serde_json::to_string(&ckpt.meta).unwrap();
        std::fs::write(Checkpoint::meta_path(&path), json).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("matcher."), "{err}");
    }

    #[test]
    fn import_maps_published_names_and_transposes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("published.ckpt");
        let f = 8usize;
        let ff = 16usize;
        let vocab = 30usize;

        let mut tensors: Vec<(String, Array2<f32>)> = Vec::new();
        let mut marker = 0.0f32;
        let mut fresh = |rows: usize, cols: usize| {
            marker += 1.0;
            let m = marker;
            Array2::from_shape_fn((rows, cols), move |(r, c)| m + 0.001 * (r * cols + c) as f32)
        };
        tensors.push(("bert.embeddings.word_embeddings.weight".into(), fresh(vocab, f)));
        tensors.push(("bert.embeddings.position_embeddings.weight".into(), fresh(32, f)));
        tensors.push(("bert.embeddings.token_type_embeddings.weight".into(), fresh(2, f)));
        tensors.push(("bert.embeddings.LayerNorm.gamma".into(), fresh(1, f)));
        tensors.push(("bert.embeddings.LayerNorm.beta".into(), fresh(1, f)));
        for i in 0..2 {
            let base = format!("bert.encoder.layer.{i}");
            tensors.push((format!("{base}.attention.self.query.weight"), fresh(f, f)));
            tensors.push((format!("{base}.attention.self.query.bias"), fresh(f, 1)));
            tensors.push((format!("{base}.attention.self.key.weight"), fresh(f, f)));
            tensors.push((format!("{base}.attention.self.key.bias"), fresh(1, f)));
            tensors.push((format!("{base}.attention.self.value.weight"), fresh(f, f)));
            tensors.push((format!("{base}.attention.self.value.bias"), fresh(1, f)));
            tensors.push((format!("{base}.attention.output.dense.weight"), fresh(f, f)));
            tensors.push((format!("{base}.attention.output.dense.bias"), fresh(1, f)));
            tensors.push((format!("{base}.attention.output.LayerNorm.gamma"), fresh(1, f)));
            tensors.push((format!("{base}.attention.output.LayerNorm.beta"), fresh(1, f)));
            tensors.push((format!("{base}.intermediate.dense.weight"), fresh(ff, f)));
            tensors.push((format!("{base}.intermediate.dense.bias"), fresh(1, ff)));
            tensors.push((format!("{base}.output.dense.weight"), fresh(f, ff)));
            tensors.push((format!("{base}.output.dense.bias"), fresh(1, f)));
            tensors.push((format!("{base}.output.LayerNorm.weight"), fresh(1, f)));
            tensors.push((format!("{base}.output.LayerNorm.bias"), fresh(1, f)));
        }
        tensors.push(("bert.pooler.dense.weight".into(), fresh(f, f)));
        tensors.push(("bert.pooler.dense.bias".into(), fresh(1, f)));

        let refs: Vec<(String, &Array2<f32>)> =
            tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        write_archive(&path, &refs).unwrap();

        let imported = import_pretrained(&path, 2, 16).unwrap();
        assert_eq!(imported.config.layers, 2);
        assert_eq!(imported.config.hidden, f);
        assert_eq!(imported.config.feedforward, ff);
        assert_eq!(imported.config.vocab_size, vocab);
        assert_eq!(imported.position_embedding.nrows(), 16);

        // Published [out, in] weights land transposed.
        let published_q = &tensors
            .iter()
            .find(|(n, _)| n == "bert.encoder.layer.0.attention.self.query.weight")
            .unwrap()
            .1;
        assert_eq!(imported.layers[0].attn_query_weight[[2, 3]], published_q[[3, 2]]);
        // Column-vector bias reshaped into a row.
        assert_eq!(imported.layers[0].attn_query_bias.dim(), (1, f));

        // The imported encoder runs.
        let vocab_obj = crate::tokenizer::Vocab::from_tokens(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "x"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap();
        let seq = crate::tokenizer::encode_single("x", &vocab_obj, 8).unwrap();
        assert!(imported.forward(&seq).is_ok());
    }
}
