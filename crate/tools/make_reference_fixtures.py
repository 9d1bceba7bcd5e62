#!/usr/bin/env python3
"""Reference fixture generator.

Produces the golden files under crates/apirec/fixtures/golden/: three small
checkpoint archives (filter, category, matcher) plus golden.json holding
expected encoder, filter-head, and matcher-head outputs for fixed inputs.

The forward arithmetic here is an independent numpy implementation of the
same math the Rust crate performs, kept deliberately separate so the Rust
tests compare against an external computation rather than against
themselves. Everything runs in float32.

Run from the repository root:  python3 tools/make_reference_fixtures.py
"""

import json
import os

import numpy as np

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "apirec", "fixtures", "golden")

F32 = np.float32

VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]",
         "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
PAD, UNK, CLS, SEP = 0, 1, 2, 3

CONFIG = {
    "layers": 2,
    "hidden": 8,
    "heads": 2,
    "feedforward": 16,
    "max_positions": 16,
    "vocab_size": len(VOCAB),
    "dropout": 0.0,
}

API_COUNT = 5
CATEGORY_COUNT = 7
SEED = 7


# ----------------------------------------------------------------------------
# parameter generation
# ----------------------------------------------------------------------------

def make_params(rng):
    f = CONFIG["hidden"]
    ff = CONFIG["feedforward"]

    def w(rows, cols, scale=0.08):
        return rng.normal(0.0, scale, size=(rows, cols)).astype(F32)

    def gain(cols):
        return (1.0 + 0.1 * rng.normal(size=(1, cols))).astype(F32)

    def bias(cols):
        return (0.02 * rng.normal(size=(1, cols))).astype(F32)

    params = {
        "encoder.token_embedding": w(CONFIG["vocab_size"], f),
        "encoder.position_embedding": w(CONFIG["max_positions"], f),
        "encoder.segment_embedding": w(2, f),
        "encoder.embed_norm_gain": gain(f),
        "encoder.embed_norm_bias": bias(f),
        "encoder.pooler_weight": w(f, f),
        "encoder.pooler_bias": bias(f),
    }
    for i in range(CONFIG["layers"]):
        p = f"encoder.layer{i}."
        params[p + "attn_query_weight"] = w(f, f)
        params[p + "attn_query_bias"] = bias(f)
        params[p + "attn_key_weight"] = w(f, f)
        params[p + "attn_key_bias"] = bias(f)
        params[p + "attn_value_weight"] = w(f, f)
        params[p + "attn_value_bias"] = bias(f)
        params[p + "attn_output_weight"] = w(f, f)
        params[p + "attn_output_bias"] = bias(f)
        params[p + "attn_norm_gain"] = gain(f)
        params[p + "attn_norm_bias"] = bias(f)
        params[p + "ff_inner_weight"] = w(f, ff)
        params[p + "ff_inner_bias"] = bias(ff)
        params[p + "ff_outer_weight"] = w(ff, f)
        params[p + "ff_outer_bias"] = bias(f)
        params[p + "ff_norm_gain"] = gain(f)
        params[p + "ff_norm_bias"] = bias(f)
    return params


def make_filter_head(rng, labels):
    f = CONFIG["hidden"]

    def w(rows, cols):
        return rng.normal(0.0, 0.08, size=(rows, cols)).astype(F32)

    def bias(cols):
        return (0.02 * rng.normal(size=(1, cols))).astype(F32)

    return {
        "filter.pooler_weight": w(f, labels),
        "filter.pooler_bias": bias(labels),
        "filter.mean_weight": w(f, labels),
        "filter.mean_bias": bias(labels),
        "filter.fusion_weight": w(2 * labels, labels),
        "filter.fusion_bias": bias(labels),
    }


def make_match_head(rng):
    f = CONFIG["hidden"]
    return {
        "matcher.task_weight": rng.normal(0.0, 0.3, size=(f, 1)).astype(F32),
        "matcher.task_bias": (0.02 * rng.normal(size=(1, 1))).astype(F32),
        "matcher.concat_weight": rng.normal(0.0, 0.3, size=(2 * f, 1)).astype(F32),
        "matcher.concat_bias": (0.02 * rng.normal(size=(1, 1))).astype(F32),
    }


# ----------------------------------------------------------------------------
# forward arithmetic (float32)
# ----------------------------------------------------------------------------

def layer_norm(x, g, b):
    mean = x.mean(axis=1, keepdims=True, dtype=F32)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True, dtype=F32)
    return ((x - mean) / np.sqrt(var + F32(1e-12))) * g + b


def gelu(x):
    c = F32(0.7978845608028654)
    a = F32(0.044715)
    return F32(0.5) * x * (F32(1.0) + np.tanh(c * (x + a * x * x * x)))


def softmax_rows(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True, dtype=F32)


def sigmoid(x):
    return F32(1.0) / (F32(1.0) + np.exp(-x))


def embed(params, ids, segments):
    tok = params["encoder.token_embedding"][ids]
    pos = params["encoder.position_embedding"][: len(ids)]
    seg = params["encoder.segment_embedding"][segments]
    return layer_norm(tok + pos + seg,
                      params["encoder.embed_norm_gain"],
                      params["encoder.embed_norm_bias"])


def block(params, i, x, mask):
    p = f"encoder.layer{i}."
    heads = CONFIG["heads"]
    dim = CONFIG["hidden"] // heads
    scale = F32(1.0 / np.sqrt(dim))
    bias_mat = np.where(np.asarray(mask)[None, :] == 1, F32(0.0), F32(-np.inf))

    q = x @ params[p + "attn_query_weight"] + params[p + "attn_query_bias"]
    k = x @ params[p + "attn_key_weight"] + params[p + "attn_key_bias"]
    v = x @ params[p + "attn_value_weight"] + params[p + "attn_value_bias"]
    ctx_parts = []
    for h in range(heads):
        sl = slice(h * dim, (h + 1) * dim)
        scores = (q[:, sl] @ k[:, sl].T) * scale + bias_mat
        attn = softmax_rows(scores)
        ctx_parts.append(attn @ v[:, sl])
    ctx = np.concatenate(ctx_parts, axis=1)
    proj = ctx @ params[p + "attn_output_weight"] + params[p + "attn_output_bias"]
    x = layer_norm(x + proj, params[p + "attn_norm_gain"], params[p + "attn_norm_bias"])
    inner = gelu(x @ params[p + "ff_inner_weight"] + params[p + "ff_inner_bias"])
    outer = inner @ params[p + "ff_outer_weight"] + params[p + "ff_outer_bias"]
    return layer_norm(x + outer, params[p + "ff_norm_gain"], params[p + "ff_norm_bias"])


def forward(params, ids, segments, mask):
    x = embed(params, ids, segments)
    for i in range(CONFIG["layers"]):
        x = block(params, i, x, mask)
    x = x * np.asarray(mask, dtype=F32)[:, None]
    pooled = np.tanh(x[0:1] @ params["encoder.pooler_weight"] + params["encoder.pooler_bias"])
    return x, pooled[0]


def mean_pool(hidden, mask):
    keep = np.asarray(mask) == 1
    return hidden[keep].mean(axis=0, dtype=F32)


def filter_scores(params, head, ids, segments, mask):
    hidden, pooler = forward(params, ids, segments, mask)
    mean = mean_pool(hidden, mask)
    u_p = pooler[None, :] @ head["filter.pooler_weight"] + head["filter.pooler_bias"]
    u_m = mean[None, :] @ head["filter.mean_weight"] + head["filter.mean_bias"]
    joint = np.concatenate([u_p, u_m], axis=1)
    return sigmoid(joint @ head["filter.fusion_weight"] + head["filter.fusion_bias"])[0]


def match_score(params, head, ids, segments, mask):
    _, pooler = forward(params, ids, segments, mask)
    logit = pooler[None, :] @ head["matcher.task_weight"] + head["matcher.task_bias"]
    return float(sigmoid(logit)[0, 0])


# ----------------------------------------------------------------------------
# sequence layout (mirrors the single/pair framing)
# ----------------------------------------------------------------------------

def encode_single(text, max_len):
    ids = [CLS] + [VOCAB.index(w) for w in text.split()] + [SEP]
    n_t = len(ids)
    ids = ids + [PAD] * (max_len - n_t)
    segments = [0] * max_len
    mask = [1] * n_t + [0] * (max_len - n_t)
    return ids, segments, mask, n_t


def encode_pair(text_a, text_b, max_len):
    a = [VOCAB.index(w) for w in text_a.split()]
    b = [VOCAB.index(w) for w in text_b.split()]
    ids = [CLS] + a + [SEP] + b + [SEP]
    segments = [0] * (len(a) + 2) + [1] * (len(b) + 1)
    n_t = len(ids)
    ids = ids + [PAD] * (max_len - n_t)
    segments = segments + [0] * (max_len - len(segments))
    mask = [1] * n_t + [0] * (max_len - n_t)
    return ids, segments, mask, n_t


# ----------------------------------------------------------------------------
# archive writer (same container format as the Rust crate)
# ----------------------------------------------------------------------------

def write_archive(path, tensors):
    header_lines = [f"tensor-archive v1 {len(tensors)}"]
    offset = 0
    blobs = []
    for name, tensor in tensors.items():
        rows, cols = tensor.shape
        header_lines.append(f"{name} {rows} {cols} {offset}")
        blob = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
        blobs.append(blob)
        offset += len(blob)
    header_lines.append("data")
    with open(path, "wb") as f:
        f.write(("\n".join(header_lines) + "\n").encode())
        for blob in blobs:
            f.write(blob)


def write_meta(path, filter_space, matcher_mode):
    meta = {
        "encoder": CONFIG,
        "api_count": API_COUNT,
        "category_count": CATEGORY_COUNT,
        "seed": SEED,
        "filter_space": filter_space,
        "filter_pooler_enabled": True,
        "filter_mean_enabled": True,
        "matcher_mode": matcher_mode,
    }
    with open(path, "w") as f:
        json.dump(meta, f, indent=2)


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(SEED)
    params = make_params(rng)
    api_head = make_filter_head(rng, API_COUNT)
    cat_head = make_filter_head(rng, CATEGORY_COUNT)
    match_head = make_match_head(rng)

    write_archive(os.path.join(OUT, "filter.ckpt"), {**params, **api_head})
    write_meta(os.path.join(OUT, "filter.ckpt.meta.json"), "Repository", None)
    write_archive(os.path.join(OUT, "category.ckpt"), {**params, **cat_head})
    write_meta(os.path.join(OUT, "category.ckpt.meta.json"), "Categories", None)
    write_archive(os.path.join(OUT, "matcher.ckpt"), {**params, **match_head})
    write_meta(os.path.join(OUT, "matcher.ckpt.meta.json"), None, "CrossEncode")

    with open(os.path.join(OUT, "vocab.txt"), "w") as f:
        f.write("\n".join(VOCAB) + "\n")

    mashup_text = "alpha beta gamma"
    api_texts = ["delta epsilon", "zeta eta", "theta alpha"]
    max_len = 12
    pair_len = 14

    ids, segments, mask, n_t = encode_single(mashup_text, max_len)
    embedded = embed(params, ids, segments)
    block0 = block(params, 0, embedded, mask)
    hidden, pooler = forward(params, ids, segments, mask)
    pooled_mean = mean_pool(hidden, mask)
    v_r = filter_scores(params, api_head, ids, segments, mask)
    v_cat = filter_scores(params, cat_head, ids, segments, mask)

    sims = []
    for api_text in api_texts:
        p_ids, p_segments, p_mask, _ = encode_pair(mashup_text, api_text, pair_len)
        sims.append(match_score(params, match_head, p_ids, p_segments, p_mask))

    pair_ids, pair_segments, pair_mask, pair_nt = encode_pair(mashup_text, api_texts[0], pair_len)

    golden = {
        "config": CONFIG,
        "max_len": max_len,
        "pair_max_len": pair_len,
        "mashup_text": mashup_text,
        "api_texts": api_texts,
        "single": {"ids": ids, "segments": segments, "mask": mask, "n_t": n_t},
        "pair": {
            "ids": pair_ids,
            "segments": pair_segments,
            "mask": pair_mask,
            "n_t": pair_nt,
        },
        "embed_single": embedded.tolist(),
        "block0_single": block0.tolist(),
        "hidden_single": hidden.tolist(),
        "pooler_single": pooler.tolist(),
        "mean_pool_single": pooled_mean.tolist(),
        "v_r": v_r.tolist(),
        "v_cat": v_cat.tolist(),
        "similarities": sims,
    }
    with open(os.path.join(OUT, "golden.json"), "w") as f:
        json.dump(golden, f, indent=1)

    print(f"wrote golden fixtures to {OUT}")
    print(f"v_r = {v_r}")
    print(f"similarities = {sims}")


if __name__ == "__main__":
    main()
