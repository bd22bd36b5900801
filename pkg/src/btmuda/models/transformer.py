"""Three-branch transformer: the global-context path of the model.

One shared stack of weights drives three token streams per source/target
pairing: a source branch and a target branch under self-attention, and a
source-target branch whose attention reads queries from the source stream
and keys/values from the target stream (cross-attention).  The source-target
stream additionally accumulates its own previous state from layer 2 onward.
Blocks are post-norm: attention -> add -> norm -> FFN -> add -> norm, with
GELU inside the FFN.  A learned class token carries the image representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.params import ParamStore, fanin_normal, rng_for, small_normal
from ..diffcore.tensor import Tensor
from ..errors import ContractViolation


@dataclass(frozen=True)
class TransformerConfig:
    patch_size: int = 8
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ffn_hidden: int | None = None

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ContractViolation(
                f"TransformerConfig: heads {self.n_heads} must divide d_model {self.d_model}")
        if min(self.patch_size, self.d_model, self.n_heads, self.n_layers) < 1:
            raise ContractViolation("TransformerConfig: all dimensions must be >= 1")

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    @property
    def hidden(self):
        return self.ffn_hidden if self.ffn_hidden is not None else 4 * self.d_model

    def tokens(self, image_size):
        if image_size % self.patch_size:
            raise ContractViolation(
                f"TransformerConfig: patch {self.patch_size} does not divide "
                f"image size {image_size}")
        n = (image_size // self.patch_size) ** 2
        return n + 1  # class token at index 0


def param_shapes(cfg: TransformerConfig, image_size):
    d, hidden = cfg.d_model, cfg.hidden
    p = cfg.patch_size
    shapes = {
        "vit/patch_embed/w": (p * p, d),
        "vit/patch_embed/b": (d,),
        "vit/pos": (cfg.tokens(image_size), d),
        "vit/cls": (d,),
    }
    for l in range(1, cfg.n_layers + 1):
        base = f"vit/layer{l}"
        shapes[f"{base}/wq"] = (d, d)
        shapes[f"{base}/wk"] = (d, d)
        shapes[f"{base}/wv"] = (d, d)
        shapes[f"{base}/wo"] = (d, d)
        shapes[f"{base}/ffn1/w"] = (d, hidden)
        shapes[f"{base}/ffn1/b"] = (hidden,)
        shapes[f"{base}/ffn2/w"] = (hidden, d)
        shapes[f"{base}/ffn2/b"] = (d,)
        shapes[f"{base}/norm1/gain"] = (d,)
        shapes[f"{base}/norm1/bias"] = (d,)
        shapes[f"{base}/norm2/gain"] = (d,)
        shapes[f"{base}/norm2/bias"] = (d,)
    return shapes


def init_params(store: ParamStore, cfg: TransformerConfig, image_size, seed):
    for name, shape in param_shapes(cfg, image_size).items():
        rng = rng_for(seed, "init", name)
        if name.endswith("gain"):
            store.add(name, np.ones(shape))
        elif name.endswith(("/wq", "/wk", "/wv", "/wo")) or name.endswith("/w"):
            store.add(name, fanin_normal(rng, shape, shape[0]))
        else:  # biases, positions, class token
            store.add(name, small_normal(rng, shape))


def patch_embed(images, store: ParamStore, cfg: TransformerConfig) -> Tensor:
    """Images (batch, H, W) -> token sequences (batch, N+1, d_model)."""
    arr = images.data if isinstance(images, Tensor) else np.asarray(images)
    batch, h, w = arr.shape
    p = cfg.patch_size
    if h % p or w % p:
        raise ContractViolation(f"patch_embed: patch {p} does not divide image {h}x{w}")
    gh, gw = h // p, w // p
    patches = (arr.reshape(batch, gh, p, gw, p)
                  .transpose(0, 1, 3, 2, 4)
                  .reshape(batch, gh * gw, p * p))
    tokens = T.matmul(Tensor(patches.astype(store.dtype)), store["vit/patch_embed/w"])
    tokens = tokens + store["vit/patch_embed/b"]
    cls = T.reshape(store["vit/cls"], (1, 1, cfg.d_model))
    cls_row = cls + Tensor(np.zeros((batch, 1, cfg.d_model), dtype=store.dtype))
    seq = T.concat([cls_row, tokens], axis=1)
    return seq + store["vit/pos"]


def attention(q_input, kv_input, store: ParamStore, cfg: TransformerConfig, layer) -> Tensor:
    """Multi-head scaled dot-product attention with shared projections.

    Queries come from `q_input`, keys and values from `kv_input`; passing the
    same sequence for both gives self-attention, distinct sequences give the
    cross variant.  The projection weights are identical in both uses.
    """
    base = f"vit/layer{layer}"
    batch, n, d = q_input.shape
    heads, dk = cfg.n_heads, cfg.d_head

    def split(x):
        return T.transpose(T.reshape(x, (batch, n, heads, dk)), (0, 2, 1, 3))

    q = split(T.matmul(q_input, store[f"{base}/wq"]))
    k = split(T.matmul(kv_input, store[f"{base}/wk"]))
    v = split(T.matmul(kv_input, store[f"{base}/wv"]))
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dk))
    weights = T.softmax(scores, axis=-1)
    mixed = T.matmul(weights, v)
    merged = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (batch, n, d))
    return T.matmul(merged, store[f"{base}/wo"])


def attention_weights(q_input, kv_input, store, cfg, layer):
    """The softmax attention matrices alone (batch, heads, N, N) — for tests."""
    base = f"vit/layer{layer}"
    batch, n, _ = q_input.shape
    heads, dk = cfg.n_heads, cfg.d_head

    def split(x):
        return T.transpose(T.reshape(x, (batch, n, heads, dk)), (0, 2, 1, 3))

    q = split(T.matmul(q_input, store[f"{base}/wq"]))
    k = split(T.matmul(kv_input, store[f"{base}/wk"]))
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dk))
    return T.softmax(scores, axis=-1)


def _ffn_block(x, store, cfg, layer, att_out, extra=None):
    """Residual add (+optional accumulated state) -> norm -> FFN -> norm."""
    base = f"vit/layer{layer}"
    mixed = x + att_out if extra is None else x + att_out + extra
    normed = T.layernorm(mixed, store[f"{base}/norm1/gain"], store[f"{base}/norm1/bias"])
    hidden = T.gelu(T.matmul(normed, store[f"{base}/ffn1/w"]) + store[f"{base}/ffn1/b"])
    expanded = T.matmul(hidden, store[f"{base}/ffn2/w"]) + store[f"{base}/ffn2/b"]
    return T.layernorm(normed + expanded, store[f"{base}/norm2/gain"], store[f"{base}/norm2/bias"])


def self_block(h, store, cfg, layer):
    return _ffn_block(h, store, cfg, layer, attention(h, h, store, cfg, layer))


def cross_block(h_src, h_tgt, h_cross_prev, store, cfg, layer):
    """Source-target branch block.

    Queries from the source stream's layer input, keys/values from the target
    stream's layer input; the branch's own previous state joins the residual
    from layer 2 onward (`h_cross_prev` is None at layer 1).
    """
    att = attention(h_src, h_tgt, store, cfg, layer)
    return _ffn_block(h_src, store, cfg, layer, att, extra=h_cross_prev)


def layer_forward(h_src, h_tgt, h_cross_prev, store, cfg, layer):
    """Advance all three branches one layer; returns the new (src, tgt, cross)."""
    new_src = self_block(h_src, store, cfg, layer)
    new_tgt = self_block(h_tgt, store, cfg, layer)
    new_cross = cross_block(h_src, h_tgt, h_cross_prev, store, cfg, layer)
    return new_src, new_tgt, new_cross


def _class_feature(seq):
    return seq[:, 0, :]


def target_trajectory(tgt_images, store, cfg):
    """Target-branch layer inputs [H_1 .. H_{L+1}] (self-attention only)."""
    state = patch_embed(tgt_images, store, cfg)
    states = [state]
    for layer in range(1, cfg.n_layers + 1):
        state = self_block(state, store, cfg, layer)
        states.append(state)
    return states


def transformer_forward_multi(src_images_list, tgt_images, store: ParamStore,
                              cfg: TransformerConfig):
    """Run all M source pairings against one shared target-branch pass.

    Returns (source features list, target feature, source-target features
    list), each feature (batch, d_model).  The target branch is computed once
    and is bit-identical to :func:`target_only_forward` on the same images.
    """
    t_states = target_trajectory(tgt_images, store, cfg)
    feats_src, feats_cross = [], []
    for src in src_images_list:
        h_src = patch_embed(src, store, cfg)
        h_cross = None
        for layer in range(1, cfg.n_layers + 1):
            new_src = self_block(h_src, store, cfg, layer)
            new_cross = cross_block(h_src, t_states[layer - 1], h_cross, store, cfg, layer)
            h_src, h_cross = new_src, new_cross
        feats_src.append(_class_feature(h_src))
        feats_cross.append(_class_feature(h_cross))
    return feats_src, _class_feature(t_states[-1]), feats_cross


def transformer_forward(src_images, tgt_images, store, cfg):
    """Single-pairing convenience wrapper: (feat_src, feat_tgt, feat_cross)."""
    feats_src, feat_t, feats_cross = transformer_forward_multi(
        [src_images], tgt_images, store, cfg)
    return feats_src[0], feat_t, feats_cross[0]


def target_only_forward(tgt_images, store, cfg):
    """Just the target branch — the inference path (one third of the work)."""
    return _class_feature(target_trajectory(tgt_images, store, cfg)[-1])


def source_only_forward(images, store, cfg):
    """Self-attention stack on arbitrary images (used when the three-branch
    pairing is disabled and source images still need transformer features)."""
    return _class_feature(target_trajectory(images, store, cfg)[-1])
