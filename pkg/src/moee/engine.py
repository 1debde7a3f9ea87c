"""Deterministic desk-scale decoder-only transformer with MoE feed-forward
layers.

The forward pass exposes every layer's full gate distribution and the
post-layer residual-stream hidden state, which downstream modules turn
into embeddings. All arithmetic accumulates in float64 and is stored as
float32; gate softmax uses max-subtraction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    CorruptionError,
    EmptyInputError,
    FormatError,
    NumericError,
    ShapeError,
    VocabError,
)

BOS_ID = 256

_MOEM_MAGIC = b"MOEM"
_MOEM_VERSION = 1


@dataclass(frozen=True)
class MoEConfig:
    num_layers: int
    hidden_dim: int
    ffn_dim: int
    num_heads: int
    experts_per_layer: tuple[int, ...]
    top_k: int
    vocab_size: int = 300
    max_seq_len: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "experts_per_layer", tuple(int(n) for n in self.experts_per_layer)
        )
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.hidden_dim < 1 or self.ffn_dim < 1:
            raise ConfigError("hidden_dim and ffn_dim must be positive")
        if self.num_heads < 1 or self.hidden_dim % self.num_heads != 0:
            raise ConfigError("num_heads must be positive and divide hidden_dim")
        if len(self.experts_per_layer) != self.num_layers:
            raise ConfigError("experts_per_layer length must equal num_layers")
        if any(n < 1 for n in self.experts_per_layer):
            raise ConfigError("expert counts must be positive")
        if self.top_k < 1 or self.top_k > min(self.experts_per_layer):
            raise ConfigError("top_k exceeds experts")
        if self.vocab_size < 1 or self.max_seq_len < 1:
            raise ConfigError("vocab_size and max_seq_len must be positive")

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "hidden_dim": self.hidden_dim,
            "ffn_dim": self.ffn_dim,
            "num_heads": self.num_heads,
            "experts_per_layer": list(self.experts_per_layer),
            "top_k": self.top_k,
            "vocab_size": self.vocab_size,
            "max_seq_len": self.max_seq_len,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MoEConfig":
        return cls(
            num_layers=d["num_layers"],
            hidden_dim=d["hidden_dim"],
            ffn_dim=d["ffn_dim"],
            num_heads=d["num_heads"],
            experts_per_layer=tuple(d["experts_per_layer"]),
            top_k=d["top_k"],
            vocab_size=d["vocab_size"],
            max_seq_len=d["max_seq_len"],
            rng_seed=d["rng_seed"],
        )


@dataclass
class LayerWeights:
    attn_norm: np.ndarray  # [d]
    wq: np.ndarray  # [d, d]
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ffn_norm: np.ndarray  # [d]
    gate: np.ndarray  # [d, N]
    experts: list[tuple[np.ndarray, np.ndarray]]  # per expert ([d,ffn], [ffn,d])


@dataclass
class MoEModel:
    config: MoEConfig
    token_embedding: np.ndarray  # [vocab, d]
    layers: list[LayerWeights]
    final_norm: np.ndarray  # [d]

    def named_tensors(self):
        """Canonical (name, array) order used by the MOEM serialization."""
        yield "token_embedding", self.token_embedding
        for l, lw in enumerate(self.layers):
            yield f"layers.{l}.attn_norm", lw.attn_norm
            yield f"layers.{l}.wq", lw.wq
            yield f"layers.{l}.wk", lw.wk
            yield f"layers.{l}.wv", lw.wv
            yield f"layers.{l}.wo", lw.wo
            yield f"layers.{l}.ffn_norm", lw.ffn_norm
            yield f"layers.{l}.gate", lw.gate
            for i, (w_in, w_out) in enumerate(lw.experts):
                yield f"layers.{l}.experts.{i}.w_in", w_in
                yield f"layers.{l}.experts.{i}.w_out", w_out
        yield "final_norm", self.final_norm


@dataclass
class ForwardTrace:
    token_ids: list[int]
    hidden_states: np.ndarray  # [L, T, d] float32, post-layer residual stream
    routing_weights: list[np.ndarray]  # per layer [T, N_l] float32, full softmax
    top_k_masks: list[np.ndarray]  # per layer [T, N_l] bool

    @property
    def num_tokens(self) -> int:
        return len(self.token_ids)


def gen_toy_model(config: MoEConfig) -> MoEModel:
    """Draw a model from a seeded PRNG stream.

    Stream order: token_embedding, then per layer (attn_norm, wq, wk, wv,
    wo, ffn_norm, gate, per-expert w_in/w_out), then final_norm. Weight
    matrices are uniform on [-s, s) with s = 1/sqrt(hidden_dim); norm
    scales are uniform on [0.9, 1.1). Identical (config, seed) gives a
    bit-identical model.
    """
    rng = np.random.default_rng(config.rng_seed)
    d = config.hidden_dim
    s = 1.0 / np.sqrt(d)

    def w(*shape):
        return rng.uniform(-s, s, shape).astype(np.float32)

    def norm_scale():
        return rng.uniform(0.9, 1.1, d).astype(np.float32)

    token_embedding = w(config.vocab_size, d)
    layers = []
    for n_exp in config.experts_per_layer:
        layers.append(
            LayerWeights(
                attn_norm=norm_scale(),
                wq=w(d, d),
                wk=w(d, d),
                wv=w(d, d),
                wo=w(d, d),
                ffn_norm=norm_scale(),
                gate=w(d, n_exp),
                experts=[
                    (w(d, config.ffn_dim), w(config.ffn_dim, d))
                    for _ in range(n_exp)
                ],
            )
        )
    return MoEModel(config, token_embedding, layers, norm_scale())


def gate_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax along the last axis with max-subtraction for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite gate logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _expert_act(x: np.ndarray) -> np.ndarray:
    # x * sigmoid(1.702 x), a smooth GELU-style gate
    return x / (1.0 + np.exp(-1.702 * x))


def moe_layer_apply(h: np.ndarray, layer: LayerWeights, top_k: int):
    """Apply one MoE feed-forward block to normalized inputs h [T, d].

    Returns (output [T, d], gates [T, N], mask [T, N]). Gates are the
    full pre-truncation softmax; the output sums expert contributions
    only over the top-k mask, weighted by un-renormalized gate values.
    """
    h = np.asarray(h, dtype=np.float64)
    n_experts = layer.gate.shape[1]
    if h.ndim != 2 or h.shape[1] != layer.gate.shape[0]:
        raise ShapeError(
            f"hidden input {h.shape} incompatible with gate {layer.gate.shape}"
        )
    if not 1 <= top_k <= n_experts:
        raise ConfigError("top_k exceeds experts")

    gates = gate_softmax(h @ layer.gate.astype(np.float64))
    # stable sort keeps tie-breaking deterministic by expert index
    order = np.argsort(-gates, axis=1, kind="stable")
    mask = np.zeros_like(gates, dtype=bool)
    np.put_along_axis(mask, order[:, :top_k], True, axis=1)

    out = np.zeros_like(h)
    weighted = gates * mask
    for i, (w_in, w_out) in enumerate(layer.experts):
        active = weighted[:, i] > 0.0
        if not np.any(active):
            continue
        y = _expert_act(h[active] @ w_in.astype(np.float64)) @ w_out.astype(np.float64)
        out[active] += weighted[active, i][:, None] * y
    return out, gates, mask


def _rms_norm(x: np.ndarray, scale: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    rms = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    return x / rms * scale.astype(np.float64)


def _attention(x: np.ndarray, layer: LayerWeights, num_heads: int) -> np.ndarray:
    T, d = x.shape
    hd = d // num_heads
    q = (x @ layer.wq.astype(np.float64)).reshape(T, num_heads, hd).transpose(1, 0, 2)
    k = (x @ layer.wk.astype(np.float64)).reshape(T, num_heads, hd).transpose(1, 0, 2)
    v = (x @ layer.wv.astype(np.float64)).reshape(T, num_heads, hd).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(hd)
    causal = np.triu(np.full((T, T), -np.inf), k=1)
    scores = scores + causal
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    out = (att @ v).transpose(1, 0, 2).reshape(T, d)
    return out @ layer.wo.astype(np.float64)


def forward(model: MoEModel, token_ids: list[int]) -> ForwardTrace:
    """Run the model and record every layer's gates and hidden states.

    Pre-norm blocks with RMS normalization and causal softmax attention;
    the trace stores post-layer residual-stream states.
    """
    cfg = model.config
    if len(token_ids) == 0:
        raise EmptyInputError("forward requires at least one token")
    if len(token_ids) > cfg.max_seq_len:
        raise ShapeError(
            f"sequence length {len(token_ids)} exceeds max_seq_len {cfg.max_seq_len}"
        )
    for t in token_ids:
        if not 0 <= t < cfg.vocab_size:
            raise VocabError(f"token id {t} out of range for vocab {cfg.vocab_size}")

    h = model.token_embedding.astype(np.float64)[np.asarray(token_ids)]
    hidden_states = np.empty(
        (cfg.num_layers, len(token_ids), cfg.hidden_dim), dtype=np.float32
    )
    routing_weights: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for l, layer in enumerate(model.layers):
        h = h + _attention(_rms_norm(h, layer.attn_norm), layer, cfg.num_heads)
        moe_in = _rms_norm(h, layer.ffn_norm)
        moe_out, gates, mask = moe_layer_apply(moe_in, layer, cfg.top_k)
        h = h + moe_out
        hidden_states[l] = h.astype(np.float32)
        routing_weights.append(gates.astype(np.float32))
        masks.append(mask)
    return ForwardTrace(list(token_ids), hidden_states, routing_weights, masks)


def tokenize(text: str) -> list[int]:
    """Byte-level tokenizer: BOS (256) followed by raw UTF-8 bytes."""
    return [BOS_ID] + list(text.encode("utf-8"))


def detokenize(token_ids: list[int]) -> str:
    """Inverse of tokenize for byte ids; non-byte ids are dropped."""
    return bytes(t for t in token_ids if 0 <= t < 256).decode("utf-8")


def save_model(model: MoEModel, path) -> int:
    """Write the MOEM container; returns bytes written.

    Layout: magic `MOEM`, version u32 LE, header-length u64 LE, UTF-8
    JSON header (config + tensor table), float32 LE payload. Offsets are
    payload-relative.
    """
    table = []
    chunks = []
    offset = 0
    for name, arr in model.named_tensors():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"config": model.config.to_dict(), "tensors": table},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    blob = b"".join(
        [_MOEM_MAGIC, struct.pack("<I", _MOEM_VERSION), struct.pack("<Q", len(header)), header]
        + chunks
    )
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def load_model(path) -> MoEModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MOEM_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MOEM_MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _MOEM_VERSION:
        raise FormatError(f"unsupported MOEM version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    if 16 + hlen > len(blob):
        raise CorruptionError("header extends past end of file")
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    config = MoEConfig.from_dict(header["config"])
    payload = blob[16 + hlen :]

    tensors = {}
    for entry in header["tensors"]:
        off, nb = entry["offset"], entry["nbytes"]
        if off + nb > len(payload):
            raise CorruptionError(f"tensor {entry['name']} truncated")
        arr = np.frombuffer(payload, dtype="<f4", count=nb // 4, offset=off)
        arr = arr.reshape(entry["shape"]).copy()
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"tensor {entry['name']} contains non-finite values")
        tensors[entry["name"]] = arr

    def take(name, shape):
        if name not in tensors:
            raise FormatError(f"missing tensor {name}")
        if tuple(tensors[name].shape) != tuple(shape):
            raise ShapeError(f"tensor {name} has shape {tensors[name].shape}, want {shape}")
        return tensors[name]

    d = config.hidden_dim
    layers = []
    for l, n_exp in enumerate(config.experts_per_layer):
        layers.append(
            LayerWeights(
                attn_norm=take(f"layers.{l}.attn_norm", (d,)),
                wq=take(f"layers.{l}.wq", (d, d)),
                wk=take(f"layers.{l}.wk", (d, d)),
                wv=take(f"layers.{l}.wv", (d, d)),
                wo=take(f"layers.{l}.wo", (d, d)),
                ffn_norm=take(f"layers.{l}.ffn_norm", (d,)),
                gate=take(f"layers.{l}.gate", (d, n_exp)),
                experts=[
                    (
                        take(f"layers.{l}.experts.{i}.w_in", (d, config.ffn_dim)),
                        take(f"layers.{l}.experts.{i}.w_out", (config.ffn_dim, d)),
                    )
                    for i in range(n_exp)
                ],
            )
        )
    return MoEModel(
        config,
        take("token_embedding", (config.vocab_size, d)),
        layers,
        take("final_norm", (d,)),
    )
