"""Turn activation bundles into embedding vectors.

Supported strategies: the 2x2 hidden-state grid (last/mean token x
last/mean layer), routing-weight concatenation across layers (last token
or token mean), and the concatenated combination of both with optional
per-part L2 normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateInputError,
    PairingError,
    StrategyError,
    TemplateError,
)
from .store import ActivationBundle

PLACEHOLDER = "*sent*"

# Prompt ids: 0 = no prompt, 1-9 = the nine analysis prompts, 10 = PromptEOL.
PROMPTS: dict[int, str] = {
    1: "This sentence: *sent* means in one word: ",
    2: "In one word, describe the style of the following sentence - *sent*: ",
    3: "In one word, describe the sentiment of the following sentence (positive, neutral, or negative) - *sent*: ",
    4: "In one word, describe the tone of the following sentence - *sent* (e.g., formal, informal, humorous, serious): ",
    5: "In one word, describe the intent behind the following sentence (e.g., request, suggestion, command) - *sent*: ",
    6: "In one word, rate the complexity of the following sentence (simple, moderate, complex) - *sent*: ",
    7: "In one word, describe whether the following sentence is subjective or objective - *sent*: ",
    8: "In one word, describe the language style of the following sentence (e.g., academic, conversational, literary) - *sent*: ",
    9: "In one word, describe the grammatical structure of the following sentence (simple, compound, complex) - *sent*: ",
    10: 'This sentence: "*sent*" means in one word: ',
}

PROMPT_EOL_ID = 10


@dataclass(frozen=True)
class PromptTemplate:
    id: int
    template: str

    @classmethod
    def by_id(cls, prompt_id: int) -> "PromptTemplate":
        if prompt_id == 0:
            return cls(0, PLACEHOLDER)
        if prompt_id not in PROMPTS:
            raise ConfigError(f"unknown prompt id {prompt_id}")
        return cls(prompt_id, PROMPTS[prompt_id])


def apply_prompt(template: PromptTemplate, text: str) -> str:
    """Substitute the placeholder verbatim; id 0 returns text unchanged."""
    if template.id == 0:
        return text
    if template.template.count(PLACEHOLDER) != 1:
        raise TemplateError(f"template {template.id} must contain {PLACEHOLDER} exactly once")
    return template.template.replace(PLACEHOLDER, text)


@dataclass(frozen=True)
class HsStrategy:
    token_pool: str  # "last" | "mean"
    layer_pool: str  # "last" | "mean"

    def __post_init__(self):
        if self.token_pool not in ("last", "mean") or self.layer_pool not in ("last", "mean"):
            raise ConfigError(f"bad HS strategy {self.token_pool}/{self.layer_pool}")

    @property
    def tag(self) -> str:
        return f"hs:{self.token_pool}:{self.layer_pool}"


@dataclass
class EmbeddingVector:
    values: np.ndarray
    strategy: str  # "hs:<tok>:<layer>" | "rw:<tok>" | "concat" | "concat:raw"
    record_id: str
    normalized: bool = False

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _pool_tokens(arr: np.ndarray, token_pool: str, token_mode: str) -> np.ndarray:
    # arr has a token axis 0; bundles stored last-token-only cannot be mean-pooled
    if token_pool == "mean" and token_mode == "last":
        raise StrategyError("token_pool=mean requires a bundle stored with token_mode=all")
    if token_pool == "last":
        return arr[-1]
    return arr.astype(np.float64).mean(axis=0)


def extract_hs(bundle: ActivationBundle, strategy: HsStrategy) -> EmbeddingVector:
    hs = bundle.hidden_states  # [L, T, d]
    if strategy.layer_pool == "last":
        per_layer = hs[-1]
    else:
        per_layer = hs.astype(np.float64).mean(axis=0)
    values = _pool_tokens(per_layer, strategy.token_pool, bundle.token_mode)
    return EmbeddingVector(
        values=np.asarray(values, dtype=np.float64),
        strategy=strategy.tag,
        record_id=bundle.record_id,
    )


def extract_rw(bundle: ActivationBundle, token_pool: str = "last") -> EmbeddingVector:
    """Concatenate the selected token's gate rows in layer order.

    Token-mean pooling averages gate rows without renormalizing: the mean
    of simplex points is already on the simplex.
    """
    if token_pool not in ("last", "mean"):
        raise ConfigError(f"bad RW token pool {token_pool!r}")
    parts = [
        _pool_tokens(g, token_pool, bundle.token_mode) for g in bundle.routing_weights
    ]
    return EmbeddingVector(
        values=np.concatenate([np.asarray(p, dtype=np.float64) for p in parts]),
        strategy=f"rw:{token_pool}",
        record_id=bundle.record_id,
    )


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateInputError(f"zero-norm {what} part cannot be normalized")
    return v / n


def moee_concat(
    hs: EmbeddingVector, rw: EmbeddingVector, normalize: bool = True
) -> EmbeddingVector:
    """Concatenate [hs; rw]; if normalize, each part is unit-normed first."""
    if not hs.strategy.startswith("hs:"):
        raise StrategyError(f"first argument must be an HS embedding, got {hs.strategy}")
    if not rw.strategy.startswith("rw:"):
        raise StrategyError(f"second argument must be an RW embedding, got {rw.strategy}")
    if hs.record_id != rw.record_id:
        raise PairingError(f"records differ: {hs.record_id} vs {rw.record_id}")
    if normalize:
        values = np.concatenate([_unit(hs.values, "HS"), _unit(rw.values, "RW")])
    else:
        values = np.concatenate([hs.values, rw.values])
    return EmbeddingVector(
        values=values,
        strategy="concat" if normalize else "concat:raw",
        record_id=hs.record_id,
        normalized=False,
    )


def scaled_concat(hs: EmbeddingVector, rw: EmbeddingVector, alpha: float) -> EmbeddingVector:
    """[hs_unit; sqrt(alpha) * rw_unit] — the vector form whose inner product
    reproduces the alpha-weighted cosine sum, used where similarity-sum
    tasks need a single feature vector (classification, clustering)."""
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    if hs.record_id != rw.record_id:
        raise PairingError(f"records differ: {hs.record_id} vs {rw.record_id}")
    values = np.concatenate(
        [_unit(hs.values, "HS"), np.sqrt(alpha) * _unit(rw.values, "RW")]
    )
    return EmbeddingVector(values=values, strategy="concat", record_id=hs.record_id)


HS_STRATEGY_TAGS = ("hs:last:last", "hs:last:mean", "hs:mean:last", "hs:mean:mean")
STRATEGY_TAGS = HS_STRATEGY_TAGS + ("rw:last", "rw:mean", "concat", "concat:raw")

# CLI aliases from the ablation grid: "all" means mean pooling over that axis.
_ALIASES = {
    "hs:last:all": "hs:last:mean",
    "hs:mean:all": "hs:mean:mean",
    "hs:all:last": "hs:mean:last",
    "hs:all:all": "hs:mean:mean",
    "rw:all": "rw:mean",
}


def extract(bundle: ActivationBundle, strategy: str) -> EmbeddingVector:
    """Extract by strategy tag; the entry point used by the CLI and harness."""
    strategy = _ALIASES.get(strategy, strategy)
    if strategy.startswith("hs:"):
        _, tok, lay = strategy.split(":")
        return extract_hs(bundle, HsStrategy(tok, lay))
    if strategy.startswith("rw:"):
        return extract_rw(bundle, strategy.split(":")[1])
    if strategy in ("concat", "concat:raw"):
        hs = extract_hs(bundle, HsStrategy("last", "last"))
        rw = extract_rw(bundle, "last")
        return moee_concat(hs, rw, normalize=strategy == "concat")
    raise ConfigError(f"unknown strategy {strategy!r}")


class RouterEmbedder:
    """Stateless sklearn-style transformer: bundles in, embedding matrix out."""

    def __init__(self, strategy: str = "concat"):
        self.strategy = strategy

    def get_params(self, deep: bool = True) -> dict:
        return {"strategy": self.strategy}

    def set_params(self, **params) -> "RouterEmbedder":
        for k, v in params.items():
            if not hasattr(self, k):
                raise ConfigError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, bundles, y=None) -> "RouterEmbedder":
        return self

    def transform(self, bundles) -> np.ndarray:
        return np.stack([extract(b, self.strategy).values for b in bundles])

    def fit_transform(self, bundles, y=None) -> np.ndarray:
        return self.fit(bundles, y).transform(bundles)
