"""Similarity primitives and the weighted-sum combination of HS and RW
cosine scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError

MODES = ("hs_only", "rw_only", "concat_cosine", "weighted_sum")


@dataclass(frozen=True)
class SimilaritySpec:
    mode: str
    alpha: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown similarity mode {self.mode!r}")
        if self.mode == "weighted_sum":
            if self.alpha is None or self.alpha < 0:
                raise ConfigError("weighted_sum requires alpha >= 0")
        elif self.alpha is not None:
            raise ConfigError(f"alpha is only valid for weighted_sum, not {self.mode}")

    @property
    def diagonal(self) -> float:
        return 1.0 + self.alpha if self.mode == "weighted_sum" else 1.0


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"cosine needs equal 1-D vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine undefined for zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def moee_sum_similarity(hs_pair, rw_pair, alpha: float) -> float:
    """cosine(hs) + alpha * cosine(rw)."""
    return cosine(*hs_pair) + alpha * cosine(*rw_pair)


def pair_score(
    spec: SimilaritySpec,
    hs_a: np.ndarray,
    hs_b: np.ndarray,
    rw_a: np.ndarray,
    rw_b: np.ndarray,
) -> float:
    """Score one pair under a spec from its HS and RW parts."""
    if spec.mode == "hs_only":
        return cosine(hs_a, hs_b)
    if spec.mode == "rw_only":
        return cosine(rw_a, rw_b)
    if spec.mode == "weighted_sum":
        return moee_sum_similarity((hs_a, hs_b), (rw_a, rw_b), spec.alpha)
    # concat_cosine: per-part unit norm, then cosine of the concatenation
    def unit(v):
        n = np.linalg.norm(v)
        if n == 0.0:
            raise DegenerateInputError("zero-norm part in concat similarity")
        return v / n

    return cosine(
        np.concatenate([unit(np.asarray(hs_a, float)), unit(np.asarray(rw_a, float))]),
        np.concatenate([unit(np.asarray(hs_b, float)), unit(np.asarray(rw_b, float))]),
    )


def similarity_matrix(embeddings, spec: SimilaritySpec) -> np.ndarray:
    """Symmetric pairwise score matrix.

    For cosine modes `embeddings` is a list of vectors; for weighted_sum
    it is a list of (hs, rw) tuples.
    """
    n = len(embeddings)
    m = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i, n):
            if spec.mode == "weighted_sum":
                (ha, ra), (hb, rb) = embeddings[i], embeddings[j]
                v = moee_sum_similarity((ha, hb), (ra, rb), spec.alpha)
            else:
                v = cosine(embeddings[i], embeddings[j])
            m[i, j] = v
            m[j, i] = v
    return m
