"""Comparative analyses: cluster-agreement reports, prompt-correlation
matrices, prompt-robustness statistics, and the HS/RW complementarity
error taxonomy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import DegenerateInputError, InsufficientDataError, ConfigError, ShapeError
from .metrics import Partition


@dataclass
class AgreementReport:
    ami: float
    nmi: float
    jaccard: float
    exact_match_pct: float

    def to_dict(self) -> dict:
        return {
            "ami": self.ami,
            "nmi": self.nmi,
            "jaccard": self.jaccard,
            "exact_match_pct": self.exact_match_pct,
        }


def cluster_agreement(a: Partition, b: Partition) -> AgreementReport:
    return AgreementReport(
        ami=metrics.ami(a, b),
        nmi=metrics.nmi(a, b),
        jaccard=metrics.jaccard_pairs(a, b),
        exact_match_pct=metrics.exact_match(a, b),
    )


@dataclass
class PromptCorrelation:
    labels: list[str]
    matrix: np.ndarray
    block_means: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "matrix": self.matrix.tolist(),
            "block_means": self.block_means,
        }


def prompt_correlation_matrix(
    hs_scores: dict[int, list[float]], rw_scores: dict[int, list[float]]
) -> PromptCorrelation:
    """Spearman correlation between every pair of (method, prompt) score
    lists over the same sentence pairs; block means exclude the diagonal."""
    labels = [f"hs:{p}" for p in sorted(hs_scores)] + [f"rw:{p}" for p in sorted(rw_scores)]
    lists = [np.asarray(hs_scores[p], dtype=np.float64) for p in sorted(hs_scores)]
    lists += [np.asarray(rw_scores[p], dtype=np.float64) for p in sorted(rw_scores)]
    n = len(lists)
    if n < 2:
        raise InsufficientDataError("need at least two score lists")
    length = len(lists[0])
    for l in lists:
        if len(l) != length:
            raise ShapeError("all score lists must cover the same sentence pairs")
    m = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = metrics.spearman(lists[i], lists[j])

    def block_mean(rows, cols, exclude_diag):
        vals = []
        for i in rows:
            for j in cols:
                if exclude_diag and i == j:
                    continue
                vals.append(m[i, j])
        return float(np.mean(vals)) if vals else float("nan")

    n_hs = len(hs_scores)
    hs_idx = range(n_hs)
    rw_idx = range(n_hs, n)
    block_means = {
        "hs_hs": block_mean(hs_idx, hs_idx, True),
        "rw_rw": block_mean(rw_idx, rw_idx, True),
        "cross": block_mean(hs_idx, rw_idx, False),
    }
    return PromptCorrelation(labels=labels, matrix=m, block_means=block_means)


@dataclass
class PromptRobustness:
    # per method, per dataset: summary stats of scores across prompts
    stats: dict[str, dict[str, dict[str, float]]]

    def to_dict(self) -> dict:
        return {"stats": self.stats}


def _summary(values: np.ndarray) -> dict[str, float]:
    q1, q2, q3 = np.percentile(values, [25, 50, 75])  # linear interpolation
    return {
        "mean": float(values.mean()),
        "variance": float(values.var()),  # population variance
        "min": float(values.min()),
        "max": float(values.max()),
        "q1": float(q1),
        "median": float(q2),
        "q3": float(q3),
    }


def prompt_robustness(scores: dict[str, dict[int, dict[str, float]]]) -> PromptRobustness:
    """scores: method -> prompt_id -> dataset -> score. Needs >= 2 prompts."""
    stats: dict[str, dict[str, dict[str, float]]] = {}
    for method, per_prompt in scores.items():
        if len(per_prompt) < 2:
            raise InsufficientDataError(
                f"method {method!r} has {len(per_prompt)} prompt(s); need at least 2"
            )
        datasets = sorted({ds for d in per_prompt.values() for ds in d})
        stats[method] = {}
        for ds in datasets:
            vals = np.asarray(
                [per_prompt[p][ds] for p in sorted(per_prompt) if ds in per_prompt[p]],
                dtype=np.float64,
            )
            stats[method][ds] = _summary(vals)
    return PromptRobustness(stats=stats)


@dataclass
class ComplementarityReport:
    tau: float
    n_instances: int
    n_conditioned: int  # instances where at least one method fails
    counts: dict[str, int] = field(default_factory=dict)
    proportions: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "n_instances": self.n_instances,
            "n_conditioned": self.n_conditioned,
            "counts": self.counts,
            "proportions": self.proportions,
        }


def complementarity_errors(
    hs_scores, rw_scores, gold_scores, tau: float = 0.1
) -> ComplementarityReport:
    """Per-instance failure taxonomy on the set where at least one method
    fails. An instance fails a method iff its normalized rank deviation
    |rank_pred - rank_gold| / n exceeds tau."""
    hs = np.asarray(hs_scores, dtype=np.float64)
    rw = np.asarray(rw_scores, dtype=np.float64)
    gold = np.asarray(gold_scores, dtype=np.float64)
    if not (hs.shape == rw.shape == gold.shape) or hs.ndim != 1 or len(hs) < 2:
        raise ShapeError("score lists must be equal-length 1-D with n >= 2")
    if not 0.0 < tau < 1.0:
        raise ConfigError("tau must be in (0, 1)")
    if np.all(gold == gold[0]):
        raise DegenerateInputError("gold scores are constant; ranking undefined")
    n = len(gold)
    rg = metrics.rankdata(gold)
    fail_hs = np.abs(metrics.rankdata(hs) - rg) / n > tau
    fail_rw = np.abs(metrics.rankdata(rw) - rg) / n > tau
    conditioned = fail_hs | fail_rw
    counts = {
        "hs_ok_rw_fail": int(np.sum(~fail_hs & fail_rw)),
        "hs_fail_rw_ok": int(np.sum(fail_hs & ~fail_rw)),
        "both_fail": int(np.sum(fail_hs & fail_rw)),
    }
    total = int(conditioned.sum())
    proportions = {
        k: (v / total if total else 0.0) for k, v in counts.items()
    }
    return ComplementarityReport(
        tau=tau,
        n_instances=n,
        n_conditioned=total,
        counts=counts,
        proportions=proportions,
    )
