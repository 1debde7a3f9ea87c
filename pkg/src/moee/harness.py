"""Dataset loading and per-task evaluation pipelines.

Datasets are line-delimited JSON. Schemas:
  sts            {id, s1, s2, score}
  classification {id, text, label, split}   split in {train, test}
  clustering     {id, text, label}
  pairs          {id, s1, s2, label}        label in {0, 1}
  rerank         {query_id, query, candidates: [{text, relevant}]}
  summarization  same rows as sts (generic scored-pair kernel)
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .embedder import extract
from .errors import (
    ConfigError,
    CoverageError,
    DataValidationError,
    UndefinedMetricError,
)
from .simkit import SimilaritySpec, cosine, pair_score
from .store import BundleContainer

TASK_KINDS = ("sts", "classification", "clustering", "pairs", "rerank", "summarization")

TASK_METRIC = {
    "sts": "spearman",
    "summarization": "spearman",
    "classification": "accuracy",
    "clustering": "v_measure",
    "pairs": "average_precision",
    "rerank": "map",
}


@dataclass
class TaskDataset:
    kind: str
    dataset_id: str
    rows: list[dict]


@dataclass
class TaskScore:
    task: str
    dataset_id: str
    metric: str
    value: float
    fingerprint: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "dataset": self.dataset_id,
            "metric": self.metric,
            "value": self.value,
            "fingerprint": self.fingerprint,
        }


_SCHEMAS = {
    "sts": {"id": (str, int), "s1": str, "s2": str, "score": (int, float)},
    "summarization": {"id": (str, int), "s1": str, "s2": str, "score": (int, float)},
    "classification": {"id": (str, int), "text": str, "label": (str, int), "split": str},
    "clustering": {"id": (str, int), "text": str, "label": (str, int)},
    "pairs": {"id": (str, int), "s1": str, "s2": str, "label": int},
    "rerank": {"query_id": (str, int), "query": str, "candidates": list},
}


def _check_row(row: dict, kind: str, lineno: int) -> None:
    schema = _SCHEMAS[kind]
    for key, types in schema.items():
        if key not in row:
            raise DataValidationError(f"line {lineno}: missing field {key!r}")
        if not isinstance(row[key], types):
            raise DataValidationError(f"line {lineno}: field {key!r} has wrong type")
    if kind == "pairs" and row["label"] not in (0, 1):
        raise DataValidationError(f"line {lineno}: pair label must be 0 or 1")
    if kind in ("sts", "summarization") and not np.isfinite(row["score"]):
        raise DataValidationError(f"line {lineno}: non-finite gold score")
    if kind == "classification" and row["split"] not in ("train", "test"):
        raise DataValidationError(f"line {lineno}: split must be train or test")
    if kind == "rerank":
        if not row["candidates"]:
            raise DataValidationError(f"line {lineno}: empty candidate list")
        for c in row["candidates"]:
            if not isinstance(c, dict) or "text" not in c or "relevant" not in c:
                raise DataValidationError(f"line {lineno}: bad candidate entry")
            if c["relevant"] not in (0, 1, True, False):
                raise DataValidationError(f"line {lineno}: candidate relevance must be 0/1")


def load_dataset(path, kind: str) -> TaskDataset:
    if kind not in TASK_KINDS:
        raise ConfigError(f"unknown task kind {kind!r}")
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"line {lineno}: invalid JSON ({exc})") from exc
            _check_row(row, kind, lineno)
            rows.append(row)
    if not rows:
        raise DataValidationError(f"{path}: dataset is empty")
    import os

    return TaskDataset(kind=kind, dataset_id=os.path.basename(str(path)), rows=rows)


class BundleIndex:
    """Looks bundles up by raw text for one prompt id."""

    def __init__(self, container: BundleContainer, prompt_id: int = 0):
        self.prompt_id = prompt_id
        self._by_text = {}
        for rid in container.record_ids:
            e = container.entry(rid)
            if (e["prompt_id"] or 0) == (prompt_id or 0):
                self._by_text[e["text"]] = rid
        self._container = container
        self._cache: dict[str, object] = {}

    def lookup(self, texts) -> list:
        missing = [t for t in texts if t not in self._by_text]
        if missing:
            ids = ", ".join(repr(t[:40]) for t in missing[:5])
            raise CoverageError(
                f"{len(missing)} text(s) have no bundle under prompt {self.prompt_id}: {ids}"
            )
        out = []
        for t in texts:
            rid = self._by_text[t]
            if rid not in self._cache:
                self._cache[rid] = self._container.get(rid)
            out.append(self._cache[rid])
        return out


def _spec_fingerprint(spec: SimilaritySpec, prompt_id: int, **extra) -> dict:
    fp = {"mode": spec.mode, "alpha": spec.alpha, "prompt": prompt_id}
    fp.update(extra)
    return fp


def _pair_scores(rows, index: BundleIndex, spec: SimilaritySpec, s1="s1", s2="s2"):
    texts_a = [r[s1] for r in rows]
    texts_b = [r[s2] for r in rows]
    ba = index.lookup(texts_a)
    bb = index.lookup(texts_b)
    scores = []
    for a, b in zip(ba, bb):
        scores.append(
            pair_score(
                spec,
                extract(a, "hs:last:last").values,
                extract(b, "hs:last:last").values,
                extract(a, "rw:last").values,
                extract(b, "rw:last").values,
            )
        )
    return np.asarray(scores)


def run_sts(dataset: TaskDataset, index: BundleIndex, spec: SimilaritySpec) -> TaskScore:
    if dataset.kind not in ("sts", "summarization"):
        raise ConfigError(f"run_sts cannot handle kind {dataset.kind!r}")
    predicted = _pair_scores(dataset.rows, index, spec)
    gold = np.asarray([r["score"] for r in dataset.rows], dtype=np.float64)
    value = metrics.spearman(predicted, gold)
    return TaskScore(
        task=dataset.kind,
        dataset_id=dataset.dataset_id,
        metric="spearman",
        value=value,
        fingerprint=_spec_fingerprint(spec, index.prompt_id),
    )


def _feature_vector(bundle, spec: SimilaritySpec) -> np.ndarray:
    """Single feature vector for classifier/clustering tasks.

    weighted_sum has no native vector form; [hs_unit; sqrt(alpha)*rw_unit]
    reproduces the alpha-weighted cosine sum as its inner-product kernel.
    """
    from .embedder import extract_hs, extract_rw, HsStrategy, moee_concat, scaled_concat

    hs = extract_hs(bundle, HsStrategy("last", "last"))
    rw = extract_rw(bundle, "last")
    if spec.mode == "hs_only":
        return hs.values
    if spec.mode == "rw_only":
        return rw.values
    if spec.mode == "concat_cosine":
        return moee_concat(hs, rw, normalize=True).values
    return scaled_concat(hs, rw, spec.alpha).values


def run_classification(
    dataset: TaskDataset, index: BundleIndex, spec: SimilaritySpec
) -> TaskScore:
    if dataset.kind != "classification":
        raise ConfigError(f"run_classification cannot handle kind {dataset.kind!r}")
    train = [r for r in dataset.rows if r["split"] == "train"]
    test = [r for r in dataset.rows if r["split"] == "test"]
    if not train or not test:
        raise DataValidationError("classification needs both train and test rows")
    tr_bundles = index.lookup([r["text"] for r in train])
    te_bundles = index.lookup([r["text"] for r in test])
    X_tr = np.stack([_feature_vector(b, spec) for b in tr_bundles])
    X_te = np.stack([_feature_vector(b, spec) for b in te_bundles])
    clf = metrics.train_logreg(X_tr, [r["label"] for r in train])
    acc = metrics.accuracy(clf.predict(X_te), np.asarray([r["label"] for r in test]))
    return TaskScore(
        task="classification",
        dataset_id=dataset.dataset_id,
        metric="accuracy",
        value=acc,
        fingerprint=_spec_fingerprint(spec, index.prompt_id),
    )


def run_clustering(
    dataset: TaskDataset,
    index: BundleIndex,
    spec: SimilaritySpec,
    seed: int = 0,
    restarts: int = 1,
) -> TaskScore:
    if dataset.kind != "clustering":
        raise ConfigError(f"run_clustering cannot handle kind {dataset.kind!r}")
    bundles = index.lookup([r["text"] for r in dataset.rows])
    X = np.stack([_feature_vector(b, spec) for b in bundles])
    labels = [r["label"] for r in dataset.rows]
    classes = sorted(set(labels), key=str)
    gold = metrics.Partition([classes.index(l) for l in labels])
    k = len(classes)
    values = []
    for r in range(restarts):
        pred = metrics.kmeans(X, k, seed=seed + r)
        values.append(metrics.v_measure(pred, gold))
    return TaskScore(
        task="clustering",
        dataset_id=dataset.dataset_id,
        metric="v_measure",
        value=float(np.mean(values)),
        fingerprint=_spec_fingerprint(spec, index.prompt_id, seed=seed, restarts=restarts, k=k),
    )


def run_pair_classification(
    dataset: TaskDataset, index: BundleIndex, spec: SimilaritySpec
) -> TaskScore:
    if dataset.kind != "pairs":
        raise ConfigError(f"run_pair_classification cannot handle kind {dataset.kind!r}")
    predicted = _pair_scores(dataset.rows, index, spec)
    labels = np.asarray([r["label"] for r in dataset.rows])
    value = metrics.average_precision(predicted, labels)
    return TaskScore(
        task="pairs",
        dataset_id=dataset.dataset_id,
        metric="average_precision",
        value=value,
        fingerprint=_spec_fingerprint(spec, index.prompt_id),
    )


def run_rerank(dataset: TaskDataset, index: BundleIndex, spec: SimilaritySpec) -> TaskScore:
    if dataset.kind != "rerank":
        raise ConfigError(f"run_rerank cannot handle kind {dataset.kind!r}")
    queries = []
    for row in dataset.rows:
        cand_texts = [c["text"] for c in row["candidates"]]
        labels = np.asarray([int(c["relevant"]) for c in row["candidates"]])
        if not np.any(labels == 1):
            raise UndefinedMetricError(f"query {row['query_id']} has no relevant candidates")
        (qb,) = index.lookup([row["query"]])
        cands = index.lookup(cand_texts)
        scores = np.asarray(
            [
                pair_score(
                    spec,
                    extract(qb, "hs:last:last").values,
                    extract(c, "hs:last:last").values,
                    extract(qb, "rw:last").values,
                    extract(c, "rw:last").values,
                )
                for c in cands
            ]
        )
        queries.append((scores, labels))
    value = metrics.mean_average_precision(queries)
    return TaskScore(
        task="rerank",
        dataset_id=dataset.dataset_id,
        metric="map",
        value=value,
        fingerprint=_spec_fingerprint(spec, index.prompt_id),
    )


_RUNNERS = {
    "sts": run_sts,
    "summarization": run_sts,
    "pairs": run_pair_classification,
    "rerank": run_rerank,
}


def run_task(
    dataset: TaskDataset,
    container: BundleContainer,
    spec: SimilaritySpec,
    prompt_id: int = 0,
    seed: int = 0,
    restarts: int = 1,
) -> TaskScore:
    index = BundleIndex(container, prompt_id)
    if dataset.kind == "classification":
        return run_classification(dataset, index, spec)
    if dataset.kind == "clustering":
        return run_clustering(dataset, index, spec, seed=seed, restarts=restarts)
    return _RUNNERS[dataset.kind](dataset, index, spec)


def _mode_to_spec(mode: str, alpha: float) -> SimilaritySpec:
    named = {
        "hs": SimilaritySpec("hs_only"),
        "rw": SimilaritySpec("rw_only"),
        "concat": SimilaritySpec("concat_cosine"),
    }
    if mode in named:
        return named[mode]
    if mode == "sum":
        return SimilaritySpec("weighted_sum", alpha=alpha)
    raise ConfigError(f"unknown similarity mode {mode!r}")


def _sweep_cell(args):
    dataset, container_path, mode, prompt_id, alpha, seed, restarts = args
    from .store import read_container

    container = read_container(container_path)
    cell = {
        "task": dataset.kind,
        "dataset": dataset.dataset_id,
        "strategy": mode,
        "prompt": prompt_id,
        "alpha": alpha,
        "metric": TASK_METRIC[dataset.kind],
    }
    try:
        spec = _mode_to_spec(mode, alpha)
        score = run_task(
            dataset, container, spec, prompt_id=prompt_id, seed=seed, restarts=restarts
        )
        cell["value"] = score.value
        cell["error"] = None
    except Exception as exc:
        cell["value"] = None
        cell["error"] = f"{type(exc).__name__}: {exc}"
    return cell


def sweep(
    dataset: TaskDataset,
    container_path,
    modes,
    prompts,
    alphas,
    seed: int = 0,
    restarts: int = 1,
    jobs: int = 1,
) -> list[dict]:
    """Cartesian sweep; rows ordered by (strategy, prompt, alpha) regardless
    of execution order, and sub-run errors are recorded per cell."""
    configs = [
        (dataset, str(container_path), mode, prompt, alpha, seed, restarts)
        for mode in sorted(modes)
        for prompt in sorted(prompts)
        for alpha in sorted(alphas)
    ]
    if jobs <= 1:
        return [_sweep_cell(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, configs))
