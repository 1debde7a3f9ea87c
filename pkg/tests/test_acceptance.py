"""Acceptance gate: one test per top-level guarantee, each printing a
PASS/FAIL line (run with -s to see them on success)."""

import itertools
import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import make_bundle, write_jsonl
from moee.analysis import complementarity_errors, prompt_robustness
from moee.embedder import extract_rw
from moee.engine import (
    MoEConfig,
    forward,
    gen_toy_model,
    load_model,
    moe_layer_apply,
    save_model,
    _expert_act,
)
from moee.errors import DataValidationError, FormatError
from moee.metrics import (
    Partition,
    ami,
    average_precision,
    jaccard_pairs,
    mean_average_precision,
    ndcg_at_k,
    nmi,
    spearman,
    v_measure,
)
from moee.simkit import SimilaritySpec, cosine, pair_score
from moee.store import read_container, write_container


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"FAIL {name}")
        raise
    print(f"PASS {name}")


def small_config(rng):
    n = int(rng.integers(2, 9))
    layers = int(rng.integers(1, 5))
    return MoEConfig(
        num_layers=layers,
        hidden_dim=8,
        ffn_dim=16,
        num_heads=1,
        experts_per_layer=(n,) * layers,
        top_k=int(rng.integers(1, n + 1)),
        vocab_size=300,
        max_seq_len=32,
        rng_seed=int(rng.integers(0, 2**31)),
    )


def test_gate_normalization():
    """Routing rows are probability distributions on every model and input."""
    with criterion("gate normalization (100 models x 100 inputs, 1e-6)"):
        start = time.perf_counter()
        rng = np.random.default_rng(101)
        for _ in range(100):
            cfg = small_config(rng)
            model = gen_toy_model(cfg)
            for _ in range(100):
                n_tok = int(rng.integers(1, 5))
                ids = [int(v) for v in rng.integers(0, 256, size=n_tok)]
                trace = forward(model, ids)
                for g in trace.routing_weights:
                    assert np.all(np.abs(g.sum(axis=1) - 1.0) <= 1e-6)
        assert time.perf_counter() - start < 30.0


def test_mixture_oracle():
    """top_k=N layer output matches a dense per-expert loop."""
    with criterion("mixture oracle (50 layers, top_k=N vs dense loop, 1e-5)"):
        rng = np.random.default_rng(202)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            cfg = MoEConfig(
                num_layers=1,
                hidden_dim=int(rng.integers(4, 13)),
                ffn_dim=16,
                num_heads=1,
                experts_per_layer=(n,),
                top_k=n,
                vocab_size=300,
                max_seq_len=32,
                rng_seed=int(rng.integers(0, 2**31)),
            )
            layer = gen_toy_model(cfg).layers[0]
            h = rng.normal(size=(int(rng.integers(1, 6)), cfg.hidden_dim))
            out, gates, _ = moe_layer_apply(h, layer, top_k=n)
            dense = np.zeros_like(h)
            for i, (w_in, w_out) in enumerate(layer.experts):
                y = _expert_act(h @ w_in.astype(np.float64)) @ w_out.astype(np.float64)
                dense += gates[:, i][:, None] * y
            assert np.allclose(out, dense, atol=1e-5)


def test_rw_dimensionality():
    """Routing embeddings concatenate per-layer gate rows."""
    with criterion("RW dims 1792 / 1440 / 1024 for the three reference shapes"):
        for layers, experts, dim in ((28, 64, 1792), (24, 60, 1440), (16, 64, 1024)):
            b = make_bundle(num_layers=layers, experts=(experts,) * layers,
                            token_mode="all", num_tokens=2)
            assert extract_rw(b, token_pool="last").dim == dim


def pair_fixture(n_pairs, seed):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_pairs):
        a = make_bundle(record_id=f"a{i}", seed=int(rng.integers(0, 2**31)))
        b = make_bundle(record_id=f"b{i}", seed=int(rng.integers(0, 2**31)))
        pairs.append((a, b))
    gold = list(rng.normal(size=n_pairs))
    return pairs, gold


def raw_parts(bundle):
    hs = bundle.hidden_states[-1, -1, :].astype(np.float64)
    rw = np.concatenate([g[-1, :] for g in bundle.routing_weights]).astype(np.float64)
    return hs, rw


def score_pair(spec, a, b):
    hs_a, rw_a = raw_parts(a)
    hs_b, rw_b = raw_parts(b)
    return pair_score(spec, hs_a, hs_b, rw_a, rw_b)


def test_alpha_zero_reduction():
    """weighted_sum with alpha=0 scores exactly like the hidden-state cosine."""
    with criterion("alpha=0 reduction equals hs_only Spearman to 12 decimals"):
        pairs, gold = pair_fixture(40, seed=303)
        zero = SimilaritySpec("weighted_sum", alpha=0.0)
        hs_only = SimilaritySpec("hs_only")
        s_zero = [score_pair(zero, a, b) for a, b in pairs]
        s_hs = [score_pair(hs_only, a, b) for a, b in pairs]
        assert abs(spearman(gold, s_zero) - spearman(gold, s_hs)) < 1e-12


def test_concat_sum_equivalence():
    """Normalized-concat cosine ranks pairs identically to the alpha=1 sum."""
    with criterion("concat/sum Spearman equivalence (20 fixtures x 50 pairs, exact)"):
        summed = SimilaritySpec("weighted_sum", alpha=1.0)
        concat = SimilaritySpec("concat_cosine")
        for f in range(20):
            pairs, gold = pair_fixture(50, seed=1000 + f)
            s_sum = [score_pair(summed, a, b) for a, b in pairs]
            s_cat = [score_pair(concat, a, b) for a, b in pairs]
            assert spearman(gold, s_sum) == spearman(gold, s_cat)


def brute_rank(x):
    x = list(x)
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and x[order[j]] == x[order[i]]:
            j += 1
        avg = (i + j + 1) / 2.0
        for t in range(i, j):
            ranks[order[t]] = avg
        i = j
    return ranks


def brute_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def brute_entropy(counts):
    n = sum(counts)
    return -sum(c / n * math.log(c / n) for c in counts if c)


def brute_mi(a, b):
    n = len(a)
    mi = 0.0
    for u in set(a):
        for v in set(b):
            nij = sum(1 for x, y in zip(a, b) if x == u and y == v)
            if nij:
                ai = sum(1 for x in a if x == u)
                bj = sum(1 for y in b if y == v)
                mi += nij / n * math.log(n * nij / (ai * bj))
    return mi


def brute_jaccard(a, b):
    both = either = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        both += sa and sb
        either += sa or sb
    return both / either if either else 1.0


def brute_ap(scores, labels):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if labels[i]:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions)


def test_metric_oracles():
    """Every ranking and clustering metric matches a brute-force enumeration."""
    with criterion("metric oracles (brute force n<=12, AMI null, AP 0.8333)"):
        rng = np.random.default_rng(404)
        for _ in range(30):
            n = int(rng.integers(4, 13))
            x = [float(v) for v in rng.integers(0, 6, size=n)]
            y = [float(v) for v in rng.integers(0, 6, size=n)]
            if len(set(x)) > 1 and len(set(y)) > 1:
                ref = brute_pearson(brute_rank(x), brute_rank(y))
                assert abs(spearman(x, y) - ref) < 1e-9

            a = [int(v) for v in rng.integers(0, 3, size=n)]
            b = [int(v) for v in rng.integers(0, 3, size=n)]
            pa, pb = Partition(a), Partition(b)
            counts_a = [a.count(u) for u in set(a)]
            counts_b = [b.count(u) for u in set(b)]
            mi = brute_mi(a, b)
            ha, hb = brute_entropy(counts_a), brute_entropy(counts_b)
            hom = 1.0 if ha == 0 else mi / ha
            com = 1.0 if hb == 0 else mi / hb
            ref_v = 0.0 if hom + com == 0 else 2 * hom * com / (hom + com)
            assert abs(v_measure(pa, pb) - ref_v) < 1e-9
            ref_nmi = 1.0 if ha + hb == 0 else mi / ((ha + hb) / 2)
            assert abs(nmi(pa, pb) - ref_nmi) < 1e-9
            assert abs(jaccard_pairs(pa, pb) - brute_jaccard(a, b)) < 1e-9

            scores = [float(v) for v in rng.normal(size=n)]
            labels = [int(v) for v in rng.integers(0, 2, size=n)]
            if any(labels):
                assert abs(average_precision(scores, labels) - brute_ap(scores, labels)) < 1e-9
            gains = [float(v) for v in rng.integers(0, 4, size=n)]
            if any(gains):
                k = int(rng.integers(1, n + 1))
                order = sorted(range(n), key=lambda i: (-scores[i], i))[:k]
                dcg = sum(gains[i] / math.log2(r + 1) for r, i in enumerate(order, 1))
                ideal = sorted(gains, reverse=True)[:k]
                idcg = sum(g / math.log2(r + 1) for r, g in enumerate(ideal, 1))
                assert abs(ndcg_at_k(scores, gains, k) - dcg / idcg) < 1e-9

        queries = [([3.0, 2.0, 1.0], [1, 0, 1]), ([2.0, 1.0], [1, 0])]
        ref_map = sum(brute_ap(s, l) for s, l in queries) / 2
        assert abs(mean_average_precision(queries) - ref_map) < 1e-9

        # three candidates, relevant at ranks 1 and 3
        assert abs(average_precision([3.0, 2.0, 1.0], [1, 0, 1]) - 5 / 6) < 1e-9

        # AMI is centered: mean over random relabelings sits near zero
        labels_a = [i // 20 for i in range(60)]
        labels_b = list(labels_a)
        vals = []
        perm_rng = np.random.default_rng(505)
        for _ in range(200):
            perm_rng.shuffle(labels_b)
            vals.append(ami(Partition(labels_a), Partition(labels_b)))
        assert abs(float(np.mean(vals))) < 0.05


def test_synthetic_complementarity():
    """Combining both similarity channels beats either channel alone."""
    with criterion("synthetic complementarity (sum beats both singles by >= 0.1)"):
        grid = [(a / 8.0, b / 8.0) for a in range(8) for b in range(8)]
        hs_pairs, rw_pairs, gold = [], [], []
        for a, b in grid:
            hs_pairs.append((np.array([1.0, 0.0]), np.array([a, math.sqrt(1 - a * a)])))
            rw_pairs.append((np.array([1.0, 0.0]), np.array([b, math.sqrt(1 - b * b)])))
            gold.append(a + b)
        summed = SimilaritySpec("weighted_sum", alpha=1.0)
        s_sum = [pair_score(summed, *h, *r) for h, r in zip(hs_pairs, rw_pairs)]
        s_hs = [cosine(*h) for h in hs_pairs]
        s_rw = [cosine(*r) for r in rw_pairs]
        rho_sum = spearman(gold, s_sum)
        rho_hs = spearman(gold, s_hs)
        rho_rw = spearman(gold, s_rw)
        assert rho_sum >= rho_hs + 0.1
        assert rho_sum >= rho_rw + 0.1


def test_prompt_robustness_machinery():
    """Summary stats on a hand dataset and proportions that always partition."""
    with criterion("prompt robustness (mean 5, variance 20/3) and proportion sums"):
        scores = {"hs": {p: {"ds": float(p)} for p in range(1, 10)}}
        stats = prompt_robustness(scores).stats["hs"]["ds"]
        assert abs(stats["mean"] - 5.0) < 1e-9
        assert abs(stats["variance"] - 20 / 3) < 1e-9
        rng = np.random.default_rng(606)
        for _ in range(25):
            n = int(rng.integers(5, 40))
            r = complementarity_errors(
                rng.normal(size=n), rng.normal(size=n), rng.normal(size=n), tau=0.1
            )
            if r.n_conditioned:
                assert abs(sum(r.proportions.values()) - 1.0) < 1e-9


def test_format_round_trip(tmp_path):
    """Model and activation files re-serialize byte for byte; bad files refuse."""
    with criterion("format round-trips byte-identical; corrupt files rejected"):
        cfg = MoEConfig(num_layers=2, hidden_dim=8, ffn_dim=16, num_heads=2,
                        experts_per_layer=(4, 4), top_k=2, vocab_size=300,
                        max_seq_len=64, rng_seed=11)
        model = gen_toy_model(cfg)
        m1 = tmp_path / "a.moem"
        m2 = tmp_path / "b.moem"
        save_model(model, m1)
        save_model(load_model(m1), m2)
        assert m1.read_bytes() == m2.read_bytes()

        bundles = [make_bundle(record_id=f"r{i}", text=f"t{i}", seed=i) for i in range(3)]
        fp = {"name": "toy", "num_layers": 2, "hidden_dim": 4,
              "experts_per_layer": [4, 4], "source": "toy"}
        c1 = tmp_path / "a.moea"
        c2 = tmp_path / "b.moea"
        write_container(bundles, c1, fp)
        back = read_container(c1)
        write_container(list(back.bundles()), c2, back.fingerprint)
        assert c1.read_bytes() == c2.read_bytes()

        corrupt = tmp_path / "bad.moea"
        corrupt.write_bytes(b"XXXX" + c1.read_bytes()[4:])
        with pytest.raises(FormatError):
            read_container(corrupt)
        corrupt_m = tmp_path / "bad.moem"
        corrupt_m.write_bytes(b"XXXX" + m1.read_bytes()[4:])
        with pytest.raises(FormatError):
            load_model(corrupt_m)

        bad = make_bundle(record_id="bad")
        bad.routing_weights[0] = bad.routing_weights[0] * np.float32(0.8)
        with pytest.raises(DataValidationError):
            write_container([bad], tmp_path / "reject.moea", fp)


def cli(*argv, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "moee.cli", *argv],
        capture_output=True, text=True, cwd=cwd,
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def test_end_to_end_determinism(tmp_path):
    """The full CLI pipeline repeats bit for bit, serial or parallel."""
    with criterion("end-to-end determinism (repeat runs and --jobs 1 vs 8)"):
        start = time.perf_counter()
        rows = [
            {"id": i, "s1": f"left sentence {i}", "s2": f"right one {i}",
             "score": float((i * 7) % 5)}
            for i in range(8)
        ]
        data = write_jsonl(tmp_path / "sts.jsonl", rows)
        model = tmp_path / "m.moem"
        cli("gen-model", "--layers", "2", "--dim", "8", "--experts", "4",
            "--topk", "2", "--seed", "7", "-o", str(model), cwd=tmp_path)

        outs = []
        for tag in ("x", "y"):
            cont = tmp_path / f"{tag}.moea"
            cli("run", "--model", str(model), "--data", str(data), "--kind", "sts",
                "-o", str(cont), cwd=tmp_path)
            emb = cli("embed", "--container", str(cont), "--strategy", "concat",
                      cwd=tmp_path)
            table = cli("eval", "sts", "--data", str(data), "--container", str(cont),
                        "--mode", "sum", "--alpha", "1", cwd=tmp_path)
            outs.append((cont.read_bytes(), emb, table))
        assert outs[0] == outs[1]

        sweeps = []
        for jobs in ("1", "8"):
            out = tmp_path / f"sweep{jobs}.jsonl"
            cli("sweep", "--data", str(data), "--kind", "sts",
                "--container", str(tmp_path / "x.moea"), "--modes", "hs,rw,sum",
                "--alphas", "0.5,1", "--jobs", jobs, "-o", str(out), cwd=tmp_path)
            sweeps.append(out.read_bytes())
        assert sweeps[0] == sweeps[1]
        assert time.perf_counter() - start < 60.0
