"""Command-line interface: model generation, forward/dump, embedding,
evaluation, sweeps, analyses, container validation.

Exit codes: 0 success, 1 domain error, 2 usage error. Every command
echoes its resolved configuration as a fingerprint header line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, harness
from .embedder import PromptTemplate, apply_prompt, extract
from .engine import MoEConfig, forward, gen_toy_model, load_model, save_model, tokenize
from .errors import MoeeError
from .harness import TASK_KINDS, load_dataset, run_task, sweep
from .metrics import Partition
from .simkit import SimilaritySpec
from .store import (
    bundle_from_trace,
    read_container,
    toy_fingerprint,
    validate_container,
    write_container,
)


def _fingerprint_line(args: argparse.Namespace, keys) -> str:
    fp = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return "# fingerprint: " + json.dumps(fp, sort_keys=True)


def _default_seed() -> int:
    return int(os.environ.get("MOEE_SEED", "0"))


def _parse_experts(spec: str, layers: int) -> tuple[int, ...]:
    parts = [int(p) for p in spec.split(",")]
    if len(parts) == 1:
        return tuple(parts * layers)
    return tuple(parts)


def _cmd_gen_model(args) -> int:
    config = MoEConfig(
        num_layers=args.layers,
        hidden_dim=args.dim,
        ffn_dim=args.ffn_dim if args.ffn_dim else 4 * args.dim,
        num_heads=args.heads,
        experts_per_layer=_parse_experts(args.experts, args.layers),
        top_k=args.topk,
        vocab_size=args.vocab_size,
        max_seq_len=args.max_seq_len,
        rng_seed=args.seed,
    )
    nbytes = save_model(gen_toy_model(config), args.output)
    print(_fingerprint_line(args, ["layers", "dim", "experts", "topk", "seed"]))
    print(f"wrote {args.output} ({nbytes} bytes)")
    return 0


def _gather_texts(args) -> list[str]:
    if args.texts:
        with open(args.texts, "r", encoding="utf-8") as f:
            texts = [line.rstrip("\n") for line in f if line.strip()]
    else:
        ds = load_dataset(args.data, args.kind)
        texts = []
        for row in ds.rows:
            if ds.kind in ("sts", "summarization", "pairs"):
                texts.extend([row["s1"], row["s2"]])
            elif ds.kind == "rerank":
                texts.append(row["query"])
                texts.extend(c["text"] for c in row["candidates"])
            else:
                texts.append(row["text"])
    seen = set()
    unique = []
    for t in texts:
        if t not in seen:
            seen.add(t)
            unique.append(t)
    return unique


def _cmd_run(args) -> int:
    model = load_model(args.model)
    template = PromptTemplate.by_id(args.prompt)
    texts = _gather_texts(args)
    records = []
    for text in texts:
        trace = forward(model, tokenize(apply_prompt(template, text)))
        records.append(
            bundle_from_trace(trace, text, prompt_id=args.prompt, token_mode=args.tokens)
        )
    nbytes = write_container(records, args.output, toy_fingerprint(model.config))
    print(_fingerprint_line(args, ["model", "prompt", "tokens"]))
    print(f"wrote {args.output}: {len(records)} records ({nbytes} bytes)")
    return 0


def _cmd_embed(args) -> int:
    container = read_container(args.container)
    out = sys.stdout if args.output == "-" else open(args.output, "w", encoding="utf-8")
    try:
        out.write(
            json.dumps(
                {"fingerprint": {"strategy": args.strategy, "prompt": args.prompt}},
                sort_keys=True,
            )
            + "\n"
        )
        n = 0
        for b in container.bundles():
            if (b.prompt_id or 0) != (args.prompt or 0):
                continue
            vec = extract(b, args.strategy)
            out.write(
                json.dumps(
                    {
                        "id": b.record_id,
                        "strategy": vec.strategy,
                        "dim": vec.dim,
                        "values": [float(v) for v in vec.values],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            n += 1
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"embedded {n} records with {args.strategy}", file=sys.stderr)
    return 0


def _make_spec(mode: str, alpha: float) -> SimilaritySpec:
    if mode == "sum":
        return SimilaritySpec("weighted_sum", alpha=alpha)
    return SimilaritySpec({"hs": "hs_only", "rw": "rw_only", "concat": "concat_cosine"}[mode])


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.data, args.task)
    container = read_container(args.container)
    spec = _make_spec(args.mode, args.alpha)
    score = run_task(
        dataset,
        container,
        spec,
        prompt_id=args.prompt,
        seed=args.seed,
        restarts=args.restarts,
    )
    print(_fingerprint_line(args, ["task", "data", "mode", "alpha", "prompt", "seed", "restarts"]))
    print(
        f"{score.task:<14} {score.dataset_id:<24} {args.mode:<8} "
        f"{args.prompt:<6} {args.alpha:<6} {score.metric:<18} {score.value:.12f}"
    )
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(json.dumps(score.to_dict(), sort_keys=True) + "\n")
    return 0


def _cmd_sweep(args) -> int:
    dataset = load_dataset(args.data, args.kind)
    cells = sweep(
        dataset,
        args.container,
        modes=args.modes.split(","),
        prompts=[int(p) for p in args.prompts.split(",")],
        alphas=[float(a) for a in args.alphas.split(",")],
        seed=args.seed,
        restarts=args.restarts,
        jobs=args.jobs,
    )
    print(_fingerprint_line(args, ["kind", "data", "modes", "prompts", "alphas", "seed"]))
    header = f"{'task':<14} {'dataset':<24} {'strategy':<8} {'prompt':<6} {'alpha':<6} {'metric':<18} value"
    print(header)
    for c in cells:
        value = "ERROR" if c["value"] is None else f"{c['value']:.12f}"
        print(
            f"{c['task']:<14} {c['dataset']:<24} {c['strategy']:<8} "
            f"{c['prompt']:<6} {c['alpha']:<6} {c['metric']:<18} {value}"
        )
        if c["error"]:
            print(f"  error: {c['error']}", file=sys.stderr)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            for c in cells:
                f.write(json.dumps(c, sort_keys=True) + "\n")
    return 0


def _load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _emit_report(report: dict, output: str | None) -> None:
    text = json.dumps(report, sort_keys=True, indent=2)
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    print(text)


def _cmd_analyze(args) -> int:
    print(_fingerprint_line(args, ["what", "tau"]))
    if args.what == "agreement":
        a = Partition([int(x) for x in _load_json(args.a)])
        b = Partition([int(x) for x in _load_json(args.b)])
        _emit_report(analysis.cluster_agreement(a, b).to_dict(), args.output)
    elif args.what == "prompts":
        raw = _load_json(args.scores)
        scores = {
            method: {int(p): per_ds for p, per_ds in per_prompt.items()}
            for method, per_prompt in raw.items()
        }
        _emit_report(analysis.prompt_robustness(scores).to_dict(), args.output)
    elif args.what == "errors":
        report = analysis.complementarity_errors(
            _load_json(args.hs), _load_json(args.rw), _load_json(args.gold), tau=args.tau
        )
        _emit_report(report.to_dict(), args.output)
    else:  # prompt-corr
        raw = _load_json(args.scores)
        pc = analysis.prompt_correlation_matrix(
            {int(p): v for p, v in raw["hs"].items()},
            {int(p): v for p, v in raw["rw"].items()},
        )
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as f:
                f.write("," + ",".join(pc.labels) + "\n")
                for label, row in zip(pc.labels, pc.matrix):
                    f.write(label + "," + ",".join(f"{v:.6f}" for v in row) + "\n")
        _emit_report(pc.to_dict(), args.output)
    return 0


def _cmd_validate(args) -> int:
    report = validate_container(args.path)
    print(_fingerprint_line(args, ["path"]))
    if report.file_error:
        print(f"FILE FAIL  {report.file_error}")
    for rid, ok, reason in report.entries:
        print(f"{'PASS' if ok else 'FAIL'}  {rid}" + (f"  {reason}" if reason else ""))
    print(f"{report.num_failures} failure(s) in {len(report.entries)} record(s)")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moee", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-model", help="generate a seeded toy MoE model")
    g.add_argument("--layers", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--ffn-dim", type=int, default=0)
    g.add_argument("--heads", type=int, default=1)
    g.add_argument("--experts", required=True, help="count or comma list per layer")
    g.add_argument("--topk", type=int, required=True)
    g.add_argument("--vocab-size", type=int, default=300)
    g.add_argument("--max-seq-len", type=int, default=256)
    g.add_argument("--seed", type=int, default=_default_seed())
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_cmd_gen_model)

    r = sub.add_parser("run", help="run texts through a model into a MOEA container")
    r.add_argument("--model", required=True)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--texts", help="file with one text per line")
    src.add_argument("--data", help="JSONL dataset to gather texts from")
    r.add_argument("--kind", choices=TASK_KINDS, help="dataset kind (with --data)")
    r.add_argument("--prompt", type=int, default=0)
    r.add_argument("--tokens", choices=("all", "last"), default="last")
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("embed", help="extract embeddings from a container")
    e.add_argument("--container", required=True)
    e.add_argument("--strategy", default="concat")
    e.add_argument("--prompt", type=int, default=0)
    e.add_argument("-o", "--output", default="-")
    e.set_defaults(func=_cmd_embed)

    ev = sub.add_parser("eval", help="evaluate one task")
    ev.add_argument("task", choices=TASK_KINDS)
    ev.add_argument("--data", required=True)
    ev.add_argument("--container", required=True)
    ev.add_argument("--mode", choices=("hs", "rw", "concat", "sum"), default="sum")
    ev.add_argument("--alpha", type=float, default=1.0)
    ev.add_argument("--prompt", type=int, default=0)
    ev.add_argument("--seed", type=int, default=_default_seed())
    ev.add_argument("--restarts", type=int, default=1)
    ev.add_argument("-o", "--output")
    ev.set_defaults(func=_cmd_eval)

    sw = sub.add_parser("sweep", help="cartesian strategy/prompt/alpha sweep")
    sw.add_argument("--data", required=True)
    sw.add_argument("--kind", choices=TASK_KINDS, required=True)
    sw.add_argument("--container", required=True)
    sw.add_argument("--modes", default="hs,rw,concat,sum")
    sw.add_argument("--prompts", default="0")
    sw.add_argument("--alphas", default="0.25,0.5,1,2,4")
    sw.add_argument("--seed", type=int, default=_default_seed())
    sw.add_argument("--restarts", type=int, default=1)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("-o", "--output")
    sw.set_defaults(func=_cmd_sweep)

    an = sub.add_parser("analyze", help="agreement / prompts / errors / prompt-corr")
    an.add_argument("what", choices=("agreement", "prompts", "errors", "prompt-corr"))
    an.add_argument("--a", help="JSON int list (agreement)")
    an.add_argument("--b", help="JSON int list (agreement)")
    an.add_argument("--scores", help="JSON scores file (prompts, prompt-corr)")
    an.add_argument("--hs", help="JSON float list (errors)")
    an.add_argument("--rw", help="JSON float list (errors)")
    an.add_argument("--gold", help="JSON float list (errors)")
    an.add_argument("--tau", type=float, default=0.1)
    an.add_argument("--csv", help="matrix CSV output (prompt-corr)")
    an.add_argument("-o", "--output")
    an.set_defaults(func=_cmd_analyze)

    v = sub.add_parser("validate", help="validate a MOEA container")
    v.add_argument("path")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MoeeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
