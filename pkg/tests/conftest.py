import json

import numpy as np
import pytest

from moee.engine import MoEConfig, gen_toy_model
from moee.store import ActivationBundle, write_container


def tiny_config(**overrides):
    base = dict(
        num_layers=2,
        hidden_dim=8,
        ffn_dim=16,
        num_heads=2,
        experts_per_layer=(4, 4),
        top_k=2,
        vocab_size=300,
        max_seq_len=64,
        rng_seed=7,
    )
    base.update(overrides)
    return MoEConfig(**base)


@pytest.fixture
def tiny_model():
    return gen_toy_model(tiny_config())


def random_gates(rng, shape):
    logits = rng.normal(size=shape)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def make_bundle(
    record_id="r0",
    text="text",
    prompt_id=0,
    token_mode="all",
    num_layers=2,
    num_tokens=3,
    hidden_dim=4,
    experts=(4, 4),
    seed=0,
):
    rng = np.random.default_rng(seed)
    return ActivationBundle(
        record_id=record_id,
        text=text,
        prompt_id=prompt_id,
        token_mode=token_mode,
        hidden_states=rng.normal(size=(num_layers, num_tokens, hidden_dim)).astype(
            np.float32
        ),
        routing_weights=[random_gates(rng, (num_tokens, n)) for n in experts],
    )


def fingerprint_for(bundle, name="test"):
    return {
        "name": name,
        "num_layers": bundle.num_layers,
        "hidden_dim": bundle.hidden_dim,
        "experts_per_layer": bundle.experts_per_layer,
        "source": "toy",
    }


def container_path(tmp_path, bundles, name="c.moea"):
    path = tmp_path / name
    write_container(bundles, path, fingerprint_for(bundles[0]))
    return path


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path
