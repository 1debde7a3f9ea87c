"""Hook a Hugging Face MoE checkpoint's routers and export activations."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .container import record_id_for, write_moea
from .errors import InputError, ResourceError, UnsupportedModelError

PLACEHOLDER = "*sent*"

# Prompt ids: 0 = no prompt, 1-9 = analysis prompts, 10 = the one-word
# quoted template. Kept in sync with the primary toolkit's table.
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

CAPTURE_POINTS = ("pre_topk_softmax", "post_topk")


@dataclass
class ExportSpec:
    model_path: str
    texts: list[str]
    output_path: str
    prompt_id: int = 0
    token_mode: str = "last"
    capture: str = "pre_topk_softmax"
    include_shared: bool = False
    model_name: str = ""

    def __post_init__(self):
        if not self.texts:
            raise InputError("no texts to export")
        if self.token_mode not in ("all", "last"):
            raise InputError(f"bad token mode {self.token_mode!r}")
        if self.capture not in CAPTURE_POINTS:
            raise InputError(f"bad capture point {self.capture!r}")
        if self.prompt_id != 0 and self.prompt_id not in PROMPTS:
            raise InputError(f"unknown prompt id {self.prompt_id}")


def apply_prompt(prompt_id: int, text: str) -> str:
    if prompt_id == 0:
        return text
    return PROMPTS[prompt_id].replace(PLACEHOLDER, text)


def _config_int(config, names):
    for n in names:
        v = getattr(config, n, None)
        if isinstance(v, int):
            return v
    return None


def find_routers(model, n_experts: int, hidden: int):
    """Locate per-layer router modules by their (n_experts, hidden) weight.

    Matches both plain nn.Linear gates and dedicated router classes; shared
    expert gates (out_features 1) never match. Returns modules sorted by
    layer index.
    """
    found = []
    for name, mod in model.named_modules():
        leaf = name.split(".")[-1].lower()
        if "gate" not in leaf and "router" not in leaf:
            continue
        w = getattr(mod, "weight", None)
        if w is None or tuple(w.shape) != (n_experts, hidden):
            continue
        m = re.search(r"\.(\d+)\.", name)
        if m is None:
            continue
        found.append((int(m.group(1)), name, mod))
    found.sort(key=lambda t: t[0])
    return found


class RouterTap:
    """Forward hooks that collect per-layer router logits for one forward."""

    def __init__(self, routers):
        self.handles = []
        self.logits: list[torch.Tensor | None] = [None] * len(routers)
        for slot, (_, _, mod) in enumerate(routers):
            self.handles.append(mod.register_forward_hook(self._hook(slot)))

    def _hook(self, slot):
        def grab(mod, args, out):
            outs = out if isinstance(out, tuple) else (out,)
            n = mod.weight.shape[0]
            for t in outs:
                if torch.is_tensor(t) and t.shape[-1] == n and t.is_floating_point():
                    self.logits[slot] = t.detach().float()
                    return
            raise UnsupportedModelError("router output carries no logits tensor")

        return grab

    def reset(self):
        self.logits = [None] * len(self.logits)

    def close(self):
        for h in self.handles:
            h.remove()


def gates_from_logits(logits: torch.Tensor, capture: str, top_k: int) -> np.ndarray:
    """Turn raw router logits [T, N] into gate rows that sum to 1."""
    probs = F.softmax(logits.reshape(-1, logits.shape[-1]), dim=-1)
    if capture == "post_topk":
        vals, idx = torch.topk(probs, top_k, dim=-1)
        vals = vals / vals.sum(dim=-1, keepdim=True)
        probs = torch.zeros_like(probs).scatter_(1, idx, vals)
    return probs.cpu().numpy().astype(np.float32)


class ByteTokenizer:
    """Fallback when the checkpoint ships no tokenizer files."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def __call__(self, text: str) -> list[int]:
        return [b % self.vocab_size for b in text.encode("utf-8")] or [0]


def load_tokenizer(model_path: str, vocab_size: int):
    try:
        from transformers import AutoTokenizer

        tok = AutoTokenizer.from_pretrained(model_path)
        return lambda text: tok(text, return_tensors=None)["input_ids"], tok.__class__.__name__
    except Exception:
        return ByteTokenizer(vocab_size), "byte-fallback"


def export(spec: ExportSpec) -> str:
    """Run every text through the checkpoint and write a MOEA container."""
    from transformers import AutoModelForCausalLM

    model = AutoModelForCausalLM.from_pretrained(spec.model_path)
    model.eval()
    config = model.config
    hidden = _config_int(config, ("hidden_size",))
    n_layers = _config_int(config, ("num_hidden_layers",))
    n_experts = _config_int(
        config, ("num_local_experts", "num_experts", "n_routed_experts")
    )
    top_k = _config_int(config, ("num_experts_per_tok", "top_k", "moe_top_k")) or 1
    if n_experts is None:
        raise UnsupportedModelError("config declares no expert count")
    routers = find_routers(model, n_experts, hidden)
    if not routers:
        raise UnsupportedModelError("no MoE router modules found")
    if len(routers) != n_layers:
        raise UnsupportedModelError(
            f"routers on {len(routers)} of {n_layers} layers; need one per layer"
        )
    tokenize, tokenizer_name = load_tokenizer(spec.model_path, config.vocab_size)

    tap = RouterTap(routers)
    records = []
    renormalized = False
    try:
        for text in spec.texts:
            ids = tokenize(apply_prompt(spec.prompt_id, text))
            tap.reset()
            try:
                with torch.no_grad():
                    out = model(
                        torch.tensor([ids], dtype=torch.long),
                        output_hidden_states=True,
                    )
            except (MemoryError, torch.cuda.OutOfMemoryError) as exc:
                raise ResourceError(
                    "out of memory; export fewer or shorter texts per batch"
                ) from exc
            # post-layer states; drop the embedding layer entry, widen to f32
            hs = np.stack(
                [h[0].detach().float().cpu().numpy() for h in out.hidden_states[1:]]
            ).astype(np.float32)
            routing = []
            for slot, logits in enumerate(tap.logits):
                if logits is None:
                    raise UnsupportedModelError(f"router {slot} never fired")
                g = gates_from_logits(logits, spec.capture, top_k)
                sums = g.sum(axis=1)
                if np.any(np.abs(sums - 1.0) > 1e-6):
                    g = g / sums[:, None]
                    renormalized = True
                routing.append(g)
            if spec.token_mode == "last":
                hs = hs[:, -1:, :]
                routing = [g[-1:, :] for g in routing]
            records.append(
                {
                    "id": record_id_for(text, spec.prompt_id),
                    "text": text,
                    "prompt_id": spec.prompt_id,
                    "token_mode": spec.token_mode,
                    "hidden_states": hs,
                    "routing": routing,
                }
            )
    finally:
        tap.close()

    fingerprint = {
        "name": spec.model_name or str(spec.model_path),
        "num_layers": n_layers,
        "hidden_dim": hidden,
        "experts_per_layer": [n_experts] * n_layers,
        "source": "hf-export",
        "capture": spec.capture,
        "top_k": top_k,
        "include_shared": spec.include_shared,
        "renormalized": renormalized,
        "tokenizer": tokenizer_name,
    }
    write_moea(records, spec.output_path, fingerprint)
    return spec.output_path
