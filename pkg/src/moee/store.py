"""MOEA container format: bit-exact storage for activation bundles.

The byte layout is the contract between the toy engine and external
exporters: magic `MOEA`, version u32 LE, header-length u64 LE, UTF-8
JSON header (model fingerprint + record index), then a payload of
little-endian float32 tensors. Per record the payload holds the hidden
states [L, T, d] followed by each layer's routing weights [T, N_l].
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .engine import ForwardTrace, MoEConfig
from .errors import (
    ConsistencyError,
    CorruptionError,
    DataValidationError,
    FormatError,
)

_MOEA_MAGIC = b"MOEA"
_MOEA_VERSION = 1

GATE_SUM_ATOL = 1e-4  # looser than the engine: external exports arrive in 16/32-bit


@dataclass
class ActivationBundle:
    record_id: str
    text: str
    prompt_id: int | None
    token_mode: str  # "all" | "last"
    hidden_states: np.ndarray  # [L, T_stored, d] float32
    routing_weights: list[np.ndarray]  # per layer [T_stored, N_l] float32

    @property
    def num_layers(self) -> int:
        return self.hidden_states.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.hidden_states.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden_states.shape[2]

    @property
    def experts_per_layer(self) -> list[int]:
        return [rw.shape[1] for rw in self.routing_weights]

    def validate(self) -> None:
        if self.token_mode not in ("all", "last"):
            raise DataValidationError(f"{self.record_id}: bad token_mode {self.token_mode!r}")
        if self.hidden_states.ndim != 3:
            raise DataValidationError(f"{self.record_id}: hidden_states must be 3-D")
        if self.token_mode == "last" and self.num_tokens != 1:
            raise DataValidationError(f"{self.record_id}: token_mode=last requires T_stored=1")
        if len(self.routing_weights) != self.num_layers:
            raise DataValidationError(f"{self.record_id}: routing layer count mismatch")
        if not np.all(np.isfinite(self.hidden_states)):
            raise DataValidationError(f"{self.record_id}: non-finite tensor")
        for l, rw in enumerate(self.routing_weights):
            if rw.ndim != 2 or rw.shape[0] != self.num_tokens:
                raise DataValidationError(f"{self.record_id}: routing shape mismatch at layer {l}")
            if not np.all(np.isfinite(rw)):
                raise DataValidationError(f"{self.record_id}: non-finite tensor")
            if np.any(rw < -GATE_SUM_ATOL) or np.any(rw > 1.0 + GATE_SUM_ATOL):
                raise DataValidationError(f"{self.record_id}: gate value outside [0,1] at layer {l}")
            sums = rw.astype(np.float64).sum(axis=1)
            if np.any(np.abs(sums - 1.0) > GATE_SUM_ATOL):
                raise DataValidationError(
                    f"{self.record_id}: gate row sum {sums[np.argmax(np.abs(sums - 1.0))]:.6f}"
                    f" != 1 at layer {l}"
                )


def record_id_for(text: str, prompt_id: int | None) -> str:
    """Stable record id so datasets can address bundles by (prompt, text)."""
    h = hashlib.sha1(f"{prompt_id}\x00{text}".encode("utf-8")).hexdigest()
    return h[:16]


def bundle_from_trace(
    trace: ForwardTrace,
    text: str,
    prompt_id: int | None = None,
    token_mode: str = "last",
) -> ActivationBundle:
    """Package a forward trace, keeping all tokens or only the last one."""
    if token_mode == "last":
        hs = trace.hidden_states[:, -1:, :]
        rw = [g[-1:, :] for g in trace.routing_weights]
    elif token_mode == "all":
        hs = trace.hidden_states
        rw = list(trace.routing_weights)
    else:
        raise DataValidationError(f"bad token_mode {token_mode!r}")
    return ActivationBundle(
        record_id=record_id_for(text, prompt_id),
        text=text,
        prompt_id=prompt_id,
        token_mode=token_mode,
        hidden_states=np.ascontiguousarray(hs, dtype=np.float32),
        routing_weights=[np.ascontiguousarray(g, dtype=np.float32) for g in rw],
    )


def toy_fingerprint(config: MoEConfig, name: str = "toy-moe") -> dict:
    return {
        "name": name,
        "num_layers": config.num_layers,
        "hidden_dim": config.hidden_dim,
        "experts_per_layer": list(config.experts_per_layer),
        "source": "toy",
    }


def _check_fingerprint(bundle: ActivationBundle, fp: dict) -> None:
    if (
        bundle.num_layers != fp["num_layers"]
        or bundle.hidden_dim != fp["hidden_dim"]
        or bundle.experts_per_layer != list(fp["experts_per_layer"])
    ):
        raise ConsistencyError(
            f"record {bundle.record_id} does not match container fingerprint"
        )


def write_container(records, path, fingerprint: dict) -> int:
    """Validate and write bundles; returns bytes written."""
    records = list(records)
    index = []
    chunks = []
    offset = 0
    for b in records:
        b.validate()
        _check_fingerprint(b, fingerprint)
        raw = np.ascontiguousarray(b.hidden_states, dtype="<f4").tobytes()
        raw += b"".join(
            np.ascontiguousarray(g, dtype="<f4").tobytes() for g in b.routing_weights
        )
        index.append(
            {
                "id": b.record_id,
                "text": b.text,
                "prompt_id": b.prompt_id,
                "token_mode": b.token_mode,
                "num_tokens": b.num_tokens,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"fingerprint": fingerprint, "records": index},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    blob = b"".join(
        [_MOEA_MAGIC, struct.pack("<I", _MOEA_VERSION), struct.pack("<Q", len(header)), header]
        + chunks
    )
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


class BundleContainer:
    """Lazily addressable view over a parsed MOEA file."""

    def __init__(self, fingerprint: dict, index: list[dict], payload: bytes):
        self.fingerprint = fingerprint
        self._index = index
        self._payload = payload
        self._by_id = {e["id"]: e for e in index}

    @property
    def record_ids(self) -> list[str]:
        return [e["id"] for e in self._index]

    def __len__(self) -> int:
        return len(self._index)

    def entry(self, record_id: str) -> dict:
        if record_id not in self._by_id:
            raise KeyError(record_id)
        return self._by_id[record_id]

    def get(self, record_id: str, validate: bool = True) -> ActivationBundle:
        e = self.entry(record_id)
        fp = self.fingerprint
        L = fp["num_layers"]
        d = fp["hidden_dim"]
        experts = fp["experts_per_layer"]
        T = e["num_tokens"]
        expected = 4 * (L * T * d + T * sum(experts))
        if e["nbytes"] != expected:
            raise CorruptionError(f"record {record_id}: payload size {e['nbytes']} != {expected}")
        base = e["offset"]
        hs = np.frombuffer(self._payload, dtype="<f4", count=L * T * d, offset=base)
        hs = hs.reshape(L, T, d).copy()
        off = base + 4 * L * T * d
        rw = []
        for n in experts:
            g = np.frombuffer(self._payload, dtype="<f4", count=T * n, offset=off)
            rw.append(g.reshape(T, n).copy())
            off += 4 * T * n
        bundle = ActivationBundle(
            record_id=e["id"],
            text=e["text"],
            prompt_id=e["prompt_id"],
            token_mode=e["token_mode"],
            hidden_states=hs,
            routing_weights=rw,
        )
        if validate:
            bundle.validate()
        return bundle

    def bundles(self, validate: bool = True):
        for e in self._index:
            yield self.get(e["id"], validate=validate)


def read_container(path) -> BundleContainer:
    """Parse and structurally validate a MOEA file."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise FormatError("file too short for MOEA header")
    if blob[:4] != _MOEA_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MOEA_MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _MOEA_VERSION:
        raise FormatError(f"unsupported MOEA version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    if 16 + hlen > len(blob):
        raise CorruptionError("header extends past end of file")
    try:
        header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid JSON: {exc}") from exc
    payload = blob[16 + hlen :]

    fingerprint = header["fingerprint"]
    index = header["records"]
    prev_end = 0
    seen = set()
    for e in index:
        if e["id"] in seen:
            raise FormatError(f"duplicate record id {e['id']}")
        seen.add(e["id"])
        if e["offset"] < prev_end:
            raise CorruptionError(f"record {e['id']}: overlapping or unordered offsets")
        if e["offset"] + e["nbytes"] > len(payload):
            raise CorruptionError(f"record {e['id']}: payload truncated")
        prev_end = e["offset"] + e["nbytes"]
    return BundleContainer(fingerprint, index, payload)


@dataclass
class ValidationReport:
    path: str
    file_error: str | None = None
    entries: list[tuple[str, bool, str]] = field(default_factory=list)

    @property
    def num_failures(self) -> int:
        n = sum(1 for _, ok, _ in self.entries if not ok)
        return n + (1 if self.file_error else 0)

    @property
    def ok(self) -> bool:
        return self.num_failures == 0

    def to_dict(self) -> dict:
        return {
            "path": str(self.path),
            "file_error": self.file_error,
            "records": [
                {"id": rid, "ok": ok, "reason": reason} for rid, ok, reason in self.entries
            ],
            "failures": self.num_failures,
        }


def validate_container(path) -> ValidationReport:
    """Total validation: any malformed file yields report entries, not a crash."""
    report = ValidationReport(path=str(path))
    try:
        container = read_container(path)
    except Exception as exc:
        report.file_error = f"{type(exc).__name__}: {exc}"
        return report
    for rid in container.record_ids:
        try:
            container.get(rid, validate=True)
        except Exception as exc:
            reason = str(exc)
            if "non-finite" in reason:
                reason = "non-finite tensor"
            report.entries.append((rid, False, reason))
        else:
            report.entries.append((rid, True, ""))
    return report
