"""Standalone MOEA writer.

Produces the same byte layout the primary toolkit reads: 4-byte magic,
u32 version, u64 header length, canonical JSON header, then a packed
little-endian float32 payload (hidden states first, then one gate block
per layer for each record). Kept import-free of the primary package so
the two sides only share the file format.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"MOEA"
VERSION = 1


def record_id_for(text: str, prompt_id: int | None) -> str:
    h = hashlib.sha1(f"{prompt_id}\x00{text}".encode("utf-8")).hexdigest()
    return h[:16]


def write_moea(records, path, fingerprint: dict) -> int:
    """records: iterable of dicts with keys
    id, text, prompt_id, token_mode, hidden_states [L,T,d], routing [list of [T,N_l]].
    Returns bytes written."""
    index = []
    chunks = []
    offset = 0
    for r in records:
        hs = np.ascontiguousarray(r["hidden_states"], dtype="<f4")
        raw = hs.tobytes()
        raw += b"".join(
            np.ascontiguousarray(g, dtype="<f4").tobytes() for g in r["routing"]
        )
        index.append(
            {
                "id": r["id"],
                "text": r["text"],
                "prompt_id": r["prompt_id"],
                "token_mode": r["token_mode"],
                "num_tokens": int(hs.shape[1]),
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
        [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(header)), header]
        + chunks
    )
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def read_header(path) -> dict:
    """Parse just the JSON header (for inspection and tests)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    return json.loads(blob[16 : 16 + hlen].decode("utf-8"))


def read_gate_rows(path) -> dict[str, list[np.ndarray]]:
    """record id -> per-layer gate arrays [T, N_l] (for inspection and tests)."""
    with open(path, "rb") as f:
        blob = f.read()
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    payload = blob[16 + hlen :]
    fp = header["fingerprint"]
    L, d, experts = fp["num_layers"], fp["hidden_dim"], fp["experts_per_layer"]
    out = {}
    for e in header["records"]:
        T = e["num_tokens"]
        off = e["offset"] + 4 * L * T * d
        rows = []
        for n in experts:
            g = np.frombuffer(payload, dtype="<f4", count=T * n, offset=off)
            rows.append(g.reshape(T, n).copy())
            off += 4 * T * n
        out[e["id"]] = rows
    return out
