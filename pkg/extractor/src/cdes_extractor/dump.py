"""Writer for the CDE1 context-dump wire format.

Layout: magic "CDE1"; little-endian u32 q; u64 record count; per record a
u16-length-prefixed UTF-8 instance id and lemma, a u8 POS code (0=NOUN,
1=VERB, 2=ADJ, 3=ADV, 4=OTHER), a u8 gold flag followed by a length-prefixed
sense id when set, and q little-endian float32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "OTHER")
_POS_CODE = {name: i for i, name in enumerate(POS_TAGS)}


@dataclass
class DumpRecord:
    instance_id: str
    lemma: str
    pos: str
    gold_sense: Optional[str]
    vector: np.ndarray


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string field longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def write_dump(records, q: int, path) -> None:
    parts = [b"CDE1", struct.pack("<IQ", q, len(records))]
    seen = set()
    for rec in records:
        if rec.instance_id in seen:
            raise ValueError(f"duplicate instance id {rec.instance_id!r}")
        seen.add(rec.instance_id)
        vec = np.asarray(rec.vector, dtype="<f4")
        if vec.shape != (q,):
            raise ValueError(
                f"record {rec.instance_id!r}: vector length {vec.shape} != q={q}"
            )
        parts.append(_pack_str(rec.instance_id))
        parts.append(_pack_str(rec.lemma))
        parts.append(struct.pack("<B", _POS_CODE[rec.pos]))
        if rec.gold_sense is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01")
            parts.append(_pack_str(rec.gold_sense))
        parts.append(vec.tobytes())
    Path(path).write_bytes(b"".join(parts))
