"""Loading, validation, and serving of embedding tables, context dumps,
sense inventories, collocation files, and gold keyfiles.

This module owns every on-disk format the toolkit reads or writes:

* static table - whitespace-separated text, one ``token v1 .. vp`` row per
  line; an optional word2vec-style ``count dim`` header line is detected and
  skipped.
* context dump - binary, magic ``CDE1``, little-endian u32 q, u64 record
  count, then per record: u16-length-prefixed instance id and lemma, u8 POS
  code (0=NOUN 1=VERB 2=ADJ 3=ADV 4=OTHER), u8 gold flag (+ u16-prefixed
  sense id when set), and q little-endian f32 values.
* sense inventory - one line per sense, tab-separated ``sense_id lemma POS
  gloss`` with an optional fifth field carrying a precomputed gloss vector
  as space-separated floats. Candidate order is file order; the first sense
  listed for a (lemma, POS) is its most frequent sense.
* collocation file - tab-separated ``lemma_u lemma_v sense_id``.
* gold keyfile - ``instance_id sense_id [alternate_ids ...]`` per line,
  space-separated.

All loaded structures are immutable after construction and safe to share
across threads. Absent lookups are explicit misses (None / KeyError), never
silent zero vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "OTHER")
_POS_CODE = {name: i for i, name in enumerate(POS_TAGS)}

DUMP_MAGIC = b"CDE1"


@dataclass(eq=False)
class ContextRecord:
    """One contextualized occurrence of a lemma."""

    instance_id: str
    lemma: str
    pos: str
    gold_sense: Optional[str]
    vector: np.ndarray  # float32, length q

    def __post_init__(self):
        if self.pos not in POS_TAGS:
            raise ValidationError(f"unknown POS tag {self.pos!r}")
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if not np.all(np.isfinite(self.vector)):
            raise ValidationError(
                f"record {self.instance_id!r} has non-finite vector components"
            )


@dataclass
class LoadReport:
    """Bookkeeping from a load: duplicates kept-first, skipped rows, notes."""

    duplicates: int = 0
    warnings: list = field(default_factory=list)


class StaticTable:
    """Lemma -> p-dimensional sense-agnostic vector."""

    def __init__(self, dimension: int, entries: dict, report: LoadReport | None = None):
        if dimension < 1:
            raise ValidationError("static table dimension must be >= 1")
        self.dimension = int(dimension)
        self._entries = entries
        self.report = report or LoadReport()

    def get(self, lemma: str) -> Optional[np.ndarray]:
        return self._entries.get(lemma)

    def __getitem__(self, lemma: str) -> np.ndarray:
        return self._entries[lemma]

    def __contains__(self, lemma: str) -> bool:
        return lemma in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def lemmas(self):
        return self._entries.keys()


@dataclass
class SenseEntry:
    sense_id: str
    lemma: str
    pos: str
    gloss: str
    gloss_vector: Optional[np.ndarray] = None


class SenseInventory:
    """Catalog of senses per (lemma, POS), with glosses.

    ``index[(lemma, pos)]`` lists candidate sense ids in file order; the
    first entry is the most frequent sense.
    """

    def __init__(self, senses: dict, index: dict):
        self.senses = senses
        self.index = index

    def __contains__(self, sense_id: str) -> bool:
        return sense_id in self.senses

    def __len__(self) -> int:
        return len(self.senses)

    def entry(self, sense_id: str) -> SenseEntry:
        try:
            return self.senses[sense_id]
        except KeyError:
            raise ValidationError(f"unknown sense id {sense_id!r}") from None

    def candidates(self, lemma: str, pos: str) -> list:
        return list(self.index.get((lemma, pos), ()))

    def candidates_for_lemma(self, lemma: str) -> list:
        """Union of candidate lists over all POS, in fixed POS order.

        The first element doubles as the lemma-level most frequent sense.
        """
        out = []
        for pos in POS_TAGS:
            out.extend(self.index.get((lemma, pos), ()))
        return out

    def most_frequent(self, lemma: str, pos: str) -> Optional[str]:
        cands = self.index.get((lemma, pos))
        return cands[0] if cands else None

    def gloss_dimension(self) -> Optional[int]:
        for entry in self.senses.values():
            if entry.gloss_vector is not None:
                return int(entry.gloss_vector.shape[0])
        return None


class CollocationSet:
    """Unordered lemma pairs mapped to the sense they signal.

    Keys are stored canonically (lexicographically ordered pair).
    """

    def __init__(self, pairs: dict, report: LoadReport | None = None):
        self.pairs = pairs
        self.report = report or LoadReport()

    @staticmethod
    def canonical(u: str, v: str) -> tuple:
        return (u, v) if u <= v else (v, u)

    def get(self, u: str, v: str) -> Optional[str]:
        return self.pairs.get(self.canonical(u, v))

    def __len__(self) -> int:
        return len(self.pairs)

    def items(self):
        return self.pairs.items()


# ---------------------------------------------------------------------------
# static table


def _iter_lines(path):
    """Yield (lineno, line) from a UTF-8 text file; decode failures become
    FormatErrors instead of UnicodeDecodeErrors."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                yield lineno, raw
    except UnicodeDecodeError:
        raise FormatError("file is not valid UTF-8 text", path=path) from None


def _looks_like_header(tokens: list) -> bool:
    if len(tokens) != 2:
        return False
    try:
        int(tokens[0])
        int(tokens[1])
    except ValueError:
        return False
    return True


def load_static_table(path, lowercase: bool = False) -> StaticTable:
    """Parse a word2vec/GloVe-style text table.

    Dimension p is inferred from the first data line. Duplicate tokens keep
    the first occurrence and are counted in ``table.report``. Raises
    :class:`FormatError` naming the line for ragged rows, unparseable or
    non-finite values, and empty files.
    """
    path = Path(path)
    entries: dict = {}
    report = LoadReport()
    dim = None
    for lineno, raw in _iter_lines(path):
        tokens = raw.split()
        if not tokens:
            continue
        if dim is None and lineno == 1 and _looks_like_header(tokens):
            continue
        token, values = tokens[0], tokens[1:]
        if dim is None:
            if not values:
                raise FormatError("no vector components", path=path, line=lineno)
            dim = len(values)
        if len(values) != dim:
            raise FormatError(
                f"expected {dim} components, found {len(values)}",
                path=path,
                line=lineno,
            )
        try:
            vec = np.array([float(v) for v in values], dtype=np.float32)
        except ValueError:
            raise FormatError("unparseable float", path=path, line=lineno) from None
        if not np.all(np.isfinite(vec)):
            raise FormatError("non-finite value", path=path, line=lineno)
        if lowercase:
            token = token.lower()
        if token in entries:
            report.duplicates += 1
            continue
        entries[token] = vec
    if dim is None:
        raise FormatError("empty static table", path=path)
    return StaticTable(dim, entries, report)


# ---------------------------------------------------------------------------
# context dumps


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", path=self.path)
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def string(self, what: str) -> str:
        n = self.u16(what)
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"invalid UTF-8 in {what}", path=self.path) from None

    def done(self) -> bool:
        return self.off == len(self.data)


def _pack_str(value: str, what: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError(f"{what} longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def load_context_dump(path) -> list:
    """Read a CDE1 dump into a list of :class:`ContextRecord`, file order."""
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    magic = reader.take(4, "magic")
    if magic != DUMP_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DUMP_MAGIC!r}", path=path)
    q = reader.u32("q")
    if q == 0:
        raise FormatError("header q=0", path=path)
    count = reader.u64("record count")
    records = []
    seen = set()
    for idx in range(count):
        what = f"record {idx}"
        instance_id = reader.string(what + " instance_id")
        lemma = reader.string(what + " lemma")
        pos_code = reader.take(1, what + " pos")[0]
        if pos_code >= len(POS_TAGS):
            raise FormatError(f"unknown POS code {pos_code} in {what}", path=path)
        flag = reader.take(1, what + " gold flag")[0]
        if flag not in (0, 1):
            raise FormatError(f"bad gold flag {flag} in {what}", path=path)
        gold = reader.string(what + " gold sense") if flag else None
        raw = reader.take(4 * q, what + " vector")
        vec = np.frombuffer(raw, dtype="<f4").copy()
        if instance_id in seen:
            raise FormatError(f"duplicate instance id {instance_id!r}", path=path)
        seen.add(instance_id)
        try:
            records.append(ContextRecord(instance_id, lemma, POS_TAGS[pos_code], gold, vec))
        except ValidationError as exc:
            raise FormatError(str(exc), path=path) from None
    if not reader.done():
        raise FormatError(
            f"{len(reader.data) - reader.off} trailing bytes after last record", path=path
        )
    return records


def save_context_dump(records: list, path) -> None:
    """Write records as a CDE1 dump. All records must share one q."""
    qs = {int(r.vector.shape[0]) for r in records}
    if len(qs) > 1:
        raise ValidationError(f"mixed vector lengths across records: {sorted(qs)}")
    q = qs.pop() if qs else 1
    if q == 0:
        raise ValidationError("records have q=0 vectors")
    seen = set()
    parts = [DUMP_MAGIC, struct.pack("<IQ", q, len(records))]
    for rec in records:
        if rec.instance_id in seen:
            raise ValidationError(f"duplicate instance id {rec.instance_id!r}")
        seen.add(rec.instance_id)
        parts.append(_pack_str(rec.instance_id, "instance_id"))
        parts.append(_pack_str(rec.lemma, "lemma"))
        parts.append(struct.pack("<B", _POS_CODE[rec.pos]))
        if rec.gold_sense is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01")
            parts.append(_pack_str(rec.gold_sense, "gold sense"))
        parts.append(np.asarray(rec.vector, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


# ---------------------------------------------------------------------------
# sense inventory


def load_sense_inventory(path) -> SenseInventory:
    path = Path(path)
    senses: dict = {}
    index: dict = {}
    gloss_dim = None
    for lineno, raw in _iter_lines(path):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 5):
            raise FormatError(
                f"expected 4 or 5 tab-separated fields, found {len(fields)}",
                path=path,
                line=lineno,
            )
        sense_id, lemma, pos, gloss = (f.strip() for f in fields[:4])
        if not sense_id or not lemma:
            raise FormatError("empty sense id or lemma", path=path, line=lineno)
        if pos not in POS_TAGS:
            raise FormatError(f"unknown POS tag {pos!r}", path=path, line=lineno)
        if sense_id in senses:
            raise FormatError(f"duplicate sense id {sense_id!r}", path=path, line=lineno)
        gloss_vector = None
        if len(fields) == 5 and fields[4].strip():
            try:
                gloss_vector = np.array(
                    [float(v) for v in fields[4].split()], dtype=np.float32
                )
            except ValueError:
                raise FormatError("unparseable gloss vector", path=path, line=lineno) from None
            if not np.all(np.isfinite(gloss_vector)):
                raise FormatError("non-finite gloss vector", path=path, line=lineno)
            if gloss_dim is None:
                gloss_dim = gloss_vector.shape[0]
            elif gloss_vector.shape[0] != gloss_dim:
                raise FormatError(
                    f"gloss vector length {gloss_vector.shape[0]} != {gloss_dim}",
                    path=path,
                    line=lineno,
                )
        senses[sense_id] = SenseEntry(sense_id, lemma, pos, gloss, gloss_vector)
        index.setdefault((lemma, pos), []).append(sense_id)
    return SenseInventory(senses, index)


def save_sense_inventory(inventory: SenseInventory, path) -> None:
    """Write an inventory, preserving candidate order and gloss vectors."""
    lines = []
    for entry in inventory.senses.values():
        fields = [entry.sense_id, entry.lemma, entry.pos, entry.gloss]
        if entry.gloss_vector is not None:
            fields.append(" ".join(repr(float(v)) for v in entry.gloss_vector))
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ---------------------------------------------------------------------------
# collocations and gold keys


def load_collocations(path, inventory: SenseInventory | None = None) -> CollocationSet:
    """Load tab-separated ``lemma_u lemma_v sense_id`` rows.

    Duplicate pairs keep the first row. With an inventory supplied, rows
    whose sense is absent from the first lemma's candidate lists are dropped
    and reported as warnings.
    """
    path = Path(path)
    pairs: dict = {}
    report = LoadReport()
    for lineno, raw in _iter_lines(path):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 3 or not all(fields):
            raise FormatError(
                "expected 3 tab-separated fields (lemma_u, lemma_v, sense_id)",
                path=path,
                line=lineno,
            )
        u, v, sense = fields
        if inventory is not None and sense not in inventory.candidates_for_lemma(u):
            report.warnings.append(
                f"line {lineno}: sense {sense!r} not a candidate of lemma {u!r}; dropped"
            )
            continue
        key = CollocationSet.canonical(u, v)
        if key in pairs:
            report.duplicates += 1
            continue
        pairs[key] = sense
    return CollocationSet(pairs, report)


def load_gold_keys(path) -> dict:
    """Keyfile -> map instance id to its list of acceptable sense ids."""
    path = Path(path)
    gold: dict = {}
    for lineno, raw in _iter_lines(path):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) < 2:
            raise FormatError("expected 'instance_id sense_id ...'", path=path, line=lineno)
        instance_id = tokens[0]
        if instance_id in gold:
            raise FormatError(f"duplicate instance id {instance_id!r}", path=path, line=lineno)
        gold[instance_id] = tokens[1:]
    return gold


# ---------------------------------------------------------------------------
# cross-structure validation


def validate_records(records: list, inventory: SenseInventory) -> list:
    """Return warnings for records whose gold sense is missing from the
    inventory's (lemma, pos) candidate list. Empty list means clean."""
    warnings = []
    for rec in records:
        if rec.gold_sense is None:
            continue
        cands = inventory.index.get((rec.lemma, rec.pos), ())
        if rec.gold_sense not in cands:
            warnings.append(
                f"record {rec.instance_id!r}: gold sense {rec.gold_sense!r} not in "
                f"candidates of ({rec.lemma!r}, {rec.pos})"
            )
    return warnings


# ---------------------------------------------------------------------------
# inspection


def describe_file(path) -> dict:
    """Identify a file by magic/content and summarize it (CLI `inspect`)."""
    path = Path(path)
    head = b""
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError as exc:
        raise FormatError(str(exc), path=path) from None

    if head == DUMP_MAGIC:
        records = load_context_dump(path)
        q = int(records[0].vector.shape[0]) if records else 0
        with_gold = sum(1 for r in records if r.gold_sense is not None)
        lemmas = {r.lemma for r in records}
        return {
            "kind": "context_dump",
            "records": len(records),
            "q": q,
            "with_gold": with_gold,
            "distinct_lemmas": len(lemmas),
            "warnings": [],
        }
    if head == b"CDEM":
        from . import projection

        model = projection.load_model(path)
        return {
            "kind": "checkpoint",
            "p": model.p,
            "q": model.q,
            "activation": model.activation.name,
            "senses": len(model.diagonals),
            "warnings": [],
        }
    if head == b"CDEB":
        from . import bank as bank_mod

        bank = bank_mod.load_bank(path)
        return {
            "kind": "sense_bank",
            "p": bank.p,
            "q": bank.q,
            "senses": len(bank.entries),
            "with_gloss": sum(1 for f in bank.flags.values() if f[0]),
            "with_corpus": sum(1 for f in bank.flags.values() if f[1]),
            "warnings": [],
        }

    # Text formats: try the most structured first.
    errors = []
    try:
        inv = load_sense_inventory(path)
        glossed = sum(1 for e in inv.senses.values() if e.gloss_vector is not None)
        return {
            "kind": "sense_inventory",
            "senses": len(inv),
            "lemma_pos_pairs": len(inv.index),
            "with_gloss_vector": glossed,
            "warnings": [],
        }
    except FormatError as exc:
        errors.append(f"not a sense inventory: {exc}")
    try:
        coll = load_collocations(path)
        return {
            "kind": "collocations",
            "pairs": len(coll),
            "duplicates_dropped": coll.report.duplicates,
            "warnings": list(coll.report.warnings),
        }
    except FormatError as exc:
        errors.append(f"not a collocation file: {exc}")
    try:
        table = load_static_table(path)
        return {
            "kind": "static_table",
            "entries": len(table),
            "p": table.dimension,
            "duplicates_dropped": table.report.duplicates,
            "warnings": list(table.report.warnings),
        }
    except FormatError as exc:
        errors.append(f"not a static table: {exc}")
    try:
        gold = load_gold_keys(path)
        return {"kind": "gold_keys", "instances": len(gold), "warnings": []}
    except FormatError as exc:
        errors.append(f"not a gold keyfile: {exc}")
    raise FormatError("unrecognized file format: " + "; ".join(errors), path=path)
