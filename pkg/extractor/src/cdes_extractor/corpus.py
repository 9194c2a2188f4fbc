"""Input formats for extraction jobs.

Annotated corpus: one sentence per line, whitespace-separated tokens.
Target tokens carry inline annotations, pipe-separated:

    The bank|bank|NOUN|bank%00 approved the loan|loan|NOUN

i.e. ``surface|lemma|POS`` for an unlabeled target or
``surface|lemma|POS|sense_id`` for a sense-tagged one. Unannotated tokens
are plain surfaces.

Sense inventory: tab-separated ``sense_id lemma POS gloss`` with an
optional fifth gloss-vector field (written by extract_glosses as
space-separated floats).

WiC datasets: the official tab-separated
``word pos index1-index2 sentence1 sentence2`` with an optional gold file
of one T/F line per row.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .dump import POS_TAGS

_WIC_POS = {"N": "NOUN", "V": "VERB"}


@dataclass
class Target:
    token_index: int
    lemma: str
    pos: str
    sense: Optional[str]


@dataclass
class Sentence:
    line_no: int  # 0-based line index in the corpus file
    tokens: list  # surfaces
    targets: list  # Target entries


class CorpusFormatError(ValueError):
    def __init__(self, message, path=None, line=None):
        prefix = f"{path}: " if path is not None else ""
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


def parse_corpus(path) -> list:
    path = Path(path)
    sentences = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines()):
        tokens, targets = [], []
        for tok in raw.split():
            if "|" not in tok:
                tokens.append(tok)
                continue
            fields = tok.split("|")
            if len(fields) not in (3, 4) or not all(fields[:3]):
                raise CorpusFormatError(
                    f"bad annotation {tok!r} (surface|lemma|POS[|sense])",
                    path=path,
                    line=line_no + 1,
                )
            surface, lemma, pos = fields[:3]
            if pos not in POS_TAGS:
                raise CorpusFormatError(f"unknown POS {pos!r}", path=path, line=line_no + 1)
            sense = fields[3] if len(fields) == 4 else None
            targets.append(Target(len(tokens), lemma, pos, sense))
            tokens.append(surface)
        if tokens:
            sentences.append(Sentence(line_no, tokens, targets))
    return sentences


@dataclass
class InventoryRow:
    sense_id: str
    lemma: str
    pos: str
    gloss: str


def read_inventory(path) -> list:
    path = Path(path)
    rows = []
    seen = set()
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) not in (4, 5):
            raise CorpusFormatError(
                f"expected 4 or 5 tab-separated fields, found {len(fields)}",
                path=path,
                line=line_no,
            )
        sense_id, lemma, pos, gloss = (f.strip() for f in fields[:4])
        if sense_id in seen:
            raise CorpusFormatError(f"duplicate sense id {sense_id!r}", path=path, line=line_no)
        seen.add(sense_id)
        rows.append(InventoryRow(sense_id, lemma, pos, gloss))
    return rows


def write_inventory(rows, vectors: dict, path) -> None:
    """Write inventory rows, attaching gloss vectors where available."""
    lines = []
    for row in rows:
        fields = [row.sense_id, row.lemma, row.pos, row.gloss]
        vec = vectors.get(row.sense_id)
        if vec is not None:
            fields.append(" ".join(repr(float(v)) for v in vec))
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


@dataclass
class WicRow:
    row_no: int
    word: str
    pos: str
    index1: int
    index2: int
    tokens1: list
    tokens2: list
    gold: Optional[bool]


def parse_wic(path, gold_path=None) -> list:
    path = Path(path)
    gold_labels = None
    if gold_path is not None:
        gold_labels = []
        for line_no, raw in enumerate(Path(gold_path).read_text(encoding="utf-8").splitlines(), 1):
            tok = raw.strip()
            if not tok:
                continue
            if tok not in ("T", "F"):
                raise CorpusFormatError(f"expected T or F, found {tok!r}", path=gold_path, line=line_no)
            gold_labels.append(tok == "T")

    rows = []
    skipped = []
    for row_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 5:
            raise CorpusFormatError(
                f"expected 5 tab-separated fields, found {len(fields)}",
                path=path,
                line=row_no + 1,
            )
        word, pos_tag, indices, sent1, sent2 = fields
        pos = _WIC_POS.get(pos_tag.strip().upper())
        if pos is None:
            raise CorpusFormatError(f"unknown WiC POS {pos_tag!r}", path=path, line=row_no + 1)
        tokens1, tokens2 = sent1.split(), sent2.split()
        try:
            i1_str, i2_str = indices.split("-", 1)
            i1, i2 = int(i1_str), int(i2_str)
        except ValueError:
            skipped.append((row_no, f"malformed index field {indices!r}"))
            continue
        if not (0 <= i1 < len(tokens1)) or not (0 <= i2 < len(tokens2)):
            skipped.append((row_no, f"index out of range in {indices!r}"))
            continue
        gold = None
        if gold_labels is not None:
            if row_no >= len(gold_labels):
                raise CorpusFormatError("fewer gold lines than data rows", path=gold_path)
            gold = gold_labels[row_no]
        rows.append(WicRow(row_no, word.strip(), pos, i1, i2, tokens1, tokens2, gold))
    return rows, skipped
