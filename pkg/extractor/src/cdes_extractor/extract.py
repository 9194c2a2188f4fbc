"""Extraction jobs: run an encoder over corpora, glosses, and WiC data.

Vectors follow the layer policy (default: sum of the final four hidden
layers) and the word pooling policy (default: mean over the word's pieces).
Sentence embeddings are the mean over word vectors. Sentences whose piece
count exceeds the encoder window are truncated symmetrically around the
target token; truncations and skipped targets are counted in the returned
report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import parse_corpus, parse_wic, read_inventory, write_inventory
from .dump import DumpRecord, write_dump
from .encoders import make_encoder

POOLINGS = ("mean", "first")


@dataclass
class ExtractionJob:
    model: str = "hash"
    layers: tuple = (-1, -2, -3, -4)
    pooling: str = "mean"
    q: int = 64  # hash backend dimension; real models fix their own
    hash_layers: int = 6
    seed: int = 0
    device: str = "cpu"
    max_pieces: int = 128
    batch_size: int = 32

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling policy {self.pooling!r}")
        if not self.layers:
            raise ValueError("layer policy must select at least one layer")

    def encoder(self):
        enc = make_encoder(
            self.model, self.q, self.hash_layers, self.seed, self.device, self.max_pieces
        )
        depth = enc.n_layers + 1  # embeddings + one state per layer
        for layer in self.layers:
            if not -depth <= layer < depth:
                raise ValueError(
                    f"layer {layer} out of range for model depth {enc.n_layers}"
                )
        return enc


@dataclass
class ExtractReport:
    records: int = 0
    truncated: int = 0
    skipped: list = field(default_factory=list)  # (where, reason)

    def log_skip(self, where, reason):
        self.skipped.append((where, reason))


def _word_vectors(encoded, layers, pooling) -> dict:
    """word index -> layer-summed, piece-pooled vector (float64)."""
    summed = encoded.layer_vectors[list(layers)].astype(np.float64).sum(axis=0)
    groups: dict = {}
    for piece_idx, word_idx in enumerate(encoded.piece_word_ids):
        groups.setdefault(word_idx, []).append(piece_idx)
    out = {}
    for word_idx, piece_rows in groups.items():
        if pooling == "first":
            out[word_idx] = summed[piece_rows[0]]
        else:
            out[word_idx] = summed[piece_rows].mean(axis=0)
    return out


def _window_around(tokens, target_idx, counts, budget):
    """Greedy symmetric expansion around the target within a piece budget."""
    left = right = target_idx
    total = counts[target_idx]
    while True:
        moved = False
        if left > 0 and total + counts[left - 1] <= budget:
            left -= 1
            total += counts[left]
            moved = True
        if right + 1 < len(tokens) and total + counts[right + 1] <= budget:
            right += 1
            total += counts[right]
            moved = True
        if not moved:
            return left, right


def _piece_counts(encoder, tokens):
    return [encoder.count_pieces([t]) for t in tokens]


def _target_vector(encoder, job, tokens, target_idx, report, where):
    """Vector for one target token, truncating the sentence when needed.

    Returns None (and logs) when the target cannot be embedded at all.
    """
    counts = _piece_counts(encoder, tokens)
    if counts[target_idx] > encoder.max_pieces:
        report.log_skip(where, "target token alone exceeds the window")
        return None
    if sum(counts) > encoder.max_pieces:
        left, right = _window_around(tokens, target_idx, counts, encoder.max_pieces)
        tokens = tokens[left : right + 1]
        target_idx -= left
        report.truncated += 1
    encoded = encoder.encode(tokens)
    vectors = _word_vectors(encoded, job.layers, job.pooling)
    if target_idx not in vectors:
        report.log_skip(where, "tokenizer produced no pieces for the target")
        return None
    return vectors[target_idx]


def _sentence_vector(encoder, job, tokens, report, where):
    """Mean over word vectors; truncates from the right when oversized."""
    counts = _piece_counts(encoder, tokens)
    total = 0
    keep = 0
    for count in counts:
        if total + count > encoder.max_pieces:
            break
        total += count
        keep += 1
    if keep == 0:
        report.log_skip(where, "first token alone exceeds the window")
        return None
    if keep < len(tokens):
        report.truncated += 1
        tokens = tokens[:keep]
    encoded = encoder.encode(tokens)
    vectors = _word_vectors(encoded, job.layers, job.pooling)
    return np.mean([vectors[w] for w in sorted(vectors)], axis=0)


# ---------------------------------------------------------------------------
# jobs


def extract_corpus(job: ExtractionJob, corpus_path, out_path) -> ExtractReport:
    """One dump record per annotated target token."""
    encoder = job.encoder()
    report = ExtractReport()
    records = []
    for sentence in parse_corpus(corpus_path):
        for target in sentence.targets:
            where = f"line {sentence.line_no + 1}, token {target.token_index}"
            vec = _target_vector(
                encoder, job, sentence.tokens, target.token_index, report, where
            )
            if vec is None:
                continue
            records.append(
                DumpRecord(
                    f"s{sentence.line_no:05d}.t{target.token_index:03d}",
                    target.lemma,
                    target.pos,
                    target.sense,
                    vec.astype(np.float32),
                )
            )
    write_dump(records, encoder.q, out_path)
    report.records = len(records)
    return report


def extract_sentences(job: ExtractionJob, corpus_path, out_path) -> ExtractReport:
    """One dump record per (sentence, annotated lemma): the sentence
    embedding, keyed by the sentence's line index for downstream joins."""
    encoder = job.encoder()
    report = ExtractReport()
    records = []
    for sentence in parse_corpus(corpus_path):
        if not sentence.targets:
            continue
        vec = _sentence_vector(
            encoder, job, sentence.tokens, report, f"line {sentence.line_no + 1}"
        )
        if vec is None:
            continue
        vec32 = vec.astype(np.float32)
        for k, target in enumerate(sentence.targets):
            records.append(
                DumpRecord(
                    f"{sentence.line_no}.{k}",
                    target.lemma,
                    target.pos,
                    target.sense,
                    vec32,
                )
            )
    write_dump(records, encoder.q, out_path)
    report.records = len(records)
    return report


def extract_glosses(job: ExtractionJob, inventory_path, out_path) -> ExtractReport:
    """Gloss-augmented inventory: per sense, the gloss sentence embedding."""
    encoder = job.encoder()
    report = ExtractReport()
    rows = read_inventory(inventory_path)
    vectors: dict = {}
    for row in rows:
        tokens = row.gloss.split()
        if not tokens:
            report.log_skip(row.sense_id, "empty gloss")
            continue
        vec = _sentence_vector(encoder, job, tokens, report, f"gloss of {row.sense_id}")
        if vec is None:
            continue
        vectors[row.sense_id] = vec.astype(np.float32)
        report.records += 1
    write_inventory(rows, vectors, out_path)
    return report


def extract_wic(
    job: ExtractionJob,
    wic_path,
    out_dump,
    out_sidecar,
    gold_path=None,
    out_gold=None,
) -> ExtractReport:
    """Paired dump + sidecar (+ aligned gold file) from official WiC TSV."""
    encoder = job.encoder()
    report = ExtractReport()
    rows, malformed = parse_wic(wic_path, gold_path)
    for row_no, reason in malformed:
        report.log_skip(f"row {row_no + 1}", reason)

    records, sidecar_lines, gold_lines = [], [], []
    for row in rows:
        where = f"row {row.row_no + 1}"
        v1 = _target_vector(encoder, job, row.tokens1, row.index1, report, where + " sentence1")
        v2 = _target_vector(encoder, job, row.tokens2, row.index2, report, where + " sentence2")
        if v1 is None or v2 is None:
            continue
        id1, id2 = f"r{row.row_no:05d}a", f"r{row.row_no:05d}b"
        records.append(DumpRecord(id1, row.word, row.pos, None, v1.astype(np.float32)))
        records.append(DumpRecord(id2, row.word, row.pos, None, v2.astype(np.float32)))
        sidecar_lines.append(f"p{row.row_no:05d}\t{row.word}\t{row.pos}\t{id1}\t{id2}")
        if row.gold is not None:
            gold_lines.append("T" if row.gold else "F")

    write_dump(records, encoder.q, out_dump)
    from pathlib import Path

    Path(out_sidecar).write_text(
        "\n".join(sidecar_lines) + ("\n" if sidecar_lines else ""), encoding="utf-8"
    )
    if gold_path is not None and out_gold is not None:
        Path(out_gold).write_text(
            "\n".join(gold_lines) + ("\n" if gold_lines else ""), encoding="utf-8"
        )
    report.records = len(records)
    return report
