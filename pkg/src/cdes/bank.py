"""Sense-vector assembly: projected-static, gloss, and corpus segments
concatenated into composite bank vectors of length p + 2q.

Segment layout is fixed: [0, p) projected static, [p, p+q) gloss,
[p+q, p+2q) corpus. Corpus segments come from k-means clustering of
sentence embeddings with a pluggable cluster-labeling strategy; the
built-ins are majority vote over per-sentence labels and a first-sense
baseline, plus labels read from an external exchange file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import backend
from .errors import FormatError, ValidationError
from .projection import ProjectionModel, project_sense
from .store import SenseInventory, StaticTable, _Reader, _pack_str

BANK_MAGIC = b"CDEB"
BANK_VERSION = 1

FILL_POLICIES = ("zero", "copy_gloss", "skip_sense")


@dataclass
class ClusterAssignment:
    """Result of one k-means run, plus labels applied afterwards."""

    vectors: np.ndarray  # (n, q)
    assignment: np.ndarray  # (n,) cluster index per vector
    centroids: np.ndarray  # (k, q)
    labels: dict = field(default_factory=dict)  # cluster index -> sense id
    inertia_history: list = field(default_factory=list)
    converged: bool = False
    k_requested: int = 0
    k_effective: int = 0


class SenseBank:
    """Map sense id -> composite vector of length p + 2q (float32)."""

    def __init__(self, p: int, q: int, entries: dict, flags: dict, coverage: dict):
        self.p = int(p)
        self.q = int(q)
        self.entries = entries
        self.flags = flags  # sense id -> (gloss_present, corpus_present)
        self.coverage = coverage
        self._matrix = None
        self._ids = None

    def __contains__(self, sense_id: str) -> bool:
        return sense_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def width(self) -> int:
        return self.p + 2 * self.q

    def get(self, sense_id: str) -> Optional[np.ndarray]:
        return self.entries.get(sense_id)

    def segments(self, sense_id: str):
        """(projected_static, gloss, corpus) slices of one bank vector."""
        vec = self.entries[sense_id]
        return vec[: self.p], vec[self.p : self.p + self.q], vec[self.p + self.q :]

    def matrix(self):
        """(ids, float64 matrix) over all entries, cached, insertion order."""
        if self._matrix is None:
            self._ids = list(self.entries)
            if self._ids:
                self._matrix = np.stack(
                    [self.entries[s] for s in self._ids]
                ).astype(np.float64)
            else:
                self._matrix = np.zeros((0, self.width), dtype=np.float64)
        return self._ids, self._matrix


# ---------------------------------------------------------------------------
# sentence embeddings and gloss segments


def sentence_embedding(token_vectors) -> np.ndarray:
    """Coordinatewise mean over a non-empty list of equal-length vectors."""
    if len(token_vectors) == 0:
        raise ValidationError("cannot pool an empty token list")
    try:
        mat = np.asarray(token_vectors, dtype=np.float64)
    except ValueError:
        raise ValidationError("token vectors must share one length") from None
    if mat.ndim != 2:
        raise ValidationError("token vectors must share one length")
    return mat.mean(axis=0)


def gloss_segment(inventory: SenseInventory, sense_id: str) -> Optional[np.ndarray]:
    """The stored gloss vector for a sense, or None when absent."""
    entry = inventory.entry(sense_id)
    return entry.gloss_vector


# ---------------------------------------------------------------------------
# k-means


def _kmeanspp(X: np.ndarray, k: int, rng) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = backend.pairwise_sqdist(X, centroids[:1]).ravel()
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[choice]
        new_d2 = backend.pairwise_sqdist(X, centroids[j : j + 1]).ravel()
        d2 = np.minimum(d2, new_d2)
    return centroids


def kmeans(vectors, k: int, seed: int = 0, max_iter: int = 100) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, Euclidean metric.

    Deterministic for a given seed. k larger than the vector count is
    clamped (recorded via k_requested/k_effective). Empty clusters are
    re-seeded with the point farthest from its own centroid.
    """
    try:
        X = np.asarray(vectors, dtype=np.float64)
    except ValueError:
        raise ValidationError("vectors must share one length") from None
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("vectors must be a non-empty list of equal-length vectors")
    if k < 1:
        raise ValidationError("k must be >= 1")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    n = X.shape[0]
    k_eff = min(k, n)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(X, k_eff, rng)

    assignment = np.zeros(n, dtype=np.int64)
    inertias = []
    converged = False
    prev = None
    for _ in range(max_iter):
        d2 = backend.pairwise_sqdist(X, centroids)
        assignment = np.argmin(d2, axis=1)
        inertias.append(float(d2[np.arange(n), assignment].sum()))
        if prev is not None and np.array_equal(assignment, prev):
            converged = True
            break
        prev = assignment

        new_centroids = np.empty_like(centroids)
        empty = []
        for j in range(k_eff):
            members = X[assignment == j]
            if members.shape[0]:
                new_centroids[j] = members.mean(axis=0)
            else:
                empty.append(j)
        if empty:
            own = np.sqrt(
                np.sum((X - new_centroids[assignment]) ** 2, axis=1)
            )
            # centroids of empty clusters are stale in `own`; those rows
            # belong to no point, so the distances above are well-defined
            order = np.argsort(-own, kind="stable")
            for slot, j in enumerate(empty):
                new_centroids[j] = X[order[slot]]
        centroids = new_centroids

    return ClusterAssignment(
        vectors=X,
        assignment=assignment,
        centroids=centroids,
        inertia_history=inertias,
        converged=converged,
        k_requested=k,
        k_effective=k_eff,
    )


# ---------------------------------------------------------------------------
# collocation-based context harvesting


def extract_collocation_contexts(sentences, collocations, window: int = 3) -> dict:
    """Assign sentences to senses through lemma-pair collocations.

    A sentence (a list of lemma tokens) supports sense s(u, v) when some
    occurrence of u and some occurrence of v lie within ``window`` positions
    of each other. One sentence may support several pairs; every assignment
    is kept. Returns sense id -> sorted list of sentence indices.
    """
    if window < 1:
        raise ValidationError("window must be >= 1")
    out: dict = {}
    for idx, tokens in enumerate(sentences):
        positions: dict = {}
        for t_pos, tok in enumerate(tokens):
            positions.setdefault(tok, []).append(t_pos)
        for (u, v), sense in collocations.items():
            pos_u = positions.get(u)
            pos_v = positions.get(v)
            if not pos_u or not pos_v:
                continue
            if any(abs(a - b) <= window for a in pos_u for b in pos_v):
                hits = out.setdefault(sense, [])
                if not hits or hits[-1] != idx:
                    hits.append(idx)
    return out


# ---------------------------------------------------------------------------
# cluster labeling strategies


def _iter_labels(raw):
    if raw is None:
        return ()
    if isinstance(raw, str):
        return (raw,)
    return tuple(raw)


class MajorityLabeler:
    """Label each cluster by majority vote of member sentences' sense labels.

    Only candidate senses of the lemma count as votes; ties break toward
    the earlier candidate-list position. Clusters without votes stay
    unlabeled.
    """

    def __call__(self, lemma, assignment: ClusterAssignment, candidates, sentence_labels):
        cand_rank = {s: i for i, s in enumerate(candidates)}
        votes: dict = {}
        for row, cluster in enumerate(assignment.assignment):
            for sense in _iter_labels(sentence_labels[row]):
                if sense in cand_rank:
                    key = (int(cluster), sense)
                    votes[key] = votes.get(key, 0) + 1
        labels: dict = {}
        for cluster in range(assignment.k_effective):
            best = None
            for sense in candidates:
                count = votes.get((cluster, sense), 0)
                if count > 0 and (best is None or count > best[0]):
                    best = (count, sense)
            if best is not None:
                labels[cluster] = best[1]
        return labels


class FirstSenseLabeler:
    """Degenerate baseline: every cluster gets the lemma's first-listed sense."""

    def __call__(self, lemma, assignment, candidates, sentence_labels):
        if not candidates:
            return {}
        return {c: candidates[0] for c in range(assignment.k_effective)}


class ExternalLabeler:
    """Cluster labels read from an exchange file (lemma, cluster, sense)."""

    def __init__(self, mapping: dict):
        self.mapping = mapping
        self.dropped = 0

    def __call__(self, lemma, assignment, candidates, sentence_labels):
        cand = set(candidates)
        labels = {}
        for cluster in range(assignment.k_effective):
            sense = self.mapping.get((lemma, cluster))
            if sense is None:
                continue
            if sense not in cand:
                self.dropped += 1
                continue
            labels[cluster] = sense
        return labels


def load_external_labels(path) -> ExternalLabeler:
    """Parse the tab-separated ``lemma cluster_index sense_id`` exchange file."""
    path = Path(path)
    mapping: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) != 3 or not all(fields):
                raise FormatError(
                    "expected 3 tab-separated fields (lemma, cluster_index, sense_id)",
                    path=path,
                    line=lineno,
                )
            try:
                cluster = int(fields[1])
            except ValueError:
                raise FormatError("cluster_index must be an integer", path=path, line=lineno) from None
            mapping[(fields[0], cluster)] = fields[2]
    return ExternalLabeler(mapping)


def make_labeler(name: str, exchange_path=None):
    name = name.strip().lower()
    if name == "majority":
        return MajorityLabeler()
    if name == "first_sense":
        return FirstSenseLabeler()
    if name == "external":
        if exchange_path is None:
            raise ValidationError("external labeler requires an exchange file path")
        return load_external_labels(exchange_path)
    raise ValidationError(f"unknown labeler {name!r}")


# ---------------------------------------------------------------------------
# corpus segments


def corpus_segments(
    lemma: str,
    sentences_for_lemma,
    inventory: SenseInventory,
    labeler,
    seed: int = 0,
    max_iter: int = 100,
) -> dict:
    """Cluster a lemma's sentence embeddings and label clusters with senses.

    k equals the lemma's candidate count. A sense's vector is the mean of
    all sentences in clusters labeled with it (the centroid when the label
    is unique). Senses with no labeled cluster are absent from the result.
    """
    if not sentences_for_lemma:
        return {}
    candidates = inventory.candidates_for_lemma(lemma)
    if not candidates:
        return {}
    vectors = [np.asarray(v, dtype=np.float64) for v, _ in sentences_for_lemma]
    labels = [lab for _, lab in sentences_for_lemma]
    assignment = kmeans(vectors, k=len(candidates), seed=seed, max_iter=max_iter)
    assignment.labels = labeler(lemma, assignment, candidates, labels)

    out: dict = {}
    X = assignment.vectors
    for sense in dict.fromkeys(assignment.labels.values()):
        clusters = {c for c, s in assignment.labels.items() if s == sense}
        rows = [i for i, a in enumerate(assignment.assignment) if int(a) in clusters]
        if rows:
            out[sense] = X[rows].mean(axis=0)
    return out


# ---------------------------------------------------------------------------
# bank assembly


def assemble_bank(
    model: ProjectionModel,
    static_table: StaticTable,
    inventory: SenseInventory,
    gloss_segments: dict,
    corpus_segs: dict,
    fill_policy: str = "zero",
) -> SenseBank:
    """Concatenate [projected static | gloss | corpus] per sense.

    Senses whose lemma is out of vocabulary (or missing a trained diagonal)
    are skipped and counted. ``fill_policy`` governs missing segments:
    ``zero`` fills with zeros, ``copy_gloss`` fills a missing corpus segment
    with the gloss segment, ``skip_sense`` drops the sense entirely.
    """
    if fill_policy not in FILL_POLICIES:
        raise ValidationError(f"unknown fill policy {fill_policy!r}")
    p, q = model.p, model.q
    entries: dict = {}
    flags: dict = {}
    coverage = {
        "senses_total": len(inventory),
        "skipped_oov": 0,
        "skipped_no_diagonal": 0,
        "skipped_fill_policy": 0,
        "with_gloss": 0,
        "without_gloss": 0,
        "with_corpus": 0,
        "without_corpus": 0,
    }
    zeros_q = np.zeros(q, dtype=np.float64)
    for sense_id, entry in inventory.senses.items():
        g = static_table.get(entry.lemma)
        if g is None:
            coverage["skipped_oov"] += 1
            continue
        if sense_id not in model.diagonals:
            coverage["skipped_no_diagonal"] += 1
            continue
        gl = gloss_segments.get(sense_id)
        co = corpus_segs.get(sense_id)
        if gl is not None and gl.shape != (q,):
            raise ValidationError(f"gloss segment for {sense_id!r} has length {gl.shape}, expected q={q}")
        if co is not None and co.shape != (q,):
            raise ValidationError(f"corpus segment for {sense_id!r} has length {co.shape}, expected q={q}")
        if fill_policy == "skip_sense" and (gl is None or co is None):
            coverage["skipped_fill_policy"] += 1
            continue
        seg1 = project_sense(model, sense_id, np.asarray(g, dtype=np.float64))
        seg2 = gl if gl is not None else zeros_q
        if co is not None:
            seg3 = co
        elif fill_policy == "copy_gloss":
            seg3 = seg2
        else:
            seg3 = zeros_q
        vec = np.concatenate(
            [
                np.asarray(seg1, dtype=np.float32),
                np.asarray(seg2, dtype=np.float32),
                np.asarray(seg3, dtype=np.float32),
            ]
        )
        entries[sense_id] = vec
        flags[sense_id] = (gl is not None, co is not None)
        coverage["with_gloss" if gl is not None else "without_gloss"] += 1
        coverage["with_corpus" if co is not None else "without_corpus"] += 1
    return SenseBank(p, q, entries, flags, coverage)


# ---------------------------------------------------------------------------
# bank file format (CDEB)


def save_bank(bank: SenseBank, path) -> None:
    parts = [
        BANK_MAGIC,
        struct.pack("<IIIQ", BANK_VERSION, bank.p, bank.q, len(bank.entries)),
    ]
    for sense_id, vec in bank.entries.items():
        gloss_flag, corpus_flag = bank.flags.get(sense_id, (False, False))
        parts.append(_pack_str(sense_id, "sense id"))
        parts.append(np.asarray(vec, dtype="<f4").tobytes())
        parts.append(struct.pack("<BB", int(gloss_flag), int(corpus_flag)))
    Path(path).write_bytes(b"".join(parts))


def load_bank(path) -> SenseBank:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    magic = reader.take(4, "magic")
    if magic != BANK_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {BANK_MAGIC!r}", path=path)
    version = reader.u32("version")
    if version != BANK_VERSION:
        raise FormatError(f"unsupported bank version {version}", path=path)
    p = reader.u32("p")
    q = reader.u32("q")
    if p == 0 or q == 0:
        raise FormatError("p and q must be positive", path=path)
    count = reader.u64("sense count")
    width = p + 2 * q
    entries: dict = {}
    flags: dict = {}
    for i in range(count):
        sense_id = reader.string(f"sense {i} id")
        if sense_id in entries:
            raise FormatError(f"duplicate sense id {sense_id!r}", path=path)
        vec = np.frombuffer(reader.take(4 * width, f"sense {i} vector"), dtype="<f4").copy()
        gflag = reader.take(1, f"sense {i} gloss flag")[0]
        cflag = reader.take(1, f"sense {i} corpus flag")[0]
        if gflag not in (0, 1) or cflag not in (0, 1):
            raise FormatError(f"bad presence flags for sense {sense_id!r}", path=path)
        entries[sense_id] = vec
        flags[sense_id] = (bool(gflag), bool(cflag))
    if not reader.done():
        raise FormatError("trailing bytes after last sense", path=path)
    coverage = {
        "senses_total": len(entries),
        "with_gloss": sum(1 for f in flags.values() if f[0]),
        "without_gloss": sum(1 for f in flags.values() if not f[0]),
        "with_corpus": sum(1 for f in flags.values() if f[1]),
        "without_corpus": sum(1 for f in flags.values() if not f[1]),
    }
    return SenseBank(p, q, entries, flags, coverage)
