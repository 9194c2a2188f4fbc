"""Deterministic synthetic fixture builders shared across test modules.

Everything here is seeded; building the same fixture twice yields identical
files, which the CLI determinism tests rely on.
"""

from pathlib import Path

import numpy as np

from cdes.bank import SenseBank, save_bank
from cdes.store import ContextRecord, save_context_dump
from cdes.wsd import query_vector


def write_static_table(path: Path, vectors: dict) -> None:
    lines = []
    for token, vec in vectors.items():
        lines.append(token + " " + " ".join(repr(float(v)) for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_inventory(path: Path, rows, gloss_vectors: dict | None = None) -> None:
    """rows: iterable of (sense_id, lemma, pos, gloss)."""
    gloss_vectors = gloss_vectors or {}
    lines = []
    for sense_id, lemma, pos, gloss in rows:
        fields = [sense_id, lemma, pos, gloss]
        if sense_id in gloss_vectors:
            fields.append(" ".join(repr(float(v)) for v in gloss_vectors[sense_id]))
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_gold_keys(path: Path, gold: dict) -> None:
    lines = [f"{iid} {' '.join(senses)}" for iid, senses in gold.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_records(n, q, seed=0, lemmas=("alpha", "beta"), senses=None, pos="NOUN"):
    """n records with round-robin lemmas and optional gold senses."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        lemma = lemmas[i % len(lemmas)]
        gold = None
        if senses is not None:
            gold = senses[lemma][i % len(senses[lemma])]
        vec = rng.normal(size=q).astype(np.float32)
        records.append(ContextRecord(f"inst{i:04d}", lemma, pos, gold, vec))
    return records


def build_oracle_wsd_fixture(root: Path, n_instances=50, p=4, q=6, seed=11):
    """A WSD set where every gold sense is the unique cosine argmax.

    Each instance gets its own lemma with two senses; the gold sense's bank
    vector equals the instance's query vector and the other sense gets its
    negation, so the gold sense wins with cosine 1 and the alternative
    scores -1.

    Returns a dict of paths plus the (lemma -> senses) layout.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    table = {}
    inv_rows = []
    records = []
    gold = {}
    bank_entries = {}
    bank_flags = {}
    for i in range(n_instances):
        lemma = f"lemma{i:03d}"
        s_gold, s_other = f"{lemma}%00", f"{lemma}%01"
        g = rng.normal(size=p)
        c = rng.normal(size=q).astype(np.float32)
        table[lemma] = g
        inv_rows.append((s_gold, lemma, "NOUN", f"gold gloss {i}"))
        inv_rows.append((s_other, lemma, "NOUN", f"other gloss {i}"))
        iid = f"inst{i:04d}"
        records.append(ContextRecord(iid, lemma, "NOUN", None, c))
        gold[iid] = [s_gold]
        query = query_vector(g, c).astype(np.float32)
        bank_entries[s_gold] = query
        bank_entries[s_other] = -query
        bank_flags[s_gold] = (True, True)
        bank_flags[s_other] = (True, True)

    paths = {
        "static_table": root / "static.txt",
        "inventory": root / "inventory.tsv",
        "eval_dump": root / "eval.cde1",
        "gold_keys": root / "gold.key",
        "bank": root / "bank.cdeb",
    }
    write_static_table(paths["static_table"], table)
    write_inventory(paths["inventory"], inv_rows)
    save_context_dump(records, paths["eval_dump"])
    write_gold_keys(paths["gold_keys"], gold)
    bank = SenseBank(p, q, bank_entries, bank_flags, {})
    save_bank(bank, paths["bank"])
    return paths


def build_pipeline_fixture(root: Path, p=3, q=4, n_lemmas=4, n_train=48, seed=5):
    """Full train -> build-bank -> eval-wsd input set under one directory.

    Senses are separable by construction: per sense, context vectors cluster
    around a sense-specific anchor, so trained projections carry signal.
    Returns a dict of paths and the layout (lemmas, senses per lemma).
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    lemmas = [f"word{i}" for i in range(n_lemmas)]
    senses = {lemma: [f"{lemma}%00", f"{lemma}%01"] for lemma in lemmas}
    table = {lemma: rng.normal(size=p) for lemma in lemmas}
    anchors = {}
    inv_rows = []
    gloss_vectors = {}
    for lemma in lemmas:
        for sense in senses[lemma]:
            anchors[sense] = rng.normal(size=q) * 3.0
            inv_rows.append((sense, lemma, "NOUN", f"gloss of {sense}"))
            gloss_vectors[sense] = anchors[sense] + rng.normal(size=q) * 0.05

    def context_for(sense):
        return (anchors[sense] + rng.normal(size=q) * 0.1).astype(np.float32)

    train_records = []
    for i in range(n_train):
        lemma = lemmas[i % len(lemmas)]
        sense = senses[lemma][(i // len(lemmas)) % 2]
        train_records.append(
            ContextRecord(f"tr{i:04d}", lemma, "NOUN", sense, context_for(sense))
        )

    eval_records = []
    gold = {}
    for i in range(2 * n_lemmas):
        lemma = lemmas[i % len(lemmas)]
        sense = senses[lemma][i % 2]
        iid = f"ev{i:04d}"
        eval_records.append(ContextRecord(iid, lemma, "NOUN", None, context_for(sense)))
        gold[iid] = [sense]

    # corpus sentences: one tokenized line per sentence; embeddings near the
    # sense anchor; instance ids carry the sentence file line index
    sentence_lines = []
    corpus_records = []
    collocation_rows = []
    for li, lemma in enumerate(lemmas):
        partner0, partner1 = f"cue{li}a", f"cue{li}b"
        collocation_rows.append((lemma, partner0, senses[lemma][0]))
        collocation_rows.append((lemma, partner1, senses[lemma][1]))
        for j in range(6):
            sense = senses[lemma][j % 2]
            partner = partner0 if j % 2 == 0 else partner1
            idx = len(sentence_lines)
            sentence_lines.append(f"the {lemma} near {partner} today")
            corpus_records.append(
                ContextRecord(str(idx), lemma, "NOUN", None, context_for(sense))
            )

    paths = {
        "static_table": root / "static.txt",
        "inventory": root / "inventory.tsv",
        "train_dump": root / "train.cde1",
        "eval_dump": root / "eval.cde1",
        "gold_keys": root / "gold.key",
        "corpus_dump": root / "corpus.cde1",
        "sentences": root / "sentences.txt",
        "collocations": root / "collocations.tsv",
    }
    write_static_table(paths["static_table"], table)
    write_inventory(paths["inventory"], inv_rows, gloss_vectors)
    save_context_dump(train_records, paths["train_dump"])
    save_context_dump(eval_records, paths["eval_dump"])
    write_gold_keys(paths["gold_keys"], gold)
    save_context_dump(corpus_records, paths["corpus_dump"])
    paths["sentences"].write_text("\n".join(sentence_lines) + "\n", encoding="utf-8")
    paths["collocations"].write_text(
        "\n".join("\t".join(row) for row in collocation_rows) + "\n", encoding="utf-8"
    )
    return paths, lemmas, senses


def write_config(path: Path, entries: dict) -> None:
    path.write_text(
        "\n".join(f"{k} = {v}" for k, v in entries.items()) + "\n", encoding="utf-8"
    )


def planted_problem(root: Path, activation=None, n=200, seed=21):
    """Records whose contexts are exact images of a planted model.

    c = M f(a*_s * g_lemma) with M well-conditioned, so W = M^{-1} together
    with the planted diagonals reaches zero loss. Returns (records, table,
    inventory).
    """
    from cdes import backend
    from cdes.projection import Activation
    from cdes.store import load_sense_inventory, load_static_table

    activation = Activation.GELU if activation is None else activation
    rng = np.random.default_rng(seed)
    p = q = 4
    lemmas = {"la": "la%00", "lb": "lb%00"}
    table_vecs = {lemma: rng.normal(size=p) for lemma in lemmas}
    planted = {sense: rng.uniform(0.5, 1.5, size=p) for sense in lemmas.values()}
    M = rng.normal(size=(q, p)) + 2.0 * np.eye(p)

    records = []
    for i in range(n):
        lemma = "la" if i % 2 == 0 else "lb"
        sense = lemmas[lemma]
        z = planted[sense] * table_vecs[lemma]
        target = backend.activate(z, int(activation))
        c = (M @ target).astype(np.float32)
        records.append(ContextRecord(f"r{i}", lemma, "NOUN", sense, c))

    root.mkdir(parents=True, exist_ok=True)
    table_path = root / "static.txt"
    write_static_table(table_path, table_vecs)
    inv_path = root / "inv.tsv"
    write_inventory(inv_path, [(s, lemma, "NOUN", "g") for lemma, s in lemmas.items()])
    return records, load_static_table(table_path), load_sense_inventory(inv_path)
