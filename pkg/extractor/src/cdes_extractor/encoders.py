"""Contextualized encoders producing per-layer piece vectors.

Two backends share one interface:

* ``HashEncoder`` - a deterministic, dependency-free stand-in. Piece vectors
  are seeded from (sentence, piece index, layer), so they are context
  sensitive, reproducible across runs and platforms, and decompose exactly
  per layer. Tokens containing ``-`` or longer than 8 characters are split
  into multiple pieces to exercise word pooling.
* ``TransformersEncoder`` - a real masked language model through the
  transformers library (optional dependency), aligned via the fast
  tokenizer's word ids; special tokens carry no word id and are excluded
  from pooling.

``encode(tokens)`` returns an :class:`EncodedSentence` with
``layer_vectors`` of shape (n_layers + 1, n_pieces, q) - embeddings plus
one hidden state per layer, matching the transformers convention - and
``piece_word_ids`` mapping each piece back to its source word.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass
class EncodedSentence:
    piece_word_ids: list  # word index per piece
    layer_vectors: np.ndarray  # (n_layers + 1, n_pieces, q) float32


class HashEncoder:
    """Deterministic pseudo-contextual encoder for offline runs and tests."""

    def __init__(self, q: int = 64, n_layers: int = 6, seed: int = 0, max_pieces: int = 128):
        if q < 1 or n_layers < 1:
            raise ValueError("q and n_layers must be >= 1")
        self.q = q
        self.n_layers = n_layers
        self.seed = seed
        self.max_pieces = max_pieces
        self.name = f"hash(q={q},layers={n_layers},seed={seed})"

    def split(self, token: str) -> list:
        if "-" in token:
            pieces = [p for p in token.split("-") if p] or [token]
        elif len(token) > 8:
            pieces = [token[i : i + 8] for i in range(0, len(token), 8)]
        else:
            pieces = [token]
        return pieces

    def count_pieces(self, tokens) -> int:
        return sum(len(self.split(t)) for t in tokens)

    def encode(self, tokens) -> EncodedSentence:
        pieces, word_ids = [], []
        for w_idx, token in enumerate(tokens):
            for piece in self.split(token):
                pieces.append(piece)
                word_ids.append(w_idx)
        if not pieces:
            raise ValueError("cannot encode an empty sentence")
        if len(pieces) > self.max_pieces:
            raise ValueError(f"{len(pieces)} pieces exceed the window of {self.max_pieces}")
        context = "\x1f".join(pieces)
        layers = np.empty((self.n_layers + 1, len(pieces), self.q), dtype=np.float32)
        for layer in range(self.n_layers + 1):
            for idx in range(len(pieces)):
                digest = hashlib.sha256(
                    f"{self.seed}|{context}|{idx}|{layer}".encode("utf-8")
                ).digest()
                rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
                layers[layer, idx] = rng.standard_normal(self.q).astype(np.float32)
        return EncodedSentence(word_ids, layers)


class TransformersEncoder:
    """Wraps a pretrained masked LM; hidden states per layer, word-aligned."""

    def __init__(self, model_name: str, device: str = "cpu", max_pieces: int | None = None):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise RuntimeError(
                "the transformers backend needs the 'hf' extra: "
                "pip install cdes-extractor[hf]"
            ) from exc
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_name, use_fast=True)
        self.model = AutoModel.from_pretrained(model_name, output_hidden_states=True)
        self.model.eval()
        self.device = device
        self.model.to(device)
        self.q = int(self.model.config.hidden_size)
        self.n_layers = int(self.model.config.num_hidden_layers)
        self.max_pieces = max_pieces or int(self.tokenizer.model_max_length)
        self.name = model_name

    def count_pieces(self, tokens) -> int:
        enc = self.tokenizer(list(tokens), is_split_into_words=True, add_special_tokens=True)
        return len(enc["input_ids"])

    def encode(self, tokens) -> EncodedSentence:
        torch = self._torch
        enc = self.tokenizer(
            list(tokens),
            is_split_into_words=True,
            return_tensors="pt",
            truncation=True,
            max_length=self.max_pieces,
        )
        with torch.no_grad():
            out = self.model(**{k: v.to(self.device) for k, v in enc.items()})
        # hidden_states: tuple of (1, n_pieces, q), embeddings first
        stacked = torch.stack(out.hidden_states, dim=0)[:, 0].cpu().numpy()
        word_ids = enc.word_ids(batch_index=0)
        keep = [i for i, w in enumerate(word_ids) if w is not None]
        return EncodedSentence(
            [word_ids[i] for i in keep],
            stacked[:, keep, :].astype(np.float32),
        )


def make_encoder(model: str, q: int, n_layers: int, seed: int, device: str, max_pieces: int):
    if model == "hash":
        return HashEncoder(q=q, n_layers=n_layers, seed=seed, max_pieces=max_pieces)
    return TransformersEncoder(model, device=device, max_pieces=max_pieces)
