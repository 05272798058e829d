"""Text towers: vocabulary, tokenizer, and the embedding network.

A tower maps text to a unit-norm vector: mean-pool learned token
embeddings, push through a two-layer tanh MLP, L2-normalize.  Query and
product towers share parameters by default (one set of weights encodes
both sides); an ablation flag keeps them separate.  Everything is plain
float64 numpy so gradients can be checked against finite differences.

Checkpoints are canonical JSON: same model state always serializes to
the same bytes, which the determinism guarantee leans on.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import TowerlabError

UNK_TOKEN = "<unk>"
UNK_INDEX = 0

_TOKEN_RE = re.compile(r"[a-z0-9]+")

CHECKPOINT_FORMAT = "towerlab-model"
CHECKPOINT_VERSION = 1


class EncoderError(TowerlabError):
    """Invalid encoder input or corrupt checkpoint."""


def split_tokens(text: str) -> list[str]:
    """Lowercase alphanumeric runs; punctuation separates tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token-to-index map with a reserved unknown token at index 0."""

    def __init__(self, tokens):
        """``tokens``: known tokens in index order, excluding the UNK entry."""
        self._tokens = [UNK_TOKEN] + list(tokens)
        self._index = {t: i for i, t in enumerate(self._tokens)}
        if len(self._index) != len(self._tokens):
            raise EncoderError("duplicate token in vocabulary")

    @classmethod
    def build(cls, texts) -> "Vocabulary":
        """Vocabulary over all tokens seen in ``texts``, sorted for determinism."""
        seen = set()
        for text in texts:
            seen.update(split_tokens(text))
        seen.discard(UNK_TOKEN)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._tokens == other._tokens


def tokenize(vocab: Vocabulary, text: str) -> list[int]:
    """Token indices for a text; unknown words map to UNK.

    A text with no alphanumeric characters yields an empty list; callers
    that must embed anyway substitute ``[UNK_INDEX]``.
    """
    if not isinstance(text, str) or text == "":
        raise EncoderError("cannot tokenize empty text")
    return [vocab.index(t) for t in split_tokens(text)]


@dataclass
class TowerParams:
    """One tower's weights.  Shapes: embed (V,d), w1 (d,h), b1 (h,), w2 (h,o), b2 (o,)."""

    embed: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def copy(self) -> "TowerParams":
        return TowerParams(
            self.embed.copy(), self.w1.copy(), self.b1.copy(),
            self.w2.copy(), self.b2.copy(),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {"embed": self.embed, "w1": self.w1, "b1": self.b1,
                "w2": self.w2, "b2": self.b2}

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int,
             dim: int, hidden: int, out_dim: int) -> "TowerParams":
        u = lambda *shape: rng.uniform(-0.05, 0.05, size=shape)
        return cls(u(vocab_size, dim), u(dim, hidden), u(hidden),
                   u(hidden, out_dim), u(out_dim))


class TowerModel:
    """Query and product towers over one shared vocabulary.

    With ``shared=True`` (the default, and the configuration the whole
    pipeline assumes) both towers are literally the same TowerParams
    object, so a gradient step moves both sides at once.
    """

    def __init__(self, vocab: Vocabulary, query_tower: TowerParams,
                 product_tower: TowerParams | None = None):
        self.vocab = vocab
        self.query_tower = query_tower
        self.product_tower = query_tower if product_tower is None else product_tower
        self.shared = self.product_tower is self.query_tower
        if query_tower.embed.shape[0] != len(vocab):
            raise EncoderError(
                f"embedding rows {query_tower.embed.shape[0]} do not match "
                f"vocabulary size {len(vocab)}"
            )

    @classmethod
    def init(cls, vocab: Vocabulary, dim: int = 64, hidden: int = 128,
             out_dim: int = 64, seed: int = 0, shared: bool = True) -> "TowerModel":
        rng = np.random.default_rng(seed)
        qt = TowerParams.init(rng, len(vocab), dim, hidden, out_dim)
        pt = None if shared else TowerParams.init(rng, len(vocab), dim, hidden, out_dim)
        return cls(vocab, qt, pt)

    @property
    def dim(self) -> int:
        return self.query_tower.embed.shape[1]

    @property
    def hidden(self) -> int:
        return self.query_tower.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.query_tower.w2.shape[1]

    def tower(self, side: str) -> TowerParams:
        if side == "query":
            return self.query_tower
        if side == "product":
            return self.product_tower
        raise EncoderError(f"unknown tower {side!r}")

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """Trainable arrays in a fixed order, named uniquely.

        Shared model: one set of names.  Separate towers: q_/p_ prefixes.
        """
        if self.shared:
            return list(self.query_tower.arrays().items())
        items = [("q_" + k, v) for k, v in self.query_tower.arrays().items()]
        items += [("p_" + k, v) for k, v in self.product_tower.arrays().items()]
        return items

    def copy(self) -> "TowerModel":
        qt = self.query_tower.copy()
        pt = None if self.shared else self.product_tower.copy()
        return TowerModel(self.vocab, qt, pt)

    def encode(self, text: str, side: str = "query") -> np.ndarray:
        """Unit-norm embedding of a text; token-less text falls back to UNK."""
        tokens = tokenize(self.vocab, text) or [UNK_INDEX]
        return embed_text(self, tokens, side)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TowerModel):
            return NotImplemented
        if self.vocab != other.vocab or self.shared != other.shared:
            return False
        mine = self.param_items()
        theirs = other.param_items()
        return all(a == b and np.array_equal(x, y) for (a, x), (b, y) in zip(mine, theirs))


@dataclass
class ForwardCache:
    """Intermediates of a batched tower forward pass, kept for backprop."""

    token_lists: list[list[int]]
    pooled: np.ndarray   # (n, d) mean-pooled token embeddings
    hidden: np.ndarray   # (n, h) tanh activations
    raw: np.ndarray      # (n, o) pre-normalization outputs
    norms: np.ndarray    # (n,)
    out: np.ndarray      # (n, o) unit rows


def forward_batch(params: TowerParams, token_lists: list[list[int]]) -> ForwardCache:
    """Run n token lists through one tower; every output row is unit-norm.

    Raises on an empty token list or a zero-norm output (both indicate a
    broken caller or degenerate weights, not recoverable state).
    """
    n = len(token_lists)
    d = params.embed.shape[1]
    pooled = np.empty((n, d))
    for i, toks in enumerate(token_lists):
        if not toks:
            raise EncoderError(f"empty token list at position {i}")
        pooled[i] = params.embed[toks].mean(axis=0)
    hidden = np.tanh(pooled @ params.w1 + params.b1)
    raw = hidden @ params.w2 + params.b2
    norms = np.linalg.norm(raw, axis=1)
    if not np.all(np.isfinite(raw)):
        bad = int(np.argwhere(~np.isfinite(raw).all(axis=1))[0, 0])
        raise EncoderError(f"non-finite tower output at position {bad}")
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise EncoderError(f"zero-norm tower output at position {bad}")
    out = raw / norms[:, None]
    return ForwardCache(token_lists, pooled, hidden, raw, norms, out)


def backward_batch(params: TowerParams, cache: ForwardCache,
                   grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Vector-Jacobian product of forward_batch.

    ``grad_out`` holds the loss gradient w.r.t. the unit-norm outputs;
    the return maps each parameter array name to its gradient.
    """
    # through L2 normalization: d(z/|z|) projects away the radial component
    radial = np.sum(grad_out * cache.out, axis=1, keepdims=True)
    g_raw = (grad_out - radial * cache.out) / cache.norms[:, None]
    g_b2 = g_raw.sum(axis=0)
    g_w2 = cache.hidden.T @ g_raw
    g_hidden = (g_raw @ params.w2.T) * (1.0 - cache.hidden ** 2)
    g_b1 = g_hidden.sum(axis=0)
    g_w1 = cache.pooled.T @ g_hidden
    g_pooled = g_hidden @ params.w1.T
    g_embed = np.zeros_like(params.embed)
    for i, toks in enumerate(cache.token_lists):
        np.add.at(g_embed, toks, g_pooled[i] / len(toks))
    return {"embed": g_embed, "w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}


def embed_text(m: TowerModel, tokens: list[int], side: str = "query") -> np.ndarray:
    """Embed one tokenized text with the named tower.  Unit-norm result."""
    if not tokens:
        raise EncoderError("cannot embed an empty token sequence")
    params = m.tower(side)
    if any(t < 0 or t >= params.embed.shape[0] for t in tokens):
        raise EncoderError("token index out of vocabulary range")
    return forward_batch(params, [list(tokens)]).out[0]


def embed_texts(m: TowerModel, texts: list[str], side: str = "query") -> np.ndarray:
    """Embed many texts at once; rows align with ``texts``."""
    token_lists = [tokenize(m.vocab, t) or [UNK_INDEX] for t in texts]
    return forward_batch(m.tower(side), token_lists).out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped into [-1, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise EncoderError(f"shape mismatch {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise EncoderError("non-finite input to cosine")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


# ---- checkpoint serialization ----

def _params_to_json(p: TowerParams) -> dict:
    return {name: arr.tolist() for name, arr in p.arrays().items()}


def _params_from_json(obj: dict) -> TowerParams:
    try:
        arrays = {name: np.asarray(obj[name], dtype=np.float64)
                  for name in ("embed", "w1", "b1", "w2", "b2")}
    except KeyError as missing:
        raise EncoderError(f"checkpoint missing parameter {missing}") from None
    return TowerParams(**arrays)


def save_model(m: TowerModel, path) -> None:
    """Write the model as canonical JSON (sorted keys, fixed separators).

    The same model state always produces identical bytes; float64 values
    round-trip exactly through Python's repr.
    """
    towers = {"query": _params_to_json(m.query_tower)}
    if not m.shared:
        towers["product"] = _params_to_json(m.product_tower)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"dim": m.dim, "hidden": m.hidden, "out_dim": m.out_dim},
        "vocab": m.vocab.tokens[1:],
        "towers": towers,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_model(path) -> TowerModel:
    """Load a checkpoint written by save_model."""
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise EncoderError(f"{path}: not valid JSON: {err}") from None
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise EncoderError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise EncoderError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    vocab = Vocabulary(payload["vocab"])
    towers = payload["towers"]
    qt = _params_from_json(towers["query"])
    pt = _params_from_json(towers["product"]) if "product" in towers else None
    return TowerModel(vocab, qt, pt)
