"""Training-pair extraction from the click graph.

Four sources, all emitting (left, right, role) text pairs:

* qq: random walk query -> clicked product -> co-clicking query.  The
  first query is drawn by click frequency, the product uniformly from
  that query's k most-clicked, the second query uniformly from the
  product's clickers.  Self-pairs are kept; they are what the walk
  produces and the contrastive loss handles them.
* pp: the same walk with the two sides swapped.
* pq: every click edge repeated by its weight, i.e. the supervised
  clickthrough pairs.
* unsup: two independent token-dropout views of each input text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .click_graph import ClickGraph
from .errors import TowerlabError

ROLES = ("qq", "pp", "pq", "unsup")


class MinerError(TowerlabError):
    """Invalid mining configuration or unwritable pair data."""


@dataclass(frozen=True)
class PairSample:
    """One training pair: two texts and the role they were mined under."""

    left: str
    right: str
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise MinerError(f"unknown pair role {self.role!r}")
        for text in (self.left, self.right):
            if not text:
                raise MinerError("pair with empty text")
            if "\t" in text or "\n" in text:
                raise MinerError("pair text contains a tab or newline")


@dataclass
class SamplingConfig:
    """Walk parameters: top-k cutoff, number of pairs to draw, RNG seed."""

    k_top: int = 10
    n_pairs: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.k_top < 1:
            raise MinerError(f"k_top must be >= 1, got {self.k_top}")
        if self.n_pairs < 1:
            raise MinerError(f"n_pairs must be >= 1, got {self.n_pairs}")


class PairDataset:
    """An ordered list of PairSamples with TSV round-trip."""

    def __init__(self, samples):
        self.samples = list(samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        got = self.samples[idx]
        return PairDataset(got) if isinstance(idx, slice) else got

    @property
    def role(self) -> str | None:
        """The single role of the dataset, or None when empty or mixed."""
        roles = {s.role for s in self.samples}
        return roles.pop() if len(roles) == 1 else None

    def texts(self) -> list[str]:
        out = []
        for s in self.samples:
            out.append(s.left)
            out.append(s.right)
        return out

    def save_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# left\tright\trole\n")
            for s in self.samples:
                fh.write(f"{s.left}\t{s.right}\t{s.role}\n")

    @classmethod
    def load_tsv(cls, path) -> "PairDataset":
        samples = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.startswith("#") or not line.strip():
                    continue
                fields = line.rstrip("\n").split("\t")
                if len(fields) != 3:
                    raise MinerError(
                        f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                    )
                left, right, role = fields
                if role not in ROLES:
                    raise MinerError(f"{path}:{lineno}: unknown role {role!r}")
                if not left or not right:
                    raise MinerError(f"{path}:{lineno}: empty pair text")
                samples.append(PairSample(left, right, role))
        return cls(samples)


def _walk_pairs(graph: ClickGraph, cfg: SamplingConfig, swapped: bool) -> PairDataset:
    """Shared three-step walk; swapped=True runs it product-first."""
    rng = np.random.default_rng(cfg.seed)
    if swapped:
        start = graph.product_distribution()
        top_k = graph.top_k_queries
        related = graph.products_of_sorted
        text = graph.product_text
    else:
        start = graph.query_distribution()
        top_k = graph.top_k_products
        related = graph.queries_of_sorted
        text = graph.query_text
    role = "pp" if swapped else "qq"
    samples = []
    for _ in range(cfg.n_pairs):
        first = start.sample(rng)
        middle_candidates = top_k(first, cfg.k_top)
        middle = middle_candidates[int(rng.integers(len(middle_candidates)))]
        second_candidates = related(middle)
        second = second_candidates[int(rng.integers(len(second_candidates)))]
        samples.append(PairSample(text(first), text(second), role))
    return PairDataset(samples)


def mine_qq(graph: ClickGraph, cfg: SamplingConfig) -> PairDataset:
    """Query-query pairs via the frequency-weighted co-click walk."""
    return _walk_pairs(graph, cfg, swapped=False)


def mine_pp(graph: ClickGraph, cfg: SamplingConfig) -> PairDataset:
    """Product-product pairs via the role-swapped walk."""
    return _walk_pairs(graph, cfg, swapped=True)


def extract_pq(graph: ClickGraph) -> PairDataset:
    """Clickthrough pairs: each edge repeated by its click count, sorted id order."""
    samples = []
    for qid, pid, w in graph.edges():
        sample = PairSample(graph.query_text(qid), graph.product_text(pid), "pq")
        samples.extend([sample] * w)
    if not samples:
        raise MinerError("graph has no edges to extract pairs from")
    return PairDataset(samples)


def unsup_views(texts, dropout_rate: float, seed: int = 0) -> PairDataset:
    """Two independent token-dropout views of each text.

    Each whitespace token survives with probability 1 - dropout_rate; a
    view that would lose every token keeps one, chosen uniformly, so the
    output text is never empty.
    """
    if not (0.0 <= dropout_rate < 1.0):
        raise MinerError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)
    samples = []
    for text in texts:
        tokens = text.split()
        if not tokens:
            raise MinerError("cannot build views of an empty text")
        left = _dropout_view(tokens, dropout_rate, rng)
        right = _dropout_view(tokens, dropout_rate, rng)
        samples.append(PairSample(left, right, "unsup"))
    if not samples:
        raise MinerError("no input texts for unsupervised views")
    return PairDataset(samples)


def _dropout_view(tokens: list[str], rate: float, rng: np.random.Generator) -> str:
    keep = rng.random(len(tokens)) >= rate
    if not keep.any():
        keep[int(rng.integers(len(tokens)))] = True
    return " ".join(t for t, k in zip(tokens, keep) if k)
