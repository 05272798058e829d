"""Synthetic retail world with known ground truth.

Queries and products are bags of tokens drawn from latent topics: the
vocabulary is split into per-topic blocks, and a text from topic t draws
each token from t's block with probability 0.8, anywhere otherwise.  A
simulated click session picks a query by uniform traffic and clicks a
product of the same topic, except with probability ``noise`` where the
product is uniform over everything.  True relevance is topic equality
(grade 1), with an optional two-level mode where the sibling topic under
a shared parent earns grade 0.5.

The holdout split withholds a fraction of queries and of products from
the training graph, which manufactures the unseen evaluation buckets
while the judgments still cover every query and product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .click_graph import ClickGraph, ProductDoc
from .errors import TowerlabError
from .evaluator import Judgments, VisibilityManifest, expand_exhaustive

IN_TOPIC_RATE = 0.8  # chance a token comes from the text's own topic block


class SyntheticWorldError(TowerlabError):
    """World configuration that cannot produce a usable dataset."""


@dataclass
class WorldConfig:
    """Size and noise knobs of the generated world."""

    num_topics: int = 8
    num_queries: int = 400
    num_products: int = 200
    vocab_size: int = 500
    tokens_per_text: int = 6
    click_sessions: int = 50_000
    noise: float = 0.2
    hierarchy: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("num_topics", "num_queries", "num_products",
                     "vocab_size", "tokens_per_text", "click_sessions"):
            if getattr(self, name) < 1:
                raise SyntheticWorldError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (0.0 <= self.noise <= 1.0):
            raise SyntheticWorldError(f"noise must be in [0, 1], got {self.noise}")
        if self.seed < 0:
            raise SyntheticWorldError(f"seed must be >= 0, got {self.seed}")
        if self.vocab_size < self.num_topics:
            raise SyntheticWorldError(
                f"vocab_size {self.vocab_size} smaller than num_topics {self.num_topics}"
            )
        if self.tokens_per_text < 3:
            raise SyntheticWorldError(
                f"tokens_per_text must be >= 3 to fill product fields, "
                f"got {self.tokens_per_text}"
            )
        if self.hierarchy and self.num_topics % 2 != 0:
            raise SyntheticWorldError(
                f"hierarchy mode pairs topics, needs an even count, got {self.num_topics}"
            )


@dataclass
class World:
    """Generated texts, their latent topics, and the simulated click graph."""

    config: WorldConfig
    query_texts: list[str]
    product_docs: list[ProductDoc]
    query_topics: list[int]
    product_topics: list[int]
    graph: ClickGraph

    def true_grade(self, query_idx: int, product_idx: int) -> float:
        """Ground-truth relevance from latent topics."""
        qt = self.query_topics[query_idx]
        pt = self.product_topics[product_idx]
        if qt == pt:
            return 1.0
        if self.config.hierarchy and qt // 2 == pt // 2:
            return 0.5
        return 0.0


def _sample_tokens(rng: np.random.Generator, topic: int, count: int,
                   block_starts: np.ndarray, block_ends: np.ndarray,
                   vocab_size: int) -> list[str]:
    tokens = []
    for _ in range(count):
        if rng.random() < IN_TOPIC_RATE:
            word = int(rng.integers(block_starts[topic], block_ends[topic]))
        else:
            word = int(rng.integers(vocab_size))
        tokens.append(f"w{word:04d}")
    return tokens


def _unique_text(existing: set[str], make) -> str:
    # token bags can collide; identical texts would merge under interning
    # and break the text -> topic mapping, so resample until distinct
    for _ in range(1000):
        text = make()
        if text not in existing:
            existing.add(text)
            return text
    raise SyntheticWorldError(
        "could not generate distinct texts; vocabulary is too small for the world size"
    )


def generate_world(cfg: WorldConfig) -> World:
    """Deterministically generate a world from its config and seed."""
    rng = np.random.default_rng(cfg.seed)
    edges = np.linspace(0, cfg.vocab_size, cfg.num_topics + 1).astype(np.int64)
    block_starts, block_ends = edges[:-1], edges[1:]
    if np.any(block_ends - block_starts < 1):
        raise SyntheticWorldError("vocabulary has an empty topic block")

    query_topics = [int(rng.integers(cfg.num_topics)) for _ in range(cfg.num_queries)]
    product_topics = [int(rng.integers(cfg.num_topics)) for _ in range(cfg.num_products)]
    for topic in range(cfg.num_topics):
        if topic not in query_topics or topic not in product_topics:
            raise SyntheticWorldError(
                f"topic {topic} drew no queries or no products; "
                f"increase num_queries/num_products or lower num_topics"
            )

    def draw(topic, count):
        return _sample_tokens(rng, topic, count, block_starts, block_ends,
                              cfg.vocab_size)

    seen_texts: set[str] = set()
    query_texts = [
        _unique_text(seen_texts, lambda t=t: " ".join(draw(t, cfg.tokens_per_text)))
        for t in query_topics
    ]
    product_docs = []
    product_renders: set[str] = set()
    for topic in product_topics:
        def make(t=topic):
            words = draw(t, cfg.tokens_per_text)
            return ProductDoc(" ".join(words[:-2]), words[-2], words[-1])
        for _ in range(1000):
            doc = make()
            if doc.rendered not in product_renders:
                product_renders.add(doc.rendered)
                break
        else:
            raise SyntheticWorldError(
                "could not generate distinct product texts; vocabulary too small"
            )
        product_docs.append(doc)

    by_topic: dict[int, list[int]] = {}
    for idx, topic in enumerate(product_topics):
        by_topic.setdefault(topic, []).append(idx)

    counts: dict[tuple[int, int], int] = {}
    for _ in range(cfg.click_sessions):
        q = int(rng.integers(cfg.num_queries))
        if rng.random() < cfg.noise:
            p = int(rng.integers(cfg.num_products))
        else:
            candidates = by_topic[query_topics[q]]
            p = candidates[int(rng.integers(len(candidates)))]
        counts[(q, p)] = counts.get((q, p), 0) + 1

    rows = [
        (query_texts[q], product_docs[p], c)
        for (q, p), c in sorted(counts.items())
    ]
    graph = ClickGraph(rows)
    return World(cfg, query_texts, product_docs, query_topics, product_topics, graph)


def world_judgments(world: World) -> Judgments:
    """Exhaustive judgments over every query x product from the latent topics."""
    grades = {}
    for qi, qtext in enumerate(world.query_texts):
        for pi, doc in enumerate(world.product_docs):
            g = world.true_grade(qi, pi)
            if g > 0.0:
                grades[(qtext, doc.rendered)] = g
    if not grades:
        raise SyntheticWorldError("world has no relevant query-product pairs")
    j = Judgments(
        grades,
        queries=world.query_texts,
        products=[d.rendered for d in world.product_docs],
    )
    return expand_exhaustive(j)


def holdout_split(world: World, frac_unseen_queries: float = 0.3,
                  frac_unseen_products: float = 0.3, seed: int = 0,
                  ) -> tuple[ClickGraph, Judgments, VisibilityManifest]:
    """Withhold random queries and products from the training graph.

    Returns (training graph, exhaustive judgments over the full world,
    visibility manifest of the training graph).  The judgments keep all
    queries and products, so withheld ones populate the unseen buckets.
    Warns when a fraction of zero leaves unseen-node buckets empty.
    """
    for name, frac in (("frac_unseen_queries", frac_unseen_queries),
                       ("frac_unseen_products", frac_unseen_products)):
        if not (0.0 <= frac < 1.0):
            raise SyntheticWorldError(f"{name} must be in [0, 1), got {frac}")
    rng = np.random.default_rng(seed)
    nq, np_ = len(world.query_texts), len(world.product_docs)
    held_q = set(map(int, rng.choice(nq, size=int(frac_unseen_queries * nq),
                                     replace=False)))
    held_p = set(map(int, rng.choice(np_, size=int(frac_unseen_products * np_),
                                     replace=False)))

    qid_of = {t: i for i, t in enumerate(world.query_texts)}
    pid_of = {d.rendered: i for i, d in enumerate(world.product_docs)}
    rows = []
    for qid, pid, w in world.graph.edges():
        wq = qid_of[world.graph.query_text(qid)]
        wp = pid_of[world.graph.product_text(pid)]
        if wq in held_q or wp in held_p:
            continue
        rows.append((world.graph.query_text(qid), world.graph.product_doc(pid), w))
    if not rows:
        raise SyntheticWorldError("holdout split left an empty training graph")
    train_graph = ClickGraph(rows)
    judgments = world_judgments(world)
    manifest = VisibilityManifest.from_click_graph(train_graph)

    empty = []
    if not held_q:
        empty.extend([6, 7])
    if not held_p:
        empty.extend([5, 7])
    if empty:
        warnings.warn(
            f"holdout fractions leave buckets {sorted(set(empty))} empty",
            stacklevel=2,
        )
    return train_graph, judgments, manifest
