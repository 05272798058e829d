"""Weighted bipartite click graph between search queries and products.

The graph is built once from a tab-separated click log and is read-only
afterwards.  It answers the three questions pair mining needs: how often
is each query issued (edge-weight marginals), which products does a
query click most (top-k by weight), and which queries co-click a product
(adjacency).  Node identity is interned normalized text, so the same
query string in two log rows is one node regardless of case or spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TowerlabError


class ClickLogError(TowerlabError):
    """Malformed or empty click log input."""


class ClickGraphError(TowerlabError):
    """Query against a graph that cannot answer it (unknown node, no edges)."""


def normalize_text(text: str) -> str:
    """Lowercase and collapse runs of whitespace to single spaces."""
    return " ".join(text.split()).lower()


@dataclass(frozen=True)
class ProductDoc:
    """Product-side fields kept from the click log.

    The model never sees the fields separately; ``rendered`` is the text
    the product tower encodes and also the product's interning key.
    """

    title: str
    brand: str
    category: str

    @property
    def rendered(self) -> str:
        """Comma-space join of the nonempty fields, title first."""
        return ", ".join(f for f in (self.title, self.brand, self.category) if f)


@dataclass(frozen=True)
class NodeDistribution:
    """Discrete distribution over node ids, proportional to incident click weight."""

    ids: np.ndarray    # int64, ascending
    probs: np.ndarray  # float64, sums to 1

    def __post_init__(self):
        cum = np.cumsum(self.probs)
        # guard against drift past 1.0 so sampling never indexes out of range
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    def sample(self, rng: np.random.Generator) -> int:
        idx = int(np.searchsorted(self._cum, rng.random(), side="right"))
        return int(self.ids[idx])

    def prob_of(self, node_id: int) -> float:
        pos = int(np.searchsorted(self.ids, node_id))
        if pos >= len(self.ids) or self.ids[pos] != node_id:
            return 0.0
        return float(self.probs[pos])


class ClickGraph:
    """Immutable weighted bipartite graph of query-product click counts."""

    def __init__(self, rows):
        """Build from (query_text, ProductDoc, count) rows.

        Texts are normalized before interning; ids are assigned in
        sorted text order so tie-breaking never depends on row order.
        Duplicate edges sum their counts.  Rows with empty text or
        non-positive counts are the caller's bug and raise.
        """
        normalized = []
        docs_by_render: dict[str, ProductDoc] = {}
        for query, doc, count in rows:
            qtext = normalize_text(query)
            if not qtext:
                raise ClickLogError("empty query text")
            ndoc = ProductDoc(
                normalize_text(doc.title),
                normalize_text(doc.brand),
                normalize_text(doc.category),
            )
            if not ndoc.rendered:
                raise ClickLogError("product with no nonempty field")
            if not isinstance(count, int) or count < 1:
                raise ClickLogError(f"click count must be a positive integer, got {count!r}")
            docs_by_render.setdefault(ndoc.rendered, ndoc)
            normalized.append((qtext, ndoc.rendered, count))

        self._query_texts = sorted({q for q, _, _ in normalized})
        self._query_index = {t: i for i, t in enumerate(self._query_texts)}
        renders = sorted(docs_by_render)
        self._product_docs = [docs_by_render[r] for r in renders]
        self._product_index = {r: i for i, r in enumerate(renders)}
        edges: dict[tuple[int, int], int] = {}
        for qtext, render, count in normalized:
            key = (self._query_index[qtext], self._product_index[render])
            edges[key] = edges.get(key, 0) + count

        self._edges = edges
        # adjacency sorted for deterministic walks: products of a query by
        # (weight desc, id asc), queries of a product by id asc
        by_query: dict[int, list[tuple[int, int]]] = {}
        by_product: dict[int, list[int]] = {}
        for (qid, pid), w in edges.items():
            by_query.setdefault(qid, []).append((pid, w))
            by_product.setdefault(pid, []).append(qid)
        for qid, lst in by_query.items():
            lst.sort(key=lambda pw: (-pw[1], pw[0]))
        for pid, lst in by_product.items():
            lst.sort()
        self._by_query = by_query
        self._by_product = by_product

    # ---- size and identity ----

    @property
    def num_queries(self) -> int:
        return len(self._query_texts)

    @property
    def num_products(self) -> int:
        return len(self._product_docs)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    @property
    def total_weight(self) -> int:
        return sum(self._edges.values())

    def query_text(self, qid: int) -> str:
        return self._query_texts[qid]

    def product_doc(self, pid: int) -> ProductDoc:
        return self._product_docs[pid]

    def product_text(self, pid: int) -> str:
        return self._product_docs[pid].rendered

    def query_id(self, text: str) -> int:
        return self._query_index[normalize_text(text)]

    def product_id(self, text: str) -> int:
        return self._product_index[normalize_text(text)]

    def has_query(self, text: str) -> bool:
        return normalize_text(text) in self._query_index

    def has_product(self, text: str) -> bool:
        return normalize_text(text) in self._product_index

    def query_ids(self) -> range:
        return range(self.num_queries)

    def product_ids(self) -> range:
        return range(self.num_products)

    def edge_weight(self, qid: int, pid: int) -> int:
        return self._edges.get((qid, pid), 0)

    def edges(self):
        """Yield (qid, pid, weight) in sorted id order."""
        for qid, pid in sorted(self._edges):
            yield qid, pid, self._edges[(qid, pid)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClickGraph):
            return NotImplemented
        return (
            self._query_texts == other._query_texts
            and self._product_docs == other._product_docs
            and self._edges == other._edges
        )

    # ---- sampling support ----

    def _distribution(self, axis: str) -> NodeDistribution:
        if not self._edges:
            raise ClickGraphError("graph has no edges")
        n = self.num_queries if axis == "query" else self.num_products
        weights = np.zeros(n, dtype=np.int64)
        for (qid, pid), w in self._edges.items():
            weights[qid if axis == "query" else pid] += w
        total = int(weights.sum())
        return NodeDistribution(np.arange(n, dtype=np.int64), weights / total)

    def query_distribution(self) -> NodeDistribution:
        """P(query) proportional to total incident click weight."""
        return self._distribution("query")

    def product_distribution(self) -> NodeDistribution:
        """P(product) proportional to total incident click weight."""
        return self._distribution("product")

    def top_k_products(self, qid: int, k: int) -> list[int]:
        """The query's k most-clicked products, weight descending, id ascending on ties.

        Returns all neighbors when the query has fewer than k.
        """
        if k < 1:
            raise ClickGraphError(f"k must be >= 1, got {k}")
        if qid not in self._by_query:
            raise ClickGraphError(f"unknown query id {qid}")
        return [pid for pid, _ in self._by_query[qid][:k]]

    def top_k_queries(self, pid: int, k: int) -> list[int]:
        """Role-swapped top_k_products: the product's k heaviest queries."""
        if k < 1:
            raise ClickGraphError(f"k must be >= 1, got {k}")
        if pid not in self._by_product:
            raise ClickGraphError(f"unknown product id {pid}")
        ranked = sorted(
            ((qid, self._edges[(qid, pid)]) for qid in self._by_product[pid]),
            key=lambda qw: (-qw[1], qw[0]),
        )
        return [qid for qid, _ in ranked[:k]]

    def queries_of(self, pid: int) -> set[int]:
        """All queries with at least one click on the product."""
        if pid not in self._by_product:
            raise ClickGraphError(f"unknown product id {pid}")
        return set(self._by_product[pid])

    def products_of(self, qid: int) -> set[int]:
        """All products the query has clicked."""
        if qid not in self._by_query:
            raise ClickGraphError(f"unknown query id {qid}")
        return {pid for pid, _ in self._by_query[qid]}

    def queries_of_sorted(self, pid: int) -> list[int]:
        """queries_of as an ascending list, for deterministic uniform draws."""
        if pid not in self._by_product:
            raise ClickGraphError(f"unknown product id {pid}")
        return list(self._by_product[pid])

    def products_of_sorted(self, qid: int) -> list[int]:
        if qid not in self._by_query:
            raise ClickGraphError(f"unknown query id {qid}")
        return sorted(pid for pid, _ in self._by_query[qid])


def load_click_log(path, format: str = "tsv") -> ClickGraph:
    """Parse a click log file into a ClickGraph.

    Expected format, one interaction per line::

        query \\t product_title \\t product_brand \\t product_class \\t count

    Lines starting with ``#`` and blank lines are skipped.  Duplicate
    (query, product) rows sum their counts.  Raises ClickLogError with
    the offending line number on malformed rows, and on a log with no
    data rows at all.
    """
    if format != "tsv":
        raise ClickLogError(f"unsupported click log format {format!r}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 5:
                raise ClickLogError(
                    f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}"
                )
            query, title, brand, category, count_str = fields
            try:
                count = int(count_str)
            except ValueError:
                raise ClickLogError(
                    f"{path}:{lineno}: count is not an integer: {count_str!r}"
                ) from None
            if count < 1:
                raise ClickLogError(f"{path}:{lineno}: count must be >= 1, got {count}")
            if not normalize_text(query):
                raise ClickLogError(f"{path}:{lineno}: empty query text")
            doc = ProductDoc(title, brand, category)
            if not normalize_text(doc.rendered):
                raise ClickLogError(f"{path}:{lineno}: product has no nonempty field")
            rows.append((query, doc, count))
    if not rows:
        raise ClickLogError(f"{path}: empty click log")
    return ClickGraph(rows)


def save_click_log(graph: ClickGraph, path) -> None:
    """Write the graph back out in click-log TSV form, edges in sorted id order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# query\ttitle\tbrand\tclass\tcount\n")
        for qid, pid, w in graph.edges():
            doc = graph.product_doc(pid)
            fh.write(
                f"{graph.query_text(qid)}\t{doc.title}\t{doc.brand}\t{doc.category}\t{w}\n"
            )
