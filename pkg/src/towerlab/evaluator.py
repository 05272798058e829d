"""Ranking evaluation bucketed by training-data visibility.

Relevance judgments are sparse (query, product, grade) annotations that
can be expanded to the exhaustive query x product cross product, with
unannotated pairs at grade zero.  Every pair lands in bucket 1 (all),
exactly one of buckets 2 (the training data saw this exact pair) and 3
(it did not), and each unseen pair additionally lands in exactly one of
buckets 4-7 by whether its query and product were seen at all.

Per query and bucket, products are ranked by score (ties broken by
product id) and nDCG@k is computed with linear gain; a query whose
bucket slice has no relevant product has no defined nDCG there and is
excluded from that bucket's mean.  Rank agreement with human grades is
measured with Spearman correlation using average ranks for ties.
"""

from __future__ import annotations

import bisect
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .encoder import TowerModel, embed_texts
from .errors import TowerlabError
from .pair_miner import PairDataset

GRADES = (0.0, 0.5, 1.0)
DEFAULT_LABEL_GRADES = {"Exact": 1.0, "Partial": 0.5, "Irrelevant": 0.0}

BUCKET_NAMES = {
    1: "Overall",
    2: "Seen",
    3: "Unseen",
    4: "q+, p+",
    5: "q+, p-",
    6: "q-, p+",
    7: "q-, p-",
}
ALL_BUCKETS = tuple(BUCKET_NAMES)
UNSEEN_SPLIT_BUCKETS = (4, 5, 6, 7)


class EvalError(TowerlabError):
    """Invalid judgments, scores, or metric arguments."""


# ---- judgments ----

class Judgments:
    """Graded (query, product) relevance.

    Sparse by default: only annotated pairs carry grades.  After
    ``expand_exhaustive`` the universe is every query x product pair and
    unannotated combinations read as grade 0.  Query and product order
    is sorted text, which fixes iteration and report order.
    """

    def __init__(self, grades: dict[tuple[str, str], float], exhaustive: bool = False,
                 queries=None, products=None):
        for (q, p), g in grades.items():
            if not q or not p:
                raise EvalError("judgment with empty query or product text")
            if g not in GRADES:
                raise EvalError(f"grade {g!r} for ({q!r}, {p!r}) not in {GRADES}")
        self.grades = dict(grades)
        self.exhaustive = exhaustive
        qs = {q for q, _ in grades}
        ps = {p for _, p in grades}
        if queries is not None:
            qs |= set(queries)
        if products is not None:
            ps |= set(products)
        if not qs or not ps:
            raise EvalError("judgments cover no queries or no products")
        self.queries = tuple(sorted(qs))
        self.products = tuple(sorted(ps))
        self._by_query: dict[str, dict[str, float]] = {}
        for (q, p), g in self.grades.items():
            self._by_query.setdefault(q, {})[p] = g

    @property
    def num_pairs(self) -> int:
        """Logical pair count: the full cross product once exhaustive."""
        if self.exhaustive:
            return len(self.queries) * len(self.products)
        return len(self.grades)

    def grade(self, query: str, product: str) -> float:
        """Grade of one pair.  Unannotated pairs are 0 only when exhaustive."""
        try:
            return self.grades[(query, product)]
        except KeyError:
            if self.exhaustive:
                return 0.0
            raise EvalError(f"pair ({query!r}, {product!r}) is not annotated") from None

    def iter_pairs(self):
        """Yield (query, product, grade) over the logical pair universe.

        Exhaustive judgments iterate the full cross product lazily; at
        production scale that is tens of millions of tuples, so prefer
        the vectorized report path for real evaluations.
        """
        if self.exhaustive:
            for q, p in itertools.product(self.queries, self.products):
                yield q, p, self.grades.get((q, p), 0.0)
        else:
            for q in self.queries:
                for p in self.products:
                    if (q, p) in self.grades:
                        yield q, p, self.grades[(q, p)]

    def grades_of_query(self, query: str) -> dict[str, float]:
        """Annotated products and grades for one query."""
        return dict(self._by_query.get(query, {}))


def expand_exhaustive(j: Judgments) -> Judgments:
    """Mark the judgment universe as the full query x product cross product.

    The sparse annotations are kept as-is; unannotated pairs become
    grade 0 implicitly, so no pair storage is materialized.
    """
    return Judgments(j.grades, exhaustive=True, queries=j.queries, products=j.products)


def load_judgments(path, label_grades: dict[str, float] | None = None) -> Judgments:
    """Read ``query \\t product_text \\t label`` annotations.

    Labels are looked up in ``label_grades`` (default maps the WANDS
    names Exact/Partial/Irrelevant to 1.0/0.5/0.0); numeric labels are
    accepted as grades directly.  Duplicate pairs must agree.
    """
    table = DEFAULT_LABEL_GRADES if label_grades is None else label_grades
    grades: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise EvalError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            query, product, label = fields
            if label in table:
                grade = table[label]
            else:
                try:
                    grade = float(label)
                except ValueError:
                    raise EvalError(
                        f"{path}:{lineno}: unknown relevance label {label!r}"
                    ) from None
            if grade not in GRADES:
                raise EvalError(f"{path}:{lineno}: grade {grade} not in {GRADES}")
            key = (query, product)
            if key in grades and grades[key] != grade:
                raise EvalError(
                    f"{path}:{lineno}: conflicting grades for ({query!r}, {product!r})"
                )
            grades[key] = grade
    if not grades:
        raise EvalError(f"{path}: no judgment rows")
    return Judgments(grades)


def save_judgments(j: Judgments, path) -> None:
    """Write annotated pairs with WANDS-style labels, sorted order."""
    label_of = {g: name for name, g in DEFAULT_LABEL_GRADES.items()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# query\tproduct\tlabel\n")
        for (q, p) in sorted(j.grades):
            fh.write(f"{q}\t{p}\t{label_of[j.grades[(q, p)]]}\n")


def load_query_pair_annotations(path) -> list[tuple[str, str, int]]:
    """Read ``query1 \\t query2 \\t grade`` rows with integer grades 0-3.

    This is the gold standard for rank-agreement evaluation: higher
    grades mean the two queries express more similar intent.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise EvalError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            q1, q2, grade_str = fields
            if not q1 or not q2:
                raise EvalError(f"{path}:{lineno}: empty query text")
            try:
                grade = int(grade_str)
            except ValueError:
                raise EvalError(
                    f"{path}:{lineno}: grade is not an integer: {grade_str!r}"
                ) from None
            if not (0 <= grade <= 3):
                raise EvalError(f"{path}:{lineno}: grade {grade} outside 0-3")
            rows.append((q1, q2, grade))
    if not rows:
        raise EvalError(f"{path}: no annotation rows")
    return rows


# ---- visibility ----

@dataclass(frozen=True)
class VisibilityManifest:
    """What the training data contained: queries, products, exact pairs."""

    seen_queries: frozenset[str]
    seen_products: frozenset[str]
    seen_pairs: frozenset[tuple[str, str]]

    def __post_init__(self):
        for q, p in self.seen_pairs:
            if q not in self.seen_queries or p not in self.seen_products:
                raise EvalError(
                    f"seen pair ({q!r}, {p!r}) references an unseen query or product"
                )

    @classmethod
    def from_click_graph(cls, graph) -> "VisibilityManifest":
        pairs = frozenset(
            (graph.query_text(qid), graph.product_text(pid))
            for qid, pid, _ in graph.edges()
        )
        return cls(
            frozenset(graph.query_text(q) for q in graph.query_ids()),
            frozenset(graph.product_text(p) for p in graph.product_ids()),
            pairs,
        )

    @classmethod
    def from_pairs(cls, dataset: PairDataset) -> "VisibilityManifest":
        """Treat dataset lefts as queries and rights as products (pq pairs)."""
        pairs = frozenset((s.left, s.right) for s in dataset)
        return cls(
            frozenset(s.left for s in dataset),
            frozenset(s.right for s in dataset),
            pairs,
        )

    def save_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# kind\ttext\t[text2]\n")
            for q in sorted(self.seen_queries):
                fh.write(f"query\t{q}\n")
            for p in sorted(self.seen_products):
                fh.write(f"product\t{p}\n")
            for q, p in sorted(self.seen_pairs):
                fh.write(f"pair\t{q}\t{p}\n")

    @classmethod
    def load_tsv(cls, path) -> "VisibilityManifest":
        queries, products, pairs = set(), set(), set()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.startswith("#") or not line.strip():
                    continue
                fields = line.rstrip("\n").split("\t")
                if fields[0] == "query" and len(fields) == 2:
                    queries.add(fields[1])
                elif fields[0] == "product" and len(fields) == 2:
                    products.add(fields[1])
                elif fields[0] == "pair" and len(fields) == 3:
                    pairs.add((fields[1], fields[2]))
                else:
                    raise EvalError(f"{path}:{lineno}: malformed visibility row")
        return cls(frozenset(queries), frozenset(products), frozenset(pairs))


def bucket_ids_for(pair_seen: bool, query_seen: bool, product_seen: bool) -> set[int]:
    """Buckets of one pair.  Always 1; then 2 or 3; unseen pairs also 4-7."""
    buckets = {1}
    if pair_seen:
        buckets.add(2)
    else:
        buckets.add(3)
        if query_seen and product_seen:
            buckets.add(4)
        elif query_seen:
            buckets.add(5)
        elif product_seen:
            buckets.add(6)
        else:
            buckets.add(7)
    return buckets


def assign_buckets(j: Judgments, v: VisibilityManifest) -> dict[tuple[str, str], set[int]]:
    """Bucket sets for every logical pair in the judgments.

    Materializes the whole map; meant for desk-scale inputs and tests.
    The report path computes the same assignment with per-query masks.
    """
    out = {}
    for q, p, _ in j.iter_pairs():
        out[(q, p)] = bucket_ids_for(
            (q, p) in v.seen_pairs, q in v.seen_queries, p in v.seen_products
        )
    return out


# ---- rank metrics ----

def ndcg_at_k(grades_in_rank_order, k: int, gain: str = "linear") -> float | None:
    """nDCG@k of a ranking given its grades in ranked order.

    Gain is the grade itself by default (``gain="exp"`` uses 2^g - 1);
    discount is 1/log2(rank+1).  The ideal ranking sorts the same grades
    descending and is truncated at k.  Returns None when the ideal DCG
    is zero (no relevant item anywhere in the list): the metric is
    undefined for that query, not zero.
    """
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    if gain not in ("linear", "exp"):
        raise EvalError(f"unknown gain {gain!r}")
    g = np.asarray(list(grades_in_rank_order), dtype=float)
    if g.size == 0:
        return None
    if np.any(g < 0):
        raise EvalError("negative relevance grade")
    if gain == "exp":
        g = np.exp2(g) - 1.0
    discounts = 1.0 / np.log2(np.arange(2, min(k, g.size) + 2))
    dcg = float(np.dot(g[:k], discounts))
    ideal = np.sort(g)[::-1]
    idcg = float(np.dot(ideal[:k], discounts))
    if idcg == 0.0:
        return None
    return dcg / idcg


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        jdx = i
        while jdx + 1 < len(values) and sorted_vals[jdx + 1] == sorted_vals[i]:
            jdx += 1
        # positions i..jdx (0-based) share rank mean
        ranks[order[i:jdx + 1]] = (i + jdx) / 2.0 + 1.0
        i = jdx + 1
    return ranks


def spearman(predicted, gold) -> tuple[float, float]:
    """Spearman rank correlation with average ranks for ties.

    Returns (rho, p) where p is the two-sided significance from the
    t-distribution approximation with n-2 degrees of freedom.  Requires
    at least 3 observations and non-constant inputs.
    """
    x = np.asarray(predicted, dtype=float)
    y = np.asarray(gold, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise EvalError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise EvalError(f"need at least 3 observations, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise EvalError("non-finite input to spearman")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise EvalError("constant input: rank correlation is undefined")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    rho = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(stats.t.sf(abs(t), df=n - 2))
    return rho, p


# ---- scoring ----

class ModelScorer:
    """Scores pairs by tower cosine; product embeddings are computed once."""

    def __init__(self, model: TowerModel):
        self.model = model
        self._product_matrix = None
        self._query_cache: dict[str, np.ndarray] = {}
        self._product_cache: dict[str, np.ndarray] = {}

    def prepare(self, products: list[str]) -> None:
        self._product_matrix = embed_texts(self.model, list(products), side="product")

    def _query_vec(self, query: str) -> np.ndarray:
        vec = self._query_cache.get(query)
        if vec is None:
            vec = self.model.encode(query, side="query")
            self._query_cache[query] = vec
        return vec

    def scores_for(self, query: str) -> np.ndarray:
        if self._product_matrix is None:
            raise EvalError("scorer not prepared with a product list")
        return self._product_matrix @ self._query_vec(query)

    def score(self, query: str, product: str) -> float:
        p = self._product_cache.get(product)
        if p is None:
            p = self.model.encode(product, side="product")
            self._product_cache[product] = p
        return float(np.dot(self._query_vec(query), p))


class ScoreTable:
    """Precomputed (query, product) -> cosine scores loaded from a file.

    Pairs absent from the table rank below every scored pair (their
    score reads as -inf), with the usual ascending-product-id tie break.
    """

    def __init__(self, scores: dict[tuple[str, str], float]):
        for (q, p), s in scores.items():
            if not math.isfinite(s):
                raise EvalError(f"non-finite score for ({q!r}, {p!r})")
        self.table = dict(scores)
        self._products: list[str] | None = None
        self._index: dict[str, int] = {}

    @classmethod
    def load_tsv(cls, path) -> "ScoreTable":
        scores = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.startswith("#") or not line.strip():
                    continue
                fields = line.rstrip("\n").split("\t")
                if len(fields) != 3:
                    raise EvalError(
                        f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                    )
                query, product, score_str = fields
                try:
                    score = float(score_str)
                except ValueError:
                    raise EvalError(
                        f"{path}:{lineno}: score is not a number: {score_str!r}"
                    ) from None
                if not math.isfinite(score):
                    raise EvalError(f"{path}:{lineno}: non-finite score")
                scores[(query, product)] = score
        if not scores:
            raise EvalError(f"{path}: no score rows")
        return cls(scores)

    def prepare(self, products: list[str]) -> None:
        self._products = list(products)
        self._index = {p: i for i, p in enumerate(self._products)}
        self._by_query = {}
        for (q, p), s in self.table.items():
            self._by_query.setdefault(q, []).append((p, s))

    def scores_for(self, query: str) -> np.ndarray:
        if self._products is None:
            raise EvalError("scorer not prepared with a product list")
        out = np.full(len(self._products), -np.inf)
        for p, s in self._by_query.get(query, ()):
            idx = self._index.get(p)
            if idx is not None:
                out[idx] = s
        return out

    def score(self, query: str, product: str) -> float:
        try:
            return self.table[(query, product)]
        except KeyError:
            raise EvalError(f"no score for pair ({query!r}, {product!r})") from None


def _as_scorer(m):
    return ModelScorer(m) if isinstance(m, TowerModel) else m


# ---- retrieval accuracy ----

def retrieval_accuracy(m: TowerModel, dev: PairDataset, k: int) -> float:
    """Fraction of dev pairs whose right text ranks in the top k.

    The retrieval space is the set of distinct right-hand texts in the
    dev set; ranking is by cosine, ties broken by ascending product
    index in sorted-text order.
    """
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    if len(dev) == 0:
        raise EvalError("empty dev set")
    products = sorted({s.right for s in dev})
    product_vecs = embed_texts(m, products, side="product")
    product_idx = {p: i for i, p in enumerate(products)}
    queries = sorted({s.left for s in dev})
    query_vecs = embed_texts(m, queries, side="query")
    query_idx = {q: i for i, q in enumerate(queries)}
    scores = query_vecs @ product_vecs.T
    hits = 0
    rank_cache: dict[str, np.ndarray] = {}
    for s in dev:
        q = s.left
        positions = rank_cache.get(q)
        if positions is None:
            row = scores[query_idx[q]]
            order = np.lexsort((np.arange(len(products)), -row))
            positions = np.empty(len(products), dtype=np.int64)
            positions[order] = np.arange(len(products))
            rank_cache[q] = positions
        if positions[product_idx[s.right]] < k:
            hits += 1
    return hits / len(dev)


# ---- bucketed report ----

@dataclass
class BucketReport:
    """Bucket sizes, size ratios, and mean nDCG per bucket and cutoff."""

    ks: tuple[int, ...]
    num_queries: int
    num_products: int
    sizes: dict[int, int]
    ratios: dict[int, float]                      # percent of bucket 1
    mean_ndcg: dict[tuple[int, int], float | None]  # (bucket, k) -> mean
    eligible_queries: dict[int, int]              # bucket -> queries with a defined nDCG
    per_query: dict[int, list[tuple[str, dict[int, float]]]] = field(default_factory=dict)

    def bucket_name(self, bucket: int) -> str:
        return BUCKET_NAMES[bucket]


def _query_bucket_masks(query: str, products, v: VisibilityManifest,
                        product_seen: np.ndarray):
    """Boolean product masks of each bucket for one query."""
    pair_seen = np.zeros(len(products), dtype=bool)
    if query in v.seen_queries:
        # only a seen query can have seen pairs
        for i, p in enumerate(products):
            if (query, p) in v.seen_pairs:
                pair_seen[i] = True
        q_seen = True
    else:
        q_seen = False
    unseen = ~pair_seen
    masks = {
        1: np.ones(len(products), dtype=bool),
        2: pair_seen,
        3: unseen,
        4: unseen & product_seen if q_seen else np.zeros(len(products), dtype=bool),
        5: unseen & ~product_seen if q_seen else np.zeros(len(products), dtype=bool),
        6: unseen & product_seen if not q_seen else np.zeros(len(products), dtype=bool),
        7: unseen & ~product_seen if not q_seen else np.zeros(len(products), dtype=bool),
    }
    return masks


def _eval_one_query(query, j, v, scorer, product_seen, product_arange, ks, gain):
    """Per-bucket nDCG values and bucket sizes for one query."""
    n_products = len(j.products)
    grades = np.zeros(n_products)
    annotated = j.grades_of_query(query)
    if annotated:
        for p, g in annotated.items():
            grades[_product_pos(j, p)] = g
    scores = scorer.scores_for(query)
    if scores.shape != (n_products,):
        raise EvalError(
            f"scorer returned {scores.shape} scores for {n_products} products"
        )
    order = np.lexsort((product_arange, -scores))
    masks = _query_bucket_masks(query, j.products, v, product_seen)
    sizes = {}
    values = {}
    for bucket in ALL_BUCKETS:
        mask = masks[bucket]
        size = int(mask.sum())
        sizes[bucket] = size
        if size == 0:
            continue
        ranked_grades = grades[order][mask[order]]
        per_k = {}
        for k in ks:
            val = ndcg_at_k(ranked_grades, k, gain)
            if val is None:
                per_k = None
                break
            per_k[k] = val
        if per_k is not None:
            values[bucket] = per_k
    return sizes, values


def _product_pos(j: Judgments, product: str) -> int:
    i = bisect.bisect_left(j.products, product)
    if i == len(j.products) or j.products[i] != product:
        raise EvalError(f"product {product!r} not in judgment universe")
    return i


def bucketed_ndcg_report(m, j: Judgments, v: VisibilityManifest,
                         ks=(10,), gain: str = "linear", threads: int = 1,
                         keep_per_query: bool = True) -> BucketReport:
    """Mean nDCG@k per visibility bucket over exhaustive judgments.

    ``m`` is a TowerModel or any scorer with prepare/scores_for.  Means
    average over queries whose bucket slice contains a relevant product;
    a bucket nobody can score is reported as empty rather than an error.
    Queries are processed in sorted order and merged deterministically,
    so the thread count does not change the result.
    """
    if not j.exhaustive:
        raise EvalError("bucketed report requires exhaustive judgments; expand first")
    ks = tuple(ks)
    if not ks or any(k < 1 for k in ks):
        raise EvalError(f"invalid cutoff list {ks}")
    if threads < 1:
        raise EvalError(f"threads must be >= 1, got {threads}")
    scorer = _as_scorer(m)
    scorer.prepare(list(j.products))
    product_seen = np.array([p in v.seen_products for p in j.products], dtype=bool)
    product_arange = np.arange(len(j.products))

    def run(query):
        return _eval_one_query(query, j, v, scorer, product_seen,
                               product_arange, ks, gain)

    if threads == 1:
        results = [run(q) for q in j.queries]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, j.queries))

    sizes = {b: 0 for b in ALL_BUCKETS}
    sums = {(b, k): 0.0 for b in ALL_BUCKETS for k in ks}
    eligible = {b: 0 for b in ALL_BUCKETS}
    per_query: dict[int, list] = {b: [] for b in ALL_BUCKETS}
    for query, (qsizes, qvalues) in zip(j.queries, results):
        for b in ALL_BUCKETS:
            sizes[b] += qsizes[b]
        for b, per_k in qvalues.items():
            eligible[b] += 1
            for k in ks:
                sums[(b, k)] += per_k[k]
            if keep_per_query:
                per_query[b].append((query, dict(per_k)))

    overall = sizes[1]
    ratios = {b: (100.0 * sizes[b] / overall if overall else 0.0) for b in ALL_BUCKETS}
    mean_ndcg = {}
    for b in ALL_BUCKETS:
        for k in ks:
            mean_ndcg[(b, k)] = (sums[(b, k)] / eligible[b]) if eligible[b] else None
    return BucketReport(
        ks=ks,
        num_queries=len(j.queries),
        num_products=len(j.products),
        sizes=sizes,
        ratios=ratios,
        mean_ndcg=mean_ndcg,
        eligible_queries=eligible,
        per_query=per_query if keep_per_query else {},
    )


def bucket_retrieval_accuracy(m, j: Judgments, v: VisibilityManifest,
                              buckets, k: int = 10) -> float | None:
    """Hit rate of relevant pairs from the given buckets in top-k rankings.

    Pools every (query, product) pair with grade > 0 that falls in any
    of ``buckets`` and reports the fraction ranked in the query's global
    top k.  None when no relevant pair lands in those buckets.
    """
    if not j.exhaustive:
        raise EvalError("bucket accuracy requires exhaustive judgments")
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    buckets = set(buckets)
    if not buckets <= set(ALL_BUCKETS):
        raise EvalError(f"unknown buckets {sorted(buckets - set(ALL_BUCKETS))}")
    scorer = _as_scorer(m)
    scorer.prepare(list(j.products))
    product_seen = np.array([p in v.seen_products for p in j.products], dtype=bool)
    product_arange = np.arange(len(j.products))
    hits = 0
    total = 0
    for query in j.queries:
        annotated = [(p, g) for p, g in j.grades_of_query(query).items() if g > 0]
        if not annotated:
            continue
        masks = _query_bucket_masks(query, j.products, v, product_seen)
        scores = scorer.scores_for(query)
        order = np.lexsort((product_arange, -scores))
        positions = np.empty(len(j.products), dtype=np.int64)
        positions[order] = product_arange
        for p, _ in annotated:
            pos = _product_pos(j, p)
            if any(masks[b][pos] for b in buckets):
                total += 1
                if positions[pos] < k:
                    hits += 1
    return (hits / total) if total else None


# ---- cosine histograms ----

@dataclass
class CosineHistogram:
    """Distribution of model scores over one grade/bucket slice of pairs."""

    bucket: int
    grade: float
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float | None
    count: int

    @property
    def fractions(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / self.count


def cosine_histogram(m, j: Judgments, v: VisibilityManifest, grade: float,
                     bucket: int = 1, bins: int = 40) -> CosineHistogram:
    """Histogram of pair scores for one annotated grade within one bucket.

    Selection runs over explicitly annotated pairs (grade-0 selection
    means annotated-irrelevant, not the implicit exhaustive zeros).
    Bins partition [-1, 1]; the histogram also carries the exact mean.
    """
    if grade not in GRADES:
        raise EvalError(f"grade {grade!r} not in {GRADES}")
    if bucket not in BUCKET_NAMES:
        raise EvalError(f"unknown bucket {bucket}")
    if bins < 1:
        raise EvalError(f"bins must be >= 1, got {bins}")
    scorer = _as_scorer(m)
    values = []
    for (q, p), g in sorted(j.grades.items()):
        if g != grade:
            continue
        assigned = bucket_ids_for(
            (q, p) in v.seen_pairs, q in v.seen_queries, p in v.seen_products
        )
        if bucket not in assigned:
            continue
        values.append(scorer.score(q, p))
    arr = np.asarray(values)
    counts, edges = np.histogram(arr, bins=bins, range=(-1.0, 1.0))
    mean = float(arr.mean()) if arr.size else None
    return CosineHistogram(bucket, grade, edges, counts, mean, int(arr.size))


def cosine_histograms(m, j: Judgments, v: VisibilityManifest, grade: float,
                      buckets=ALL_BUCKETS, bins: int = 40) -> dict[int, CosineHistogram]:
    """cosine_histogram for several buckets with shared scoring."""
    scorer = _as_scorer(m)
    return {b: cosine_histogram(scorer, j, v, grade, b, bins) for b in buckets}
