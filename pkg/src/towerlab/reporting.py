"""Report rendering: delimited files, markdown tables, SVG figures.

The evaluator stays pure; everything that touches disk formatting or
matplotlib lives here.  Figures are written as standalone SVG with a
fixed hash salt and no embedded date, so the same inputs always produce
byte-identical files.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt

from .errors import TowerlabError
from .evaluator import ALL_BUCKETS, BUCKET_NAMES, BucketReport, CosineHistogram

plt.rcParams["svg.hashsalt"] = "towerlab"

_SVG_META = {"Date": None}


class ReportError(TowerlabError):
    """Unreadable or inconsistent report inputs."""


# ---- delimited output ----

def write_bucket_report_csv(report: BucketReport, path) -> None:
    """Long-form summary: one row per (bucket, k)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bucket", "name", "pairs", "ratio_pct",
                         "eligible_queries", "k", "mean_ndcg"])
        for b in ALL_BUCKETS:
            for k in report.ks:
                mean = report.mean_ndcg[(b, k)]
                writer.writerow([
                    b, BUCKET_NAMES[b], report.sizes[b], repr(report.ratios[b]),
                    report.eligible_queries[b], k,
                    "" if mean is None else repr(mean),
                ])


def load_bucket_report_csv(path) -> BucketReport:
    """Rebuild a BucketReport (without per-query detail) from its CSV."""
    sizes, ratios, eligible, mean_ndcg = {}, {}, {}, {}
    ks = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bucket", "name", "pairs", "ratio_pct",
                      "eligible_queries", "k", "mean_ndcg"]:
            raise ReportError(f"{path}: not a bucket report CSV")
        for row in reader:
            if len(row) != 7:
                raise ReportError(f"{path}: malformed row {row!r}")
            b = int(row[0])
            k = int(row[5])
            sizes[b] = int(row[2])
            ratios[b] = float(row[3])
            eligible[b] = int(row[4])
            mean_ndcg[(b, k)] = None if row[6] == "" else float(row[6])
            if k not in ks:
                ks.append(k)
    if set(sizes) != set(ALL_BUCKETS):
        raise ReportError(f"{path}: missing buckets {sorted(set(ALL_BUCKETS) - set(sizes))}")
    return BucketReport(
        ks=tuple(ks), num_queries=0, num_products=0, sizes=sizes,
        ratios=ratios, mean_ndcg=mean_ndcg, eligible_queries=eligible,
    )


def write_per_query_csv(report: BucketReport, path) -> None:
    """Per-query nDCG values, the input for significance testing elsewhere."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "bucket", "k", "ndcg"])
        for b in ALL_BUCKETS:
            for query, per_k in report.per_query.get(b, []):
                for k in report.ks:
                    writer.writerow([query, b, k, repr(per_k[k])])


def write_histogram_csv(hists: dict[int, CosineHistogram], path) -> None:
    """Bin counts of score histograms, one row per (bucket, bin)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grade", "bucket", "bin_lo", "bin_hi", "count", "fraction"])
        for b in sorted(hists):
            h = hists[b]
            for lo, hi, c, f in zip(h.bin_edges[:-1], h.bin_edges[1:],
                                    h.counts, h.fractions):
                writer.writerow([repr(h.grade), b, repr(float(lo)), repr(float(hi)),
                                 int(c), repr(float(f))])


def write_histogram_summary_csv(hists: dict[int, CosineHistogram], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grade", "bucket", "name", "pairs", "mean_cosine"])
        for b in sorted(hists):
            h = hists[b]
            writer.writerow([repr(h.grade), b, BUCKET_NAMES[b], h.count,
                             "" if h.mean is None else repr(h.mean)])


# ---- markdown ----

def _fmt_ratio(r: float) -> str:
    return f"{r:.2f}%"


def _fmt_ndcg(v: float | None) -> str:
    return "-" if v is None else f"{v:.4f}"


def bucket_table_markdown(rows: list[tuple[str, dict]], sizes: dict[int, int],
                          ratios: dict[int, float]) -> str:
    """Markdown table with bucket columns, a size and ratio row, then value rows.

    ``rows`` holds (label, {bucket: value or None}) pairs, one table row
    each, in the order given.
    """
    header = "| | " + " | ".join(BUCKET_NAMES[b] for b in ALL_BUCKETS) + " |"
    rule = "|---" * (len(ALL_BUCKETS) + 1) + "|"
    lines = [header, rule]
    lines.append("| Pairs | " + " | ".join(str(sizes[b]) for b in ALL_BUCKETS) + " |")
    lines.append("| Bucket ratio | "
                 + " | ".join(_fmt_ratio(ratios[b]) for b in ALL_BUCKETS) + " |")
    for label, values in rows:
        cells = " | ".join(_fmt_ndcg(values.get(b)) for b in ALL_BUCKETS)
        lines.append(f"| {label} | {cells} |")
    return "\n".join(lines) + "\n"


def bucket_report_markdown(report: BucketReport, label: str = "model") -> str:
    """One model's bucket table, one value row per cutoff."""
    rows = [
        (f"{label} nDCG@{k}",
         {b: report.mean_ndcg[(b, k)] for b in ALL_BUCKETS})
        for k in report.ks
    ]
    doc = ["# Bucketed ranking quality", ""]
    doc.append(f"Queries: {report.num_queries}, products: {report.num_products}, "
               f"pairs: {report.sizes[1]}.")
    doc.append("")
    doc.append(bucket_table_markdown(rows, report.sizes, report.ratios))
    doc.append("Eligible queries per bucket (those with any relevant product): "
               + ", ".join(f"{BUCKET_NAMES[b]} {report.eligible_queries[b]}"
                           for b in ALL_BUCKETS)
               + ".")
    doc.append("")
    return "\n".join(doc)


def combined_report_markdown(reports: list[tuple[str, BucketReport]]) -> str:
    """Several models side by side, one table per cutoff.

    All reports must share bucket sizes (same judgments and split).
    """
    if not reports:
        raise ReportError("no reports to combine")
    base = reports[0][1]
    for label, rep in reports[1:]:
        if rep.sizes != base.sizes:
            raise ReportError(
                f"report {label!r} has different bucket sizes; "
                f"reports must come from the same judgments and split"
            )
    doc = ["# Bucketed ranking quality", ""]
    ks = base.ks
    for k in ks:
        doc.append(f"## nDCG@{k}")
        doc.append("")
        rows = [
            (label, {b: rep.mean_ndcg.get((b, k)) for b in ALL_BUCKETS})
            for label, rep in reports
        ]
        doc.append(bucket_table_markdown(rows, base.sizes, base.ratios))
    return "\n".join(doc)


def write_markdown(text: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---- figures ----

def save_bucket_bars_svg(reports: list[tuple[str, BucketReport]], path,
                         title: str = "nDCG by visibility bucket") -> None:
    """Grouped bar chart: buckets on x, one bar series per (model, k)."""
    if not reports:
        raise ReportError("no reports to plot")
    series = []
    for label, rep in reports:
        for k in rep.ks:
            values = [rep.mean_ndcg.get((b, k)) for b in ALL_BUCKETS]
            name = f"{label} @{k}" if len(rep.ks) > 1 or len(reports) > 1 else f"nDCG@{k}"
            series.append((name, values))
    x = np.arange(len(ALL_BUCKETS))
    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for i, (name, values) in enumerate(series):
        heights = [np.nan if v is None else v for v in values]
        ax.bar(x + (i - (len(series) - 1) / 2) * width, heights, width, label=name)
    ax.set_xticks(x, [BUCKET_NAMES[b] for b in ALL_BUCKETS])
    ax.set_ylabel("mean nDCG")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def save_histograms_svg(hists: dict[int, CosineHistogram], path,
                        title: str = "score distribution") -> None:
    """Overlaid per-bucket score histograms as fraction-of-pairs steps."""
    if not hists:
        raise ReportError("no histograms to plot")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    drew = False
    for b in sorted(hists):
        h = hists[b]
        if h.count == 0:
            continue
        label = f"{BUCKET_NAMES[b]} (n={h.count}, mean={h.mean:.4f})"
        ax.stairs(h.fractions, h.bin_edges, label=label)
        ax.axvline(h.mean, linestyle=":", linewidth=0.8, color="gray")
        drew = True
    if not drew:
        ax.text(0.5, 0.5, "no pairs in any selected bucket",
                ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("cosine score")
    ax.set_ylabel("fraction of pairs")
    ax.set_xlim(-1, 1)
    ax.set_title(title)
    if drew:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def save_training_curve_svg(records, path, title: str = "training loss") -> None:
    """Loss per batch with dev accuracy marks at checkpoints."""
    fig, ax = plt.subplots(figsize=(8, 4))
    batches = [r.batch for r in records]
    losses = [r.loss for r in records]
    ax.plot(batches, losses, linewidth=0.9, label="batch loss")
    ax.set_xlabel("batch")
    ax.set_ylabel("contrastive loss")
    marks = [(r.batch, r.dev_accuracy) for r in records if r.dev_accuracy is not None]
    if marks:
        ax2 = ax.twinx()
        ax2.plot(*zip(*marks), "o-", color="tab:orange", markersize=3,
                 linewidth=0.8, label="dev accuracy")
        ax2.set_ylabel("dev retrieval accuracy")
        ax2.set_ylim(0, 1.05)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
