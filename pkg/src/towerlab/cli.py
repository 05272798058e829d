"""Command-line pipeline driver.

Subcommands cover the whole loop: generate a synthetic world, mine
training pairs from a click log, pretrain and finetune towers, evaluate
bucketed nDCG and rank agreement, analyze score distributions, and
assemble combined reports.  Every command writes a JSON run manifest
(command, resolved settings, seed, inputs/outputs, version, wall time)
atomically next to its outputs.

Settings resolve as: command-line flag, then ``key = value`` config
file entry, then built-in default.  Logs go to stderr; data only ever
goes to files.  Exit codes: 0 success, 1 runtime failure (the message
names the failing module), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .click_graph import load_click_log, save_click_log
from .encoder import TowerModel, Vocabulary, cosine, load_model, save_model
from .errors import TowerlabError
from .evaluator import (ALL_BUCKETS, ModelScorer, ScoreTable,
                        VisibilityManifest, bucketed_ndcg_report,
                        cosine_histograms, expand_exhaustive, load_judgments,
                        load_query_pair_annotations, save_judgments, spearman)
from .pair_miner import (PairDataset, SamplingConfig, extract_pq, mine_pp,
                         mine_qq, unsup_views)
from .reporting import (bucket_report_markdown, combined_report_markdown,
                        load_bucket_report_csv, save_bucket_bars_svg,
                        save_histograms_svg, save_training_curve_svg,
                        write_bucket_report_csv, write_histogram_csv,
                        write_histogram_summary_csv, write_markdown,
                        write_per_query_csv)
from .synthetic_world import WorldConfig, generate_world, holdout_split
from .trainer import (Curriculum, TrainConfig, select_checkpoint, train)

log = logging.getLogger("towerlab")


class CliError(TowerlabError):
    """Bad command usage that argparse cannot catch."""


@dataclass
class RunManifest:
    """What a command ran with and what it produced."""

    command: str
    seed: int | None
    settings: dict
    inputs: dict[str, str]
    outputs: dict[str, str]
    version: str = __version__
    wall_time_s: float = 0.0

    def write(self, path) -> None:
        payload = {
            "command": self.command,
            "seed": self.seed,
            "settings": self.settings,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": self.version,
            "wall_time_s": self.wall_time_s,
        }
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


def load_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blanks skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, value = body.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise CliError(f"{path}:{lineno}: empty key")
            out[key] = value.strip()
    return out


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {raw!r}")


def _apply_config(sub: argparse.ArgumentParser, overrides: dict[str, str]) -> None:
    """Turn config entries into parser defaults so flags still win."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(overrides) - set(actions))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, raw in overrides.items():
        action = actions[key]
        if action.nargs == 0 and getattr(action, "const", None) is True:
            defaults[key] = _parse_bool(raw)
        elif isinstance(action, argparse._AppendAction):
            raise CliError(f"config key {key!r} must be given as a flag")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except ValueError:
                raise CliError(f"config key {key!r}: bad value {raw!r}") from None
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)


def _int_list(raw: str) -> list[int]:
    try:
        values = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {raw!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _settings_snapshot(args) -> dict:
    skip = {"command", "func", "config"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _out_dir(args) -> Path:
    if args.out_dir is None:
        # keep the manifest beside an explicit --out file
        explicit = getattr(args, "out", None)
        args.out_dir = str(Path(explicit).parent) if explicit else "out"
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, started: float, seed, inputs: dict, outputs: dict) -> None:
    out = _out_dir(args)
    manifest = RunManifest(
        command=args.command,
        seed=seed,
        settings=_settings_snapshot(args),
        inputs={k: str(v) for k, v in inputs.items()},
        outputs={k: str(v) for k, v in outputs.items()},
        wall_time_s=round(time.monotonic() - started, 3),
    )
    path = out / f"{args.command}-manifest.json"
    manifest.write(path)
    log.info("wrote %s", path)


# ---- synth-gen ----

def cmd_synth_gen(args) -> int:
    started = time.monotonic()
    cfg = WorldConfig(
        num_topics=args.topics, num_queries=args.queries,
        num_products=args.products, vocab_size=args.vocab,
        tokens_per_text=args.tokens_per_text, click_sessions=args.sessions,
        noise=args.noise, hierarchy=args.hierarchy, seed=args.seed,
    )
    world = generate_world(cfg)
    holdout_seed = args.seed if args.holdout_seed is None else args.holdout_seed
    train_graph, judgments, visibility = holdout_split(
        world, args.holdout_queries, args.holdout_products, holdout_seed,
    )
    out = _out_dir(args)
    outputs = {
        "clicks_full": out / "clicks_full.tsv",
        "clicks_train": out / "clicks_train.tsv",
        "judgments": out / "judgments.tsv",
        "visibility": out / "visibility.tsv",
        "annotations": out / "qq_annotations.tsv",
    }
    save_click_log(world.graph, outputs["clicks_full"])
    save_click_log(train_graph, outputs["clicks_train"])
    save_judgments(judgments, outputs["judgments"])
    visibility.save_tsv(outputs["visibility"])
    _write_synthetic_annotations(world, args.annotate_pairs, args.seed,
                                 outputs["annotations"])
    log.info(
        "world: %d queries, %d products, %d train edges (%d full)",
        len(world.query_texts), len(world.product_docs),
        train_graph.num_edges, world.graph.num_edges,
    )
    _finish(args, started, args.seed, {}, outputs)
    return 0


def _write_synthetic_annotations(world, n_pairs: int, seed: int, path) -> None:
    """Random query pairs graded 0-3 from the latent topics.

    Same topic scores 3; in hierarchy mode a sibling topic scores 1;
    anything else 0.  This gives eval-spearman a gold standard whose
    ordering the learned scores should correlate with.
    """
    rng = np.random.default_rng(seed + 1)
    nq = len(world.query_texts)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# query1\tquery2\tgrade\n")
        for _ in range(n_pairs):
            a = int(rng.integers(nq))
            b = int(rng.integers(nq))
            ta, tb = world.query_topics[a], world.query_topics[b]
            if ta == tb:
                grade = 3
            elif world.config.hierarchy and ta // 2 == tb // 2:
                grade = 1
            else:
                grade = 0
            fh.write(f"{world.query_texts[a]}\t{world.query_texts[b]}\t{grade}\n")


# ---- mine-pairs ----

def cmd_mine_pairs(args) -> int:
    started = time.monotonic()
    graph = load_click_log(args.clicks)
    if args.role in ("qq", "pp"):
        n_pairs = 10_000 if args.n_pairs is None else args.n_pairs
        cfg = SamplingConfig(args.k_top, n_pairs, args.seed)
        pairs = mine_qq(graph, cfg) if args.role == "qq" else mine_pp(graph, cfg)
    elif args.role == "pq":
        pairs = extract_pq(graph)
        if args.n_pairs is not None and args.n_pairs < len(pairs):
            # uniform over click events, so heavy edges stay more likely
            rng = np.random.default_rng(args.seed)
            keep = np.sort(rng.choice(len(pairs), size=args.n_pairs,
                                      replace=False))
            pairs = PairDataset([pairs[int(i)] for i in keep])
    else:
        texts = sorted(graph.query_text(q) for q in graph.query_ids())
        if args.n_pairs is not None:
            dist = graph.query_distribution()
            rng = np.random.default_rng(args.seed)
            texts = [graph.query_text(dist.sample(rng)) for _ in range(args.n_pairs)]
        pairs = unsup_views(texts, args.dropout_rate, args.seed)
    out = _out_dir(args)
    path = Path(args.out) if args.out else out / f"pairs_{args.role}.tsv"
    pairs.save_tsv(path)
    log.info("mined %d %s pairs -> %s", len(pairs), args.role, path)
    _finish(args, started, args.seed, {"clicks": args.clicks}, {"pairs": path})
    return 0


# ---- training ----

def _build_vocab_from_clicks(clicks_path) -> Vocabulary:
    graph = load_click_log(clicks_path)
    texts = [graph.query_text(q) for q in graph.query_ids()]
    texts += [graph.product_text(p) for p in graph.product_ids()]
    return Vocabulary.build(texts)


def _split_dev(pairs: PairDataset, fraction: float, seed: int):
    if fraction == 0.0:
        return pairs, None
    if not (0.0 <= fraction < 1.0):
        raise CliError(f"dev fraction must be in [0, 1), got {fraction}")
    n_dev = max(1, int(round(len(pairs) * fraction)))
    if n_dev >= len(pairs):
        raise CliError(
            f"dev fraction {fraction} leaves no training pairs (have {len(pairs)})"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    dev_idx = set(map(int, order[:n_dev]))
    train_part = PairDataset([s for i, s in enumerate(pairs) if i not in dev_idx])
    dev_part = PairDataset([pairs[i] for i in sorted(dev_idx)])
    return train_part, dev_part


def _train_command(args, model: TowerModel, stages) -> int:
    started = time.monotonic()
    cfg = TrainConfig(
        temperature=args.temperature, batch_size=args.batch_size,
        learning_rate=args.learning_rate, epochs=args.epochs,
        checkpoint_interval=args.checkpoint_interval, seed=args.seed,
        dev_k=args.dev_k,
    )
    first, dev = _split_dev(stages[0][0], args.dev_fraction, args.seed)
    stages = [(first, stages[0][1])] + list(stages[1:])
    if dev is None and args.select == "best":
        raise CliError("--select best needs a dev split; raise --dev-fraction")
    model, train_log = train(model, Curriculum(list(stages)), cfg, dev)
    if args.select == "best":
        chosen = select_checkpoint(train_log, cfg.dev_k)
        log.info("selected checkpoint at batch %d (dev acc %.4f at k=%d)",
                 chosen.batch, chosen.dev_accuracy, cfg.dev_k)
        model = chosen.model
    out = _out_dir(args)
    outputs = {
        "model": Path(args.model_out) if args.model_out else out / "model.json",
        "train_log": out / "train_log.csv",
        "training_curve": out / "training_curve.svg",
    }
    save_model(model, outputs["model"])
    train_log.write_csv(outputs["train_log"])
    save_training_curve_svg(train_log.records, outputs["training_curve"],
                            title=f"{args.command} loss")
    log.info("trained %d batches, saved %s", len(train_log.records), outputs["model"])
    inputs = {f"pairs_{i}": p for i, p in enumerate(args.pairs)}
    _finish(args, started, args.seed, inputs, outputs)
    return 0


def cmd_pretrain(args) -> int:
    vocab = _build_vocab_from_clicks(args.clicks)
    model = TowerModel.init(
        vocab, dim=args.dim, hidden=args.hidden, out_dim=args.out_dim,
        seed=args.seed if args.init_seed is None else args.init_seed,
        shared=not args.separate_towers,
    )
    stages = [(PairDataset.load_tsv(p), args.epochs) for p in args.pairs]
    return _train_command(args, model, stages)


def cmd_finetune(args) -> int:
    if (args.model_in is None) == (args.clicks is None):
        raise CliError("finetune needs exactly one of --model-in or --clicks")
    if args.model_in:
        model = load_model(args.model_in)
    else:
        vocab = _build_vocab_from_clicks(args.clicks)
        model = TowerModel.init(
            vocab, dim=args.dim, hidden=args.hidden, out_dim=args.out_dim,
            seed=args.seed if args.init_seed is None else args.init_seed,
            shared=not args.separate_towers,
        )
    stages = [(PairDataset.load_tsv(p), args.epochs) for p in args.pairs]
    return _train_command(args, model, stages)


# ---- evaluation ----

def _load_scorer(args):
    if (args.model is None) == (args.scores is None):
        raise CliError("need exactly one of --model or --scores")
    if args.model:
        return ModelScorer(load_model(args.model)), {"model": args.model}
    return ScoreTable.load_tsv(args.scores), {"scores": args.scores}


def cmd_eval_ndcg(args) -> int:
    started = time.monotonic()
    scorer, inputs = _load_scorer(args)
    judgments = expand_exhaustive(load_judgments(args.judgments))
    visibility = VisibilityManifest.load_tsv(args.visibility)
    report = bucketed_ndcg_report(
        scorer, judgments, visibility, ks=args.k, gain=args.gain,
        threads=args.threads,
    )
    out = _out_dir(args)
    outputs = {
        "report_csv": out / "bucket_report.csv",
        "report_md": out / "bucket_report.md",
        "per_query_csv": out / "per_query_ndcg.csv",
        "figure": out / "bucket_ndcg.svg",
    }
    write_bucket_report_csv(report, outputs["report_csv"])
    write_markdown(bucket_report_markdown(report, args.label), outputs["report_md"])
    write_per_query_csv(report, outputs["per_query_csv"])
    save_bucket_bars_svg([(args.label, report)], outputs["figure"])
    for k in report.ks:
        overall = report.mean_ndcg[(1, k)]
        log.info("nDCG@%d overall: %s", k,
                 "n/a" if overall is None else f"{overall:.4f}")
    inputs.update({"judgments": args.judgments, "visibility": args.visibility})
    _finish(args, started, None, inputs, outputs)
    return 0


def cmd_eval_spearman(args) -> int:
    started = time.monotonic()
    model = load_model(args.model)
    annotations = load_query_pair_annotations(args.annotations)
    predicted = []
    cache: dict[str, np.ndarray] = {}

    def vec(text):
        v = cache.get(text)
        if v is None:
            v = model.encode(text, side="query")
            cache[text] = v
        return v

    for q1, q2, _ in annotations:
        predicted.append(cosine(vec(q1), vec(q2)))
    gold = [float(g) for _, _, g in annotations]
    rho, p = spearman(predicted, gold)
    out = _out_dir(args)
    outputs = {
        "pairs_csv": out / "spearman_pairs.csv",
        "summary_csv": out / "spearman_summary.csv",
    }
    with open(outputs["pairs_csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query1", "query2", "grade", "cosine"])
        for (q1, q2, g), score in zip(annotations, predicted):
            writer.writerow([q1, q2, g, repr(score)])
    with open(outputs["summary_csv"], "w", encoding="utf-8") as fh:
        fh.write("n,spearman_rho,p_value\n")
        fh.write(f"{len(annotations)},{rho!r},{p!r}\n")
    log.info("spearman rho %.4f (p=%.3g, n=%d)", rho, p, len(annotations))
    _finish(args, started, None,
            {"model": args.model, "annotations": args.annotations}, outputs)
    return 0


def cmd_analyze_cosine(args) -> int:
    started = time.monotonic()
    scorer, inputs = _load_scorer(args)
    judgments = expand_exhaustive(load_judgments(args.judgments))
    visibility = VisibilityManifest.load_tsv(args.visibility)
    out = _out_dir(args)
    outputs = {}
    for grade in args.grades:
        hists = cosine_histograms(scorer, judgments, visibility, grade,
                                  buckets=tuple(args.buckets), bins=args.bins)
        tag = str(grade).replace(".", "_")
        paths = {
            f"bins_{tag}": out / f"cosine_bins_{tag}.csv",
            f"summary_{tag}": out / f"cosine_summary_{tag}.csv",
            f"figure_{tag}": out / f"cosine_hist_{tag}.svg",
        }
        write_histogram_csv(hists, paths[f"bins_{tag}"])
        write_histogram_summary_csv(hists, paths[f"summary_{tag}"])
        save_histograms_svg(hists, paths[f"figure_{tag}"],
                            title=f"score distribution, grade {grade}")
        outputs.update(paths)
        for b in sorted(hists):
            h = hists[b]
            log.info("grade %s bucket %d: %d pairs, mean %s", grade, b, h.count,
                     "n/a" if h.mean is None else f"{h.mean:.4f}")
    inputs.update({"judgments": args.judgments, "visibility": args.visibility})
    _finish(args, started, None, inputs, outputs)
    return 0


def cmd_report(args) -> int:
    started = time.monotonic()
    reports = []
    inputs = {}
    for spec in args.input:
        if "=" not in spec:
            raise CliError(f"--input takes label=path, got {spec!r}")
        label, path = spec.split("=", 1)
        reports.append((label, load_bucket_report_csv(path)))
        inputs[label] = path
    out = _out_dir(args)
    outputs = {
        "markdown": out / "combined_report.md",
        "figure": out / "combined_ndcg.svg",
    }
    write_markdown(combined_report_markdown(reports), outputs["markdown"])
    save_bucket_bars_svg(reports, outputs["figure"], title="nDCG by bucket, all models")
    log.info("combined %d reports -> %s", len(reports), outputs["markdown"])
    _finish(args, started, None, inputs, outputs)
    return 0


# ---- parser ----

def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="towerlab",
        description="Desk-scale two-tower product search lab.",
    )
    parser.add_argument("--version", action="version",
                        version=f"towerlab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    by_name = {}

    def sub(name, func, help_text):
        p = subs.add_parser(name, help=help_text)
        p.set_defaults(func=func, command=name)
        p.add_argument("--config", help="key = value settings file; flags override it")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default: out)")
        by_name[name] = p
        return p

    p = sub("synth-gen", cmd_synth_gen, "generate a synthetic world with ground truth")
    p.add_argument("--topics", type=int, default=8)
    p.add_argument("--queries", type=int, default=400)
    p.add_argument("--products", type=int, default=200)
    p.add_argument("--vocab", type=int, default=500)
    p.add_argument("--tokens-per-text", type=int, default=6)
    p.add_argument("--sessions", type=int, default=50_000)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--hierarchy", action="store_true", default=False,
                   help="two-level topics; siblings get grade 0.5")
    p.add_argument("--holdout-queries", type=float, default=0.3)
    p.add_argument("--holdout-products", type=float, default=0.3)
    p.add_argument("--holdout-seed", type=int, default=None)
    p.add_argument("--annotate-pairs", type=int, default=200,
                   help="graded query pairs to sample for eval-spearman")
    p.add_argument("--seed", type=int, default=0)

    p = sub("mine-pairs", cmd_mine_pairs, "mine training pairs from a click log")
    p.add_argument("--clicks", required=True)
    p.add_argument("--role", required=True, choices=("qq", "pp", "pq", "unsup"))
    p.add_argument("--k-top", type=int, default=10,
                   help="top-k click cutoff for the co-click walk")
    p.add_argument("--n-pairs", type=int, default=None)
    p.add_argument("--dropout-rate", type=float, default=0.3)
    p.add_argument("--out", default=None, help="pair TSV path")
    p.add_argument("--seed", type=int, default=0)

    def add_train_flags(p, default_select):
        p.add_argument("--pairs", action="append", required=True,
                       help="pair TSV; repeat for sequential stages")
        p.add_argument("--epochs", type=int, default=4)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--learning-rate", type=float, default=1e-3)
        p.add_argument("--temperature", type=float, default=0.07)
        p.add_argument("--checkpoint-interval", type=int, default=50)
        p.add_argument("--dev-fraction", type=float, default=0.1,
                       help="carved from the first stage; 0 disables dev tracking")
        p.add_argument("--dev-k", type=int, default=10)
        p.add_argument("--select", choices=("best", "final"), default=default_select)
        p.add_argument("--model-out", default=None)
        p.add_argument("--seed", type=int, default=0)

    def add_init_flags(p):
        p.add_argument("--dim", type=int, default=64)
        p.add_argument("--hidden", type=int, default=128)
        p.add_argument("--out-dim", type=int, default=64)
        p.add_argument("--init-seed", type=int, default=None,
                       help="weight init seed; defaults to --seed")
        p.add_argument("--separate-towers", action="store_true", default=False)

    p = sub("pretrain", cmd_pretrain, "contrastive pretraining from mined pairs")
    p.add_argument("--clicks", required=True,
                   help="click log that defines the vocabulary")
    add_train_flags(p, default_select="final")
    add_init_flags(p)

    p = sub("finetune", cmd_finetune, "train on clickthrough pairs")
    p.add_argument("--model-in", default=None, help="warm start checkpoint")
    p.add_argument("--clicks", default=None,
                   help="click log for vocabulary when starting fresh")
    add_train_flags(p, default_select="best")
    add_init_flags(p)

    p = sub("eval-ndcg", cmd_eval_ndcg, "bucketed nDCG over exhaustive judgments")
    p.add_argument("--model", default=None)
    p.add_argument("--scores", default=None, help="precomputed score TSV")
    p.add_argument("--judgments", required=True)
    p.add_argument("--visibility", required=True)
    p.add_argument("--k", type=_int_list, default=[10],
                   help="comma-separated cutoffs, e.g. 1,20,50,100")
    p.add_argument("--gain", choices=("linear", "exp"), default="linear")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--label", default="model")

    p = sub("eval-spearman", cmd_eval_spearman,
            "rank agreement between model scores and graded query pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--annotations", required=True,
                   help="query1 \\t query2 \\t grade(0-3) TSV")

    p = sub("analyze-cosine", cmd_analyze_cosine,
            "score histograms per grade and bucket")
    p.add_argument("--model", default=None)
    p.add_argument("--scores", default=None)
    p.add_argument("--judgments", required=True)
    p.add_argument("--visibility", required=True)
    p.add_argument("--grades", type=_float_list, default=[0.5],
                   help="comma-separated grades to slice, e.g. 0.5,1.0")
    p.add_argument("--buckets", type=_int_list, default=list(ALL_BUCKETS))
    p.add_argument("--bins", type=int, default=40)

    p = sub("report", cmd_report, "combine bucket report CSVs into one summary")
    p.add_argument("--input", action="append", required=True,
                   help="label=bucket_report.csv; repeatable")

    return parser, by_name


def _float_list(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {raw!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser, by_name = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            _apply_config(by_name[args.command], load_config_file(args.config))
            args = parser.parse_args(argv)
        return args.func(args)
    except TowerlabError as err:
        module = type(err).__module__
        print(f"towerlab: error [{module}]: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"towerlab: error [os]: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
