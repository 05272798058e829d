"""Contrastive training for the towers.

The loss treats every batch as its own negative pool: for pair i, the
other right-hand texts in the batch are the negatives, and

    l_i = -cos(u_i, v_i)/T + log sum_j exp(cos(u_i, v_j)/T)

with temperature T; the batch loss is the mean of the l_i.  A batch of
one is a perfect-information case and the loss is identically zero.

Gradients are analytic, not autodiff.  With S the cosine matrix and P
the row softmax of S/T, dLoss/dS = (P - I)/(nT); the rest is ordinary
backprop through the normalize, MLP, and mean-pool stages, accumulated
into both towers (a shared model receives the sum of both sides).
Optimization is Adam with bias correction, written out here so the
whole training step stays inspectable float64 numpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .encoder import (UNK_INDEX, TowerModel, backward_batch, forward_batch,
                      tokenize)
from .errors import TowerlabError
from .evaluator import retrieval_accuracy
from .pair_miner import PairDataset

log = logging.getLogger(__name__)


class TrainingError(TowerlabError):
    """Invalid training configuration, batch, or optimizer state."""


@dataclass
class TrainConfig:
    """Knobs for one training run.  Defaults are the desk-scale settings."""

    temperature: float = 0.07
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 4
    checkpoint_interval: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    dev_k: int = 10

    def __post_init__(self):
        if self.temperature <= 0:
            raise TrainingError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise TrainingError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.checkpoint_interval < 1:
            raise TrainingError(
                f"checkpoint_interval must be >= 1, got {self.checkpoint_interval}"
            )
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not (0.0 <= b < 1.0):
                raise TrainingError(f"{name} must be in [0, 1), got {b}")
        if self.adam_eps <= 0:
            raise TrainingError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.dev_k < 1:
            raise TrainingError(f"dev_k must be >= 1, got {self.dev_k}")


@dataclass
class Curriculum:
    """Datasets trained in sequence, each for its own number of epochs."""

    stages: list[tuple[PairDataset, int]]

    def __post_init__(self):
        if not self.stages:
            raise TrainingError("curriculum has no stages")
        for i, (dataset, epochs) in enumerate(self.stages):
            if len(dataset) == 0:
                raise TrainingError(f"curriculum stage {i} has an empty dataset")
            if epochs < 1:
                raise TrainingError(f"curriculum stage {i} has epochs {epochs}")


@dataclass
class Checkpoint:
    """Model snapshot with the dev retrieval accuracy measured at that point."""

    model: TowerModel
    batch: int
    dev_accuracy: float | None
    dev_k: int | None


@dataclass
class BatchRecord:
    batch: int
    loss: float
    dev_accuracy: float | None = None


@dataclass
class TrainLog:
    """Per-batch losses plus the checkpoint trail of one train() call."""

    records: list[BatchRecord] = field(default_factory=list)
    checkpoints: list[Checkpoint] = field(default_factory=list)

    def write_csv(self, path) -> None:
        """``batch,loss,dev_acc`` rows; dev_acc only on checkpoint batches."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("batch,loss,dev_acc\n")
            for r in self.records:
                acc = "" if r.dev_accuracy is None else repr(r.dev_accuracy)
                fh.write(f"{r.batch},{r.loss!r},{acc}\n")


def _pair_tokens(m: TowerModel, batch) -> tuple[list[list[int]], list[list[int]]]:
    """Tokenize both sides of a batch; token-less texts fall back to UNK."""
    lefts, rights = [], []
    for s in batch:
        lefts.append(tokenize(m.vocab, s.left) or [UNK_INDEX])
        rights.append(tokenize(m.vocab, s.right) or [UNK_INDEX])
    return lefts, rights


def _check_batch(batch) -> None:
    if len(batch) == 0:
        raise TrainingError("empty batch")
    roles = {s.role for s in batch}
    if len(roles) > 1:
        raise TrainingError(f"mixed roles in one batch: {sorted(roles)}")


def _loss_from_scores(scores: np.ndarray, temperature: float) -> tuple[float, np.ndarray]:
    """Mean and per-pair contrastive losses from a cosine score matrix."""
    logits = scores / temperature
    row_max = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - row_max)
    lse = np.log(shifted.sum(axis=1)) + row_max[:, 0]
    per_pair = lse - np.diag(logits)
    mean = float(per_pair.mean())
    if not np.isfinite(mean):
        bad = int(np.argwhere(~np.isfinite(per_pair))[0, 0])
        raise TrainingError(f"non-finite loss at pair {bad}")
    return mean, per_pair


def batch_loss(m: TowerModel, batch, temperature: float) -> tuple[float, np.ndarray]:
    """Contrastive loss of a batch of same-role pairs.

    Returns (mean loss, per-pair losses).  A single-pair batch has loss
    exactly 0.0: its positive is the only candidate.
    """
    _check_batch(batch)
    if temperature <= 0:
        raise TrainingError(f"temperature must be > 0, got {temperature}")
    lefts, rights = _pair_tokens(m, batch)
    left_cache = forward_batch(m.query_tower, lefts)
    right_cache = forward_batch(m.product_tower, rights)
    return _loss_from_scores(left_cache.out @ right_cache.out.T, temperature)


def _loss_and_gradient(m: TowerModel, lefts: list[list[int]],
                       rights: list[list[int]], temperature: float):
    left_cache = forward_batch(m.query_tower, lefts)
    right_cache = forward_batch(m.product_tower, rights)
    scores = left_cache.out @ right_cache.out.T
    mean, per_pair = _loss_from_scores(scores, temperature)

    n = scores.shape[0]
    logits = scores / temperature
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    softmax = shifted / shifted.sum(axis=1, keepdims=True)
    d_scores = (softmax - np.eye(n)) / (n * temperature)

    left_grads = backward_batch(m.query_tower, left_cache, d_scores @ right_cache.out)
    right_grads = backward_batch(m.product_tower, right_cache, d_scores.T @ left_cache.out)
    if m.shared:
        grads = {k: left_grads[k] + right_grads[k] for k in left_grads}
    else:
        grads = {"q_" + k: v for k, v in left_grads.items()}
        grads.update({"p_" + k: v for k, v in right_grads.items()})
    return mean, per_pair, grads


def batch_gradient(m: TowerModel, batch, temperature: float) -> dict[str, np.ndarray]:
    """Analytic gradient of batch_loss w.r.t. every trainable array.

    Keys match ``m.param_items()`` names; a shared model gets the sum of
    the query-side and product-side contributions per array.
    """
    _check_batch(batch)
    if temperature <= 0:
        raise TrainingError(f"temperature must be > 0, got {temperature}")
    lefts, rights = _pair_tokens(m, batch)
    _, _, grads = _loss_and_gradient(m, lefts, rights, temperature)
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], cfg: TrainConfig):
    """One Adam update with bias correction, applied in place.

    ``params`` maps names to the live arrays; they are mutated and the
    (params, state) pair is returned for convenience.
    """
    if set(params) != set(grads):
        raise TrainingError(
            f"parameter/gradient name mismatch: {sorted(set(params) ^ set(grads))}"
        )
    state.step += 1
    t = state.step
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise TrainingError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name} shape {p.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return params, state


def train(m: TowerModel, curriculum: Curriculum, cfg: TrainConfig,
          dev: PairDataset | None = None) -> tuple[TowerModel, TrainLog]:
    """Run the curriculum stages in order on one model.

    Each epoch reshuffles with the run's RNG; partial trailing batches
    are dropped.  A checkpoint is cut every ``cfg.checkpoint_interval``
    batches (with dev retrieval accuracy at ``cfg.dev_k`` when a dev set
    is given), and a final checkpoint is always cut at the end unless
    the last interval checkpoint already is the end.  The model is
    updated in place and returned with the log.
    """
    params = dict(m.param_items())
    state = AdamState.init(params)
    rng = np.random.default_rng(cfg.seed)
    train_log = TrainLog()
    batch_num = 0

    def cut_checkpoint() -> Checkpoint:
        acc = None if dev is None else retrieval_accuracy(m, dev, cfg.dev_k)
        cp = Checkpoint(m.copy(), batch_num, acc, None if dev is None else cfg.dev_k)
        train_log.checkpoints.append(cp)
        return cp

    for stage_idx, (dataset, epochs) in enumerate(curriculum.stages):
        lefts, rights = _pair_tokens(m, dataset)
        if len(dataset) < cfg.batch_size:
            log.warning(
                "stage %d has %d pairs, fewer than batch_size %d; no batches will run",
                stage_idx, len(dataset), cfg.batch_size,
            )
        for _ in range(epochs):
            order = rng.permutation(len(dataset))
            for lo in range(0, len(dataset) - cfg.batch_size + 1, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                loss, _, grads = _loss_and_gradient(
                    m, [lefts[i] for i in idx], [rights[i] for i in idx],
                    cfg.temperature,
                )
                adam_step(state, params, grads, cfg)
                batch_num += 1
                acc = None
                if batch_num % cfg.checkpoint_interval == 0:
                    acc = cut_checkpoint().dev_accuracy
                train_log.records.append(BatchRecord(batch_num, loss, acc))
    if not train_log.checkpoints or train_log.checkpoints[-1].batch != batch_num:
        cut_checkpoint()
    return m, train_log


def select_checkpoint(train_log: TrainLog, metric_k: int | None = None) -> Checkpoint:
    """Checkpoint with the highest dev accuracy; first one wins ties."""
    if not train_log.checkpoints:
        raise TrainingError("log has no checkpoints")
    best = None
    for cp in train_log.checkpoints:
        if cp.dev_accuracy is None:
            raise TrainingError(
                "cannot select a checkpoint: no dev accuracy was recorded"
            )
        if metric_k is not None and cp.dev_k != metric_k:
            raise TrainingError(
                f"checkpoint metric used k={cp.dev_k}, selection asked for k={metric_k}"
            )
        if best is None or cp.dev_accuracy > best.dev_accuracy:
            best = cp
    return best
