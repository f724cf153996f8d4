"""CBOW with negative sampling, keeping both the IN and the OUT matrices.

The per-example update is a single numba kernel shared by :func:`sgd_step`
and the epoch loop in :func:`train`, so a one-example training run and a
direct ``sgd_step`` call are the same arithmetic.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numba import njit

from desmrank.corpus import Vocabulary, encode_corpus
from desmrank.embeddings import DualEmbedding

log = logging.getLogger(__name__)

_POW_RE = re.compile(r"^empirical_pow\(\s*([0-9.eE+-]+)\s*\)$")


@dataclass(frozen=True)
class TrainerConfig:
    dim: int = 200
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    # lr decays linearly to learning_rate * min_lr_ratio; 1.0 disables decay
    min_lr_ratio: float = 1e-4
    negative_distribution: str = "empirical_pow(0.75)"
    subsample_threshold: Optional[float] = None
    seed: int = 1
    workers: int = 1

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.negatives < 1:
            raise ValueError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.min_lr_ratio <= 1:
            raise ValueError("min_lr_ratio must be in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.subsample_threshold is not None and not self.subsample_threshold > 0:
            raise ValueError("subsample_threshold must be > 0 when set")
        parse_distribution(self.negative_distribution)


@dataclass(frozen=True)
class TrainingExample:
    target_id: int
    context_ids: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_ids", tuple(int(c) for c in self.context_ids))
        if not self.context_ids:
            raise ValueError("a training example needs at least one context word")


def parse_distribution(spec: str) -> tuple[str, float]:
    """Return ``(kind, power)`` for ``uniform``, ``empirical`` or ``empirical_pow(p)``."""
    spec = spec.strip()
    if spec == "uniform":
        return "uniform", 0.0
    if spec == "empirical":
        return "empirical", 1.0
    m = _POW_RE.match(spec)
    if m:
        return "empirical_pow", float(m.group(1))
    raise ValueError(f"unknown negative distribution {spec!r}")


def negative_distribution(counts: Sequence[int] | np.ndarray, spec: str) -> np.ndarray:
    """Probability vector over ids for the configured noise distribution."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("empty vocabulary")
    kind, power = parse_distribution(spec)
    if kind == "uniform":
        weights = np.ones_like(counts)
    else:
        weights = counts ** power
    total = weights.sum()
    if not total > 0:
        raise ValueError("noise distribution has no mass")
    return weights / total


def sample_negatives(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. ids from ``probs`` (inverse-CDF sampling)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    out = np.searchsorted(cdf, rng.random(n), side="right")
    np.minimum(out, len(probs) - 1, out=out)
    return out.astype(np.int64)


def init_weights(vocab_size: int, dim: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """IN rows uniform in [-0.5/d, 0.5/d]; OUT rows zero."""
    w_in = (rng.random((vocab_size, dim)) - 0.5) / dim
    w_out = np.zeros((vocab_size, dim))
    return w_in, w_out


def context_mean(context_ids: Sequence[int], w_in: np.ndarray) -> np.ndarray:
    """Mean of the IN rows of the context words (divisor = actual context size)."""
    ids = np.asarray(context_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty context")
    return w_in[ids].mean(axis=0)


def _check_ids(ids: np.ndarray, vocab_size: int, what: str) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ValueError(f"{what} id out of range [0, {vocab_size})")


def negative_sampling_loss(example: TrainingExample, negatives: Sequence[int],
                           w_in: np.ndarray, w_out: np.ndarray) -> float:
    """-log s(c.w_target) - sum_n log s(-c.w_n), with c the IN context mean."""
    negs = np.asarray(negatives, dtype=np.int64)
    ctx = np.asarray(example.context_ids, dtype=np.int64)
    _check_ids(negs, w_out.shape[0], "negative")
    _check_ids(ctx, w_in.shape[0], "context")
    _check_ids(np.array([example.target_id]), w_out.shape[0], "target")
    c_bar = context_mean(ctx, w_in)
    pos = float(w_out[example.target_id] @ c_bar)
    neg = w_out[negs] @ c_bar
    # -log s(x) == log(1 + e^-x)
    return float(np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum())


def full_softmax_loss(example: TrainingExample, w_in: np.ndarray, w_out: np.ndarray) -> float:
    """Exact -log p(target | context) under the full softmax.

    Only meant for tiny vocabularies (sanity checks); training never uses it.
    """
    c_bar = context_mean(example.context_ids, w_in)
    logits = w_out @ c_bar
    top = logits.max()
    log_z = top + math.log(np.exp(logits - top).sum())
    return float(log_z - logits[example.target_id])


@njit(cache=True, nogil=True)
def _log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True, nogil=True)
def _update(w_in, w_out, ids, ctx_lo, ctx_hi, center, target, negs, lr, c_bar, err, grad):
    """One exact gradient step for a single (context, target, negatives) example.

    The context is ``ids[ctx_lo:ctx_hi]`` minus position ``center`` (pass
    center=-1 to keep all). All gradients are taken at the pre-step point,
    so repeated ids accumulate exactly. Returns the pre-step loss.
    """
    dim = w_in.shape[1]
    n_neg = negs.shape[0]
    n_ctx = 0
    for k in range(dim):
        c_bar[k] = 0.0
        err[k] = 0.0
    for p in range(ctx_lo, ctx_hi):
        if p == center:
            continue
        row = ids[p]
        n_ctx += 1
        for k in range(dim):
            c_bar[k] += w_in[row, k]
    inv = 1.0 / n_ctx
    for k in range(dim):
        c_bar[k] *= inv

    loss = 0.0
    for j in range(n_neg + 1):
        row = target if j == 0 else negs[j - 1]
        f = 0.0
        for k in range(dim):
            f += c_bar[k] * w_out[row, k]
        if j == 0:
            loss += _log1pexp(-f)
            grad[j] = _sigmoid(f) - 1.0
        else:
            loss += _log1pexp(f)
            grad[j] = _sigmoid(f)
    # error signal for the context mean, from pre-update OUT rows
    for j in range(n_neg + 1):
        row = target if j == 0 else negs[j - 1]
        g = grad[j]
        for k in range(dim):
            err[k] += g * w_out[row, k]
    for j in range(n_neg + 1):
        row = target if j == 0 else negs[j - 1]
        g = lr * grad[j]
        for k in range(dim):
            w_out[row, k] -= g * c_bar[k]
    scale = lr * inv
    for p in range(ctx_lo, ctx_hi):
        if p == center:
            continue
        row = ids[p]
        for k in range(dim):
            w_in[row, k] -= scale * err[k]
    return loss


@njit(cache=True, nogil=True)
def _run_records(w_in, w_out, ids, offsets, r_lo, r_hi, window, negs, n_neg,
                 lr0, lr_min, step0, step_scale, total_steps):
    """Train over records ``r_lo:r_hi``; returns (loss_sum, n_examples).

    ``negs`` holds ``n_neg`` pre-drawn ids per corpus position.
    """
    dim = w_in.shape[1]
    c_bar = np.empty(dim)
    err = np.empty(dim)
    grad = np.empty(n_neg + 1)
    loss_sum = 0.0
    n_examples = 0
    local = 0
    for r in range(r_lo, r_hi):
        s = offsets[r]
        e = offsets[r + 1]
        if e - s < 2:
            local += e - s
            continue
        for pos in range(s, e):
            progress = (step0 + local * step_scale) / total_steps
            lr = lr0 * (1.0 - progress)
            if lr < lr_min:
                lr = lr_min
            local += 1
            lo = pos - window
            if lo < s:
                lo = s
            hi = pos + window + 1
            if hi > e:
                hi = e
            loss_sum += _update(w_in, w_out, ids, lo, hi, pos, ids[pos],
                                negs[pos * n_neg:(pos + 1) * n_neg], lr, c_bar, err, grad)
            n_examples += 1
    return loss_sum, n_examples


def sgd_step(example: TrainingExample, negatives: Sequence[int], w_in: np.ndarray,
             w_out: np.ndarray, lr: float) -> float:
    """Apply one gradient step in place to ``w_in``/``w_out``.

    Only the rows of the context words, the target and the negatives
    change. Returns the loss before the step.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    negs = np.ascontiguousarray(negatives, dtype=np.int64)
    ctx = np.ascontiguousarray(example.context_ids, dtype=np.int64)
    _check_ids(negs, w_out.shape[0], "negative")
    _check_ids(ctx, w_in.shape[0], "context")
    _check_ids(np.array([example.target_id]), w_out.shape[0], "target")
    dim = w_in.shape[1]
    return float(_update(w_in, w_out, ctx, 0, ctx.shape[0], -1, int(example.target_id), negs,
                         float(lr), np.empty(dim), np.empty(dim), np.empty(negs.shape[0] + 1)))


def _subsample(ids: np.ndarray, offsets: np.ndarray, counts: np.ndarray, threshold: float,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    freq = counts / counts.sum()
    ratio = threshold / np.maximum(freq, 1e-300)
    keep_p = np.minimum(1.0, np.sqrt(ratio) + ratio)
    keep = rng.random(ids.shape[0]) < keep_p[ids]
    kept_per_record = np.add.reduceat(keep.astype(np.int64), offsets[:-1]) if ids.size else \
        np.zeros(len(offsets) - 1, dtype=np.int64)
    # reduceat misreports empty records
    kept_per_record[offsets[:-1] == offsets[1:]] = 0
    new_offsets = np.concatenate([[0], np.cumsum(kept_per_record)]).astype(np.int64)
    return ids[keep], new_offsets


def train(records: Iterable[Sequence[str]], vocab: Vocabulary, config: TrainerConfig = TrainerConfig(),
          on_epoch: Optional[Callable[[int, float], None]] = None) -> DualEmbedding:
    """Train CBOW on tokenized ``records`` and return both weight matrices.

    With ``workers == 1`` the result is bit-reproducible for a given seed.
    With more workers, threads update the shared matrices lock-free
    (Hogwild style); lost updates are tolerated.
    ``on_epoch(epoch, mean_loss)`` is called after each epoch.
    """
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    ids, offsets = encode_corpus(records, vocab)
    lengths = np.diff(offsets)
    if not np.any(lengths >= 2):
        raise ValueError("corpus has no record with two or more in-vocabulary tokens")

    rng = np.random.default_rng(config.seed)
    w_in, w_out = init_weights(len(vocab), config.dim, rng)
    # noise counts come from the training corpus itself, so vocabulary words
    # absent from it are never drawn under the empirical distributions
    corpus_counts = np.bincount(ids, minlength=len(vocab))
    probs = negative_distribution(corpus_counts, config.negative_distribution)
    n_neg = config.negatives
    total_steps = float(config.epochs * ids.shape[0])
    lr0 = config.learning_rate
    lr_min = lr0 * config.min_lr_ratio

    for epoch in range(config.epochs):
        if config.subsample_threshold:
            ep_ids, ep_offsets = _subsample(ids, offsets, corpus_counts.astype(np.float64),
                                            config.subsample_threshold, rng)
        else:
            ep_ids, ep_offsets = ids, offsets
        negs = sample_negatives(probs, max(1, ep_ids.shape[0] * n_neg), rng)
        step0 = float(epoch * ids.shape[0])
        n_records = len(ep_offsets) - 1
        if config.workers == 1:
            loss_sum, n_ex = _run_records(w_in, w_out, ep_ids, ep_offsets, 0, n_records,
                                          config.window, negs, n_neg, lr0, lr_min,
                                          step0, 1.0, total_steps)
        else:
            bounds = np.linspace(0, n_records, config.workers + 1).astype(np.int64)
            # aligned float64 stores are atomic on the supported platforms, so
            # racing workers can lose updates but never tear a cell
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = [
                    pool.submit(_run_records, w_in, w_out, ep_ids, ep_offsets,
                                int(bounds[i]), int(bounds[i + 1]), config.window, negs,
                                n_neg, lr0, lr_min, step0, float(config.workers), total_steps)
                    for i in range(config.workers)
                ]
                parts = [f.result() for f in futures]
            loss_sum = sum(p[0] for p in parts)
            n_ex = sum(p[1] for p in parts)
        mean_loss = loss_sum / max(n_ex, 1)
        log.info("epoch %d: %d examples, mean loss %.5f", epoch + 1, n_ex, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)

    return DualEmbedding(vocab=vocab, w_in=w_in, w_out=w_out)
