"""Output layer, superbag negative log-likelihood, SGD, and the epoch loop.

The loss of a batch is the sum over its superbags of
``-log softmax(W (f ⊙ h))[label]`` where ``f`` is the superbag feature and
``h`` a Bernoulli keep-mask drawn once per superbag from the run's seeded
stream. Evaluation replaces the mask by its expectation (``f * keep_prob``).
Every gradient is hand-derived and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attention import RelationAttentionParams, attention_backward, superbag_feature
from .data import SentenceBag, SuperBag, assemble_superbags
from .encoder import EncoderGrads, EncoderParams, encode, encode_backward
from .numeric import SeededRng, softmax

PARAM_GROUPS = ("word_emb", "pos_emb1", "pos_emb2", "filters", "bias", "R", "W")


@dataclass(eq=False)
class OutputParams:
    W: np.ndarray      # (n_relations, feature_dim)
    keep_prob: float   # dropout keep probability

    def __post_init__(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep probability must lie in (0, 1], got {self.keep_prob}")


@dataclass(eq=False)
class ModelParams:
    """All trainables; the feature dimension 3n ties the three groups."""

    encoder: EncoderParams
    attention: RelationAttentionParams
    output: OutputParams

    def __post_init__(self):
        dim = self.encoder.feature_dim
        if self.attention.R.shape[1] != dim or self.output.W.shape[1] != dim:
            raise ValueError("feature dimension mismatch between encoder/attention/output")
        if self.attention.R.shape[0] != self.output.W.shape[0]:
            raise ValueError("attention and output disagree on the relation count")

    @property
    def n_relations(self) -> int:
        return self.output.W.shape[0]

    def as_dict(self) -> dict:
        return {
            "word_emb": self.encoder.word_emb,
            "pos_emb1": self.encoder.pos_emb1,
            "pos_emb2": self.encoder.pos_emb2,
            "filters": self.encoder.filters,
            "bias": self.encoder.bias,
            "R": self.attention.R,
            "W": self.output.W,
        }

    @classmethod
    def initialize(cls, word_emb: np.ndarray, n_relations: int, d_pos: int,
                   n_filters: int, window: int, clip: int, max_len: int,
                   keep_prob: float, rng: SeededRng) -> "ModelParams":
        """Draws in a fixed order (encoder tables, R, W) for reproducibility."""
        enc = EncoderParams.initialize(word_emb, d_pos, n_filters, window,
                                       clip, max_len, rng)
        att = RelationAttentionParams.initialize(n_relations, enc.feature_dim, rng)
        out = OutputParams(W=rng.normal_array((n_relations, enc.feature_dim), std=0.02),
                           keep_prob=keep_prob)
        return cls(enc, att, out)


def logits(f: np.ndarray, output: OutputParams, mask: np.ndarray | None = None) -> np.ndarray:
    """Output scores. Training passes the Bernoulli keep-mask; evaluation
    passes None and gets the expectation scaling ``W (f * p)``."""
    if mask is None:
        return output.W @ (f * output.keep_prob)
    if mask.shape != f.shape:
        raise ValueError(f"mask shape {mask.shape} != feature shape {f.shape}")
    return output.W @ (f * mask)


def _superbag_id(sb: SuperBag) -> str:
    pairs = ",".join("|".join(b.pair_key) for b in sb.bags)
    return f"relation={sb.relation} pairs=[{pairs}]"


def _nll_one(sb: SuperBag, params: ModelParams, mode: str, scoring: str,
             mask: np.ndarray):
    """Loss and full gradient contribution of a single superbag."""
    feats = [[encode(s, params.encoder) for s in bag.sentences] for bag in sb.bags]
    X_bags = [np.vstack([f.x for f in fl]) for fl in feats]
    f, trace = superbag_feature(X_bags, params.attention.R, sb.relation, mode, scoring)

    fh = f * mask
    o = logits(f, params.output, mask)
    m = o.max()
    lse = m + np.log(np.exp(o - m).sum())
    loss = float(lse - o[sb.relation])
    if not np.isfinite(loss):
        raise RuntimeError(f"non-finite loss on superbag {_superbag_id(sb)}")

    do = softmax(o)
    do[sb.relation] -= 1.0
    dW = np.outer(do, fh)
    df = (params.output.W.T @ do) * mask

    dX_bags, dR = attention_backward(trace, df)
    enc_grads = EncoderGrads.zeros_like(params.encoder)
    for bag_feats, dX in zip(feats, dX_bags):
        for feat, dx in zip(bag_feats, dX):
            encode_backward(feat.sentence, params.encoder, feat, dx, out=enc_grads)

    grads = {
        "word_emb": enc_grads.word_emb,
        "pos_emb1": enc_grads.pos_emb1,
        "pos_emb2": enc_grads.pos_emb2,
        "filters": enc_grads.filters,
        "bias": enc_grads.bias,
        "R": dR,
        "W": dW,
    }
    return loss, grads


def nll(superbags: list[SuperBag], params: ModelParams, mode: str, scoring: str,
        rng: SeededRng, threads: int = 1):
    """Summed loss and gradients over a batch of superbags.

    Masks are drawn from ``rng`` in batch order before any work is
    dispatched, and per-superbag gradients are folded in batch order, so
    the result is bit-identical for any thread count. Returns
    (loss, grads, masks); re-evaluate deterministically with
    :func:`nll_loss` and the returned masks.
    """
    if not superbags:
        raise ValueError("empty superbag batch")
    dim = params.encoder.feature_dim
    masks = [rng.bernoulli_mask(dim, params.output.keep_prob) for _ in superbags]

    total_loss = 0.0
    totals = {name: np.zeros_like(arr) for name, arr in params.as_dict().items()}

    def fold(result):
        nonlocal total_loss
        loss, grads = result
        total_loss += loss
        for name in PARAM_GROUPS:
            totals[name] += grads[name]

    if threads <= 1:
        for sb, mask in zip(superbags, masks):
            fold(_nll_one(sb, params, mode, scoring, mask))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(lambda t: _nll_one(t[0], params, mode, scoring, t[1]),
                                   zip(superbags, masks)):
                fold(result)

    return total_loss, totals, masks


def nll_loss(superbags: list[SuperBag], params: ModelParams, mode: str,
             scoring: str, masks: list[np.ndarray]) -> float:
    """Pure re-evaluation of the batch loss with frozen dropout masks."""
    total = 0.0
    for sb, mask in zip(superbags, masks):
        feats = [[encode(s, params.encoder, keep_cache=False) for s in bag.sentences]
                 for bag in sb.bags]
        X_bags = [np.vstack([f.x for f in fl]) for fl in feats]
        f, _ = superbag_feature(X_bags, params.attention.R, sb.relation, mode, scoring)
        o = logits(f, params.output, mask)
        m = o.max()
        total += float(m + np.log(np.exp(o - m).sum()) - o[sb.relation])
    return total


def sgd_step(params: ModelParams, grads: dict, lr: float,
             freeze_word_emb: bool = False) -> None:
    """In-place ``p <- p - lr * g`` over every trainable coordinate."""
    target = params.as_dict()
    for name in PARAM_GROUPS:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient in parameter group {name!r}")
        if freeze_word_emb and name == "word_emb":
            continue
        target[name] -= lr * g


@dataclass
class EpochMetrics:
    epoch: int
    mean_loss: float
    wall_s: float
    dev_f1: float | None = None


@dataclass
class TrainResult:
    params: ModelParams
    metrics: list[EpochMetrics] = field(default_factory=list)


def train(config, bags: list[SentenceBag], word_emb: np.ndarray,
          n_relations: int, dev_eval=None) -> TrainResult:
    """Full training loop, reproducible from ``config.seed``.

    Superbags are reassembled (and NA resampled) every epoch with the
    advancing stream; ATT and CRSA train at bag level, so their effective
    superbag size is forced to 1. ``dev_eval(params) -> float`` is called
    after each epoch when provided.
    """
    rng = SeededRng(config.seed)
    params = ModelParams.initialize(
        word_emb, n_relations, config.pos_dim, config.n_filters, config.window,
        config.clip, config.max_len, config.keep_prob, rng)

    n_s = config.superbag_size if config.mode == "C2SA" else 1
    result = TrainResult(params=params)
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        superbags = assemble_superbags(bags, n_s, rng, na_ratio=config.na_ratio)
        rng.shuffle(superbags)
        epoch_loss = 0.0
        seen = 0
        for i in range(0, len(superbags), config.batch_size):
            batch = superbags[i:i + config.batch_size]
            loss, grads, _ = nll(batch, params, config.mode, config.scoring,
                                 rng, threads=config.threads)
            sgd_step(params, grads, config.lr, config.freeze_word_emb)
            epoch_loss += loss
            seen += len(batch)
        row = EpochMetrics(
            epoch=epoch,
            mean_loss=epoch_loss / max(seen, 1),
            wall_s=time.perf_counter() - start,
            dev_f1=dev_eval(params) if dev_eval is not None else None,
        )
        result.metrics.append(row)
    return result
