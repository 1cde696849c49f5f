"""Piecewise-CNN sentence encoder with an exact backward pass.

Pipeline: token/position embedding lookup -> 1-D convolution over the
token axis (windows indexed by their start token, zero-padded on the
right) -> max-pooling over the three pieces cut at the entity positions
-> tanh. The forward caches the embedded matrix and per-piece argmaxes so
the backward can route gradients exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import PAD_ID, LabeledSentence, n_position_buckets, pad_bucket
from .errors import ContractViolation
from .numeric import SeededRng


@dataclass(eq=False)
class EncoderParams:
    """All trainables of the sentence encoder plus its fixed geometry."""

    word_emb: np.ndarray   # (|V|, d_w)
    pos_emb1: np.ndarray   # (2*clip+2, d_p), distances to entity 1
    pos_emb2: np.ndarray   # (2*clip+2, d_p), distances to entity 2
    filters: np.ndarray    # (n, l, d_w + 2*d_p)
    bias: np.ndarray       # (n,)
    clip: int
    max_len: int

    def __post_init__(self):
        if self.pos_emb1.shape != self.pos_emb2.shape:
            raise ValueError("position tables must share a shape")
        if self.pos_emb1.shape[0] != n_position_buckets(self.clip):
            raise ValueError(
                f"position table has {self.pos_emb1.shape[0]} rows, "
                f"clip {self.clip} needs {n_position_buckets(self.clip)}")
        if self.filters.shape[2] != self.input_dim:
            raise ValueError("filter width does not match embedding width")
        if self.bias.shape != (self.n_filters,):
            raise ValueError("one bias per filter required")

    @property
    def d_word(self) -> int:
        return self.word_emb.shape[1]

    @property
    def d_pos(self) -> int:
        return self.pos_emb1.shape[1]

    @property
    def input_dim(self) -> int:
        return self.d_word + 2 * self.d_pos

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def window(self) -> int:
        return self.filters.shape[1]

    @property
    def feature_dim(self) -> int:
        return 3 * self.n_filters

    @classmethod
    def initialize(cls, word_emb: np.ndarray, d_pos: int, n_filters: int,
                   window: int, clip: int, max_len: int,
                   rng: SeededRng) -> "EncoderParams":
        """Fresh parameters around a (pre-trained) word embedding table.

        Position tables start N(0, 0.1); filters N(0, 1/sqrt(l * d_in)) so
        pre-tanh pooled values start O(1); biases at zero.
        """
        buckets = n_position_buckets(clip)
        d_in = word_emb.shape[1] + 2 * d_pos
        return cls(
            word_emb=np.array(word_emb, dtype=np.float64),
            pos_emb1=rng.normal_array((buckets, d_pos), std=0.1),
            pos_emb2=rng.normal_array((buckets, d_pos), std=0.1),
            filters=rng.normal_array((n_filters, window, d_in),
                                     std=1.0 / np.sqrt(window * d_in)),
            bias=np.zeros(n_filters),
            clip=clip,
            max_len=max_len,
        )


@dataclass(eq=False)
class EncoderGrads:
    """Gradient accumulator shaped like EncoderParams' trainables."""

    word_emb: np.ndarray
    pos_emb1: np.ndarray
    pos_emb2: np.ndarray
    filters: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "EncoderGrads":
        return cls(
            word_emb=np.zeros_like(params.word_emb),
            pos_emb1=np.zeros_like(params.pos_emb1),
            pos_emb2=np.zeros_like(params.pos_emb2),
            filters=np.zeros_like(params.filters),
            bias=np.zeros_like(params.bias),
        )


@dataclass(eq=False)
class SentenceFeature:
    """Encoded sentence: the feature vector plus the backward cache."""

    x: np.ndarray                     # (3n,), post-tanh
    argmax: np.ndarray                # (n, 3) window starts, -1 = empty piece
    sentence: LabeledSentence
    embedded: np.ndarray | None       # (m, d_in) forward cache


def _position_buckets(sentence: LabeledSentence, params: EncoderParams):
    """Bucket ids for all m positions; padding uses the reserved bucket."""
    m, clip = params.max_len, params.clip
    pad = pad_bucket(clip)
    b1 = np.full(m, pad, dtype=np.int64)
    b2 = np.full(m, pad, dtype=np.int64)
    n = sentence.true_len
    b1[:n] = np.asarray(sentence.d1, dtype=np.int64) + clip
    b2[:n] = np.asarray(sentence.d2, dtype=np.int64) + clip
    return b1, b2


def _full_token_ids(sentence: LabeledSentence, m: int) -> np.ndarray:
    ids = np.full(m, PAD_ID, dtype=np.int64)
    ids[:sentence.true_len] = sentence.token_ids
    return ids


def embed(sentence: LabeledSentence, params: EncoderParams) -> np.ndarray:
    """(m, d_w + 2*d_p) matrix: word vector then the two position vectors."""
    if sentence.true_len > params.max_len:
        raise ContractViolation(
            f"sentence of length {sentence.true_len} exceeds model max_len {params.max_len}")
    ids = _full_token_ids(sentence, params.max_len)
    if ids.max() >= params.word_emb.shape[0]:
        raise ContractViolation("token id outside embedding table")
    b1, b2 = _position_buckets(sentence, params)
    return np.concatenate(
        [params.word_emb[ids], params.pos_emb1[b1], params.pos_emb2[b2]], axis=1)


def _windows(C: np.ndarray, window: int) -> np.ndarray:
    """(m, l*d_in) sliding windows of C, zero-padded on the right."""
    m, d_in = C.shape
    padded = np.vstack([C, np.zeros((window - 1, d_in))])
    view = sliding_window_view(padded, (window, d_in))
    return view.reshape(m, window * d_in)


def conv(C: np.ndarray, params: EncoderParams) -> np.ndarray:
    """(n, m) filter responses; entry (i, j) is filter i over the window
    starting at token j, plus filter i's bias."""
    win = _windows(C, params.window)
    flat = params.filters.reshape(params.n_filters, -1)
    return (win @ flat.T + params.bias).T


def _piece_bounds(e1_pos: int, e2_pos: int, true_len: int):
    """Half-open [start, end) ranges of window starts for the three pieces."""
    p, q = min(e1_pos, e2_pos), max(e1_pos, e2_pos)
    return ((0, p + 1), (p + 1, q + 1), (q + 1, true_len))


def piecewise_pool(c: np.ndarray, e1_pos: int, e2_pos: int, true_len: int):
    """Max over each entity-delimited piece, concatenated filter-major,
    then tanh. Empty pieces (entity at the last token) contribute 0
    pre-tanh. Returns (x, argmax) where argmax[i, t] is the winning window
    start for filter i in piece t, or -1 for an empty piece."""
    if not (0 <= e1_pos < true_len and 0 <= e2_pos < true_len):
        raise ValueError("entity positions must lie inside the true length")
    n = c.shape[0]
    pooled = np.zeros((n, 3))
    argmax = np.full((n, 3), -1, dtype=np.int64)
    for t, (a, b) in enumerate(_piece_bounds(e1_pos, e2_pos, true_len)):
        if b > a:
            seg = c[:, a:b]
            idx = seg.argmax(axis=1)
            pooled[:, t] = seg[np.arange(n), idx]
            argmax[:, t] = a + idx
    return np.tanh(pooled.reshape(-1)), argmax


def encode(sentence: LabeledSentence, params: EncoderParams,
           keep_cache: bool = True) -> SentenceFeature:
    """Full forward pass; set keep_cache=False for inference-only use."""
    C = embed(sentence, params)
    c = conv(C, params)
    x, argmax = piecewise_pool(c, sentence.e1_pos, sentence.e2_pos, sentence.true_len)
    return SentenceFeature(x=x, argmax=argmax, sentence=sentence,
                           embedded=C if keep_cache else None)


def encode_backward(sentence: LabeledSentence, params: EncoderParams,
                    feature: SentenceFeature, dx: np.ndarray,
                    out: EncoderGrads | None = None) -> EncoderGrads:
    """Accumulate exact parameter gradients for one sentence.

    tanh is differentiated from the cached output, max-pooling routes
    through the cached argmaxes, and the embedding scatter covers padding
    rows too (their PAD word row and pad position buckets are ordinary
    trainable rows).
    """
    if feature.embedded is None:
        raise ContractViolation("encode() was called without keep_cache; no backward possible")
    if out is None:
        out = EncoderGrads.zeros_like(params)

    n, l, d_in = params.filters.shape
    m = params.max_len
    C = feature.embedded

    dpool = (dx * (1.0 - feature.x * feature.x)).reshape(n, 3)

    win = _windows(C, l).reshape(m, l, d_in)
    dC_padded = np.zeros((m + l - 1, d_in))
    row_offsets = np.arange(l)
    for t in range(3):
        starts = feature.argmax[:, t]
        valid = starts >= 0
        if not valid.any():
            continue
        s = starts[valid]
        g = dpool[valid, t]
        out.bias[valid] += g
        out.filters[valid] += g[:, None, None] * win[s]
        rows = (s[:, None] + row_offsets[None, :]).reshape(-1)
        np.add.at(dC_padded, rows, (g[:, None, None] * params.filters[valid]).reshape(-1, d_in))
    dC = dC_padded[:m]

    ids = _full_token_ids(sentence, m)
    b1, b2 = _position_buckets(sentence, params)
    d_w, d_p = params.d_word, params.d_pos
    np.add.at(out.word_emb, ids, dC[:, :d_w])
    np.add.at(out.pos_emb1, b1, dC[:, d_w:d_w + d_p])
    np.add.at(out.pos_emb2, b2, dC[:, d_w + d_p:])
    return out
