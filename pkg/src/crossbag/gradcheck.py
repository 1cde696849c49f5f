"""Standard gradient-check suite, runnable from the CLI as a CI hook.

Random small instances (11-token vocabulary, 4 filters, 3 relations) keep
each check fast while exercising every backward path: the encoder alone,
attention under both scoring functions, and the full loss in every mode.
"""

from __future__ import annotations

import numpy as np

from .attention import RelationAttentionParams, attention_backward, superbag_feature
from .data import LabeledSentence, SentenceBag, SuperBag
from .encoder import EncoderParams, encode, encode_backward
from .numeric import SeededRng, grad_check
from .training import ModelParams, OutputParams, nll, nll_loss

_CLIP = 4
_VOCAB = 11


def _random_sentence(rng: SeededRng, length=8, pair=("e1", "e2"), relation=1):
    ids = np.array([2 + rng.below(_VOCAB - 2) for _ in range(length)], dtype=np.int64)
    e1 = rng.below(length)
    e2 = (e1 + 1 + rng.below(length - 1)) % length
    d1 = tuple(max(-_CLIP, min(_CLIP, i - e1)) for i in range(length))
    d2 = tuple(max(-_CLIP, min(_CLIP, i - e2)) for i in range(length))
    return LabeledSentence(ids, e1, e2, pair, relation, d1, d2)


def _random_model(rng: SeededRng, n_relations=3, keep_prob=0.5):
    word_emb = rng.normal_array((_VOCAB, 6), std=0.3)
    word_emb[0] = 0.0
    enc = EncoderParams.initialize(word_emb, d_pos=2, n_filters=4, window=3,
                                   clip=_CLIP, max_len=12, rng=rng)
    att = RelationAttentionParams(R=rng.normal_array((n_relations, enc.feature_dim), std=0.3))
    out = OutputParams(W=rng.normal_array((n_relations, enc.feature_dim), std=0.3),
                       keep_prob=keep_prob)
    return ModelParams(enc, att, out)


def _check_encoder(seed: int, tol: float):
    rng = SeededRng(seed)
    model = _random_model(rng)
    s = _random_sentence(SeededRng(seed + 50))
    w = SeededRng(seed + 100).normal_array((model.encoder.feature_dim,))
    params = {"word_emb": model.encoder.word_emb, "pos_emb1": model.encoder.pos_emb1,
              "pos_emb2": model.encoder.pos_emb2, "filters": model.encoder.filters,
              "bias": model.encoder.bias}

    def loss_fn(_p):
        return float(np.dot(w, encode(s, model.encoder).x))

    feat = encode(s, model.encoder)
    g = encode_backward(s, model.encoder, feat, w)
    analytic = {"word_emb": g.word_emb, "pos_emb1": g.pos_emb1,
                "pos_emb2": g.pos_emb2, "filters": g.filters, "bias": g.bias}
    return grad_check(loss_fn, params, analytic, eps=1e-5, tol=tol, rng=SeededRng(seed))


def _check_attention(seed: int, scoring: str, tol: float):
    rng = np.random.default_rng(seed)
    X_bags = [rng.normal(size=(3, 8)) for _ in range(2)]
    R = rng.normal(size=(3, 8))
    w = rng.normal(size=8)
    k = 1

    def loss_fn(pdict):
        bags = [pdict["x0"], pdict["x1"]]
        f, _ = superbag_feature(bags, pdict["R"], k, "C2SA", scoring)
        return float(np.dot(w, f))

    _, trace = superbag_feature(X_bags, R, k, "C2SA", scoring)
    dX, dR = attention_backward(trace, w)
    return grad_check(loss_fn, {"x0": X_bags[0], "x1": X_bags[1], "R": R},
                      {"x0": dX[0], "x1": dX[1], "R": dR},
                      eps=1e-5, tol=tol, rng=SeededRng(seed))


def _check_full_loss(seed: int, mode: str, scoring: str, tol: float):
    rng = SeededRng(seed)
    model = _random_model(rng)
    brng = SeededRng(seed + 10)
    n_s = 2 if mode == "C2SA" else 1
    bags = []
    for i in range(2):
        pair = (f"p{i}", "q")
        bags.append(SentenceBag(pair, 1, [_random_sentence(brng, pair=pair)
                                          for _ in range(2)]))
    superbags = [SuperBag(1, bags[:n_s])] if n_s == 2 else [SuperBag(1, [b]) for b in bags]
    _, grads, masks = nll(superbags, model, mode, scoring, SeededRng(seed + 20))

    def loss_fn(_p):
        return nll_loss(superbags, model, mode, scoring, masks)

    return grad_check(loss_fn, model.as_dict(), grads, eps=3e-6, tol=tol,
                      rng=SeededRng(seed))


def run_standard_checks(tol: float = 1e-4, seeds=(0, 1)) -> tuple[bool, str]:
    """Run every check; returns (all_passed, printable report)."""
    lines = []
    ok = True
    for seed in seeds:
        checks = [("encoder", _check_encoder(seed, tol))]
        for scoring in ("cosine", "dot"):
            checks.append((f"attention/{scoring}", _check_attention(seed, scoring, tol)))
        for mode, scoring in (("ATT", "dot"), ("CRSA", "cosine"),
                              ("C2SA", "cosine"), ("C2SA", "dot")):
            checks.append((f"loss/{mode}/{scoring}", _check_full_loss(seed, mode, scoring, tol)))
        for name, report in checks:
            status = "ok" if report.passed else "FAIL"
            lines.append(f"seed {seed} {name}: max rel err {report.max_rel_err:.3e} [{status}]")
            if not report.passed:
                ok = False
                lines.append(str(report))
    verdict = f"{'PASS' if ok else 'FAIL'} tol={tol:g}"
    lines.append(verdict)
    return ok, "\n".join(lines)
