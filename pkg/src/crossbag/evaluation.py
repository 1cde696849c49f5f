"""Corpus-level held-out PR evaluation, sentence-level F1, and the
attention inspection report.

At inference time a sentence is scored on its own: the encoder feature
goes straight to the output layer (with expectation-scaled dropout) and
yields a relation distribution. Corpus-level evaluation ranks every
(entity pair, non-NA relation) candidate by the maximum probability that
relation received over the pair's sentences, then sweeps the ranking
against the gold facts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import superbag_feature
from .data import NA_ID, SuperBag
from .encoder import encode
from .numeric import softmax
from .training import ModelParams, logits


@dataclass(frozen=True)
class Prediction:
    pair_key: tuple
    relation: int
    score: float


@dataclass
class PRCurve:
    points: list          # (precision, recall) per prediction-count prefix
    p_at_n: dict          # N -> precision among the N best
    total_gold: int
    scores: list = field(default_factory=list)  # score at each rank

    @property
    def auc(self) -> float:
        """Area under the PR curve by step integration over recall."""
        area = 0.0
        last_recall = 0.0
        for precision, recall in self.points:
            area += precision * (recall - last_recall)
            last_recall = recall
        return area

    def csv_rows(self):
        yield "rank,precision,recall,score"
        for rank, ((precision, recall), score) in enumerate(zip(self.points, self.scores), 1):
            yield f"{rank},{precision:.6f},{recall:.6f},{score:.6f}"

    def p_at_n_rows(self):
        yield "n,precision"
        for n in sorted(self.p_at_n):
            yield f"{n},{self.p_at_n[n]:.6f}"


def sentence_probabilities(model: ModelParams, sentence) -> np.ndarray:
    """Relation distribution for one sentence (expectation-scaled dropout)."""
    x = encode(sentence, model.encoder, keep_cache=False).x
    return softmax(logits(x, model.output))


def score_corpus(model: ModelParams, sentences) -> list[Prediction]:
    """One prediction per (pair, non-NA relation): the maximum probability
    of that relation over all the pair's sentences. NA is never emitted."""
    best: dict = {}
    for s in sentences:
        probs = sentence_probabilities(model, s)
        for k in range(1, model.n_relations):
            key = (s.pair_key, k)
            p = float(probs[k])
            if p > best.get(key, -1.0):
                best[key] = p
    return [Prediction(pair, k, score) for (pair, k), score in best.items()]


def pr_curve(predictions, gold_facts, p_at_n=(100, 200, 300)) -> PRCurve:
    """Precision/recall at every prefix of the score-ranked predictions.

    ``gold_facts`` is a set of (pair_key, relation) with relation != NA.
    Ties are broken by pair key then relation id so the curve is
    deterministic.
    """
    if not gold_facts:
        raise ValueError("empty gold fact set")
    ranked = sorted(predictions, key=lambda p: (-p.score, p.pair_key, p.relation))
    points = []
    scores = []
    tp = 0
    for t, pred in enumerate(ranked, start=1):
        if (pred.pair_key, pred.relation) in gold_facts:
            tp += 1
        points.append((tp / t, tp / len(gold_facts)))
        scores.append(pred.score)
    at_n = {}
    for n in p_at_n:
        if ranked:
            cut = min(n, len(ranked))
            at_n[n] = points[cut - 1][0]
        else:
            at_n[n] = 0.0
    return PRCurve(points=points, p_at_n=at_n, total_gold=len(gold_facts), scores=scores)


def predict_sentence(model: ModelParams, sentence) -> int:
    """Argmax relation for a single sentence; NA is allowed."""
    return int(np.argmax(sentence_probabilities(model, sentence)))


def micro_prf(pred_gold_pairs) -> tuple[float, float, float]:
    """Micro precision/recall/F1 of non-NA predictions against non-NA gold.

    A wrong non-NA prediction on a non-NA gold counts as both a false
    positive and a false negative.
    """
    tp = fp = fn = 0
    for pred, gold in pred_gold_pairs:
        if pred != NA_ID:
            if pred == gold:
                tp += 1
            else:
                fp += 1
        if gold != NA_ID and pred != gold:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def sentence_f1(model: ModelParams, sentences) -> tuple[float, float, float]:
    """Per-sentence argmax prediction (NA allowed), micro-averaged."""
    return micro_prf((predict_sentence(model, s), s.relation) for s in sentences)


def gamma_localization_rate(model: ModelParams, bags, noisy_pairs, rng,
                            scoring: str = "cosine", n_s: int = 3):
    """How often cross-bag attention pins the fully-noisy bag.

    For every bag whose pair key is in ``noisy_pairs``, a superbag is
    assembled from it plus ``n_s - 1`` same-relation clean bags (chosen and
    shuffled with ``rng``), and the minimum gamma weight is located.
    Returns (hits, total) where a hit means the noisy bag got the minimum.
    """
    noisy = [b for b in bags if b.pair_key in noisy_pairs]
    clean_by_relation: dict = {}
    for b in bags:
        if b.pair_key not in noisy_pairs:
            clean_by_relation.setdefault(b.relation, []).append(b)

    hits = total = 0
    for nb in noisy:
        pool = clean_by_relation.get(nb.relation, [])
        if len(pool) < n_s - 1:
            continue
        picks = rng.sample_indices(len(pool), n_s - 1)
        members = [nb] + [pool[i] for i in picks]
        rng.shuffle(members)
        noisy_index = members.index(nb)
        sb = SuperBag(nb.relation, members)
        X_bags = [np.vstack([encode(s, model.encoder, keep_cache=False).x
                             for s in bag.sentences]) for bag in sb.bags]
        _, trace = superbag_feature(X_bags, model.attention.R, sb.relation,
                                    "C2SA", scoring)
        if int(np.argmin(trace.gamma_)) == noisy_index:
            hits += 1
        total += 1
    return hits, total


def _bucket(weight: float, n: int) -> str:
    lo, hi = 1.0 / (2.0 * n), 3.0 / (2.0 * n)
    if weight < lo:
        return "low"
    if weight > hi:
        return "high"
    return "medium"


def _clip_text(sentence, width=60) -> str:
    text = sentence.text or " ".join(str(t) for t in sentence.token_ids)
    return text if len(text) <= width else text[:width - 3] + "..."


def inspect_attention(model: ModelParams, superbag: SuperBag, mode: str,
                      scoring: str, relation_names=None) -> str:
    """Human-readable case-study report: per-sentence beta weights bucketed
    low/medium/high (thresholds 1/(2 n_b) and 3/(2 n_b)) plus raw values,
    and the per-bag gamma weights."""
    feats = [[encode(s, model.encoder, keep_cache=False) for s in bag.sentences]
             for bag in superbag.bags]
    X_bags = [np.vstack([f.x for f in fl]) for fl in feats]
    _, trace = superbag_feature(X_bags, model.attention.R, superbag.relation,
                                mode, scoring)
    label = (relation_names[superbag.relation]
             if relation_names else str(superbag.relation))
    lines = [f"superbag label={label} bags={len(superbag.bags)} mode={mode} scoring={scoring}"]
    for i, bag in enumerate(superbag.bags):
        g = float(trace.gamma_[i])
        lines.append(f"bag {i + 1} pair={bag.pair_key[0]}|{bag.pair_key[1]} "
                     f"gamma={g:.4f}")
        weights = trace.beta[i]
        n_b = len(bag.sentences)
        for w, s in zip(weights, bag.sentences):
            lines.append(f"  [{_bucket(float(w), n_b):6s} {float(w):.4f}] {_clip_text(s)}")
    return "\n".join(lines)
