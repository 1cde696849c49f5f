"""Selective attention over sentences and bags.

Three modes share one entry point, ``superbag_feature``:

* ``ATT``   - vanilla selective attention: softmax over the sentences'
  dot products with the label relation vector; trains at bag level
  (superbags of exactly one bag).
* ``CRSA``  - cross-relation attention: per-sentence softmax over ALL
  relations (alpha), renormalized over sentences at the label relation
  (beta, the Bayes posterior under a uniform sentence prior), weighted
  sum into a bag feature; bag level.
* ``C2SA``  - CRSA per bag plus a second softmax (gamma) over the bag
  features' similarities to the label relation vector, with the relation
  vectors shared between both levels.

``scoring`` selects cosine or raw dot product for the sentence-relation
and bag-relation similarities of CRSA/C2SA. The ATT baseline always uses
the dot product; it exists to isolate exactly the cross-relation delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .numeric import (
    ZERO_NORM,
    SeededRng,
    softmax,
    softmax_backward,
    softmax_rows,
)

MODES = ("ATT", "CRSA", "C2SA")
SCORINGS = ("cosine", "dot")


@dataclass(eq=False)
class RelationAttentionParams:
    """One attention vector per relation, tied across both attention levels."""

    R: np.ndarray  # (n_r, feature_dim)

    @classmethod
    def initialize(cls, n_relations: int, feature_dim: int, rng: SeededRng):
        """N(0, 0.02) entries; zero rows would leave cosine directionless."""
        R = rng.normal_array((n_relations, feature_dim), std=0.02)
        while any(np.linalg.norm(R[k]) < ZERO_NORM for k in range(n_relations)):
            R = rng.normal_array((n_relations, feature_dim), std=0.02)
        return cls(R=R)


def _safe_norms(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(norms, zero-row mask); zero norms are replaced by 1 for division."""
    norms = np.linalg.norm(M, axis=1)
    degenerate = norms < ZERO_NORM
    return np.where(degenerate, 1.0, norms), degenerate


def similarity(X: np.ndarray, R: np.ndarray, scoring: str) -> np.ndarray:
    """(n_sentences, n_relations) score matrix under the chosen scoring.

    Cosine rows/columns of zero-norm vectors are 0 by the package-wide
    convention.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != R.shape[1]:
        raise ValueError(f"feature dim {X.shape[1]} != relation dim {R.shape[1]}")
    if scoring == "dot":
        return X @ R.T
    if scoring == "cosine":
        nx, bad_x = _safe_norms(X)
        nr, bad_r = _safe_norms(R)
        S = (X / nx[:, None]) @ (R / nr[:, None]).T
        S[bad_x, :] = 0.0
        S[:, bad_r] = 0.0
        return np.clip(S, -1.0, 1.0)
    raise ValueError(f"unknown scoring {scoring!r}")


def alpha(S: np.ndarray) -> np.ndarray:
    """Per-sentence relation distribution: softmax over each row of S."""
    return softmax_rows(S)


def beta(alpha_mat: np.ndarray, relation: int) -> np.ndarray:
    """Posterior sentence weights for one relation.

    Bayes' rule with a uniform sentence prior reduces to normalizing the
    relation's alpha column over sentences.
    """
    col = alpha_mat[:, relation]
    return col / col.sum()


def bag_feature(X: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Convex combination of the bag's sentence features."""
    return weights @ X


def gamma(bag_features: np.ndarray, r_k: np.ndarray, scoring: str) -> np.ndarray:
    """Cross-bag attention weights: softmax over bag-relation similarities."""
    scores = similarity(np.atleast_2d(bag_features), r_k[None, :], scoring)[:, 0]
    return softmax(scores)


@dataclass(eq=False)
class AttentionTrace:
    """Everything the backward pass (and the case-study report) needs."""

    mode: str
    scoring: str
    relation: int
    X: list                       # per bag: (n_b, dim) sentence features
    beta: list                    # per bag: (n_b,) sentence weights
    gamma_: np.ndarray            # (n_s,) bag weights
    bag_features: list            # per bag: (dim,)
    superbag_feature: np.ndarray  # (dim,)
    R: np.ndarray                 # the tied relation vectors used
    S: list = field(default_factory=list)      # per bag: (n_b, n_r); CRSA/C2SA
    alpha: list = field(default_factory=list)  # per bag: (n_b, n_r); CRSA/C2SA
    att_scores: list = field(default_factory=list)  # per bag: (n_b,); ATT
    bag_scores: np.ndarray | None = None       # (n_s,) pre-softmax; C2SA


def _check_bags(X_bags) -> list[np.ndarray]:
    if not X_bags:
        raise ValueError("empty superbag")
    mats = []
    for X in X_bags:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            raise ValueError("empty sentence bag")
        mats.append(X)
    return mats


def superbag_feature(X_bags, R: np.ndarray, relation: int, mode: str,
                     scoring: str = "cosine") -> tuple[np.ndarray, AttentionTrace]:
    """Combine a superbag's sentence features into one training feature.

    ``X_bags`` is a list over bags of (n_sentences, dim) arrays. ATT and
    CRSA train at the sentence-bag level, so they require exactly one bag
    per superbag (the caller assembles with superbag size 1).
    """
    X_bags = _check_bags(X_bags)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if scoring not in SCORINGS:
        raise ValueError(f"unknown scoring {scoring!r}")
    if mode in ("ATT", "CRSA") and len(X_bags) != 1:
        raise ValueError(f"mode {mode} trains on single-bag superbags, got {len(X_bags)} bags")

    if mode == "ATT":
        X = X_bags[0]
        scores = X @ R[relation]
        w = softmax(scores)
        f = bag_feature(X, w)
        trace = AttentionTrace(mode, scoring, relation, X_bags, [w],
                               np.array([1.0]), [f], f, R,
                               att_scores=[scores])
        return f, trace

    S_list, alpha_list, beta_list, b_list = [], [], [], []
    for X in X_bags:
        S = similarity(X, R, scoring)
        a = alpha(S)
        w = beta(a, relation)
        S_list.append(S)
        alpha_list.append(a)
        beta_list.append(w)
        b_list.append(bag_feature(X, w))

    if mode == "CRSA":
        f = b_list[0]
        g = np.array([1.0])
        bag_scores = None
    else:
        B = np.vstack(b_list)
        bag_scores = similarity(B, R[relation][None, :], scoring)[:, 0]
        g = softmax(bag_scores)
        f = g @ B

    trace = AttentionTrace(mode, scoring, relation, X_bags, beta_list, g,
                           b_list, f, R, S=S_list, alpha=alpha_list,
                           bag_scores=bag_scores)
    return f, trace


def _similarity_backward(X, R, S, dS, scoring):
    """Gradients of the score matrix wrt its two inputs."""
    if scoring == "dot":
        return dS @ R, dS.T @ X
    nx, bad_x = _safe_norms(X)
    nr, bad_r = _safe_norms(R)
    dS = dS.copy()
    dS[bad_x, :] = 0.0
    dS[:, bad_r] = 0.0
    Xn = X / nx[:, None]
    Rn = R / nr[:, None]
    dX = (dS @ Rn) / nx[:, None] - ((dS * S).sum(axis=1) / nx**2)[:, None] * X
    dR = (dS.T @ Xn) / nr[:, None] - ((dS * S).sum(axis=0) / nr**2)[:, None] * R
    return dX, dR


def attention_backward(trace: AttentionTrace, df: np.ndarray):
    """Exact gradients of the superbag feature wrt sentence features and R.

    Returns (dX_bags, dR) with dX_bags shaped like trace.X. Routes through
    the gamma softmax, the beta normalization, the per-row alpha softmax,
    and the scoring function (cosine needs the quotient-rule Jacobian; dot
    is linear).
    """
    if trace.superbag_feature is None or not trace.X:
        raise ContractViolation("attention trace is missing its forward results")
    R = trace.R
    k = trace.relation
    dR = np.zeros_like(R)
    dX_bags = [np.zeros_like(X) for X in trace.X]

    if trace.mode == "ATT":
        X = trace.X[0]
        w = trace.beta[0]
        dw = X @ df
        dX_bags[0] += np.outer(w, df)
        dt = softmax_backward(w, dw)
        dX_bags[0] += np.outer(dt, R[k])
        dR[k] += X.T @ dt
        return dX_bags, dR

    # superbag feature -> bag features (and gamma for C2SA)
    db_list = []
    if trace.mode == "C2SA":
        B = np.vstack(trace.bag_features)
        g = trace.gamma_
        dgamma = B @ df
        dscores = softmax_backward(g, dgamma)
        db = g[:, None] * df[None, :]
        S_bag = trace.bag_scores[:, None]
        dB_extra, dr_extra = _similarity_backward(
            B, R[k][None, :], S_bag, dscores[:, None], trace.scoring)
        db += dB_extra
        dR[k] += dr_extra[0]
        db_list = list(db)
    else:  # CRSA: f is the single bag feature
        db_list = [df]

    # bag features -> sentence features through beta, alpha, scoring
    for i, X in enumerate(trace.X):
        db = db_list[i]
        w = trace.beta[i]
        a = trace.alpha[i]
        S = trace.S[i]

        dbeta = X @ db
        dX_bags[i] += np.outer(w, db)

        col_sum = a[:, k].sum()
        dalpha_k = (dbeta - float(dbeta @ w)) / col_sum

        # alpha rows are softmaxes of S rows; upstream enters column k only
        dS = a * dalpha_k[:, None] * (-a[:, k][:, None])
        dS[:, k] += a[:, k] * dalpha_k

        dX_extra, dR_extra = _similarity_backward(X, R, S, dS, trace.scoring)
        dX_bags[i] += dX_extra
        dR += dR_extra

    return dX_bags, dR
