"""Dense numeric primitives: stable softmax, cosine similarity with its
exact Jacobian, a portable seeded RNG, and a finite-difference gradient
checker.

All math is float64. Matrices are plain 2-D ``numpy.ndarray`` in row-major
order and vectors are 1-D arrays; nothing here depends on GPU, autodiff, or
platform RNG defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

# Norms below this are treated as zero vectors (no direction).
ZERO_NORM = 1e-12

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class SeededRng:
    """Deterministic xoshiro256** generator, written out in full so the
    draw sequence is identical on every platform and interpreter.

    State: four 64-bit words ``s0..s3`` seeded by the splitmix64 recurrence
    ``state += 0x9E3779B97F4A7C15; z = state; z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB;
    z ^= z >> 31`` applied four times to the user seed.

    Step (xoshiro256**):
        out = rotl(s1 * 5, 7) * 9
        t = s1 << 17
        s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)

    Doubles use the top 53 bits: ``(out >> 11) * 2**-53``. Normals come from
    the Box-Muller transform (the second draw of each pair is cached).
    Bounded integers use ``out % n``; the modulo bias is below 2**-40 for
    every ``n`` in this package and irrelevant next to determinism.
    """

    def __init__(self, seed: int):
        self.seed = seed
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, word = _splitmix64(state)
            s.append(word)
        if not any(s):  # all-zero state would be absorbing
            s[0] = 1
        self._s = s
        self._spare_normal = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        out = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return self.next_u64() % n

    def normal(self) -> float:
        """Standard normal via Box-Muller."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = 1.0 - self.random()  # (0, 1]: keeps log finite
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normal_array(self, shape, std=1.0) -> np.ndarray:
        size = int(np.prod(shape))
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = self.normal() * std
        return out.reshape(shape)

    def uniform_array(self, shape, low=0.0, high=1.0) -> np.ndarray:
        size = int(np.prod(shape))
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = low + (high - low) * self.random()
        return out.reshape(shape)

    def bernoulli_mask(self, size: int, p_keep: float) -> np.ndarray:
        """0/1 float64 vector; entry is 1 with probability ``p_keep``."""
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = 1.0 if self.random() < p_keep else 0.0
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in ascending order."""
        if k >= n:
            return list(range(n))
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return sorted(pool[:k])


def softmax(v: np.ndarray) -> np.ndarray:
    """Stable softmax: exponentials are taken after subtracting the max."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax of a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise ValueError("softmax of an empty matrix")
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through ``y = softmax(s)``: ds = y * (dy - <dy, y>)."""
    return y * (dy - float(np.dot(dy, y)))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero vectors get 0 by convention
    (a direction-free vector carries no similarity evidence)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM or nb < ZERO_NORM:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_backward(a: np.ndarray, b: np.ndarray, ds: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``s = cosine(a, b)`` scaled by upstream ``ds``.

    ds/da = b/(|a||b|) - s*a/|a|^2 and symmetrically for b; the zero-vector
    convention returns zero gradients (the 0 output is locally constant).
    """
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM or nb < ZERO_NORM:
        return np.zeros_like(a), np.zeros_like(b)
    s = float(np.dot(a, b) / (na * nb))
    da = ds * (b / (na * nb) - s * a / (na * na))
    db = ds * (a / (na * nb) - s * b / (nb * nb))
    return da, db


@dataclass
class GroupReport:
    name: str
    checked: int
    max_rel_err: float
    worst_index: int
    analytic_at_worst: float
    numeric_at_worst: float


@dataclass
class GradCheckReport:
    tol: float
    eps: float
    groups: list[GroupReport] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((g.max_rel_err for g in self.groups), default=0.0)

    @property
    def passed(self) -> bool:
        return all(g.max_rel_err <= self.tol for g in self.groups)

    def __str__(self) -> str:
        lines = []
        for g in self.groups:
            status = "ok" if g.max_rel_err <= self.tol else "FAIL"
            lines.append(
                f"  {g.name}: checked {g.checked} coords, max rel err "
                f"{g.max_rel_err:.3e} at flat index {g.worst_index} "
                f"(analytic {g.analytic_at_worst:.6e}, numeric "
                f"{g.numeric_at_worst:.6e}) [{status}]"
            )
        verdict = "PASS" if self.passed else "FAIL"
        return f"gradient check {verdict} tol={self.tol:g} eps={self.eps:g}\n" + "\n".join(lines)


def grad_check(loss_fn, params: dict, analytic: dict, eps: float = 1e-5,
               tol: float = 1e-4, min_coords: int = 200,
               rng: SeededRng | None = None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params) -> float`` must be deterministic (dropout masks and
    data order frozen); this is verified by evaluating it twice. For each
    parameter group up to ``min_coords`` coordinates are sampled (all of
    them for small groups) and the relative error
    ``|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`` is recorded.

    The noise of a central difference depends on the step: O(eps^2)
    truncation fights O(1/eps) roundoff, and no single eps serves every
    coordinate when gradient magnitudes span many decades. A coordinate
    over ``tol`` at the primary eps is therefore re-measured at one
    fallback step (3x larger, or 3x smaller when that would leave the
    valid band) and scored on the better of the two; a genuinely wrong
    derivative fails at every step. Parameters are perturbed in place and
    restored, so ``params`` is unchanged on return.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError(f"eps must lie in [1e-6, 1e-4], got {eps}")
    if set(params) != set(analytic):
        raise ValueError("analytic gradient groups do not match parameter groups")
    if rng is None:
        rng = SeededRng(0)
    retry_eps = eps * 3.0 if eps * 3.0 <= 1e-4 else eps / 3.0

    l0 = float(loss_fn(params))
    l1 = float(loss_fn(params))
    if l0 != l1:
        raise ContractViolation(
            f"loss_fn is not deterministic: {l0!r} != {l1!r}")

    def central_diff(flat_p, i, step):
        orig = flat_p[i]
        flat_p[i] = orig + step
        lp = float(loss_fn(params))
        flat_p[i] = orig - step
        lm = float(loss_fn(params))
        flat_p[i] = orig
        return (lp - lm) / (2.0 * step)

    def rel_err(g_ana, g_num):
        return abs(g_ana - g_num) / max(abs(g_ana), abs(g_num), 1e-8)

    report = GradCheckReport(tol=tol, eps=eps)
    for name in sorted(params):
        p = params[name]
        g = analytic[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {p.shape} vs {g.shape}")
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        idx = rng.sample_indices(flat_p.size, min_coords)
        worst = GroupReport(name, len(idx), 0.0, -1, 0.0, 0.0)
        for i in idx:
            g_ana = float(flat_g[i])
            g_num = central_diff(flat_p, i, eps)
            rel = rel_err(g_ana, g_num)
            if rel > tol:
                g_retry = central_diff(flat_p, i, retry_eps)
                if rel_err(g_ana, g_retry) < rel:
                    g_num = g_retry
                    rel = rel_err(g_ana, g_retry)
            if rel > worst.max_rel_err:
                worst.max_rel_err = rel
                worst.worst_index = i
                worst.analytic_at_worst = g_ana
                worst.numeric_at_worst = g_num
        report.groups.append(worst)
    return report
