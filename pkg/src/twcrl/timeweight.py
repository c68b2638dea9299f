"""Time-weighted labels and the absorbing-chain model behind them.

``f(t, T) = (e^{at} - 1) / (e^{aT} - 1)`` is the per-step absorption
probability, ``w(t) = 1 - (1 - f)^t`` is the weight used for labels, and
``exact_conditional`` is the un-approximated ratio
``(1 - (1 - f)^t) / (1 - (1 - f)^T)``. Everything is evaluated in log space;
the textbook form overflows for ``a * T`` above roughly 709.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OutOfRange


@dataclass(frozen=True)
class TimeWeightParams:
    alpha: float = 2.0
    horizon: int = 300

    def __post_init__(self):
        if not self.alpha > 0:
            raise OutOfRange(f"alpha must be > 0, got {self.alpha}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise OutOfRange(f"horizon must be an integer >= 1, got {self.horizon}")


def _check_t(t: int, p: TimeWeightParams) -> int:
    if int(t) != t or not 0 <= t <= p.horizon:
        raise OutOfRange(f"t={t} outside [0, {p.horizon}]")
    return int(t)


def transition_prob_f(t: int, p: TimeWeightParams) -> float:
    t = _check_t(t, p)
    if t == 0:
        return 0.0
    a, T = p.alpha, p.horizon
    # e^{a(t-T)} * (1 - e^{-at}) / (1 - e^{-aT})
    return math.exp(a * (t - T)) * (math.expm1(-a * t) / math.expm1(-a * T))


def _log_survival(f: float) -> float:
    """log(1 - f), with f == 1 mapped to -inf."""
    return -math.inf if f >= 1.0 else math.log1p(-f)


def time_weight_w(t: int, p: TimeWeightParams) -> float:
    t = _check_t(t, p)
    if t == 0:
        return 0.0
    f = transition_prob_f(t, p)
    if f >= 1.0:
        return 1.0
    return -math.expm1(t * math.log1p(-f))


def exact_conditional(t: int, p: TimeWeightParams) -> float:
    t = _check_t(t, p)
    if t == 0:
        return 0.0
    if t == p.horizon:
        return 1.0
    f = transition_prob_f(t, p)
    if f == 0.0:
        # f underflowed; the ratio tends to t / T
        return t / p.horizon
    log_s = _log_survival(f)
    return math.expm1(t * log_s) / math.expm1(p.horizon * log_s)


@lru_cache(maxsize=256)
def _weights_cached(alpha: float, horizon: int) -> np.ndarray:
    p = TimeWeightParams(alpha, horizon)
    w = np.array([time_weight_w(t, p) for t in range(horizon + 1)])
    w.setflags(write=False)
    return w


def time_weights(p: TimeWeightParams) -> np.ndarray:
    """``w(t)`` for ``t = 0 .. T`` as a read-only array."""
    return _weights_cached(float(p.alpha), int(p.horizon))


def closed_form_constant_k(k: float, t: int, T: int) -> float:
    """``(1 - (1 - k)^t) / (1 - (1 - k)^T)`` for a constant absorption rate."""
    log_s = math.log1p(-k)
    return math.expm1(t * log_s) / math.expm1(T * log_s)


def mc_constant_k_conditional(k: float, t: int, T: int, n_samples: int,
                              seed=None) -> tuple[float, float]:
    """Monte-Carlo estimate of P(absorbed by t | absorbed by T).

    Each chain starts transient and is absorbed at every step with
    probability ``k``; the absorption step is drawn directly. Chains not
    absorbed by ``T`` are discarded (they fail the conditioning event).
    Returns the estimate and its binomial standard error.
    """
    if not 0.0 < k < 1.0:
        raise OutOfRange(f"k must lie in (0, 1), got {k}")
    if not 1 <= t <= T:
        raise OutOfRange(f"need 1 <= t <= T, got t={t}, T={T}")
    if n_samples < 1000:
        raise OutOfRange(f"n_samples must be >= 1000, got {n_samples}")
    rng = np.random.default_rng(seed)
    absorbed_at = rng.geometric(k, size=n_samples)
    by_T = absorbed_at <= T
    n_cond = int(by_T.sum())
    if n_cond == 0:
        raise OutOfRange("no chain was absorbed by T; increase n_samples or k")
    est = float(np.count_nonzero(absorbed_at <= t)) / n_cond
    se = math.sqrt(est * (1.0 - est) / n_cond)
    return est, se


def simulate_absorbing_chain(k: float, T: int, n_samples: int, seed=None) -> np.ndarray:
    """Step-by-step simulation; returns the absorption step per chain (T + 1 if never).

    Slower than sampling the geometric law, kept as a cross-check of it.
    """
    rng = np.random.default_rng(seed)
    step = np.full(n_samples, T + 1, dtype=np.int64)
    alive = np.ones(n_samples, dtype=bool)
    for i in range(1, T + 1):
        hit = alive & (rng.random(n_samples) < k)
        step[hit] = i
        alive &= ~hit
    return step


def divergence_table(p: TimeWeightParams) -> list[dict]:
    """Rows of (t, f, w, exact, |delta|, f*T) for ``t = 0 .. T``."""
    rows = []
    for t in range(p.horizon + 1):
        f = transition_prob_f(t, p)
        w = time_weight_w(t, p)
        e = exact_conditional(t, p)
        rows.append({"t": t, "f": f, "w": w, "exact": e,
                     "delta": abs(e - w), "fT": f * p.horizon})
    return rows
