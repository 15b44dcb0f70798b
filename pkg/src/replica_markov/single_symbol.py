"""Decoupled single-symbol Gaussian channel with state.

The channel is U = sqrt(S) * X1 + W / sqrt(eta) with X1 drawn from a
conditional input law (a point-mass/Gaussian mixture) and W standard
normal.  A postulated channel with inverse noise variance xi and its own
input law induces the posterior mean ("decision function") q1/q0 and the
retrochannel.  Because the laws are finite Gaussian mixtures, the output
density, the posterior mean, and the posterior variance are all closed
forms, and every expectation reduces to 1-D integrals against Gaussian
mixture components, evaluated by per-component Gauss-Hermite quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from .laws import ConditionalInputLaw, PointMass

_LOG_2PI = float(np.log(2.0 * np.pi))

QUAD_TOL = 1e-9
QUAD_START_NODES = 64
QUAD_MAX_NODES = 8192


class QuadratureError(RuntimeError):
    """Adaptive Gauss-Hermite refinement failed to converge."""


@dataclass(frozen=True)
class ScalarChannel:
    """True/postulated channel pair at a fixed SNR value s."""

    eta: float
    xi: float
    s: float
    true_law: ConditionalInputLaw
    postulated_law: ConditionalInputLaw

    def __post_init__(self):
        for name in ("eta", "xi", "s"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")

    @staticmethod
    def matched(eta: float, s: float, law: ConditionalInputLaw) -> "ScalarChannel":
        return ScalarChannel(eta, eta, s, law, law)


@dataclass(frozen=True)
class _MixtureStats:
    """Per-component output statistics of a law through the channel.

    For component c: the output U is N(out_mean, out_var); given U = u the
    input posterior within the component is N(cond_slope*u + cond_off,
    cond_var) (a point mass has slope 0 and var 0).
    """

    log_w: np.ndarray
    out_mean: np.ndarray
    out_var: np.ndarray
    cond_slope: np.ndarray
    cond_off: np.ndarray
    cond_var: np.ndarray


def _mixture_stats(law: ConditionalInputLaw, s: float, tau: float) -> _MixtureStats:
    sqrt_s = np.sqrt(s)
    log_w, om, ov, sl, off, cv = [], [], [], [], [], []
    for w, atom in law.components:
        if w == 0.0:
            continue
        log_w.append(np.log(w))
        if isinstance(atom, PointMass):
            om.append(sqrt_s * atom.x)
            ov.append(1.0 / tau)
            sl.append(0.0)
            off.append(atom.x)
            cv.append(0.0)
        else:
            om.append(sqrt_s * atom.mean)
            ov.append(1.0 / tau + s * atom.var)
            gain = s * atom.var / (s * atom.var + 1.0 / tau)
            # conditional mean m + gain*(u/sqrt(s) - m) as slope*u + offset
            sl.append(gain / sqrt_s)
            off.append(atom.mean * (1.0 - gain))
            cv.append(atom.var * (1.0 / tau) / (s * atom.var + 1.0 / tau))
    return _MixtureStats(
        np.array(log_w),
        np.array(om),
        np.array(ov),
        np.array(sl),
        np.array(off),
        np.array(cv),
    )


def _log_density(stats: _MixtureStats, u: np.ndarray) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    z = (u[..., None] - stats.out_mean) ** 2 / stats.out_var
    logs = stats.log_w - 0.5 * (_LOG_2PI + np.log(stats.out_var)) - 0.5 * z
    m = logs.max(axis=-1, keepdims=True)
    return (m[..., 0] + np.log(np.exp(logs - m).sum(axis=-1))).reshape(np.shape(u))


def _posterior_weights(stats: _MixtureStats, u: np.ndarray) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    z = (u[..., None] - stats.out_mean) ** 2 / stats.out_var
    logs = stats.log_w - 0.5 * np.log(stats.out_var) - 0.5 * z
    logs -= logs.max(axis=-1, keepdims=True)
    p = np.exp(logs)
    return p / p.sum(axis=-1, keepdims=True)


def output_density(ch: ScalarChannel, u, which: str = "true") -> np.ndarray | float:
    """Marginal channel-output density q0 (postulated) or p0 (true) at u."""
    if which == "true":
        stats = _mixture_stats(ch.true_law, ch.s, ch.eta)
    elif which == "postulated":
        stats = _mixture_stats(ch.postulated_law, ch.s, ch.xi)
    else:
        raise ValueError("which must be 'true' or 'postulated'")
    out = np.exp(_log_density(stats, u))
    return float(out) if np.isscalar(u) else out


def posterior_mean(ch: ScalarChannel, u) -> np.ndarray | float:
    """Decision function q1/q0 of the postulated channel at output u."""
    stats = _mixture_stats(ch.postulated_law, ch.s, ch.xi)
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    p = _posterior_weights(stats, uu)
    means = stats.cond_slope * uu[..., None] + stats.cond_off
    out = (p * means).sum(axis=-1)
    return float(out[0]) if np.isscalar(u) else out


def _posterior_mean_var(stats: _MixtureStats, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = _posterior_weights(stats, u)
    means = stats.cond_slope * u[..., None] + stats.cond_off
    m1 = (p * means).sum(axis=-1)
    m2 = (p * (means**2 + stats.cond_var)).sum(axis=-1)
    return m1, m2 - m1**2


@lru_cache(maxsize=32)
def _hermgauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = roots_hermite(n)
    return t, w / np.sqrt(np.pi)


def _component_integral(fn, mean: float, var: float, nodes: int) -> float:
    t, w = _hermgauss(nodes)
    return float(w @ fn(mean + np.sqrt(2.0 * var) * t))


def mixture_expectation(fn, stats: _MixtureStats) -> float:
    """E[fn(U)] for U ~ the mixture, by adaptive per-component Gauss-Hermite.

    Starts at 64 nodes and doubles until two successive estimates agree to
    1e-9 in absolute terms.
    """
    nodes = QUAD_START_NODES

    def total(k: int) -> float:
        acc = 0.0
        for lw, m, v in zip(stats.log_w, stats.out_mean, stats.out_var):
            acc += np.exp(lw) * _component_integral(fn, m, v, k)
        return acc

    prev = total(nodes)
    while nodes < QUAD_MAX_NODES:
        nodes *= 2
        cur = total(nodes)
        if abs(cur - prev) < QUAD_TOL:
            return cur
        prev = cur
    raise QuadratureError(
        f"Gauss-Hermite did not stabilize below {QUAD_TOL} by {QUAD_MAX_NODES} nodes"
    )


def conditional_mse(ch: ScalarChannel) -> float:
    """E[(X1 - <X>_q(U))^2] over the true channel law.

    Expanded as E[X1^2] - 2 E[X1 <X>_q(U)] + E[<X>_q(U)^2]; the cross term
    integrates the true per-component conditional mean of X1 given U against
    the decision function.
    """
    true_stats = _mixture_stats(ch.true_law, ch.s, ch.eta)
    post_stats = _mixture_stats(ch.postulated_law, ch.s, ch.xi)
    if _degenerate_same_point(ch):
        return 0.0

    def g(u):
        return _posterior_mean_var(post_stats, u)[0]

    m2 = ch.true_law.second_moment()
    e_g2 = mixture_expectation(lambda u: g(u) ** 2, true_stats)
    cross = 0.0
    for lw, m, v, sl, off in zip(
        true_stats.log_w,
        true_stats.out_mean,
        true_stats.out_var,
        true_stats.cond_slope,
        true_stats.cond_off,
    ):
        comp = _MixtureStats(*(np.array([x]) for x in (0.0, m, v, sl, off, 0.0)))
        cross += np.exp(lw) * mixture_expectation(
            lambda u, _c=comp: (_c.cond_slope[0] * u + _c.cond_off[0]) * g(u), comp
        )
    return m2 - 2.0 * cross + e_g2


def conditional_var(ch: ScalarChannel) -> float:
    """Mean retrochannel variance E_U[Var_q(X | U)] over the true output law."""
    true_stats = _mixture_stats(ch.true_law, ch.s, ch.eta)
    post_stats = _mixture_stats(ch.postulated_law, ch.s, ch.xi)
    if _degenerate_same_point(ch):
        return 0.0
    return mixture_expectation(lambda u: _posterior_mean_var(post_stats, u)[1], true_stats)


def mean_square_posterior_mean(ch: ScalarChannel) -> float:
    """E[<X>_q(U)^2] over the true output law (the MMSE second-moment term)."""
    true_stats = _mixture_stats(ch.true_law, ch.s, ch.eta)
    post_stats = _mixture_stats(ch.postulated_law, ch.s, ch.xi)

    def g2(u):
        return _posterior_mean_var(post_stats, u)[0] ** 2

    return mixture_expectation(g2, true_stats)


def cross_entropy(ch: ScalarChannel) -> float:
    """-E[log q0(U)] with U from the true channel, in nats."""
    true_stats = _mixture_stats(ch.true_law, ch.s, ch.eta)
    post_stats = _mixture_stats(ch.postulated_law, ch.s, ch.xi)
    return -mixture_expectation(lambda u: _log_density(post_stats, u), true_stats)


def _degenerate_same_point(ch: ScalarChannel) -> bool:
    # Weight-1 identical point mass in both laws: the PME returns the atom
    # exactly, so the error is identically zero (skip the quadrature).
    t, p = ch.true_law.components, ch.postulated_law.components
    return (
        len(t) == 1
        and len(p) == 1
        and isinstance(t[0][1], PointMass)
        and isinstance(p[0][1], PointMass)
        and t[0][1].x == p[0][1].x
    )
