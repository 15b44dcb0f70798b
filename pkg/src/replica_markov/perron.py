"""Perron-Frobenius machinery for the replica-coupling matrix chain.

With nu replicas, the per-symbol coupling matrices Q = s * x x^T (x a
(nu+1)-vector over the signal alphabet, s an SNR value) form a finite-state
Markov chain.  This module enumerates that state space, builds its
transition matrix in the stationary regime, computes Perron-Frobenius
eigen-triples of nonnegative irreducible matrices, evaluates the exact
gradient of log rho with respect to an exponential tilt, and inverts the
scaled-cumulant function into a large-deviation rate
I(Q) = sup_T (tr(T Q) - log rho(P_T)) by gradient ascent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .markov_core import IrreducibilityError, TransitionMatrix, ValidationError, is_irreducible, stationary_distribution

MAX_NU = 3
PF_RESIDUAL_TOL = 1e-10
_DEDUP_DECIMALS = 12


@dataclass(frozen=True, eq=False)
class QStateSpace:
    """Deduplicated coupling matrices s*x*x^T plus a membership index.

    (s, x) and (s, -x) produce the same matrix and share one state id.
    """

    nu: int
    s_alphabet: tuple[float, ...]
    x_alphabet: tuple[float, ...]
    states: tuple[np.ndarray, ...]
    _index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def state_of(self, s: float, x) -> int:
        key = _matrix_key(float(s) * np.outer(x, x))
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"(s={s}, x={tuple(x)}) is not in the enumerated state space") from None

    def tuples(self):
        """Every (s, x) tuple with its state id."""
        grids = np.meshgrid(*([self.x_alphabet] * (self.nu + 1)), indexing="ij")
        xs = np.stack([g.ravel() for g in grids], axis=-1)
        for s in self.s_alphabet:
            for x in xs:
                yield s, tuple(float(v) for v in x), self.state_of(s, x)


def _matrix_key(q: np.ndarray) -> bytes:
    rounded = np.round(q, _DEDUP_DECIMALS) + 0.0  # normalize -0.0
    return rounded.tobytes()


def enumerate_q_states(s_alphabet, x_alphabet, nu: int) -> QStateSpace:
    if len(tuple(s_alphabet)) == 0 or len(tuple(x_alphabet)) == 0:
        raise ValidationError("alphabets must be nonempty")
    if not 0 <= nu <= MAX_NU:
        raise ValidationError(f"nu must be in [0, {MAX_NU}] (state count grows exponentially)")
    s_alphabet = tuple(float(s) for s in s_alphabet)
    if any(s <= 0 for s in s_alphabet):
        raise ValidationError("SNR alphabet entries must be positive")
    x_alphabet = tuple(float(x) for x in x_alphabet)
    states: list[np.ndarray] = []
    index: dict[bytes, int] = {}
    grids = np.meshgrid(*([x_alphabet] * (nu + 1)), indexing="ij")
    xs = np.stack([g.ravel() for g in grids], axis=-1)
    for s in s_alphabet:
        for x in xs:
            q = s * np.outer(x, x)
            key = _matrix_key(q)
            if key not in index:
                index[key] = len(states)
                states.append(q)
    return QStateSpace(nu, s_alphabet, x_alphabet, tuple(states), index)


def q_transition_matrix(
    space: QStateSpace,
    true_kernel: TransitionMatrix,
    postulated_kernel: TransitionMatrix | None = None,
    s_dist=None,
    p_marginal=None,
    q_marginal=None,
) -> np.ndarray:
    """Transition matrix of the coupling-matrix chain in the stationary regime.

    Entry (i, j) aggregates, over the preimage tuples of states i and j, the
    joint weight P_S(s') P_S(s) p(x0') pi(x0', x0) prod_k q(xk') pitilde(xk', xk)
    normalized by the state-i marginal.  The time-(n-1) marginals p and q
    default to the stationary distributions of the true and postulated
    kernels (the stationary-start convention).
    """
    if postulated_kernel is None:
        postulated_kernel = true_kernel
    values = true_kernel.state_values()
    if tuple(postulated_kernel.state_values()) != tuple(values):
        raise ValidationError("true and postulated kernels must share the signal alphabet")
    if set(space.x_alphabet) != set(float(v) for v in values):
        raise ValidationError("state space alphabet does not match the kernel alphabet")
    if s_dist is None:
        if len(space.s_alphabet) != 1:
            raise ValidationError("s_dist required when the SNR alphabet is not a singleton")
        s_dist = ((space.s_alphabet[0], 1.0),)
    s_prob = {float(v): float(p) for v, p in s_dist}
    if set(s_prob) != set(space.s_alphabet):
        raise ValidationError("s_dist support must equal the SNR alphabet")
    val_to_row = {float(v): i for i, v in enumerate(values)}
    p_marg = stationary_distribution(true_kernel).weights if p_marginal is None else np.asarray(p_marginal, float)
    q_marg = (
        stationary_distribution(postulated_kernel).weights if q_marginal is None else np.asarray(q_marginal, float)
    )

    tuples = list(space.tuples())
    k = space.size
    joint = np.zeros((k, k))
    marginal = np.zeros(k)
    for s_old, x_old, i in tuples:
        rows_old = [val_to_row[v] for v in x_old]
        w_old = s_prob[s_old] * p_marg[rows_old[0]] * math.prod(q_marg[r] for r in rows_old[1:])
        marginal[i] += w_old
        for s_new, x_new, j in tuples:
            rows_new = [val_to_row[v] for v in x_new]
            w_step = s_prob[s_new] * true_kernel.P[rows_old[0], rows_new[0]]
            for ro, rn in zip(rows_old[1:], rows_new[1:]):
                w_step *= postulated_kernel.P[ro, rn]
            joint[i, j] += w_old * w_step
    if np.any(marginal <= 0.0):
        bad = int(np.argmin(marginal))
        raise ValidationError(f"state {bad} has zero marginal weight; transition rows undefined")
    P = joint / marginal[:, None]
    row_err = np.max(np.abs(P.sum(axis=1) - 1.0))
    if row_err > 1e-10:
        raise ValidationError(f"transition rows off stochastic by {row_err:.3e}")
    return P


@dataclass(frozen=True, eq=False)
class TiltedMatrix:
    base: np.ndarray
    tilt: np.ndarray
    tilted: np.ndarray


def _trace_terms(tilt: np.ndarray, space: QStateSpace) -> np.ndarray:
    return np.array([float(np.sum(tilt * q)) for q in space.states])


def tilted_matrix(base: np.ndarray, tilt: np.ndarray, space: QStateSpace) -> TiltedMatrix:
    base = np.asarray(base, float)
    tilt = np.asarray(tilt, float)
    return TiltedMatrix(base, tilt, base * np.exp(_trace_terms(tilt, space))[None, :])


@dataclass(frozen=True, eq=False)
class PfTriple:
    rho: float
    lam: np.ndarray  # left eigenvector, positive
    psi: np.ndarray  # right eigenvector, positive, lam @ psi = 1


def _pf_2x2(M: np.ndarray) -> PfTriple:
    a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    rho = 0.5 * (a + d + math.sqrt((a - d) ** 2 + 4.0 * b * c))
    psi = np.array([b, rho - a]) if b > 0 else np.array([rho - d, c])
    lam = np.array([c, rho - a]) if c > 0 else np.array([rho - d, b])
    lam = lam / (lam @ psi)
    return PfTriple(rho, lam, psi)


def pf_decomposition(M: np.ndarray, tol: float = 1e-13, max_iter: int = 1_000_000) -> PfTriple:
    """Perron eigen-triple by power iteration on the shifted matrix M + cI.

    The shift makes every irreducible nonnegative matrix aperiodic without
    changing eigenvectors; rho is recovered as the Rayleigh quotient
    lam M psi / (lam psi) at convergence.
    """
    M = np.asarray(M, dtype=float)
    if np.any(M < 0):
        raise ValidationError("matrix must be nonnegative")
    if not is_irreducible(M):
        raise IrreducibilityError("matrix must be irreducible")
    n = M.shape[0]
    if n == 1:
        return PfTriple(float(M[0, 0]), np.array([1.0]), np.array([1.0]))
    if n == 2:
        return _pf_2x2(M)
    shift = 0.5 * float(M.sum(axis=1).max())
    Ms = M + shift * np.eye(n)
    psi = np.full(n, 1.0 / n)
    lam = np.full(n, 1.0 / n)
    rho = 0.0
    for _ in range(max_iter):
        psi_n = Ms @ psi
        psi_n /= psi_n.sum()
        lam_n = lam @ Ms
        lam_n /= lam_n.sum()
        rho_n = float(lam_n @ M @ psi_n) / float(lam_n @ psi_n)
        done = (
            abs(rho_n - rho) < tol * max(1.0, abs(rho_n))
            and np.max(np.abs(M @ psi_n - rho_n * psi_n)) < 0.5 * PF_RESIDUAL_TOL * rho_n
            and np.max(np.abs(lam_n @ M - rho_n * lam_n)) < 0.5 * PF_RESIDUAL_TOL * rho_n
        )
        psi, lam, rho = psi_n, lam_n, rho_n
        if done:
            break
    else:
        raise ValidationError("power iteration did not converge")
    lam = lam / (lam @ psi)
    return PfTriple(rho, lam, psi)


def log_pf_eigenvalue(base: np.ndarray, tilt: np.ndarray, space: QStateSpace) -> float:
    """log rho of the tilted matrix, overflow-safe via a uniform exponent shift."""
    terms = _trace_terms(tilt, space)
    t_max = float(terms.max())
    scaled = np.asarray(base, float) * np.exp(terms - t_max)[None, :]
    return t_max + math.log(pf_decomposition(scaled).rho)


def pf_log_derivative(base: np.ndarray, tilt: np.ndarray, space: QStateSpace) -> np.ndarray:
    """d log rho / d tilt: (1/rho) sum_i lam_i sum_j psi_j Q_j P_ij e^{tr(T Q_j)}."""
    terms = _trace_terms(tilt, space)
    t_max = float(terms.max())
    scaled = np.asarray(base, float) * np.exp(terms - t_max)[None, :]
    triple = pf_decomposition(scaled)
    d = space.nu + 1
    out = np.zeros((d, d))
    for i in range(space.size):
        for j in range(space.size):
            out += triple.lam[i] * triple.psi[j] * space.states[j] * scaled[i, j]
    return out / triple.rho


def growth_rate(M: np.ndarray, h: np.ndarray, n_max: int = 200, row: int = 0):
    """[(n, (1/n) log (M^n h)_row)] for n = 1..n_max, in log domain."""
    M = np.asarray(M, float)
    h = np.asarray(h, float)
    if np.any(h <= 0):
        raise ValidationError("h must be strictly positive")
    if np.any(M < 0) or not is_irreducible(M):
        raise IrreducibilityError("matrix must be nonnegative irreducible")
    v = h.copy()
    log_scale = 0.0
    out = []
    for n in range(1, n_max + 1):
        v = M @ v
        s = float(v.sum())
        log_scale += math.log(s)
        v /= s
        out.append((n, (log_scale + math.log(float(v[row]))) / n))
    return out


@dataclass(frozen=True, eq=False)
class RateResult:
    value: float
    tilt: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    feasible: bool


def rate_function(
    space: QStateSpace,
    base: np.ndarray,
    q_target: np.ndarray,
    *,
    grad_tol: float = 1e-8,
    max_iter: int = 20_000,
    value_cap: float = 1e3,
) -> RateResult:
    """I(Q) = sup_T (tr(T Q) - log rho(P_T)) by gradient ascent from T = 0.

    pf_log_derivative supplies the exact gradient of log rho; steps use
    Armijo backtracking.  Targets outside the convex hull of the states make
    the objective unbounded: detected when the value exceeds value_cap and
    reported as infeasible (value = inf).
    """
    q_target = np.asarray(q_target, float)
    tilt = np.zeros_like(q_target)

    def objective(t):
        return float(np.sum(t * q_target)) - log_pf_eigenvalue(base, t, space)

    val = objective(tilt)
    grad = q_target - pf_log_derivative(base, tilt, space)
    it = 0
    step = 1.0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < grad_tol:
            return RateResult(val, tilt, gnorm, it, True, True)
        if val > value_cap:
            return RateResult(math.inf, tilt, gnorm, it, False, False)
        accepted = False
        while step > 1e-16:
            cand = tilt + step * grad
            cand_val = objective(cand)
            if cand_val >= val + 0.25 * step * float(np.sum(grad * grad)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no ascent direction at machine precision
        tilt, val = cand, cand_val
        step = min(step * 2.0, 1e6)  # warm start; supremum may sit at infinity
        grad = q_target - pf_log_derivative(base, tilt, space)
    gnorm = float(np.max(np.abs(grad)))
    return RateResult(val, tilt, gnorm, it, gnorm < grad_tol, val <= value_cap)
