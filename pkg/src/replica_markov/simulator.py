"""Ground-truth oracles: sampled instances, exact evidence, and MCMC posteriors.

The empirical free energy is the Monte-Carlo average of -(1/n) log Z over
independently sampled instances, where log Z = log q(y | Phi) is computed
exactly: by full path enumeration for discrete priors and by the closed-form
multivariate-normal marginal for the Gauss-Markov prior (y ~ N(0,
Phi Sigma_X Phi^T + I) with Sigma_X[i,j] = sigma0^2 nu^|i-j| / (1 - nu^2)).
Posterior-mean estimation uses single-site Metropolis flips for discrete
priors and a tuned random-walk proposal for the Gauss-Markov prior.

All randomness flows through counter-based Philox streams keyed by
(seed, instance index), so results are bit-identical for a given seed
regardless of how work is scheduled.
"""

from __future__ import annotations

import base64
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .markov_core import HiddenMarkovPrior, MarkovPrior, ValidationError, stationary_distribution
from .solver import ModelSpec

ENUMERATION_BUDGET = 1 << 20
_LOG_2PI = float(np.log(2.0 * np.pi))


class EvidenceBudgetError(RuntimeError):
    """Enumeration would exceed the budget; use sampled_log_evidence instead."""


def _rng(seed: int, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence([seed, *stream]).generate_state(2, np.uint64)))


def measurement_count(n: int, beta: float) -> int:
    """m = round(n / beta), ties rounded up."""
    return max(1, int(math.floor(n / beta + 0.5)))


@dataclass(frozen=True, eq=False)
class LinearModelInstance:
    n: int
    m: int
    beta: float  # requested load; n/m is the achieved one
    A: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    seed: int
    index: int = 0

    @property
    def achieved_beta(self) -> float:
        return self.n / self.m

    def design_matrix(self) -> np.ndarray:
        """Phi = A diag(sqrt(S))."""
        return self.A * np.sqrt(self.S)

    def to_json(self) -> str:
        def enc(a: np.ndarray) -> dict:
            return {"shape": list(a.shape), "data": base64.b64encode(np.ascontiguousarray(a, dtype=np.float64).tobytes()).decode()}

        return json.dumps(
            {
                "n": self.n,
                "m": self.m,
                "beta": self.beta,
                "seed": self.seed,
                "index": self.index,
                "A": enc(self.A),
                "S": enc(self.S),
                "x": enc(self.x),
                "y": enc(self.y),
            }
        )

    @staticmethod
    def from_json(text: str) -> "LinearModelInstance":
        doc = json.loads(text)

        def dec(d: dict) -> np.ndarray:
            return np.frombuffer(base64.b64decode(d["data"]), dtype=np.float64).reshape(d["shape"])

        return LinearModelInstance(
            doc["n"], doc["m"], doc["beta"], dec(doc["A"]), dec(doc["S"]), dec(doc["x"]), dec(doc["y"]), doc["seed"], doc["index"]
        )


def _sample_discrete_chain(kern, initial, n: int, rng, count: int = 1) -> np.ndarray:
    """(count, n) state indices of independent chain paths."""
    cum = np.cumsum(kern.P, axis=1)
    idx = np.empty((count, n), dtype=np.int64)
    idx[:, 0] = np.searchsorted(np.cumsum(initial), rng.random(count), side="right")
    for t in range(1, n):
        u = rng.random(count)
        idx[:, t] = (cum[idx[:, t - 1]] < u[:, None]).sum(axis=1)
    return idx


def sample_prior_paths(prior, n: int, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """(count, n) signals from the prior, each started from its stationary law."""
    if isinstance(prior, HiddenMarkovPrior):
        lam = stationary_distribution(prior.hidden).weights
        hidden_idx = _sample_discrete_chain(prior.hidden, lam, n, rng, count)
        x = np.empty((count, n))
        for k, law in enumerate(prior.emissions):
            mask = hidden_idx == k
            cnt = int(mask.sum())
            if cnt:
                x[mask] = law.sample(rng, cnt)
        return x
    if prior.is_gauss_markov:
        x = np.empty((count, n))
        x[:, 0] = rng.normal(0.0, math.sqrt(prior.stationary_variance()), size=count)
        z = rng.normal(0.0, math.sqrt(prior.sigma0_sq), size=(count, n - 1))
        for t in range(1, n):
            x[:, t] = prior.nu * x[:, t - 1] + z[:, t - 1]
        return x
    idx = _sample_discrete_chain(prior.kernel, prior.initial, n, rng, count)
    return prior.kernel.state_values()[idx]


def sample_prior_path(prior, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one length-n signal from the prior, started from its stationary law."""
    return sample_prior_paths(prior, n, rng, count=1)[0]


def sample_instance(model: ModelSpec, n: int, beta: float, seed: int, index: int = 0) -> LinearModelInstance:
    """One seeded instance: A ~ N(0, 1/m) entries, x from the prior, y = Phi x + w."""
    if n < 1 or beta <= 0:
        raise ValidationError("need n >= 1 and beta > 0")
    m = measurement_count(n, beta)
    rng = _rng(seed, index)
    A = rng.standard_normal((m, n)) / math.sqrt(m)
    values = np.array([v for v, _ in model.snr])
    probs = np.array([p for _, p in model.snr])
    S = values[rng.choice(len(values), size=n, p=probs)]
    x = sample_prior_path(model.prior, n, rng)
    w = rng.standard_normal(m)
    y = (A * np.sqrt(S)) @ x + w
    return LinearModelInstance(n, m, beta, A, S, x, y, seed, index)


@dataclass(frozen=True)
class EvidenceEstimate:
    log_z: float
    method: str  # exact_enumeration | gaussian_closed_form | importance_sampled
    std_err: float | None = None
    meta: dict = field(default_factory=dict)


def _discrete_prior_tables(model: ModelSpec):
    prior = model.postulated_prior if model.postulated_prior is not None else model.prior
    if not isinstance(prior, MarkovPrior) or prior.is_gauss_markov:
        raise ValidationError("exact enumeration requires a discrete Markov prior")
    kern = prior.kernel
    with np.errstate(divide="ignore"):
        log_pi = np.log(kern.P)
        log_init = np.log(prior.initial)
    return kern.state_values(), log_init, log_pi


def exact_log_evidence_discrete(inst: LinearModelInstance, model: ModelSpec) -> EvidenceEstimate:
    """log sum_x q(x) N(y; Phi x, sigma^2 I) by full enumeration (log-domain)."""
    values, log_init, log_pi = _discrete_prior_tables(model)
    k, n, m = len(values), inst.n, inst.m
    total = k**n
    if total > ENUMERATION_BUDGET:
        raise EvidenceBudgetError(
            f"{k}^{n} = {total} paths exceeds the {ENUMERATION_BUDGET} budget; "
            "use sampled_log_evidence for an importance-sampled estimate"
        )
    phi = inst.design_matrix()
    sigma_sq = model.sigma**2
    norm = -0.5 * m * (_LOG_2PI + np.log(sigma_sq))
    radix = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    best = -np.inf
    chunks: list[np.ndarray] = []
    chunk = 1 << 14
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        paths = (ids[:, None] // radix) % k
        lp = log_init[paths[:, 0]]
        for t in range(n - 1):
            lp = lp + log_pi[paths[:, t], paths[:, t + 1]]
        resid = inst.y[None, :] - values[paths] @ phi.T
        ll = norm - 0.5 * np.einsum("ij,ij->i", resid, resid) / sigma_sq
        chunks.append(lp + ll)
        best = max(best, float(np.max(lp + ll)))
    acc = sum(float(np.exp(c - best).sum()) for c in chunks)
    return EvidenceEstimate(best + math.log(acc), "exact_enumeration", None, {"paths": total})


def gaussian_log_evidence(inst: LinearModelInstance, nu: float, sigma0_sq: float) -> EvidenceEstimate:
    """Exact log N(y; 0, Phi Sigma_X Phi^T + I) for the Gauss-Markov prior."""
    lags = np.abs(np.subtract.outer(np.arange(inst.n), np.arange(inst.n)))
    sigma_x = sigma0_sq * nu**lags / (1.0 - nu**2)
    phi = inst.design_matrix()
    K = phi @ sigma_x @ phi.T + np.eye(inst.m)
    c, low = cho_factor(K, lower=True)
    quad = float(inst.y @ cho_solve((c, low), inst.y))
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    log_z = -0.5 * (inst.m * _LOG_2PI + logdet + quad)
    return EvidenceEstimate(log_z, "gaussian_closed_form")


def sampled_log_evidence(inst: LinearModelInstance, model: ModelSpec, draws: int, seed: int) -> EvidenceEstimate:
    """Prior-sampling estimate of the evidence with a delta-method standard error."""
    rng = _rng(seed, inst.index, 0xE5)
    prior = model.postulated_prior if model.postulated_prior is not None else model.prior
    phi = inst.design_matrix()
    sigma_sq = model.sigma**2
    norm = -0.5 * inst.m * (_LOG_2PI + np.log(sigma_sq))
    lls = np.empty(draws)
    block = 16_384
    for start in range(0, draws, block):
        cnt = min(block, draws - start)
        xs = sample_prior_paths(prior, inst.n, rng, count=cnt)
        resid = inst.y[None, :] - xs @ phi.T
        lls[start : start + cnt] = norm - 0.5 * np.einsum("ij,ij->i", resid, resid) / sigma_sq
    best = float(lls.max())
    weights = np.exp(lls - best)
    mean = float(weights.mean())
    se_z = float(weights.std(ddof=1)) / math.sqrt(draws)
    return EvidenceEstimate(best + math.log(mean), "importance_sampled", se_z / mean, {"draws": draws})


def log_evidence(inst: LinearModelInstance, model: ModelSpec) -> EvidenceEstimate:
    """Dispatch to the exact method available for the model's prior family."""
    prior = model.postulated_prior if model.postulated_prior is not None else model.prior
    if isinstance(prior, MarkovPrior) and prior.is_gauss_markov:
        if model.sigma != 1.0:
            raise ValidationError("gaussian closed form assumes matched unit noise")
        return gaussian_log_evidence(inst, prior.nu, prior.sigma0_sq)
    return exact_log_evidence_discrete(inst, model)


def empirical_free_energy(
    model: ModelSpec, n: int, beta: float, trials: int, seed: int, threads: int = 1
) -> tuple[float, float]:
    """Mean and standard error of -(1/n) log Z over seeded instances."""

    def one(i: int) -> float:
        inst = sample_instance(model, n, beta, seed, index=i)
        return -log_evidence(inst, model).log_z / n

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = np.array(list(pool.map(one, range(trials))))
    else:
        vals = np.array([one(i) for i in range(trials)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))


@dataclass(frozen=True)
class MhResult:
    posterior_mean: np.ndarray
    posterior_mean_stderr: np.ndarray
    mse: float
    acceptance_rate: float
    warnings: tuple[str, ...] = ()


def _batch_means_stderr(samples: np.ndarray, n_batches: int = 32) -> np.ndarray:
    """Autocorrelation-aware standard error of the mean along axis 0."""
    t = samples.shape[0]
    size = max(1, t // n_batches)
    usable = size * (t // size)
    batches = samples[:usable].reshape(-1, size, *samples.shape[1:]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / math.sqrt(batches.shape[0])


def _mh_discrete_batch(
    phis: np.ndarray,
    ys: np.ndarray,
    values: np.ndarray,
    log_init: np.ndarray,
    log_pi: np.ndarray,
    sigma_sq: float,
    steps: int,
    burn_in: int,
    rng: np.random.Generator,
    keep_samples: bool = False,
):
    """Single-site Metropolis over C chains run in lockstep.

    phis: (C, m, n); ys: (C, m).  Returns per-chain posterior means, overall
    acceptance rate, and (optionally) thinned post-burn-in samples for
    error estimation.
    """
    C, m, n = phis.shape
    k = len(values)
    idx = rng.integers(0, k, size=(C, n))
    x = values[idx]
    r = ys - np.einsum("cmn,cn->cm", phis, x)
    mean_acc = np.zeros((C, n))
    kept = []
    accepted = 0
    rows = np.arange(C)
    block = 1024
    done = 0
    while done < steps:
        cnt = min(block, steps - done)
        sites = rng.integers(0, n, size=(cnt, C))
        jumps = rng.integers(1, k, size=(cnt, C)) if k > 2 else np.ones((cnt, C), dtype=np.int64)
        logu = np.log(rng.random(size=(cnt, C)))
        for t in range(cnt):
            step = done + t
            l = sites[t]
            old = idx[rows, l]
            new = (old + jumps[t]) % k
            d_prior = np.zeros(C)
            has_left = l > 0
            left = idx[rows, np.maximum(l - 1, 0)]
            d_prior += np.where(
                has_left,
                log_pi[left, new] - log_pi[left, old],
                log_init[new] - log_init[old],
            )
            has_right = l < n - 1
            right = idx[rows, np.minimum(l + 1, n - 1)]
            d_prior += np.where(has_right, log_pi[new, right] - log_pi[old, right], 0.0)
            cols = np.take_along_axis(phis, l[:, None, None], axis=2)[:, :, 0]
            dv = values[new] - values[old]
            r_new = r - cols * dv[:, None]
            d_lik = 0.5 * (np.einsum("cm,cm->c", r, r) - np.einsum("cm,cm->c", r_new, r_new)) / sigma_sq
            acc = logu[t] < d_prior + d_lik
            idx[rows[acc], l[acc]] = new[acc]
            r[acc] = r_new[acc]
            accepted += int(acc.sum())
            if step >= burn_in:
                cur = values[idx]
                mean_acc += cur
                if keep_samples and (step - burn_in) % 10 == 0:
                    kept.append(cur.copy())
        done += cnt
    post = mean_acc / (steps - burn_in)
    samples = np.array(kept) if keep_samples else None
    return post, accepted / (steps * C), samples


def mh_posterior_chain(
    inst: LinearModelInstance, model: ModelSpec, steps: int, burn_in: int, seed: int
) -> MhResult:
    """Metropolis-Hastings posterior-mean estimate for one instance.

    Discrete priors use single-site flips with acceptance
    min(1, exp(d log posterior)); the Gauss-Markov prior uses a random-walk
    proposal x' = x + eps * N(0, I) with eps tuned during burn-in toward
    20-50% acceptance.
    """
    if not steps > burn_in >= 0:
        raise ValidationError("need steps > burn_in >= 0")
    prior = model.prior
    rng = _rng(seed, inst.index, 0x3C)
    phi = inst.design_matrix()
    sigma_sq = model.sigma**2
    if isinstance(prior, MarkovPrior) and not prior.is_gauss_markov:
        values = prior.kernel.state_values()
        with np.errstate(divide="ignore"):
            log_pi = np.log(prior.kernel.P)
            log_init = np.log(prior.initial)
        post, rate, samples = _mh_discrete_batch(
            phi[None], inst.y[None], values, log_init, log_pi, sigma_sq, steps, burn_in, rng, keep_samples=True
        )
        post = post[0]
        stderr = _batch_means_stderr(samples[:, 0, :])
    elif isinstance(prior, MarkovPrior):
        post, rate, stderr = _mh_gauss_markov(inst, prior, phi, sigma_sq, steps, burn_in, rng)
    else:
        raise ValidationError("MH sampling supports discrete and Gauss-Markov priors")
    warnings = ()
    if not 0.01 <= rate <= 0.99:
        warnings = (f"acceptance rate {rate:.4f} outside [0.01, 0.99] after tuning",)
    mse = float(np.sum((inst.x - post) ** 2) / inst.n)
    return MhResult(post, stderr, mse, rate, warnings)


def _mh_gauss_markov(inst, prior, phi, sigma_sq, steps, burn_in, rng):
    n = inst.n
    nu, s0 = prior.nu, prior.sigma0_sq
    var0 = prior.stationary_variance()

    def log_post(x, r):
        lp = -0.5 * x[0] ** 2 / var0 - 0.5 * np.sum((x[1:] - nu * x[:-1]) ** 2) / s0
        return lp - 0.5 * (r @ r) / sigma_sq

    x = np.zeros(n)
    r = inst.y - phi @ x
    lp = log_post(x, r)
    eps = 0.5
    accepted = 0
    window_acc = 0
    mean_acc = np.zeros(n)
    kept = []
    for step in range(steps):
        prop = x + eps * rng.standard_normal(n)
        r_prop = inst.y - phi @ prop
        lp_prop = log_post(prop, r_prop)
        if math.log(rng.random()) < lp_prop - lp:
            x, r, lp = prop, r_prop, lp_prop
            accepted += 1
            window_acc += 1
        if step < burn_in and (step + 1) % 100 == 0:
            rate = window_acc / 100
            if rate < 0.2:
                eps *= 0.8
            elif rate > 0.5:
                eps *= 1.25
            window_acc = 0
        if step >= burn_in:
            mean_acc += x
            if (step - burn_in) % 10 == 0:
                kept.append(x.copy())
    post = mean_acc / (steps - burn_in)
    return post, accepted / steps, _batch_means_stderr(np.array(kept))


def mh_mse_experiment(
    model: ModelSpec, n: int, beta: float, instances: int, steps: int, burn_in: int, seed: int
) -> tuple[float, float, float]:
    """Average MH posterior MSE over instances (discrete priors, lockstep chains).

    Returns (mean MSE, standard error, overall acceptance rate).
    """
    prior = model.prior
    if not (isinstance(prior, MarkovPrior) and not prior.is_gauss_markov):
        raise ValidationError("batched MH experiment supports discrete priors")
    insts = [sample_instance(model, n, beta, seed, index=i) for i in range(instances)]
    phis = np.stack([inst.design_matrix() for inst in insts])
    ys = np.stack([inst.y for inst in insts])
    xs = np.stack([inst.x for inst in insts])
    values = prior.kernel.state_values()
    with np.errstate(divide="ignore"):
        log_pi = np.log(prior.kernel.P)
        log_init = np.log(prior.initial)
    rng = _rng(seed, 0x3C)
    post, rate, _ = _mh_discrete_batch(
        phis, ys, values, log_init, log_pi, model.sigma**2, steps, burn_in, rng
    )
    mses = np.sum((xs - post) ** 2, axis=1) / n
    return float(mses.mean()), float(mses.std(ddof=1) / math.sqrt(instances)), rate
