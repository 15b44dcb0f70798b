"""Experiment orchestration and the command-line interface.

Subcommands: ``replica sweep``, ``simulate exact``, ``simulate mh``,
``simulate amp``, ``pf deriv-check``, ``pf rate``.  Every subcommand takes
``--seed``, ``--threads`` (falling back to the REPLICA_THREADS environment
variable) and ``--out``.  Results are CSV (RFC 4180); reruns with the same
config and seed are byte-identical, and the worker count never changes the
output.  Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .amp import AmpConfig, amp_experiment, replica_mmse_reference
from .config import ConfigError, ExperimentConfig, validate_config
from .markov_core import TransitionMatrix, binary_markov_kernel
from .perron import enumerate_q_states, log_pf_eigenvalue, pf_log_derivative, q_transition_matrix, rate_function
from .simulator import empirical_free_energy, measurement_count, mh_mse_experiment, sample_instance
from .solver import RESIDUAL_TOL, SolverError, fixed_point_residual, free_energy

_LN2 = math.log(2.0)


@dataclass
class ResultRow:
    beta: float
    eta: float | None = None
    xi: float | None = None
    free_energy: float | None = None
    mutual_info: float | None = None
    mmse: float | None = None
    sim_free_energy: float | None = None
    sim_free_energy_stderr: float | None = None
    amp_mse: float | None = None
    amp_mse_stderr: float | None = None
    mh_mse: float | None = None
    mh_mse_stderr: float | None = None
    achieved_beta: float | None = None  # n / m after measurement-count rounding
    errors: str = ""


def _row_seed(seed: int, beta_index: int) -> int:
    return int(np.random.SeedSequence([seed, beta_index]).generate_state(1)[0])


def _units_factor(units: str) -> float:
    return 1.0 / _LN2 if units == "bits" else 1.0


def compute_row(config: ExperimentConfig, beta_index: int, verify: bool = False) -> ResultRow:
    """All requested tasks for one sweep point; task failures land in .errors.

    When finite-n tasks run, the measurement count m = round(n/beta) makes the
    achieved load n/m differ from the requested beta; the replica prediction
    is evaluated at the achieved load so the row compares like with like, and
    the achieved value is emitted alongside.
    """
    beta = config.betas[beta_index]
    row = ResultRow(beta=beta)
    factor = _units_factor(config.units)
    seed = _row_seed(config.seed, beta_index)
    failures = []
    replica_beta = beta
    if any(t in config.tasks for t in ("exact_sim", "mh", "amp")):
        row.achieved_beta = replica_beta = config.n / measurement_count(config.n, beta)
    if "replica" in config.tasks:
        try:
            sol = free_energy(config.model, replica_beta)
            if verify and fixed_point_residual(config.model, replica_beta, sol.eta, sol.xi) >= RESIDUAL_TOL:
                raise SolverError(f"re-verification failed at beta={beta}")
            row.eta, row.xi = sol.eta, sol.xi
            row.free_energy = sol.free_energy * factor
            if sol.mutual_info is not None:
                row.mutual_info = sol.mutual_info * factor
            if sol.mmse is not None:
                row.mmse = sol.mmse
        except Exception as exc:  # recorded per row, sweep continues
            failures.append(f"replica: {exc}")
    if "exact_sim" in config.tasks:
        try:
            mean, se = empirical_free_energy(config.model, config.n, beta, config.trials, seed)
            row.sim_free_energy = mean * factor
            row.sim_free_energy_stderr = se * factor
        except Exception as exc:
            failures.append(f"exact_sim: {exc}")
    if "mh" in config.tasks:
        try:
            mse, se, _rate = mh_mse_experiment(
                config.model, config.n, beta, config.trials, config.mh_steps, config.mh_burn_in, seed
            )
            row.mh_mse, row.mh_mse_stderr = mse, se
        except Exception as exc:
            failures.append(f"mh: {exc}")
    if "amp" in config.tasks:
        try:
            kappa, gamma = config.sparse_hmm_params
            cfg = AmpConfig(
                kappa=kappa,
                gamma=gamma,
                n=config.n,
                beta=beta,
                trials=config.trials,
                iterations=config.amp_iterations,
                seed=seed,
                scaling=config.amp_scaling,
            )
            ref = row.mmse if row.mmse is not None else replica_mmse_reference(kappa, gamma, replica_beta)
            res = amp_experiment(cfg, replica_reference=ref)
            row.amp_mse, row.amp_mse_stderr = res.mean_mse, res.std_err
        except Exception as exc:
            failures.append(f"amp: {exc}")
    row.errors = "; ".join(failures)
    return row


def run_sweep(config: ExperimentConfig, threads: int = 1, verify: bool = False) -> list[ResultRow]:
    """One ResultRow per beta, ascending; deterministic for a given seed."""
    indices = range(len(config.betas))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda i: compute_row(config, i, verify), indices))
    else:
        rows = [compute_row(config, i, verify) for i in indices]
    return rows


def rows_to_csv(rows: list[ResultRow]) -> str:
    names = [f.name for f in fields(ResultRow)]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(names)
    for row in rows:
        rec = []
        for name in names:
            val = getattr(row, name)
            if val is None:
                rec.append("")
            elif isinstance(val, float):
                rec.append(repr(float(val)))
            else:
                rec.append(val)
        writer.writerow(rec)
    return buf.getvalue()


def _write_out(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _load_config(path: str, seed_override: int | None, task_override=None) -> ExperimentConfig:
    with open(path) as fh:
        doc = json.load(fh)
    if seed_override is not None:
        doc["seed"] = seed_override
    if task_override is not None:
        doc["tasks"] = list(task_override)
    return validate_config(doc)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("REPLICA_THREADS")
    return int(env) if env else 1


def _cmd_sweep(args) -> int:
    config = _load_config(args.config, args.seed)
    if args.units:
        config = replace(config, units=args.units)
    rows = run_sweep(config, threads=_threads(args), verify=args.verify)
    _write_out(rows_to_csv(rows), args.out)
    if any(row.errors for row in rows):
        sys.stderr.write("numeric failures: " + "; ".join(r.errors for r in rows if r.errors) + "\n")
        return 3
    return 0


def _cmd_simulate(args, task: str) -> int:
    config = _load_config(args.config, args.seed, task_override=[task])
    rows = run_sweep(config, threads=_threads(args))
    _write_out(rows_to_csv(rows), args.out)
    if getattr(args, "dump_instances", None):
        os.makedirs(args.dump_instances, exist_ok=True)
        for bi, beta in enumerate(config.betas):
            seed = _row_seed(config.seed, bi)
            for i in range(config.trials):
                inst = sample_instance(config.model, config.n, beta, seed, index=i)
                path = os.path.join(args.dump_instances, f"beta{bi}_inst{i}.json")
                with open(path, "w") as fh:
                    fh.write(inst.to_json())
    return 3 if any(row.errors for row in rows) else 0


def _cmd_simulate_amp(args) -> int:
    config = _load_config(args.config, args.seed, task_override=["amp"])
    kappa, gamma = config.sparse_hmm_params
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["beta", "trial", "iteration", "mse"])
    for bi, beta in enumerate(config.betas):
        cfg = AmpConfig(
            kappa=kappa,
            gamma=gamma,
            n=config.n,
            beta=beta,
            trials=config.trials,
            iterations=config.amp_iterations,
            seed=_row_seed(config.seed, bi),
            scaling=config.amp_scaling,
        )
        res = amp_experiment(cfg)
        for t in range(cfg.trials):
            for it in range(cfg.iterations):
                writer.writerow([repr(beta), t, it + 1, repr(float(res.traces[t, it]))])
        sys.stderr.write(
            f"beta={beta}: mean final mse={res.mean_mse:.6g} (+-{res.std_err:.2g}), replica mmse={res.replica_mmse:.6g}\n"
        )
    _write_out(buf.getvalue(), args.out)
    return 0


def _random_q_setup(rng: np.random.Generator):
    """Random irreducible binary chain, its coupling chain at nu<=1, and a tilt."""
    nu = int(rng.integers(0, 2))
    alpha = float(rng.uniform(0.05, 0.95))
    delta = float(rng.uniform(0.05, 0.95))
    kern = binary_markov_kernel(alpha, delta)
    space = enumerate_q_states([1.0], [-1.0, 1.0], nu)
    base = q_transition_matrix(space, kern)
    t = 0.3 * rng.standard_normal((nu + 1, nu + 1))
    return space, base, 0.5 * (t + t.T)


def _cmd_pf_deriv_check(args) -> int:
    rng = np.random.Generator(np.random.Philox(args.seed if args.seed is not None else 0))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["case", "nu", "rel_err", "pass"])
    worst = 0.0
    h = 1e-5
    for case in range(args.cases):
        space, base, tilt = _random_q_setup(rng)
        d = space.nu + 1
        formula = pf_log_derivative(base, tilt, space)
        fd = np.zeros((d, d))
        for a in range(d):
            for b in range(d):
                e = np.zeros((d, d))
                e[a, b] = h
                fd[a, b] = (
                    log_pf_eigenvalue(base, tilt + e, space) - log_pf_eigenvalue(base, tilt - e, space)
                ) / (2 * h)
        rel = float(np.max(np.abs(formula - fd)) / max(np.max(np.abs(fd)), 1e-300))
        worst = max(worst, rel)
        writer.writerow([case, space.nu, repr(rel), rel < args.tol])
    _write_out(buf.getvalue(), args.out)
    sys.stderr.write(f"worst relative error: {worst:.3e} (tolerance {args.tol})\n")
    return 0 if worst < args.tol else 3


def _cmd_pf_rate(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    errors = []
    chain = doc.get("chain")
    if not isinstance(chain, dict):
        errors.append("chain: missing object")
    q_target = doc.get("q_target")
    if not isinstance(q_target, list):
        errors.append("q_target: missing matrix")
    if errors:
        raise ConfigError(errors)
    try:
        if chain.get("type") == "binary_markov":
            kern = binary_markov_kernel(chain["alpha"], chain["delta"])
        else:
            kern = TransitionMatrix(tuple(chain["states"]), np.array(chain["transition"], dtype=float))
    except (KeyError, ValueError) as exc:
        raise ConfigError([f"chain: {exc!r}"]) from exc
    nu = int(doc.get("nu", 0))
    snr = doc.get("snr", 1.0)
    s_pairs = ((float(snr), 1.0),) if isinstance(snr, (int, float)) else tuple((float(v), float(p)) for v, p in snr)
    space = enumerate_q_states([v for v, _ in s_pairs], [float(v) for v in kern.states], nu)
    base = q_transition_matrix(space, kern, s_dist=s_pairs)
    res = rate_function(space, base, np.array(q_target, dtype=float))
    buf = io.StringIO()
    writer = csv.writer(buf)
    d = nu + 1
    header = ["value", "feasible", "converged", "gradient_norm", "iterations"]
    header += [f"tilt_{a}{b}" for a in range(d) for b in range(d)]
    writer.writerow(header)
    rec = [repr(res.value), res.feasible, res.converged, repr(res.gradient_norm), res.iterations]
    rec += [repr(float(v)) for v in res.tilt.ravel()]
    writer.writerow(rec)
    _write_out(buf.getvalue(), args.out)
    return 0


def _common_flags(p):
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker threads (env REPLICA_THREADS)")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replica-markov")
    sub = parser.add_subparsers(dest="group", required=True)

    replica = sub.add_parser("replica", help="replica predictions")
    rsub = replica.add_subparsers(dest="cmd", required=True)
    sweep = rsub.add_parser("sweep", help="sweep beta and run the configured tasks")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--verify", action="store_true", help="re-check fixed-point residuals")
    sweep.add_argument("--units", choices=["nats", "bits"], default=None)
    _common_flags(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    simulate = sub.add_parser("simulate", help="simulation oracles")
    ssub = simulate.add_subparsers(dest="cmd", required=True)
    for task, name in (("exact_sim", "exact"), ("mh", "mh")):
        p = ssub.add_parser(name)
        p.add_argument("--config", required=True)
        if name == "exact":
            p.add_argument("--dump-instances", default=None, help="directory for instance JSON dumps")
        _common_flags(p)
        p.set_defaults(func=lambda a, t=task: _cmd_simulate(a, t))
    amp_p = ssub.add_parser("amp")
    amp_p.add_argument("--config", required=True)
    _common_flags(amp_p)
    amp_p.set_defaults(func=_cmd_simulate_amp)

    pf = sub.add_parser("pf", help="Perron-Frobenius checks")
    psub = pf.add_subparsers(dest="cmd", required=True)
    deriv = psub.add_parser("deriv-check")
    deriv.add_argument("--cases", type=int, default=20)
    deriv.add_argument("--tol", type=float, default=1e-6)
    _common_flags(deriv)
    deriv.set_defaults(func=_cmd_pf_deriv_check)
    rate = psub.add_parser("rate")
    rate.add_argument("--config", required=True)
    _common_flags(rate)
    rate.set_defaults(func=_cmd_pf_rate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            sys.stderr.write(f"config error: {err}\n")
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except Exception as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
