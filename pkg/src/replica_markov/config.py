"""JSON experiment configuration: schema validation and model construction.

Validation is all-or-nothing: every violation is reported with the dotted
path of the offending field (e.g. ``model.prior.transition[1]``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laws import ConditionalInputLaw, GaussianAtom, LawValidationError, PointMass
from .markov_core import (
    HiddenMarkovPrior,
    IrreducibilityError,
    MarkovPrior,
    TransitionMatrix,
    ValidationError,
    binary_markov_kernel,
    is_irreducible,
    sparse_hmm_prior,
)
from .solver import ModelSpec

SCHEMA_VERSION = 1
TASKS = ("replica", "exact_sim", "mh", "amp")


class ConfigError(ValueError):
    """Carries the full list of validation errors."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    betas: tuple[float, ...]
    tasks: tuple[str, ...]
    n: int
    trials: int
    seed: int
    units: str = "nats"
    mh_steps: int = 60_000
    mh_burn_in: int = 10_000
    amp_iterations: int = 10
    amp_scaling: str = "unit_columns"
    sparse_hmm_params: tuple[float, float] | None = None  # (kappa, gamma) when prior is sparse_hmm


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path: str, msg: str):
        self.errors.append(f"{path}: {msg}")

    def expect(self, doc: dict, path: str, key: str, types, default=None, required=False):
        if key not in doc:
            if required:
                self.add(f"{path}.{key}" if path else key, "missing required field")
            return default
        val = doc[key]
        if not isinstance(val, types):
            tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
            self.add(f"{path}.{key}" if path else key, f"expected {tn}, got {type(val).__name__}")
            return default
        return val


def _build_emission(doc, path, errs: _Collector):
    comps = []
    mark = len(errs.errors)
    if not isinstance(doc, list) or not doc:
        errs.add(path, "expected a nonempty list of mixture components")
        return None
    for i, comp in enumerate(doc):
        cpath = f"{path}[{i}]"
        if not isinstance(comp, dict):
            errs.add(cpath, "expected an object")
            continue
        w = errs.expect(comp, cpath, "weight", (int, float), required=True)
        kind = errs.expect(comp, cpath, "type", str, required=True)
        if w is None or kind is None:
            continue
        if kind == "point":
            x = errs.expect(comp, cpath, "x", (int, float), required=True)
            if x is not None:
                comps.append((float(w), PointMass(float(x))))
        elif kind == "gaussian":
            mean = errs.expect(comp, cpath, "mean", (int, float), default=0.0)
            var = errs.expect(comp, cpath, "var", (int, float), required=True)
            if var is not None:
                comps.append((float(w), GaussianAtom(float(mean), float(var))))
        else:
            errs.add(f"{cpath}.type", f"unknown component type {kind!r}")
    if len(errs.errors) > mark:
        return None
    try:
        return ConditionalInputLaw(tuple(comps))
    except LawValidationError as exc:
        errs.add(path, str(exc))
        return None


def _build_transition(doc, path, errs: _Collector) -> TransitionMatrix | None:
    mark = len(errs.errors)
    states = errs.expect(doc, path, "states", list, required=True)
    rows = errs.expect(doc, path, "transition", list, required=True)
    if states is None or rows is None:
        return None
    k = len(states)
    for i in range(k):
        if i >= len(rows):
            errs.add(f"{path}.transition[{i}]", "missing row")
        elif not isinstance(rows[i], list) or len(rows[i]) != k:
            errs.add(f"{path}.transition[{i}]", f"expected a row of {k} probabilities")
    if len(rows) > k:
        errs.add(f"{path}.transition", f"{len(rows)} rows for {k} states")
    if len(errs.errors) > mark:
        return None
    try:
        return TransitionMatrix(tuple(states), np.array(rows, dtype=float))
    except (ValidationError, ValueError) as exc:
        errs.add(f"{path}.transition", str(exc))
        return None


def _build_prior(doc, path, errs: _Collector):
    if not isinstance(doc, dict):
        errs.add(path, "expected an object")
        return None, None
    kind = errs.expect(doc, path, "type", str, required=True)
    if kind is None:
        return None, None
    if kind == "binary_markov":
        alpha = errs.expect(doc, path, "alpha", (int, float), required=True)
        delta = errs.expect(doc, path, "delta", (int, float), required=True)
        if alpha is None or delta is None:
            return None, None
        if not (0 < alpha < 1) or not (0 < delta < 1):
            errs.add(path, "binary chain needs alpha, delta in (0, 1); the boundary is reducible")
            return None, None
        return MarkovPrior.discrete(binary_markov_kernel(float(alpha), float(delta))), None
    if kind == "discrete_markov":
        kern = _build_transition(doc, path, errs)
        if kern is None:
            return None, None
        if not is_irreducible(kern):
            errs.add(f"{path}.transition", "chain is reducible")
            return None, None
        initial = doc.get("initial")
        try:
            return MarkovPrior.discrete(kern, initial), None
        except (ValidationError, IrreducibilityError) as exc:
            errs.add(path, str(exc))
            return None, None
    if kind == "gauss_markov":
        nu = errs.expect(doc, path, "nu", (int, float), required=True)
        s0 = errs.expect(doc, path, "sigma0_sq", (int, float), required=True)
        if nu is None or s0 is None:
            return None, None
        try:
            return MarkovPrior.gauss_markov(float(nu), float(s0)), None
        except ValidationError as exc:
            errs.add(path, str(exc))
            return None, None
    if kind == "sparse_hmm":
        kappa = errs.expect(doc, path, "kappa", (int, float), required=True)
        gamma = errs.expect(doc, path, "gamma", (int, float), required=True)
        if kappa is None or gamma is None:
            return None, None
        try:
            return sparse_hmm_prior(float(kappa), float(gamma)), (float(kappa), float(gamma))
        except ValidationError as exc:
            errs.add(path, str(exc))
            return None, None
    if kind == "hidden_markov":
        kern = _build_transition(doc, path, errs)
        emis_doc = errs.expect(doc, path, "emissions", list, required=True)
        if kern is None or emis_doc is None:
            return None, None
        if len(emis_doc) != kern.dim:
            errs.add(f"{path}.emissions", f"{len(emis_doc)} emission laws for {kern.dim} states")
            return None, None
        laws = [_build_emission(e, f"{path}.emissions[{i}]", errs) for i, e in enumerate(emis_doc)]
        if any(l is None for l in laws):
            return None, None
        try:
            return HiddenMarkovPrior(kern, tuple(laws)), None
        except (ValidationError, IrreducibilityError) as exc:
            errs.add(path, str(exc))
            return None, None
    errs.add(f"{path}.type", f"unknown prior type {kind!r}")
    return None, None


def _build_snr(doc, path, errs: _Collector):
    if doc is None:
        return 1.0
    if isinstance(doc, (int, float)):
        if doc <= 0:
            errs.add(path, "snr must be positive")
            return None
        return float(doc)
    if isinstance(doc, list):
        pairs = []
        for i, item in enumerate(doc):
            if not (isinstance(item, list) and len(item) == 2):
                errs.add(f"{path}[{i}]", "expected [value, probability]")
                return None
            pairs.append((float(item[0]), float(item[1])))
        return tuple(pairs)
    errs.add(path, "expected a number or a list of [value, probability] pairs")
    return None


def _build_betas(doc, errs: _Collector):
    if not isinstance(doc, dict):
        errs.add("sweep", "expected an object with betas or start/stop/step")
        return None
    if "betas" in doc:
        betas = doc["betas"]
        if not isinstance(betas, list) or not betas:
            errs.add("sweep.betas", "expected a nonempty list")
            return None
        if any(not isinstance(b, (int, float)) or b <= 0 for b in betas):
            errs.add("sweep.betas", "beta values must be positive numbers")
            return None
        return tuple(sorted(float(b) for b in betas))
    start = doc.get("start")
    stop = doc.get("stop")
    step = doc.get("step")
    for key, v in (("start", start), ("stop", stop), ("step", step)):
        if not isinstance(v, (int, float)):
            errs.add(f"sweep.{key}", "missing or non-numeric")
            return None
    if step <= 0:
        errs.add("sweep.step", "step must be > 0")
        return None
    if start <= 0 or stop < start:
        errs.add("sweep", "need 0 < start <= stop")
        return None
    count = int(round((stop - start) / step)) + 1
    betas = tuple(round(start + i * step, 12) for i in range(count) if start + i * step <= stop + 1e-9)
    return betas


def validate_config(document: dict) -> ExperimentConfig:
    """Parse and validate an experiment document; raises ConfigError listing
    every violation."""
    errs = _Collector()
    if not isinstance(document, dict):
        raise ConfigError(["config: expected a JSON object"])
    version = errs.expect(document, "", "version", int, required=True)
    if version is not None and version != SCHEMA_VERSION:
        errs.add("version", f"unsupported schema version {version} (expected {SCHEMA_VERSION})")
    model_doc = errs.expect(document, "", "model", dict, required=True)
    model = None
    sparse_params = None
    if model_doc is not None:
        prior, sparse_params = _build_prior(model_doc.get("prior"), "model.prior", errs)
        postulated = None
        if "postulated_prior" in model_doc:
            postulated, _ = _build_prior(model_doc["postulated_prior"], "model.postulated_prior", errs)
        snr = _build_snr(model_doc.get("snr"), "model.snr", errs)
        sigma = errs.expect(model_doc, "model", "sigma", (int, float), default=1.0)
        if prior is not None and snr is not None and not errs.errors:
            try:
                model = ModelSpec(prior=prior, postulated_prior=postulated, snr=snr, sigma=float(sigma))
            except (ValidationError, ValueError) as exc:
                errs.add("model", str(exc))
    betas = _build_betas(document.get("sweep", {}), errs)
    tasks_doc = errs.expect(document, "", "tasks", list, default=["replica"])
    tasks = tuple(tasks_doc) if tasks_doc else ()
    if not tasks:
        errs.add("tasks", "at least one task required")
    for t in tasks:
        if t not in TASKS:
            errs.add("tasks", f"unknown task {t!r} (choose from {TASKS})")
    n = errs.expect(document, "", "n", int, default=0)
    trials = errs.expect(document, "", "trials", int, default=0)
    seed = errs.expect(document, "", "seed", int, default=0)
    units = errs.expect(document, "", "units", str, default="nats")
    if units not in ("nats", "bits"):
        errs.add("units", f"units must be 'nats' or 'bits', got {units!r}")
    mh_doc = errs.expect(document, "", "mh", dict, default={})
    mh_steps = errs.expect(mh_doc, "mh", "steps", int, default=60_000)
    mh_burn = errs.expect(mh_doc, "mh", "burn_in", int, default=10_000)
    amp_doc = errs.expect(document, "", "amp", dict, default={})
    amp_iter = errs.expect(amp_doc, "amp", "iterations", int, default=10)
    amp_scaling = errs.expect(amp_doc, "amp", "scaling", str, default="unit_columns")
    needs_sim = any(t in tasks for t in ("exact_sim", "mh", "amp"))
    if needs_sim:
        if n < 1:
            errs.add("n", "simulation tasks need n >= 1")
        if trials < 1:
            errs.add("trials", "simulation tasks need trials >= 1")
    if "amp" in tasks and sparse_params is None and model is not None:
        errs.add("tasks", "the amp task requires a sparse_hmm prior")
    if "mh" in tasks and model is not None:
        prior = model.prior
        if not (isinstance(prior, MarkovPrior) and not prior.is_gauss_markov):
            errs.add("tasks", "the mh task requires a discrete Markov prior")
    if errs.errors:
        raise ConfigError(errs.errors)
    return ExperimentConfig(
        model=model,
        betas=betas,
        tasks=tasks,
        n=n,
        trials=trials,
        seed=seed,
        units=units,
        mh_steps=mh_steps,
        mh_burn_in=mh_burn,
        amp_iterations=amp_iter,
        amp_scaling=amp_scaling,
        sparse_hmm_params=sparse_params,
    )
