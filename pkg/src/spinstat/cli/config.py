"""
Experiment configuration: JSON text in, validated :class:`ExperimentConfig` out.

Canonical layout::

    {
      "model": {"builder": "ising", "n": 4, "J": 1.0, "h": 0.5},
      "partition": {"system": [2], "reservoirs": [[1], [3, 4]], "betas": [2.0, 1.0]},
      "run": {"experiment": "ness-balance", "T_grid": [0.5, 2.0], ...},
      "seed": 0
    }

The flat form ``{"n": 4, "J": 1, "h": 0.5, "run": "kms-check"}`` is shorthand
for an Ising model with default run parameters.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import linalg
from ..errors import SpinstatError
from ..interaction import Interaction, ReservoirPartition, build_heisenberg_chain, build_ising_chain
from ..quasilocal import Lattice, LocalOperator, Region

EXPERIMENTS = (
    "kms-check",
    "evolve-compare",
    "modular-verify",
    "perturbation-compare",
    "ness-balance",
    "positivity-trend",
    "gibbs-factorization",
    "klein-sweep",
)

DEFAULT_LAMBDA = 0.5
DEFAULT_TOL = 1e-8
DEFAULT_QUAD = 200
DEFAULT_SEED = 0

# run parameters per experiment, with defaults
DEFAULTS: dict[str, dict[str, Any]] = {
    "kms-check": {"betas": [1.0], "pairs": 50, "kms_tol": 1e-10},
    "evolve-compare": {
        "lambda": DEFAULT_LAMBDA,
        "tol": DEFAULT_TOL,
        "t_grid": [0.05],
        "observable": None,
        "max_derivation_order": 6,
        "derivation_samples": 10,
        "convergence_t": 0.2,
        "regions": None,
    },
    "modular-verify": {"beta": 1.0, "t_grid": [0.3, 1.7], "flow_t_grid": [0.5], "pairs": 10},
    "perturbation-compare": {
        "beta": 1.0,
        "perturbation": None,
        "order": 4,
        "quad_points": 16,
        "cocycle_order": 3,
        "t": 0.5,
        "s": 0.25,
        "tv_tol": 1e-5,
        "conj_tol": 1e-6,
    },
    "ness-balance": {
        "T_grid": [0.5, 2.0],
        "quad_per_unit_time": DEFAULT_QUAD,
        "balance_tol": 1e-6,
        "transient_points": 10,
        "lambda": DEFAULT_LAMBDA,
    },
    "positivity-trend": {"ks": [1, 2, 3], "J": 0.5, "h": 1.0, "betas": [2.0, 1.0], "T_grid": [0.5, 1.0, 2.0]},
    "gibbs-factorization": {"beta": 1.0, "region": None, "fact_tol": 1e-10},
    "klein-sweep": {"instances": 1000, "dims": [2, 4, 8], "functions": ["s", "s^3", "exp", "-exp(-s)"]},
}

NEEDS_MODEL = {
    "kms-check",
    "evolve-compare",
    "modular-verify",
    "perturbation-compare",
    "ness-balance",
    "gibbs-factorization",
}
NEEDS_PARTITION = {"ness-balance"}
GRID_KEYS = {"betas", "t_grid", "flow_t_grid", "T_grid", "ks", "dims", "functions"}
KLEIN_FUNCTIONS = ("s", "s^3", "exp", "-exp(-s)")


class ConfigError(SpinstatError, ValueError):
    pass


class ParseError(ConfigError):
    """Malformed JSON; carries the line and column of the problem."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class ValidationError(ConfigError):
    """Well-formed input violating an invariant; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: dict | None
    partition: dict | None
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED

    def to_dict(self) -> dict:
        run = {"experiment": self.experiment}
        run.update(self.params)
        return {"model": self.model, "partition": self.partition, "run": run, "seed": self.seed}

    def with_seed(self, seed: int) -> ExperimentConfig:
        return ExperimentConfig(self.experiment, self.model, self.partition, dict(self.params), _check_seed(seed))


def serialize(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse and validate JSON text.

    ``experiment`` names the experiment when the text has no ``run`` entry;
    if both are present they must agree.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(raw, dict):
        raise ValidationError("<root>", "configuration must be a JSON object")
    raw = copy.deepcopy(raw)
    if experiment is not None:
        run = raw.get("run")
        if run is None:
            raw["run"] = experiment
        else:
            named = run if isinstance(run, str) else run.get("experiment") if isinstance(run, dict) else None
            if named != experiment:
                raise ValidationError("run.experiment", f"config is for {named!r}, not {experiment!r}")
    return _normalize(raw)


def load_config(path: str, experiment: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), experiment)


def _normalize(raw: dict) -> ExperimentConfig:
    flat_keys = {"n", "J", "h"} & set(raw)
    if flat_keys:
        if "model" in raw:
            raise ValidationError("model", "give either a model object or the flat n/J/h shorthand, not both")
        missing = {"n", "J", "h"} - flat_keys
        if missing:
            raise ValidationError(sorted(missing)[0], "flat shorthand needs n, J and h")
        raw["model"] = {"builder": "ising", "n": raw.pop("n"), "J": raw.pop("J"), "h": raw.pop("h")}
    unknown = set(raw) - {"model", "partition", "run", "seed"}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown top-level key")

    run = raw.get("run")
    if isinstance(run, str):
        run = {"experiment": run}
    if not isinstance(run, dict) or "experiment" not in run:
        raise ValidationError("run", "expected an experiment name or an object with 'experiment'")
    run = dict(run)
    name = run.pop("experiment")
    if name not in EXPERIMENTS:
        raise ValidationError("run.experiment", f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    defaults = DEFAULTS[name]
    extra = set(run) - set(defaults)
    if extra:
        raise ValidationError(f"run.{sorted(extra)[0]}", f"not a parameter of {name}")
    params = copy.deepcopy(defaults)
    params.update(run)
    for key in GRID_KEYS & set(params):
        grid = params[key]
        if not isinstance(grid, list) or not grid:
            raise ValidationError(f"run.{key}", "grids must be nonempty lists")

    seed = _check_seed(raw.get("seed", DEFAULT_SEED))

    model = raw.get("model")
    if model is None and name in NEEDS_MODEL:
        raise ValidationError("model", f"{name} needs a model")
    if model is not None:
        model = _normalize_model(model)
        phi = build_model(model)
    else:
        phi = None

    partition = raw.get("partition")
    if partition is None and name in NEEDS_PARTITION:
        raise ValidationError("partition", f"{name} needs a partition")
    if partition is not None:
        if phi is None:
            raise ValidationError("partition", "a partition needs a model")
        partition = _normalize_partition(partition, phi)

    cfg = ExperimentConfig(name, model, partition, params, seed)
    _validate_params(cfg, phi)
    return cfg


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ValidationError("seed", "seed must be an integer in [0, 2^64)")
    return seed


def _number(value, where: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(where, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ValidationError(where, "must be finite")
    if positive and not value > 0:
        raise ValidationError(where, "must be positive")
    return float(value)


def _sites(value, where: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in value):
        raise ValidationError(where, "expected a list of integer site ids")
    if len(set(value)) != len(value):
        raise ValidationError(where, "duplicate sites")
    return sorted(value)


def _normalize_model(model) -> dict:
    if not isinstance(model, dict):
        raise ValidationError("model", "expected an object")
    builder = model.get("builder", "explicit" if "terms" in model else None)
    if builder in ("ising", "heisenberg"):
        extra = set(model) - {"builder", "n", "J", "h"}
        if extra:
            raise ValidationError(f"model.{sorted(extra)[0]}", f"not a parameter of the {builder} builder")
        n = model.get("n")
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ValidationError("model.n", "chain length must be a positive integer")
        return {
            "builder": builder,
            "n": n,
            "J": _number(model.get("J", 1.0), "model.J"),
            "h": _number(model.get("h", 0.0), "model.h"),
        }
    if builder == "explicit":
        extra = set(model) - {"builder", "sites", "local_dims", "terms"}
        if extra:
            raise ValidationError(f"model.{sorted(extra)[0]}", "not a field of an explicit model")
        sites = model.get("sites")
        if isinstance(sites, int) and not isinstance(sites, bool):
            sites = list(range(1, sites + 1))
        sites = _sites(sites, "model.sites")
        if not sites:
            raise ValidationError("model.sites", "need at least one site")
        dims = model.get("local_dims", [2] * len(sites))
        if isinstance(dims, int):
            dims = [dims] * len(sites)
        if not isinstance(dims, list) or len(dims) != len(sites) or any(
            not isinstance(d, int) or isinstance(d, bool) or d < 2 for d in dims
        ):
            raise ValidationError("model.local_dims", "one integer dimension >= 2 per site")
        terms = model.get("terms")
        if not isinstance(terms, list):
            raise ValidationError("model.terms", "expected a list of terms")
        lattice = Lattice(tuple(sites), tuple(dims))
        clean = [_normalize_term(t, lattice, f"model.terms[{k}]") for k, t in enumerate(terms)]
        return {"builder": "explicit", "sites": sites, "local_dims": list(dims), "terms": clean}
    raise ValidationError("model.builder", f"unknown builder {builder!r}; use ising, heisenberg or explicit")


def _normalize_term(term, lattice: Lattice, where: str) -> dict:
    if not isinstance(term, dict):
        raise ValidationError(where, "expected an object with region and matrix")
    extra = set(term) - {"region", "matrix", "coeff"}
    if extra:
        raise ValidationError(f"{where}.{sorted(extra)[0]}", "unknown field")
    region = _sites(term.get("region"), f"{where}.region")
    missing = set(region) - set(lattice.sites)
    if missing:
        raise ValidationError(f"{where}.region", f"sites {sorted(missing)} do not exist")
    if not region:
        raise ValidationError(f"{where}.region", "terms need a nonempty region")
    coeff = _number(term.get("coeff", 1.0), f"{where}.coeff")
    m = term.get("matrix")
    matrix_value(m, lattice, Region(region), f"{where}.matrix")
    return {"region": region, "matrix": m, "coeff": coeff}


def matrix_value(m, lattice: Lattice, region: Region, where: str) -> np.ndarray:
    """Decode a Pauli string or a nested list of ``[re, im]`` pairs."""
    d = lattice.hilbert_dim(region)
    if isinstance(m, str):
        letters = m.replace(" ", "")
        if len(letters) != len(region):
            raise ValidationError(where, f"Pauli string {m!r} needs one letter per site of {list(region)}")
        if any(lattice.dim(s) != 2 for s in region):
            raise ValidationError(where, "Pauli shorthand needs 2-dimensional sites")
        if any(c not in linalg.PAULI for c in letters):
            raise ValidationError(where, f"unknown Pauli letter in {m!r}; use I X Y Z + -")
        return linalg.tensor_product(*(linalg.PAULI[c] for c in letters))
    if not isinstance(m, list) or len(m) != d:
        raise ValidationError(where, f"expected a {d}x{d} matrix")
    out = np.zeros((d, d), dtype=complex)
    for i, row in enumerate(m):
        if not isinstance(row, list) or len(row) != d:
            raise ValidationError(f"{where}[{i}]", f"expected {d} entries")
        for j, entry in enumerate(row):
            if isinstance(entry, list) and len(entry) == 2:
                out[i, j] = complex(_number(entry[0], f"{where}[{i}][{j}]"), _number(entry[1], f"{where}[{i}][{j}]"))
            else:
                out[i, j] = _number(entry, f"{where}[{i}][{j}]")
    return out


def build_model(model: dict) -> Interaction:
    builder = model["builder"]
    if builder == "ising":
        return build_ising_chain(model["n"], model["J"], model["h"])
    if builder == "heisenberg":
        return build_heisenberg_chain(model["n"], model["J"], model["h"])
    lattice = Lattice(tuple(model["sites"]), tuple(model["local_dims"]))
    terms: dict[Region, np.ndarray] = {}
    for k, t in enumerate(model["terms"]):
        region = Region(t["region"])
        m = t["coeff"] * matrix_value(t["matrix"], lattice, region, f"model.terms[{k}].matrix")
        terms[region] = terms[region] + m if region in terms else m
    try:
        return Interaction(lattice, terms)
    except SpinstatError as exc:
        raise ValidationError("model.terms", str(exc)) from None


def local_operator(spec: dict, lattice: Lattice, where: str) -> LocalOperator:
    """Operator from ``{"region": [...], "matrix": ..., "coeff": c}``."""
    t = _normalize_term(spec, lattice, where)
    region = Region(t["region"])
    return LocalOperator(lattice, region, t["coeff"] * matrix_value(t["matrix"], lattice, region, where))


def _normalize_partition(part, phi: Interaction) -> dict:
    if not isinstance(part, dict):
        raise ValidationError("partition", "expected an object")
    extra = set(part) - {"system", "reservoirs", "betas", "boundary_terms"}
    if extra:
        raise ValidationError(f"partition.{sorted(extra)[0]}", "unknown field")
    system = _sites(part.get("system"), "partition.system")
    res = part.get("reservoirs")
    if not isinstance(res, list):
        raise ValidationError("partition.reservoirs", "expected a list of site lists")
    res = [_sites(r, f"partition.reservoirs[{k}]") for k, r in enumerate(res)]
    betas = part.get("betas")
    if not isinstance(betas, list) or len(betas) != len(res):
        raise ValidationError("partition.betas", "one inverse temperature per reservoir")
    betas = [_number(b, f"partition.betas[{k}]", positive=True) for k, b in enumerate(betas)]
    known = set(phi.lattice.sites)
    for where, sites in [("partition.system", system)] + [
        (f"partition.reservoirs[{k}]", r) for k, r in enumerate(res)
    ]:
        missing = set(sites) - known
        if missing:
            raise ValidationError(where, f"sites {sorted(missing)} do not exist")
    try:
        partition = ReservoirPartition(Region(system), tuple(Region(r) for r in res), tuple(betas))
        partition.check_cover(phi.lattice)
    except SpinstatError as exc:
        raise ValidationError("partition", str(exc)) from None
    out = {"system": system, "reservoirs": res, "betas": betas}
    bts = part.get("boundary_terms")
    if bts is not None:
        if not isinstance(bts, list):
            raise ValidationError("partition.boundary_terms", "expected a list")
        clean = []
        for k, bt in enumerate(bts):
            where = f"partition.boundary_terms[{k}]"
            if not isinstance(bt, dict) or "reservoir" not in bt:
                raise ValidationError(where, "needs a reservoir index")
            a = bt["reservoir"]
            if not isinstance(a, int) or isinstance(a, bool) or not 0 <= a < len(res):
                raise ValidationError(f"{where}.reservoir", f"no reservoir with index {a!r}")
            term = _normalize_term({k2: v for k2, v in bt.items() if k2 != "reservoir"}, phi.lattice, where)
            if not set(term["region"]) <= set(res[a]):
                raise ValidationError(f"{where}.region", f"boundary terms must lie inside reservoir {a}")
            clean.append({"reservoir": a, **term})
        out["boundary_terms"] = clean
    return out


def build_partition(cfg: ExperimentConfig, phi: Interaction):
    """``(ReservoirPartition, boundary terms by reservoir)`` from a normalized config."""
    p = cfg.partition
    partition = ReservoirPartition(
        Region(p["system"]), tuple(Region(r) for r in p["reservoirs"]), tuple(p["betas"])
    )
    grouped: dict[int, dict[Region, np.ndarray]] = {}
    for bt in p.get("boundary_terms", []):
        region = Region(bt["region"])
        m = bt["coeff"] * matrix_value(bt["matrix"], phi.lattice, region, "partition.boundary_terms")
        terms = grouped.setdefault(bt["reservoir"], {})
        terms[region] = terms[region] + m if region in terms else m
    return partition, {a: Interaction(phi.lattice, t) for a, t in grouped.items()}


def _validate_params(cfg: ExperimentConfig, phi: Interaction | None) -> None:
    p = cfg.params
    name = cfg.experiment

    def positive_int(key, minimum=1):
        v = p[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise ValidationError(f"run.{key}", f"expected an integer >= {minimum}")

    def numbers(key, positive=False):
        for k, v in enumerate(p[key]):
            _number(v, f"run.{key}[{k}]", positive)

    for key in ("lambda", "tol", "kms_tol", "tv_tol", "conj_tol", "balance_tol", "fact_tol"):
        if key in p:
            _number(p[key], f"run.{key}", positive=True)
    if name == "kms-check":
        numbers("betas")
        positive_int("pairs")
    elif name == "evolve-compare":
        numbers("t_grid")
        positive_int("max_derivation_order", 0)
        positive_int("derivation_samples")
        _number(p["convergence_t"], "run.convergence_t")
        if p["observable"] is not None:
            local_operator(p["observable"], phi.lattice, "run.observable")
        if p["regions"] is not None:
            if not isinstance(p["regions"], list) or not p["regions"]:
                raise ValidationError("run.regions", "expected a nonempty list of site lists")
            prev: set[int] = set()
            for k, r in enumerate(p["regions"]):
                sites = set(_sites(r, f"run.regions[{k}]"))
                if sites - set(phi.lattice.sites):
                    raise ValidationError(f"run.regions[{k}]", "sites do not exist")
                if not prev <= sites:
                    raise ValidationError(f"run.regions[{k}]", "regions must be increasing")
                prev = sites
    elif name == "modular-verify":
        _number(p["beta"], "run.beta")
        numbers("t_grid")
        numbers("flow_t_grid")
        positive_int("pairs")
        if phi.lattice.hilbert_dim() > 4:
            raise ValidationError("model", "modular-verify supports algebras of dimension at most 4")
    elif name == "perturbation-compare":
        _number(p["beta"], "run.beta", positive=True)
        positive_int("order", 0)
        positive_int("quad_points")
        positive_int("cocycle_order", 0)
        _number(p["t"], "run.t")
        _number(p["s"], "run.s")
        if p["perturbation"] is not None:
            local_operator(p["perturbation"], phi.lattice, "run.perturbation")
    elif name == "ness-balance":
        numbers("T_grid", positive=True)
        positive_int("quad_per_unit_time", 2)
        positive_int("transient_points")
    elif name == "positivity-trend":
        for k, v in enumerate(p["ks"]):
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValidationError(f"run.ks[{k}]", "reservoir sizes must be positive integers")
        _number(p["J"], "run.J")
        _number(p["h"], "run.h")
        if len(p["betas"]) != 2:
            raise ValidationError("run.betas", "two inverse temperatures (left, right)")
        numbers("betas", positive=True)
        numbers("T_grid", positive=True)
    elif name == "gibbs-factorization":
        _number(p["beta"], "run.beta", positive=True)
        if p["region"] is not None:
            sites = _sites(p["region"], "run.region")
            if not sites or set(sites) - set(phi.lattice.sites) or set(sites) == set(phi.lattice.sites):
                raise ValidationError("run.region", "need a nonempty proper subset of the lattice")
    elif name == "klein-sweep":
        positive_int("instances")
        for k, d in enumerate(p["dims"]):
            if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                raise ValidationError(f"run.dims[{k}]", "dimensions must be positive integers")
        for k, f in enumerate(p["functions"]):
            if f not in KLEIN_FUNCTIONS:
                raise ValidationError(f"run.functions[{k}]", f"choose from {', '.join(KLEIN_FUNCTIONS)}")
