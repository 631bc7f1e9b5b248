"""
Experiment drivers. Each takes a validated config and fills a
:class:`ResultTable`; rows are appended in a fixed order so identical input
gives identical output.
"""

from __future__ import annotations

from math import factorial
from typing import Callable

import numpy as np

from .. import linalg
from ..dynamics import (
    cocycle_conjugation_check,
    cocycle_residual,
    convergence_radius,
    convergence_residual,
    derivation_bound,
    dyson_cocycle,
    evolve_exact,
    evolve_series,
    iterate_derivation,
    moller_approximant,
)
from ..interaction import Interaction, boundary_energy, hamiltonian, lambda_norm
from ..modular import (
    closed_form_residuals,
    gns_build,
    modular_condition_residual,
    modular_flow_match,
    tomita_build,
    verify_tomita_takesaki,
)
from ..ness import (
    NessSetup,
    chain_family,
    current_norm_bound,
    delta_beta_v,
    entropy_balance,
    entropy_production,
    klein_check,
    positivity_trend,
    reservoir_current,
    steady_state,
    transient_production,
)
from ..quasilocal import LocalOperator, Region, embed, lambda_weight
from ..states import (
    DensityState,
    expect,
    gibbs_state,
    kms_residual,
    kms_scale,
    perturbed_state_direct,
    perturbed_state_series,
    product_state,
    trace_distance,
)
from .config import ExperimentConfig, build_model, build_partition, local_operator
from .output import ResultTable

TOMITA_TOLERANCES = {
    "S=J*Delta^1/2": 1e-9,
    "J^2=1": 1e-10,
    "J=J*": 1e-10,
    "Delta^-1/2=J*Delta^1/2*J": 1e-9,
    "F=S*": 1e-9,
    "Delta=FS": 1e-9,
    "Delta^-1=SF": 1e-9,
}
GNS_TOLERANCES = {"state": 1e-11, "norm": 1e-12, "multiplicative": 1e-10, "star": 1e-10}
TRANSIENT_FLOOR = 1e-10

KLEIN_PHI: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "s": lambda s: s,
    "s^3": lambda s: s ** 3,
    "exp": np.exp,
    "-exp(-s)": lambda s: -np.exp(-s),
}


def _g(x: float) -> str:
    return format(float(x), "g")


def _random_operator(rng: np.random.Generator, lattice, region: Region) -> LocalOperator:
    m = linalg.random_matrix(rng, lattice.hilbert_dim(region))
    return LocalOperator(lattice, region, m / linalg.norm(m))


def run_kms_check(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    phi = build_model(cfg.model)
    h = hamiltonian(phi)
    rng = np.random.default_rng(cfg.seed)
    for beta in p["betas"]:
        rho = gibbs_state(h, beta)
        for k in range(p["pairs"]):
            a = _random_operator(rng, phi.lattice, h.region)
            b = _random_operator(rng, phi.lattice, h.region)
            res = kms_residual(h, beta, a, b)
            table.check("kms-condition", f"beta={_g(beta)} pair={k}", res, p["kms_tol"] * kms_scale(h, beta, a, b))
        t = float(rng.uniform(-5, 5))
        a = _random_operator(rng, phi.lattice, h.region)
        drift = abs(expect(rho, evolve_exact(h, a, t)) - expect(rho, a))
        table.check("kms-state-invariance", f"beta={_g(beta)} t={_g(t)}", drift, 1e-11)


def _default_observable(phi: Interaction) -> LocalOperator:
    sites = phi.lattice.sites
    mid = sites[(len(sites) - 1) // 2]
    d = phi.lattice.dim(mid)
    m = linalg.SIGMA_Z if d == 2 else np.diag(np.arange(d, dtype=float))
    return LocalOperator.at(phi.lattice, mid, m)


def nested_regions(phi: Interaction, centre: Region) -> list[Region]:
    """Intervals grown around ``centre`` one site at a time, right side first."""
    sites = list(phi.lattice.sites)
    lo = max(0, sites.index(min(centre)) - 1)
    hi = min(len(sites) - 1, sites.index(max(centre)) + 1)
    out = [Region(sites[lo:hi + 1])]
    grow_right = True
    while lo > 0 or hi < len(sites) - 1:
        if (grow_right and hi < len(sites) - 1) or lo == 0:
            hi += 1
        else:
            lo -= 1
        grow_right = not grow_right
        out.append(Region(sites[lo:hi + 1]))
    return out


def run_evolve_compare(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    phi = build_model(cfg.model)
    lam = p["lambda"]
    a = _default_observable(phi) if p["observable"] is None else local_operator(p["observable"], phi.lattice, "run.observable")
    h = hamiltonian(phi)
    radius = convergence_radius(phi, lam)
    table.report("series-convergence-radius", f"lambda={_g(lam)}", value=radius)
    for t in p["t_grid"]:
        res = evolve_series(phi, a, t, lam, p["tol"])
        exact = evolve_exact(h, a, t)
        err = res.value.distance(exact)
        table.check(
            "series-vs-exact",
            f"t={_g(t)} order={res.truncation_order}",
            err,
            res.certified_tail_bound + 1e-9,
            value=res.certified_tail_bound,
        )
    rng = np.random.default_rng(cfg.seed)
    sites = list(phi.lattice.sites)
    for k in range(p["derivation_samples"]):
        width = int(rng.integers(1, min(2, len(sites)) + 1))
        start = int(rng.integers(0, len(sites) - width + 1))
        obs = _random_operator(rng, phi.lattice, Region(sites[start:start + width]))
        for m in range(p["max_derivation_order"] + 1):
            val = iterate_derivation(phi, obs, m).norm()
            table.bound("derivation-bound", f"sample={k} m={m}", val, derivation_bound(phi, obs, m, lam))
    # the canonical weight is only an upper bound for the λ-norm, so these are logged
    mu = lam / 2
    nrm = lambda_norm(phi, lam)
    for k in range(min(3, p["derivation_samples"])):
        x = _random_operator(rng, phi.lattice, Region(sites[k % len(sites):k % len(sites) + 1]))
        y = _random_operator(rng, phi.lattice, Region(sites[-1:]))
        wxy = lambda_weight(x @ y, lam).value
        wx, wy = lambda_weight(x, lam).value, lambda_weight(y, lam).value
        table.report("lambda-weight-submultiplicative", f"sample={k}", value=wxy, reference=wx * wy, residual=max(0.0, wxy - wx * wy))
        for m in range(1, 4):
            lhs = lambda_weight(iterate_derivation(phi, x, m), mu).value
            rhs = lambda_weight(x, lam).value * factorial(m) * (2 * nrm / (lam - mu)) ** m
            table.report("lambda-weight-derivation", f"sample={k} m={m} mu={_g(mu)}", value=lhs, reference=rhs, residual=max(0.0, lhs - rhs))
    regions = nested_regions(phi, a.region) if p["regions"] is None else [Region(r) for r in p["regions"]]
    residuals = convergence_residual(phi, a, p["convergence_t"], regions)
    for r, v in zip(regions, residuals):
        table.report("finite-volume-convergence", f"t={_g(p['convergence_t'])} region={list(r)}", residual=v)
    head = residuals[:-1]
    worst = max((b - c for c, b in zip(head, head[1:])), default=-1.0)
    table.add(
        "finite-volume-monotone",
        f"t={_g(p['convergence_t'])} regions={len(regions)}",
        residual=max(worst, 0.0),
        tolerance=0.0,
        passed=bool(worst < 0) if len(head) > 1 else True,
    )


def run_modular_verify(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    phi = build_model(cfg.model)
    h = hamiltonian(phi)
    beta = p["beta"]
    rng = np.random.default_rng(cfg.seed)
    states = [("tracial", DensityState.maximally_mixed(phi.lattice, h.region)), ("gibbs", gibbs_state(h, beta))]
    for label, rho in states:
        rep = gns_build(rho)
        for key, val in rep.residuals().items():
            table.check(f"gns-{key}", label, val, GNS_TOLERANCES[key])
        data = tomita_build(rep)
        for key, val in data.residuals().items():
            table.check(f"tomita {key}", label, val, TOMITA_TOLERANCES[key])
        for key, val in closed_form_residuals(rep, data).items():
            table.check(f"tomita-closed-form {key}", label, val, 1e-9)
        rep_tt = verify_tomita_takesaki(rep, data, p["t_grid"])
        table.check("tomita-takesaki JMJ=M'", label, rep_tt.commutant_residual, 1e-8)
        table.check("tomita-takesaki Delta^it M Delta^-it=M", label, rep_tt.algebra_residual, 1e-8)
        n = rep.ambient_dim
        for k in range(p["pairs"]):
            a = linalg.random_matrix(rng, n)
            b = linalg.random_matrix(rng, n)
            a /= linalg.norm(a)
            b /= linalg.norm(b)
            table.check("modular-condition", f"{label} pair={k}", modular_condition_residual(rep, data, a, b), 1e-9)
    fm = modular_flow_match(h, beta, p["flow_t_grid"])
    table.report("modular-flow residual", f"sign=+1 beta={_g(beta)}", residual=fm.residual_plus)
    table.report("modular-flow residual", f"sign=-1 beta={_g(beta)}", residual=fm.residual_minus)
    best = min(fm.residual_plus, fm.residual_minus)
    sign = fm.sign if fm.sign is not None else 0
    table.add(
        "modular-flow-sign",
        "ambiguous" if fm.ambiguous else f"sign={sign}",
        value=sign,
        residual=best,
        tolerance=fm.tol,
        passed=fm.matched,
    )
    if fm.sign is not None:
        g = h * (fm.sign * beta)
        worst = 0.0
        for _ in range(p["pairs"]):
            a = _random_operator(rng, phi.lattice, h.region)
            b = _random_operator(rng, phi.lattice, h.region)
            worst = max(worst, kms_residual(g, -1.0, a, b) / kms_scale(g, -1.0, a, b))
        table.check("modular-kms-consistency", f"value=-1 sign={fm.sign}", worst, 1e-10)


def _perturbation(cfg: ExperimentConfig, phi: Interaction, rng) -> LocalOperator:
    spec = cfg.params["perturbation"]
    if spec is not None:
        return local_operator(spec, phi.lattice, "run.perturbation")
    site = phi.lattice.sites[0]
    if phi.lattice.dim(site) == 2:
        return LocalOperator.at(phi.lattice, site, 0.05 * linalg.SIGMA_X)
    m = linalg.random_hermitian(rng, phi.lattice.dim(site))
    return LocalOperator.at(phi.lattice, site, 0.05 * m / linalg.norm(m))


def run_perturbation_compare(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    phi = build_model(cfg.model)
    rng = np.random.default_rng(cfg.seed)
    h = hamiltonian(phi)
    pert = _perturbation(cfg, phi, rng)
    beta = p["beta"]
    direct = perturbed_state_direct(h, beta, pert)
    series = perturbed_state_series(h, beta, pert, p["order"], p["quad_points"], ordered=True)
    loose = perturbed_state_series(h, beta, pert, p["order"], p["quad_points"], ordered=False)
    case = f"beta={_g(beta)} order={p['order']}"
    table.check("perturbed-state ordered-series", case, trace_distance(series, direct), p["tv_tol"])
    table.report("perturbed-state unordered-series", case, residual=trace_distance(loose, direct))
    t, s = p["t"], p["s"]
    order, pts = p["cocycle_order"], p["quad_points"]
    res, bound = cocycle_residual(h, pert, t, s, order, pts)
    table.check("cocycle-identity", f"t={_g(t)} s={_g(s)} order={order}", res, bound)
    a = _random_operator(rng, phi.lattice, h.region | pert.region)
    conj = cocycle_conjugation_check(h, pert, a, t, order, pts)
    table.check("cocycle-conjugation adjoint", f"t={_g(t)} order={order}", conj.adjoint_residual, p["conj_tol"])
    table.report("cocycle-conjugation literal-inverse", f"t={_g(t)} order={order}", residual=conj.literal_residual)
    gamma = dyson_cocycle(h, pert, t, order, pts)
    table.report("cocycle-unitarity", f"t={_g(t)} order={order}", residual=gamma.unitarity_defect, value=gamma.tail_bound)
    mol = moller_approximant(h, pert, a, t)
    table.report("moller-intertwining", f"t={_g(t)} probe={_g(mol.probe)}", residual=mol.intertwining_defect)


def _ness_setup(cfg: ExperimentConfig) -> NessSetup:
    phi = build_model(cfg.model)
    partition, bts = build_partition(cfg, phi)
    return NessSetup(phi, partition, bts)


def run_ness_balance(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    setup = _ness_setup(cfg)
    for T in p["T_grid"]:
        n = max(3, int(np.ceil(p["quad_per_unit_time"] * T)) + 1)
        rep = entropy_balance(setup, T, n)
        table.check("entropy-balance", f"T={_g(T)} points={rep.points}", rep.residual, p["balance_tol"], value=rep.lhs, reference=rep.rhs)
        table.check("relative-entropy-sign", f"T={_g(T)}", max(0.0, -rep.rhs), 1e-12, value=rep.rhs)
    t_max = max(p["T_grid"])
    k = p["transient_points"]
    for T in np.linspace(t_max / k, t_max, k):
        val = transient_production(setup, float(T))
        table.check("transient-production", f"T={_g(T)}", max(0.0, -val), TRANSIENT_FLOOR, value=val)
    x = delta_beta_v(setup)
    y = LocalOperator.zero(setup.lattice, setup.region)
    for a, beta in enumerate(setup.partition.betas):
        y = y + beta * reservoir_current(setup, a)
    gap = x.distance(y)
    if setup.boundary_terms:
        table.report("production-vs-currents", "with boundary terms", residual=gap)
    else:
        table.check("production-vs-currents", "no boundary terms", gap, 1e-10)
    ness = steady_state(setup)
    table.check("ness-neutrality", "dephased reference", abs(entropy_production(ness, setup)), 1e-10)
    for a in range(setup.n_reservoirs):
        cb = current_norm_bound(setup, a, p["lambda"])
        table.bound("current-norm-bound", f"reservoir={a}", cb.norm, cb.bound)


def run_positivity_trend(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    family = chain_family(p["ks"], p["J"], p["h"], tuple(p["betas"]))
    rows = positivity_trend(family, p["T_grid"])
    seen = set()
    for r in rows:
        table.check("transient-production", f"k={r.k} T={_g(r.T)}", max(0.0, -r.transient), TRANSIENT_FLOOR, value=r.transient)
        if r.k not in seen:
            seen.add(r.k)
            table.check("ness-neutrality", f"k={r.k}", abs(r.steady), 1e-10, value=r.steady)
    for T in p["T_grid"]:
        vals = [r.transient for r in rows if r.T == float(T)]
        steps = np.diff(vals)
        table.report("transient-trend", f"T={_g(T)} nondecreasing={bool(np.all(steps >= 0))}", value=vals[-1])


def run_gibbs_factorization(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    phi = build_model(cfg.model)
    beta = p["beta"]
    region = Region([phi.lattice.sites[0]] if p["region"] is None else p["region"])
    rest = phi.lattice.region - region
    h = hamiltonian(phi)
    w = embed(boundary_energy(phi, region), h.region)
    target = product_state([gibbs_state(hamiltonian(phi, region), beta), gibbs_state(hamiltonian(phi, rest), beta)])
    found = []
    for sign in (1, -1):
        rho_p = perturbed_state_direct(h, beta, w * (sign * beta))
        dist = trace_distance(rho_p, target)
        ok = dist <= p["fact_tol"]
        if ok:
            found.append(sign)
        table.report("gibbs-factorization", f"P={'+' if sign > 0 else '-'}beta*W beta={_g(beta)} region={list(region)}", residual=dist, tolerance=p["fact_tol"])
    table.add(
        "gibbs-factorization-sign",
        f"factorizing={found}",
        value=found[0] if len(found) == 1 else 0,
        passed=bool(found),
    )


def run_klein_sweep(cfg: ExperimentConfig, table: ResultTable) -> None:
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    dims, funcs = p["dims"], p["functions"]
    for k in range(p["instances"]):
        d = dims[k % len(dims)]
        name = funcs[(k // len(dims)) % len(funcs)]
        a = linalg.random_hermitian(rng, d)
        u = linalg.random_unitary(rng, d)
        rep = klein_check(a, u, KLEIN_PHI[name])
        table.check(
            "klein-trace-inequality",
            f"instance={k} dim={d} phi={name}",
            max(0.0, rep.lhs - rep.rhs),
            1e-12 * rep.scale,
            value=rep.lhs,
            reference=rep.rhs,
        )


DRIVERS: dict[str, Callable[[ExperimentConfig, ResultTable], None]] = {
    "kms-check": run_kms_check,
    "evolve-compare": run_evolve_compare,
    "modular-verify": run_modular_verify,
    "perturbation-compare": run_perturbation_compare,
    "ness-balance": run_ness_balance,
    "positivity-trend": run_positivity_trend,
    "gibbs-factorization": run_gibbs_factorization,
    "klein-sweep": run_klein_sweep,
}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    table = ResultTable(cfg.experiment)
    DRIVERS[cfg.experiment](cfg, table)
    return table
