"""
Synthetic designs for the Monte Carlo studies and their true CATE.

All scenarios use seven candidate IVs and no baseline covariates:
    d = z'gamma + v,   u = rho_v * v + z'eta + xi,   index = d*beta + z'kappa + u
with v, xi ~ N(0, 1). Binary designs draw y ~ Bernoulli(logit^-1(index));
the continuous design sets y = index + index^2 / 3.
"""

from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from spotiv.errors import InputError
from spotiv.logging_config import get_logger
from spotiv.models import (
    Dataset,
    EvalPoint,
    OutcomeKind,
    Scenario,
    ScenarioSpec,
    StructuralParams,
    UNIFORM_HALF_WIDTH,
    ZDistribution,
)
from spotiv.services.streams import StreamRole, make_rng

logger = get_logger(__name__)

P_Z = 7
BETA = 0.25
RHO_V = 0.25
GAMMA_SIGNS = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
KAPPA_MAJORITY = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.2])
KAPPA_VIOLATION_A = np.array([0.4, 0.4, 0.4, 0.0, 0.4, 0.4, 0.4])
ORACLE_CHUNK = 1 << 20


class UnknownScenarioError(InputError):
    """The requested design is not one of the supported scenarios."""

    code = "unknown_scenario"
    stage = "dgp"


def _binary_link(index: np.ndarray) -> np.ndarray:
    return expit(index)


def _quadratic_link(index: np.ndarray) -> np.ndarray:
    return index + index**2 / 3.0


_OUTCOME_LINKS: Dict[Scenario, Tuple[OutcomeKind, Callable[[np.ndarray], np.ndarray]]] = {
    Scenario.BINARY_I: (OutcomeKind.BINARY, _binary_link),
    Scenario.CONTINUOUS_II: (OutcomeKind.CONTINUOUS, _quadratic_link),
    Scenario.VIOLATION_A: (OutcomeKind.BINARY, _binary_link),
    Scenario.VIOLATION_B: (OutcomeKind.BINARY, _binary_link),
}


def _link_for(scenario: Scenario) -> Tuple[OutcomeKind, Callable[[np.ndarray], np.ndarray]]:
    try:
        return _OUTCOME_LINKS[Scenario(scenario)]
    except (KeyError, ValueError) as e:
        raise UnknownScenarioError(f"unknown scenario: {scenario!r}") from e


def scenario_params(spec: ScenarioSpec, replication: int = 0) -> StructuralParams:
    """True parameters of a scenario, with any overrides applied."""
    _link_for(spec.scenario)
    gamma = spec.c_gamma * GAMMA_SIGNS
    if spec.scenario == Scenario.VIOLATION_A:
        kappa = KAPPA_VIOLATION_A.copy()
    elif spec.scenario == Scenario.VIOLATION_B:
        xi_tilde = make_rng(spec.seed, StreamRole.DESIGN, replication).uniform(
            -1.0, 1.0, size=P_Z
        )
        kappa = xi_tilde * gamma
    else:
        kappa = KAPPA_MAJORITY.copy()
    eta = kappa.copy()
    beta, rho_v = BETA, RHO_V

    overrides = spec.overrides
    if overrides is not None:
        if overrides.beta is not None:
            beta = overrides.beta
        if overrides.gamma is not None:
            gamma = np.asarray(overrides.gamma, dtype=float)
        if overrides.kappa is not None:
            kappa = np.asarray(overrides.kappa, dtype=float)
        if overrides.eta is not None:
            eta = np.asarray(overrides.eta, dtype=float)
        if overrides.rho_v is not None:
            rho_v = overrides.rho_v
    return StructuralParams(beta=beta, kappa=kappa, eta=eta, gamma=gamma, rho_v=rho_v)


def _draw_z(rng: np.random.Generator, spec: ScenarioSpec, p: int) -> np.ndarray:
    if spec.z_dist == ZDistribution.UNIFORM:
        return rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, size=(spec.n, p))
    return rng.standard_normal(size=(spec.n, p))


def generate(
    spec: ScenarioSpec, replication: int = 0
) -> Tuple[Dataset, StructuralParams]:
    """Draw one dataset; identical (spec, replication) give identical data."""
    kind, link = _link_for(spec.scenario)
    params = scenario_params(spec, replication)
    rng = make_rng(spec.seed, StreamRole.DATA, replication)
    p = params.gamma.size

    z = _draw_z(rng, spec, p)
    v = rng.standard_normal(spec.n)
    xi = rng.standard_normal(spec.n)
    d = z @ params.gamma + v
    u = params.rho_v * v + z @ params.eta + xi
    index = d * params.beta + z @ params.kappa + u

    if kind == OutcomeKind.BINARY:
        y = (rng.uniform(size=spec.n) < link(index)).astype(np.int64)
    else:
        y = link(index)

    dataset = Dataset(y=y, d=d, W=z, p_z=p, outcome_kind=kind)
    logger.debug(
        "Generated dataset",
        extra={**spec.cell_key(), "replication": replication, "seed": spec.seed},
    )
    return dataset, params


def _oracle_means(
    spec: ScenarioSpec,
    levels: Tuple[float, ...],
    w: np.ndarray,
    n_mc: int,
    params: Optional[StructuralParams],
    seed: Optional[int],
) -> np.ndarray:
    _, link = _link_for(spec.scenario)
    if params is None:
        params = scenario_params(spec)
    w = np.asarray(w, dtype=float)
    if w.size != params.gamma.size:
        raise InputError(
            f"w has length {w.size}, the design has p = {params.gamma.size}",
            code="dimension_mismatch",
            stage="dgp",
        )
    rng = make_rng(spec.seed if seed is None else seed, StreamRole.ORACLE)
    offset = float(w @ params.kappa)
    confounding = float(w @ params.eta)
    totals = np.zeros(len(levels))
    remaining = int(n_mc)
    while remaining > 0:
        size = min(remaining, ORACLE_CHUNK)
        v = rng.standard_normal(size)
        xi = rng.standard_normal(size)
        u = params.rho_v * v + confounding + xi
        # common draws for every exposure level
        for k, level in enumerate(levels):
            totals[k] += link(level * params.beta + offset + u).sum()
        remaining -= size
    return totals / n_mc


def true_phi_oracle(
    spec: ScenarioSpec,
    d: float,
    w: np.ndarray,
    n_mc: int,
    params: Optional[StructuralParams] = None,
    seed: Optional[int] = None,
) -> float:
    """Monte Carlo value of phi*(d, w)."""
    return float(_oracle_means(spec, (d,), w, n_mc, params, seed)[0])


def true_cate_oracle(
    spec: ScenarioSpec,
    point: EvalPoint,
    n_mc: int,
    params: Optional[StructuralParams] = None,
    seed: Optional[int] = None,
) -> float:
    """
    Monte Carlo value of phi*(d, w) - phi*(d', w).

    Both terms share the same (v, xi) draws, so d == d' gives exactly 0.
    """
    if point.d == point.d_prime:
        _link_for(spec.scenario)
        return 0.0
    means = _oracle_means(spec, (point.d, point.d_prime), point.w, n_mc, params, seed)
    return float(means[0] - means[1])


def true_phi_curve(
    spec: ScenarioSpec,
    grid: np.ndarray,
    w: np.ndarray,
    n_mc: int,
    params: Optional[StructuralParams] = None,
) -> np.ndarray:
    """phi*(d, w) over a grid of exposure levels, one shared set of draws."""
    return _oracle_means(spec, tuple(float(g) for g in grid), w, n_mc, params, None)
