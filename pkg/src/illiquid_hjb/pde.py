"""Maximized HJB equations for HARA and log utility.

The residual is the left side of the maximized equation with unit
coefficient on ``V_t``::

    V_t + 1/2 eta^2 h^2 V_hh + (r l + delta h) V_l + (mu - delta) h V_h
        - [(alpha-r)^2 V_l^2 + 2 (alpha-r) eta rho sigma h V_l V_lh
           + eta^2 rho^2 sigma^2 h^2 V_lh^2] / (2 sigma^2 V_ll)
        + S(t, V_l) = 0

with source ``S = (1-g)^2/g Phi^(1/(1-g)) V_l^(-g/(1-g)) - (1-g)/g Phi``
(HARA) or ``S = -Phi (log V_l - log Phi + 1)`` (log).

``cross_term="printed"`` drops the factor ``sigma`` from the mixed term,
reproducing the typeset equation; the default keeps it, which is the form
obtained by maximizing ``G[pi]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import duals
from .duals import Dual, value_of
from .errors import DomainError, NonConcaveJetError, ParameterError, SingularJetError
from .jet_engine import JET, JetPoint
from .model import Exponential, ModelParams, SurvivalFn, hara_marginal, validate_params

__all__ = [
    "SPEC_IDS",
    "PDESpec",
    "Policy",
    "make_spec",
    "residual",
    "residual_partials",
    "solve_for_vt",
    "policy",
    "first_order_check",
    "G_functional",
    "H_functional",
    "assembled_hjb",
]

SPEC_IDS = ("HARA_GENERAL", "HARA_EXP", "HARA_EXP_RESONANT", "LOG_GENERAL", "LOG_EXP")


@dataclass(frozen=True)
class PDESpec:
    """One of the five maximized HJB variants.

    Attributes
    ----------
    id : str
        One of :data:`SPEC_IDS`.
    params : ModelParams
    survival : Exponential or SuperExponential
    cross_term : {"hjb", "printed"}
        Whether the mixed term carries the factor ``sigma``.
    """

    id: str
    params: ModelParams
    survival: SurvivalFn
    cross_term: Literal["hjb", "printed"] = "hjb"

    def __post_init__(self):
        if self.id not in SPEC_IDS:
            raise ParameterError(f"unknown spec id {self.id!r}")
        if self.id in ("HARA_EXP", "HARA_EXP_RESONANT", "LOG_EXP") and not self.survival.is_exponential:
            raise ParameterError(f"{self.id} requires exponential survival")
        if self.id == "HARA_EXP_RESONANT":
            p = self.params
            if abs(self.survival.kappa - p.r * p.gamma) > 1e-14:
                raise ParameterError("HARA_EXP_RESONANT requires kappa = r*gamma")
        if self.cross_term not in ("hjb", "printed"):
            raise ParameterError("cross_term must be 'hjb' or 'printed'")

    @property
    def is_log(self) -> bool:
        return self.id.startswith("LOG")

    @property
    def is_exponential(self) -> bool:
        return self.id in ("HARA_EXP", "HARA_EXP_RESONANT", "LOG_EXP")

    @property
    def kappa(self) -> float:
        """Liquidation rate of the survival law."""
        return self.survival.kappa


def make_spec(spec_id: str, params: ModelParams | None = None, survival: SurvivalFn | None = None,
              cross_term: str = "hjb") -> PDESpec:
    """Build a spec, defaulting survival to ``Exponential(d, kappa)`` from params.

    For ``HARA_EXP_RESONANT`` the survival rate is set to ``r*gamma``.
    """
    params = params or ModelParams()
    bad = validate_params(params)
    if bad:
        raise ParameterError("; ".join(bad))
    if survival is None:
        kappa = params.r * params.gamma if spec_id == "HARA_EXP_RESONANT" else params.kappa
        survival = Exponential(params.d, kappa)
        if spec_id == "HARA_EXP_RESONANT":
            params = params.with_(kappa=kappa)
    return PDESpec(spec_id, params, survival, cross_term)


@dataclass(frozen=True)
class Policy:
    """Cash held in the risky asset and consumption rate."""

    pi: object
    c: object


def _check_jet(j: JetPoint) -> None:
    Vll = np.asarray(value_of(j.V_ll))
    Vl = np.asarray(value_of(j.V_l))
    if np.any(Vll == 0):
        raise SingularJetError("V_ll = 0: maximized equation is singular")
    if np.any(Vl <= 0):
        raise DomainError("V_l must be positive")


def _linear_part(spec: PDESpec, j: JetPoint):
    p = spec.params
    return (
        j.V_t
        + 0.5 * p.eta**2 * j.h * j.h * j.V_hh
        + (p.r * j.l + p.delta * j.h) * j.V_l
        + (p.mu - p.delta) * j.h * j.V_h
    )


def _merton_term(spec: PDESpec, j: JetPoint):
    p = spec.params
    a = p.alpha - p.r
    cross_sigma = p.sigma if spec.cross_term == "hjb" else 1.0
    num = (
        a * a * j.V_l * j.V_l
        + 2.0 * a * p.eta * p.rho * cross_sigma * j.h * j.V_l * j.V_lh
        + (p.eta * p.rho * p.sigma) ** 2 * j.h * j.h * j.V_lh * j.V_lh
    )
    return num / (2.0 * p.sigma**2 * j.V_ll)


def _source(spec: PDESpec, j: JetPoint):
    p = spec.params
    phi = spec.survival.value(j.t)
    if spec.is_log:
        return -phi * (duals.log(j.V_l) - spec.survival.log_value(j.t) + 1.0)
    g = p.gamma
    q = 1.0 / (1.0 - g)
    # Phi^(1/(1-g)) V_l^(-g/(1-g)) computed in log space for stability
    core = duals.exp(q * spec.survival.log_value(j.t) - g * q * duals.log(j.V_l))
    return (1.0 - g) ** 2 / g * core - (1.0 - g) / g * phi


def residual(spec: PDESpec, j: JetPoint):
    """Left side of the maximized PDE at jet(s) ``j``.

    Raises
    ------
    SingularJetError
        If ``V_ll = 0``.
    DomainError
        If ``V_l <= 0``.
    """
    _check_jet(j)
    return _linear_part(spec, j) - _merton_term(spec, j) + _source(spec, j)


def residual_partials(spec: PDESpec, j: JetPoint) -> tuple[np.ndarray, np.ndarray]:
    """Residual value and its gradient in the ten jet coordinates of :data:`JET`."""
    d = residual(spec, j.seeded(order=1))
    return d.val, d.grad


def solve_for_vt(spec: PDESpec, j: JetPoint):
    """The ``V_t`` that puts ``j`` on the solution manifold."""
    r0 = residual(spec, j.replace(V_t=0.0 * np.asarray(value_of(j.V_l))))
    return -r0


def policy(spec: PDESpec, j: JetPoint) -> Policy:
    """Optimal allocation and consumption implied by the jet."""
    if np.any(np.asarray(value_of(j.V_ll)) >= 0):
        raise NonConcaveJetError("policy needs V_ll < 0")
    if np.any(np.asarray(value_of(j.V_l)) <= 0):
        raise DomainError("V_l must be positive")
    p = spec.params
    pi = -(p.eta * p.rho * p.sigma * j.h * j.V_lh + (p.alpha - p.r) * j.V_l) / (p.sigma**2 * j.V_ll)
    phi = spec.survival.value(j.t)
    if spec.is_log:
        c = phi / j.V_l
    else:
        g = p.gamma
        c = (1.0 - g) * duals.exp((spec.survival.log_value(j.t) - duals.log(j.V_l)) / (1.0 - g))
    return Policy(pi, c)


def G_functional(spec: PDESpec, j: JetPoint, pi):
    """``G[pi] = 1/2 V_ll pi^2 sigma^2 + V_lh eta rho pi sigma h + pi (alpha-r) V_l``."""
    p = spec.params
    return (0.5 * j.V_ll * pi * pi * p.sigma**2 + j.V_lh * p.eta * p.rho * pi * p.sigma * j.h
            + pi * (p.alpha - p.r) * j.V_l)


def _utility(spec: PDESpec, c):
    if spec.is_log:
        return np.log(c)
    g = spec.params.gamma
    return (1.0 - g) / g * np.expm1(g * np.log(c / (1.0 - g)))


def H_functional(spec: PDESpec, j: JetPoint, c):
    """``H[c] = -c V_l + Phi(t) U(c)``."""
    return -c * j.V_l + spec.survival.value(j.t) * _utility(spec, c)


def assembled_hjb(spec: PDESpec, j: JetPoint):
    """The pre-maximization equation evaluated at the optimal controls."""
    pol = policy(spec, j)
    p = spec.params
    lin = (j.V_t + 0.5 * p.eta**2 * j.h**2 * j.V_hh + (p.r * j.l + p.delta * j.h) * j.V_l
           + (p.mu - p.delta) * j.h * j.V_h)
    return lin + G_functional(spec, j, pol.pi) + H_functional(spec, j, pol.c)


def first_order_check(spec: PDESpec, j: JetPoint) -> tuple[float, float]:
    """Stationarity defects of ``G`` and ``H`` at the closed-form controls.

    Also asserts strict concavity, ``dG^2/dpi^2 = sigma^2 V_ll < 0`` and
    ``d^2H/dc^2 = Phi U''(c) < 0``.
    """
    pol = policy(spec, j)
    p = spec.params
    dG = j.V_ll * pol.pi * p.sigma**2 + j.V_lh * p.eta * p.rho * p.sigma * j.h + (p.alpha - p.r) * j.V_l
    phi = spec.survival.value(j.t)
    if spec.is_log:
        u1, u2 = 1.0 / pol.c, -1.0 / pol.c**2
    else:
        u1, u2 = hara_marginal(pol.c, p.gamma)
    dH = -j.V_l + phi * u1
    if np.any(p.sigma**2 * np.asarray(j.V_ll) >= 0) or np.any(phi * u2 >= 0):
        raise NonConcaveJetError("second-order condition fails")
    return float(np.max(np.abs(dG))), float(np.max(np.abs(dH)))


JET_NAMES = JET
