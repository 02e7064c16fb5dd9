"""Market parameters, HARA/log utility and survival laws.

The survival function ``Phi(t) = P(T > t)`` of the liquidation time enters
the HJB equation and the symmetry generators.  Its antiderivative is fixed
in the gauge ``F(t) = -int_t^inf Phi(s) ds`` so that ``F -> 0`` as
``t -> inf``.  All survival methods accept plain arrays or :class:`Dual`
objects, so exact time derivatives flow through residuals and generators.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Union

import numpy as np
from scipy import integrate

from . import duals
from .errors import DomainError, ParameterError

__all__ = [
    "ModelParams",
    "Exponential",
    "SuperExponential",
    "SurvivalFn",
    "benchmark_params",
    "hara_utility",
    "hara_marginal",
    "log_utility",
    "survival_eval",
    "survival_from_dict",
    "validate_params",
]


@dataclass(frozen=True)
class ModelParams:
    """Market, utility and liquidation parameters.

    Attributes
    ----------
    r : float
        Riskless rate.
    alpha : float
        Drift of the liquid risky asset.
    sigma : float
        Volatility of the liquid risky asset.
    mu : float
        Drift of the illiquid asset's paper value.
    delta : float
        Dividend rate paid by the illiquid asset.
    eta : float
        Volatility of the illiquid asset.
    rho : float
        Correlation between the two Brownian drivers.
    gamma : float
        HARA exponent, ``0 < gamma < 1``.
    kappa : float
        Exponential liquidation rate.
    d : float
        Scale of the exponential survival law ``d * exp(-kappa t)``.
    """

    r: float = 0.02
    alpha: float = 0.05
    sigma: float = 0.2
    mu: float = 0.03
    delta: float = 0.02
    eta: float = 0.3
    rho: float = 0.4
    gamma: float = 0.5
    kappa: float = 0.3
    d: float = 1.0

    def with_(self, **changes) -> "ModelParams":
        """Copy with some fields replaced."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @property
    def income_shift(self) -> float:
        """Present value per unit of h of the dividend stream, ``delta/(r-mu+delta)``."""
        return self.delta / (self.r - self.mu + self.delta)

    @property
    def merton_ratio(self) -> float:
        """Classical risky fraction ``(alpha-r)/(sigma^2 (1-gamma))``."""
        return (self.alpha - self.r) / (self.sigma**2 * (1.0 - self.gamma))


def benchmark_params() -> ModelParams:
    """The reference parameter set used throughout tests and demos."""
    return ModelParams()


def validate_params(p: ModelParams) -> list[str]:
    """List every violated parameter invariant (empty when valid)."""
    problems = []
    if not p.sigma > 0:
        problems.append("sigma ≤ 0")
    if not p.eta >= 0:
        problems.append("eta < 0")
    if not -1.0 < p.rho < 1.0:
        problems.append("rho out of (−1,1)")
    if not 0.0 < p.gamma < 1.0:
        problems.append("gamma out of (0,1)")
    if not p.alpha > p.r:
        problems.append("alpha ≤ r")
    if not p.r - p.mu + p.delta > 0:
        problems.append("r − mu + delta ≤ 0")
    if p.r - p.alpha + p.eta * p.rho * p.sigma == 0:
        problems.append("r − alpha + eta·rho·sigma = 0")
    if not p.kappa > 0:
        problems.append("kappa ≤ 0")
    if not p.d > 0:
        problems.append("d ≤ 0")
    return problems


# ---------------------------------------------------------------------------
# utilities


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")


def hara_utility(c, gamma: float):
    """HARA utility ``((1-gamma)/gamma) * ((c/(1-gamma))**gamma - 1)``.

    Tends to ``log(c)`` as ``gamma -> 0``.
    """
    _check_gamma(gamma)
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise DomainError("consumption must be positive")
    out = (1.0 - gamma) / gamma * np.expm1(gamma * np.log(c / (1.0 - gamma)))
    return out if out.ndim else float(out)


def hara_marginal(c, gamma: float):
    """First and second derivative of :func:`hara_utility` in ``c``."""
    c = np.asarray(c, dtype=float)
    x = c / (1.0 - gamma)
    return x ** (gamma - 1.0), -(x ** (gamma - 2.0))


def log_utility(c):
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise DomainError("consumption must be positive")
    out = np.log(c)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# survival laws


def _check_time(t) -> None:
    if np.any(np.asarray(duals.value_of(t)) < 0):
        raise DomainError("time must be non-negative")


@dataclass(frozen=True)
class Exponential:
    """Exponential survival ``Phi(t) = d * exp(-kappa t)``."""

    d: float = 1.0
    kappa: float = 0.3
    kind: str = "exponential"

    def __post_init__(self):
        if not (self.d > 0 and self.kappa > 0):
            raise ParameterError("Exponential survival needs d > 0 and kappa > 0")

    def log_value(self, t):
        return math.log(self.d) - self.kappa * t

    def value(self, t):
        return self.d * duals.exp(-self.kappa * t)

    def deriv(self, t):
        return -self.kappa * self.value(t)

    def antideriv(self, t):
        return -(self.d / self.kappa) * duals.exp(-self.kappa * t)

    def tail_ratio(self, t):
        """Mean residual life ``-F(t)/Phi(t)``."""
        return 1.0 / self.kappa + 0.0 * np.asarray(t, dtype=float)

    @property
    def is_exponential(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "kappa": self.kappa}


@dataclass(frozen=True)
class SuperExponential:
    """Gaussian-tilted survival ``Phi(t) = exp(-kappa t - eps t^2)``.

    Satisfies the exponential tail bound while ``Phi'/Phi`` is not constant.
    """

    kappa: float = 0.1
    eps: float = 0.01
    kind: str = "superexponential"

    def __post_init__(self):
        if not (self.kappa > 0 and self.eps > 0):
            raise ParameterError("SuperExponential survival needs kappa > 0 and eps > 0")

    def log_value(self, t):
        return -self.kappa * t - self.eps * t * t

    def value(self, t):
        return duals.exp(self.log_value(t))

    def deriv(self, t):
        return -(self.kappa + 2.0 * self.eps * t) * self.value(t)

    def antideriv(self, t):
        # int_t^inf exp(-k s - e s^2) ds = 0.5 sqrt(pi/e) erfcx(sqrt(e)(t + k/2e)) Phi(t)
        a = math.sqrt(self.eps)
        arg = a * (t + self.kappa / (2.0 * self.eps))
        return -0.5 * math.sqrt(math.pi) / a * duals.erfcx(arg) * self.value(t)

    def tail_ratio(self, t):
        """Mean residual life ``-F(t)/Phi(t)``, stable where ``Phi`` underflows."""
        a = math.sqrt(self.eps)
        return 0.5 * math.sqrt(math.pi) / a * duals.erfcx(a * (t + self.kappa / (2.0 * self.eps)))

    def antideriv_quad(self, t: float) -> float:
        """Adaptive-quadrature reference for :meth:`antideriv`."""
        val, _ = integrate.quad(lambda s: math.exp(-self.kappa * s - self.eps * s * s), t, np.inf,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        return -val

    @property
    def is_exponential(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa, "eps": self.eps}


SurvivalFn = Union[Exponential, SuperExponential]


def survival_eval(fn: SurvivalFn, t):
    """Return ``(Phi, Phi', F)`` at time(s) ``t >= 0``."""
    _check_time(t)
    return fn.value(t), fn.deriv(t), fn.antideriv(t)


def survival_from_dict(data: dict) -> SurvivalFn:
    kind = data.get("kind", "exponential")
    args = {k: float(v) for k, v in data.items() if k != "kind"}
    if kind == "exponential":
        return Exponential(**args)
    if kind == "superexponential":
        return SuperExponential(**args)
    raise ParameterError(f"unknown survival kind {kind!r}")

