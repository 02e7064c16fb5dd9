"""Invariant reductions of the maximized HJB equations.

Every case is an invariant substitution ``(t, l, h, V) -> (v, W)`` where the
reduced coordinates ``v`` are one or two subgroup invariants and the new
dependent variable is affine in ``V``::

    W = A(t, l, h) * V + B(t, l, h)

A case carries the typeset reduced equation (``printed``) and reduced
policy formulas as conformance fixtures.  The *derived* reduced residual is
obtained by rebuilding the full jet of ``V`` from a reduced jet with the
exact chain rule (:func:`pushforward_jet`) and evaluating the original
residual there.  Gauge coordinates (``h`` for ``(z, .)`` cases, ``t`` for
``(l, h)`` and ``(x, y)`` cases, both for ODE cases) fix the orbit
representative.

The derived residual equals ``lambda * (correct reduced equation)`` with
conformal factor ``lambda = 1/A`` at the base point.  :func:`verify_reduction`
fits ``lambda`` per base point and reports which reduced jet coordinates
carry printed-vs-derived discrepancies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import duals
from .duals import Dual, value_of
from .errors import DegenerateSubstitutionError, DomainError, NonConcaveJetError, ParameterError
from .jet_engine import JetPoint
from .model import Exponential, ModelParams, SuperExponential, SurvivalFn
from .pde import PDESpec, Policy, make_spec, policy, residual

__all__ = [
    "CASE_IDS",
    "ReducedJet",
    "ReductionCase",
    "VerificationReport",
    "get_case",
    "all_cases",
    "forward_map",
    "inverse_map",
    "pushforward_jet",
    "reduced_residual",
    "reduced_policy",
    "verify_reduction",
    "KNOWN_SUSPECTS",
    "ReducedOperator",
]

CASE_IDS = (
    "HARA_GEN_H3",
    "HARA_EXP_H2",
    "HARA_EXP_H4_RK",
    "HARA_EXP_H4_IG",
    "HARA_EXP_H4_GEN",
    "HARA_EXP_H5",
    "HARA_EXP_H7",
    "HARA_EXP_H8_ODE",
    "HARA_RES_H3",
    "HARA_RES_H4",
    "HARA_RES_H5",
    "HARA_RES_H6",
    "HARA_RES_H7",
    "HARA_RES_H11_ODE",
    "LOG_GEN_H1",
    "LOG_EXP_H2",
    "LOG_EXP_H4_RK",
    "LOG_EXP_H4_GEN",
    "LOG_EXP_H5",
    "LOG_EXP_H7",
    "LOG_EXP_H8_ODE",
)

# Terms the typeset equations are already suspected to get wrong.
KNOWN_SUSPECTS = {
    "HARA_RES_H11_ODE": {"Y_z", "Y_zz"},
    "LOG_GEN_H1": {"W_z", "W_zz"},
    "pi:HARA_EXP_H4_GEN": {"pi"},
}

_DEFAULT_CASE_PARAMS = {
    "HARA_GEN_H4": {"sign": 1},
    "HARA_EXP_H4_GEN": {"omega": 0.5},
    "HARA_EXP_H5": {"sign": 1},
    "HARA_EXP_H7": {"sign": 1},
    "HARA_RES_H4": {"sign": 1},
    "HARA_RES_H5": {"sign": 1},
    "HARA_RES_H6": {"omega": 2.0},
    "HARA_RES_H7": {"omega": 0.5, "sign": 1},
    "LOG_GEN_H1": {"beta": 0.0},
    "LOG_EXP_H4_GEN": {"omega": 0.5},
    "LOG_EXP_H5": {"sign": 1},
    "LOG_EXP_H7": {"sign": 1},
}


@dataclass(frozen=True)
class ReducedJet:
    """Reduced point and second-order jet of the reduced unknown.

    For ODE cases ``v = (z,)`` and only ``W`` (``Y``), ``W_1`` (``Y_z``)
    and ``W_11`` (``Y_zz``) are used.
    """

    v: tuple
    W: object
    W_1: object
    W_11: object
    W_2: object = 0.0
    W_12: object = 0.0
    W_22: object = 0.0

    def components(self, ode: bool) -> list:
        if ode:
            return [self.W, self.W_1, self.W_11]
        return [self.W, self.W_1, self.W_2, self.W_11, self.W_12, self.W_22]

    @classmethod
    def from_components(cls, v, comps, ode: bool) -> "ReducedJet":
        if ode:
            W, W1, W11 = comps
            return cls(tuple(v), W, W1, W11)
        W, W1, W2, W11, W12, W22 = comps
        return cls(tuple(v), W, W1, W11, W2, W12, W22)

    def seeded(self, ode: bool) -> "ReducedJet":
        comps = Dual.variables(self.components(ode), order=1)
        return ReducedJet.from_components(self.v, comps, ode)


@dataclass
class ReductionCase:
    """An invariant substitution bound to parameters and a survival law.

    Attributes
    ----------
    coords : callable
        ``(t, l, h) -> tuple`` of reduced independent variables (dual-capable).
    affine : callable
        ``(t, l, h) -> (A, B)`` with ``W = A V + B`` (dual-capable).
    base : callable
        ``(v, gauge) -> (t, l, h)`` inverse of ``coords`` on the gauge slice.
    printed : callable or None
        ``(rj, t, l, h) -> residual`` transcription of the typeset equation.
    printed_policy : callable or None
        ``(rj, t, l, h) -> Policy`` transcription of the typeset policies.
    """

    id: str
    spec: PDESpec
    case_params: dict
    var_names: tuple
    gauge_names: tuple
    coords: Callable
    affine: Callable
    base: Callable
    printed: Callable | None
    printed_policy: Callable | None
    boundary: str
    admissible: bool = True
    solver_enabled: bool = True
    notes: str = ""
    default_gauge: tuple = ()
    alt_gauge: tuple = ()

    @property
    def is_ode(self) -> bool:
        return len(self.var_names) == 1

    @property
    def jet_names(self) -> tuple:
        dep = "Y" if self.is_ode else "W"
        if self.is_ode:
            (a,) = self.var_names
            return (dep, f"{dep}_{a}", f"{dep}_{a}{a}")
        a, b = self.var_names
        return (dep, f"{dep}_{a}", f"{dep}_{b}", f"{dep}_{a}{a}", f"{dep}_{a}{b}", f"{dep}_{b}{b}")

    @property
    def label(self) -> str:
        extra = ",".join(f"{k}={v}" for k, v in self.case_params.items())
        return f"{self.id}({extra})" if extra else self.id

    def conformal_factor(self, t, l, h):
        """``lambda = 1/A`` relating derived and reduced residuals."""
        A, _ = self.affine(t, l, h)
        return 1.0 / A


# ---------------------------------------------------------------------------
# printed building blocks (kept close to the typeset layout)


def _exp(x):
    return duals.exp(x)


def _log(x):
    return duals.log(x)


def _pw(x, p):
    return x**p


def _z_linear(p: ModelParams, z, Wz, Wzz):
    """``1/2 eta^2 (2 z W_z + z^2 W_zz) + (r z + delta) W_z - (mu - delta) z W_z``."""
    return 0.5 * p.eta**2 * (2.0 * z * Wz + z * z * Wzz) + (p.r * z + p.delta) * Wz - (p.mu - p.delta) * z * Wz


def _z_merton(p: ModelParams, z, Wz, Wzz, g1=1.0, cross_inner=1.0, rho2_inner=1.0, rho2_sign=-1.0):
    """Typeset Merton block in ``(z, .)`` variables.

    ``-[(a^2 W_z^2 - 2 a eta rho W_z (g1 W_z + c z W_zz)) ] / (2 s^2 W_zz)
      + rho2_sign * eta^2 rho^2 s^2 (g1 W_z + q z W_zz)^2 / (2 s^2 W_zz)``
    """
    a = p.alpha - p.r
    s2 = p.sigma**2
    first = -(a * a * Wz * Wz - 2.0 * a * p.eta * p.rho * Wz * (g1 * Wz + cross_inner * z * Wzz)) / (2.0 * s2 * Wzz)
    inner = g1 * Wz + rho2_inner * z * Wzz
    second = rho2_sign * (p.eta * p.rho * p.sigma) ** 2 * inner * inner / (2.0 * s2 * Wzz)
    return first + second


def _xy_merton(p: ModelParams, y, Wx, Wxy, Wxx, cross_sign=1.0):
    a = p.alpha - p.r
    num = a * a * Wx * Wx + cross_sign * 2.0 * a * p.eta * p.rho * y * Wx * Wxy + (p.eta * p.rho * p.sigma) ** 2 * y * y * Wxy * Wxy
    return -num / (2.0 * p.sigma**2 * Wxx)


def _hara_src(p: ModelParams, Wz, pref=1.0):
    g = p.gamma
    return (1.0 - g) ** 2 / g * pref * _pw(Wz, -g / (1.0 - g))


def _pi_z(p: ModelParams, h, z, Wz, Wzz, g1=1.0, with_h=True):
    val = p.eta * p.rho / p.sigma * z + (p.eta * p.rho * p.sigma * g1 - p.alpha + p.r) / p.sigma**2 * Wz / Wzz
    return h * val if with_h else val


def _pi_xy(p: ModelParams, h, y, Wx, Wxy, Wxx):
    return -h * (p.eta * p.rho * p.sigma * Wxy + (p.alpha - p.r) / y * Wx) / (p.sigma**2 * Wxx)


def _pi_lh(p: ModelParams, h, Wl, Wlh, Wll):
    return -(p.eta * p.rho * p.sigma * h * Wlh + (p.alpha - p.r) * Wl) / (p.sigma**2 * Wll)


# ---------------------------------------------------------------------------
# case construction


def _spec_for(case_id: str, params: ModelParams, survival: SurvivalFn | None, cross_term: str) -> PDESpec:
    if case_id.startswith("HARA_GEN"):
        sid = "HARA_GENERAL"
    elif case_id.startswith("HARA_EXP"):
        sid = "HARA_EXP"
    elif case_id.startswith("HARA_RES"):
        sid = "HARA_EXP_RESONANT"
    elif case_id.startswith("LOG_GEN"):
        sid = "LOG_GENERAL"
    else:
        sid = "LOG_EXP"
    if sid in ("HARA_EXP", "LOG_EXP"):
        survival = Exponential(1.0, params.kappa)
    elif sid == "HARA_EXP_RESONANT":
        params = params.with_(kappa=params.r * params.gamma)
        survival = Exponential(1.0, params.kappa)
    elif survival is None:
        survival = Exponential(1.0, params.kappa)
    return make_spec(sid, params, survival, cross_term)


def get_case(case_id: str, params: ModelParams | None = None, survival: SurvivalFn | None = None,
             cross_term: str = "hjb", **case_params) -> ReductionCase:
    """Build a reduction case bound to parameters.

    Parameters
    ----------
    case_id : str
        One of :data:`CASE_IDS` or ``"HARA_GEN_H4"`` (inadmissible).
    params : ModelParams
    survival : survival law for the general-survival cases; exponential
        cases always use ``Exponential(1, kappa)``.
    cross_term : {"hjb", "printed"}
        Variant of the original equation the derived residual uses.
    **case_params
        ``omega``, ``sign`` (+1 selects the upper sign) or ``beta``.
    """
    if case_id not in CASE_IDS and case_id != "HARA_GEN_H4":
        raise ParameterError(f"unknown reduction case {case_id!r}")
    params = params or ModelParams()
    cp = dict(_DEFAULT_CASE_PARAMS.get(case_id, {}))
    unknown = set(case_params) - set(cp)
    if unknown:
        raise ParameterError(f"{case_id} takes no parameter(s) {sorted(unknown)}")
    cp.update(case_params)
    if "sign" in cp and cp["sign"] not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    spec = _spec_for(case_id, params, survival, cross_term)
    builder = _BUILDERS[case_id]
    return builder(spec, cp)


def all_cases(params: ModelParams | None = None, survival: SurvivalFn | None = None,
              cross_term: str = "hjb", both_signs: bool = False) -> list[ReductionCase]:
    """Every cataloged case with default parameters (optionally both signs)."""
    out = []
    for cid in CASE_IDS:
        cp = _DEFAULT_CASE_PARAMS.get(cid, {})
        if both_signs and "sign" in cp:
            for s in (1, -1):
                out.append(get_case(cid, params, survival, cross_term, sign=s))
        else:
            out.append(get_case(cid, params, survival, cross_term))
    return out


def _z_tau(a: float):
    """Coordinates ``(z, tau = a t - log h)`` and their inverse on an ``h`` gauge."""
    if a == 0:
        raise DegenerateSubstitutionError("tau = -log h is not independent of z under this gauge")

    def coords(t, l, h):
        return (l / h, a * t - _log(h))

    def base(v, gauge):
        z, tau = v
        (h,) = gauge
        h = np.asarray(h, float) + 0 * np.asarray(z, float)
        return (tau + np.log(h)) / a, z * h, h

    return coords, base


def _z_t():
    def coords(t, l, h):
        return (l / h, t)

    def base(v, gauge):
        z, t = v
        (h,) = gauge
        h = np.asarray(h, float) + 0 * np.asarray(z, float)
        return np.asarray(t, float) + 0 * h, z * h, h

    return coords, base


def _l_h():
    def coords(t, l, h):
        return (l, h)

    def base(v, gauge):
        l, h = v
        (t,) = gauge
        t = np.asarray(t, float) + 0 * np.asarray(l, float)
        return t, np.asarray(l, float) + 0 * t, np.asarray(h, float) + 0 * t

    return coords, base


def _x_y(r: float, shift: float):
    """``x = l e^{-rt} - shift t``, ``y = h e^{-rt}``."""

    def coords(t, l, h):
        e = _exp(-r * t)
        return (l * e - shift * t, h * e)

    def base(v, gauge):
        x, y = v
        (t,) = gauge
        t = np.asarray(t, float) + 0 * np.asarray(x, float)
        e = np.exp(r * t)
        return t, (x + shift * t) * e, y * e

    return coords, base


def _z_ode():
    def coords(t, l, h):
        return (l / h,)

    def base(v, gauge):
        (z,) = v
        h, t = gauge
        h = np.asarray(h, float) + 0 * np.asarray(z, float)
        return np.asarray(t, float) + 0 * h, z * h, h

    return coords, base


def _rj_z(rj):
    return rj.v[0], rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22


# --- HARA, general survival ------------------------------------------------


def _hara_gen_h3(spec, cp):
    p, S = spec.params, spec.survival
    g = p.gamma
    coords, base = _z_t()

    def affine(t, l, h):
        hg = h ** (-g)
        return hg, -(1.0 - g) / g * hg * S.antideriv(t)

    def printed(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        return (Wt + 0.5 * p.eta**2 * (g * (g - 1.0) * W - 2.0 * (g - 1.0) * z * Wz + z * z * Wzz)
                + (p.r * z + p.delta) * Wz + (p.mu - p.delta) * (W - z * Wz)
                + _z_merton(p, z, Wz, Wzz, g1=1.0 - g)
                + _hara_src(p, Wz, pref=_exp(S.log_value(t) / (1.0 - g))))

    def pol(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        pi = _pi_z(p, h, z, Wz, Wzz, g1=1.0 - g)
        c = h * (1.0 - g) * _pw(Wz, -1.0 / (1.0 - g)) * _exp(S.log_value(t) / (1.0 - g))
        return Policy(pi, c)

    return ReductionCase("HARA_GEN_H3", spec, cp, ("z", "t"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as t -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_gen_h4(spec, cp):
    p = spec.params
    sgn = cp["sign"]

    def coords(t, l, h):
        return (t, h)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, -sgn * _exp(-p.r * t) * l

    def base(v, gauge):
        t, h = v
        (l,) = gauge
        return np.asarray(t, float), np.asarray(l, float) + 0 * np.asarray(t, float), np.asarray(h, float)

    return ReductionCase("HARA_GEN_H4", spec, cp, ("t", "h"), ("l",), coords, affine, base, None, None,
                         "value linear in l: not concave", admissible=False, solver_enabled=False,
                         default_gauge=(1.0,), alt_gauge=(2.5,))


# --- HARA, exponential survival ----------------------------------------------


def _cH(p):
    return (1.0 - p.gamma) / (p.gamma * p.kappa)


def _hara_exp_h2(spec, cp):
    p = spec.params
    g, k = p.gamma, p.kappa
    coords, base = _z_tau(k / g)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, _cH(p) * _exp(-k * t)

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return (k / g * Wtau + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz)
                + _hara_src(p, Wz, pref=_exp(-g / (1.0 - g) * tau)))

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz),
                      h * (1.0 - g) * _pw(Wz, -1.0 / (1.0 - g)) * _exp(-g * tau / (1.0 - g)))

    return ReductionCase("HARA_EXP_H2", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as tau -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_exp_h4_rk(spec, cp):
    p = spec.params
    g, k = p.gamma, p.kappa
    coords, base = _l_h()

    def affine(t, l, h):
        return _exp(k * t) + 0.0 * l, 0.0 * l

    def printed(rj, t, l, h):
        (l, hh), W, Wl, Wh, Wll, Wlh, Whh = rj.v, rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22
        return (-k * W + 0.5 * p.eta**2 * hh * hh * Whh + (p.r * l + p.delta * hh) * Wl + (p.mu - p.delta) * hh * Wh
                + _xy_merton(p, hh, Wl, Wlh, Wll) + _hara_src(p, Wl) - (1.0 - g) / g)

    def pol(rj, t, l, h):
        hh = rj.v[1]
        return Policy(_pi_lh(p, hh, rj.W_1, rj.W_12, rj.W_11), (1.0 - g) * _pw(rj.W_1, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_EXP_H4_RK", spec, cp, ("l", "h"), ("t",), coords, affine, base, printed, pol,
                         "V = exp(-kappa t) W -> 0 for finite W", default_gauge=(0.0,), alt_gauge=(0.7,))


def _hara_exp_h4_ig(spec, cp):
    p = spec.params
    g, k = p.gamma, p.kappa
    coords, base = _z_t()

    def affine(t, l, h):
        hg = h ** (-g)
        return hg, _cH(p) * hg * _exp(-k * t)

    def printed(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        tt = rj.v[1]
        return (Wt + 0.5 * p.eta**2 * (g * (g - 1.0) * W - 2.0 * (g - 1.0) * z * Wz + z * z * Wzz)
                + (p.r * z + p.delta) * Wz + (p.mu - p.delta) * (W - z * Wz)
                + _z_merton(p, z, Wz, Wzz, g1=1.0 - g)
                + _hara_src(p, Wz, pref=_exp(-k * tt / (1.0 - g))))

    def pol(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        tt = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz, g1=1.0 - g),
                      h * (1.0 - g) * _exp(-k * tt / (1.0 - g)) * _pw(Wz, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_EXP_H4_IG", spec, cp, ("z", "t"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as t -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_exp_h4_gen(spec, cp):
    p = spec.params
    g, k, r = p.gamma, p.kappa, p.r
    w = float(cp["omega"])
    if abs(w - r / k) < 1e-12 or abs(w - 1.0 / g) < 1e-12:
        raise ParameterError("HARA_EXP_H4_GEN requires omega != r/kappa and omega != 1/gamma")
    a = (r - w * k) / (1.0 - w * g)
    b = (k - r * g) / (1.0 - w * g)
    coords, base = _z_tau(a)

    def affine(t, l, h):
        return _exp(b * t) + 0.0 * l, _cH(p) * _exp(g * (w * k - r) / (1.0 - w * g) * t) + 0.0 * l

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        return (-b * W + a * Wtau + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz) + _hara_src(p, Wz))

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz, with_h=False),
                      (1.0 - g) * h * _exp(-g * tau / (1.0 - g)) * _pw(Wz, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_EXP_H4_GEN", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as tau -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_exp_h5(spec, cp):
    p = spec.params
    g, k, r = p.gamma, p.kappa, p.r
    s = cp["sign"]
    kk = k - r * g
    coords, base = _x_y(r, s * kk)

    def affine(t, l, h):
        return _exp(kk * t) + 0.0 * l, -_cH(p) * _exp(-r * g * t) + 0.0 * l

    def printed(rj, t, l, h):
        (x, y), W, Wx, Wy, Wxx, Wxy, Wyy = rj.v, rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22
        return (-kk * W + 0.5 * p.eta**2 * y * y * Wyy + (p.delta * y - s * kk) * Wx + (p.mu - p.delta) * y * Wy
                + _xy_merton(p, y, Wx, Wxy, Wxx) + _hara_src(p, Wx))

    def pol(rj, t, l, h):
        y = rj.v[1]
        return Policy(_pi_xy(p, h, y, rj.W_1, rj.W_12, rj.W_11),
                      h * (1.0 - g) / y * _pw(rj.W_1, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_EXP_H5", spec, cp, ("x", "y"), ("t",), coords, affine, base, printed, pol,
                         "W(x, 0) -> 0 as x -> -/+inf", default_gauge=(0.0,), alt_gauge=(0.7,))


def _hara_exp_h7(spec, cp):
    p = spec.params
    g, k, r = p.gamma, p.kappa, p.r
    s = cp["sign"]
    kk = k - r * g
    coords, base = _z_tau(k / g)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, s * kk / g * t + _cH(p) * _exp(-k * t) + 0.0 * l

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return (k / g * Wtau + s * kk / g + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz)
                + _hara_src(p, Wz, pref=_exp(-g / (1.0 - g) * tau)))

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz),
                      (1.0 - g) * h * _pw(Wz, -1.0 / (1.0 - g)) * _exp(-g / (1.0 - g) * tau))

    return ReductionCase("HARA_EXP_H7", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as tau -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_exp_h8(spec, cp):
    p = spec.params
    g, k = p.gamma, p.kappa
    coords, base = _z_ode()

    def affine(t, l, h):
        hg = h ** (-g)
        return _exp(k * t) * hg, _cH(p) * hg

    def printed(rj, t, l, h):
        z, Y, Yz, Yzz = rj.v[0], rj.W, rj.W_1, rj.W_11
        return -k * Y + _z_linear(p, z, Yz, Yzz) + _z_merton(p, z, Yz, Yzz) + _hara_src(p, Yz)

    def pol(rj, t, l, h):
        z, Yz, Yzz = rj.v[0], rj.W_1, rj.W_11
        return Policy(_pi_z(p, h, z, Yz, Yzz), h * (1.0 - g) * _pw(Yz, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_EXP_H8_ODE", spec, cp, ("z",), ("h", "t"), coords, affine, base, printed, pol,
                         "V -> 0 as t -> inf for bounded Y", default_gauge=(1.0, 0.0), alt_gauge=(2.5, 0.7))


# --- HARA, resonant kappa = r gamma --------------------------------------------


def _cR(p):
    return (1.0 - p.gamma) / (p.r * p.gamma**2)


def _hara_res_h3(spec, cp):
    p = spec.params
    g, r = p.gamma, p.r
    coords, base = _z_tau(r)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, _cR(p) * _exp(-r * g * t) + 0.0 * l

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return (r * Wtau + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz)
                + _hara_src(p, Wz, pref=_exp(-g / (1.0 - g) * tau)))

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz),
                      h * (1.0 - g) * _pw(Wz, -1.0 / (1.0 - g)) * _exp(-g / (1.0 - g) * tau))

    return ReductionCase("HARA_RES_H3", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as tau -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_res_h4(spec, cp):
    p = spec.params
    g, r = p.gamma, p.r
    s = cp["sign"]
    coords, base = _x_y(r, s * r)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, _cR(p) * _exp(-r * g * t) + 0.0 * l

    def printed(rj, t, l, h):
        (x, y), W, Wx, Wy, Wxx, Wxy, Wyy = rj.v, rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22
        return (-s * r * Wx + p.delta * y * Wx + (p.mu - p.delta) * y * Wy + 0.5 * p.eta**2 * y * y * Wyy
                + _xy_merton(p, y, Wx, Wxy, Wxx, cross_sign=-1.0) + _hara_src(p, Wx))

    def pol(rj, t, l, h):
        y = rj.v[1]
        return Policy(_pi_xy(p, h, y, rj.W_1, rj.W_12, rj.W_11),
                      h * (1.0 - g) / y * _pw(rj.W_1, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_RES_H4", spec, cp, ("x", "y"), ("t",), coords, affine, base, printed, pol,
                         "W(x, 0) -> 0 as x -> -/+inf", default_gauge=(0.0,), alt_gauge=(0.7,))


def _hara_res_h5(spec, cp):
    p = spec.params
    g, r = p.gamma, p.r
    s = cp["sign"]
    coords, base = _z_tau(r)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, -s * r * t + _cR(p) * _exp(-r * g * t) + 0.0 * l

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return (r * Wtau + s * r + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz)
                + _hara_src(p, Wz, pref=_exp(-g / (1.0 - g) * tau)))

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz),
                      h * (1.0 - g) * _pw(Wz, -1.0 / (1.0 - g)) * _exp(-g / (1.0 - g) * tau))

    return ReductionCase("HARA_RES_H5", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as tau -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_res_h6(spec, cp):
    p = spec.params
    g, r = p.gamma, p.r
    w = float(cp["omega"])
    if abs(w - 1.0) < 1e-12:
        raise ParameterError("HARA_RES_H6 requires omega != 1")
    a = r * w / (w - 1.0)
    coords, base = _z_tau(a)

    def affine(t, l, h):
        return _exp(-r * g / (w - 1.0) * t) + 0.0 * l, _cR(p) * _exp(-w * r * g / (w - 1.0) * t) + 0.0 * l

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return (r * g / (w - 1.0) * W + a * Wtau + _z_linear(p, z, Wz, Wzz)
                + _z_merton(p, z, Wz, Wzz, rho2_sign=+1.0)
                + _hara_src(p, Wz, pref=_exp(-g / (1.0 - g) * tau)))

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return Policy(_pi_z(p, h, z, Wz, Wzz),
                      h * (1.0 - g) * _exp(-g / (1.0 - g) * tau) * _pw(Wz, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_RES_H6", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as tau -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _hara_res_h7(spec, cp):
    p = spec.params
    g, r = p.gamma, p.r
    w = float(cp["omega"])
    s = cp["sign"]
    if w == 0:
        raise ParameterError("HARA_RES_H7 requires omega != 0")
    coords, base = _x_y(r, r / w)

    def affine(t, l, h):
        return 1.0 + 0.0 * l, -s * r / w * t + _cR(p) * _exp(-r * g * t) + 0.0 * l

    def printed(rj, t, l, h):
        (x, y), W, Wx, Wy, Wxx, Wxy, Wyy = rj.v, rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22
        return (s * r / w - r / w * Wx + 0.5 * p.eta**2 * y * y * Wyy + p.delta * y * Wx + (p.mu - p.delta) * y * Wy
                + _xy_merton(p, y, Wx, Wxy, Wxx, cross_sign=-1.0) + _hara_src(p, Wx))

    def pol(rj, t, l, h):
        y = rj.v[1]
        return Policy(_pi_xy(p, h, y, rj.W_1, rj.W_12, rj.W_11),
                      h * (1.0 - g) / y * _pw(rj.W_1, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_RES_H7", spec, cp, ("x", "y"), ("t",), coords, affine, base, printed, pol,
                         "W(x, 0) -> 0 as x -> -/+inf", default_gauge=(0.0,), alt_gauge=(0.7,))


def _hara_res_h11(spec, cp):
    p = spec.params
    g, r = p.gamma, p.r
    coords, base = _z_ode()

    def affine(t, l, h):
        hg = h ** (-g)
        return _exp(g * r * t) * hg, _cR(p) * hg

    def printed(rj, t, l, h):
        z, Y, Yz, Yzz = rj.v[0], rj.W, rj.W_1, rj.W_11
        return (-r * g * Y + _z_linear(p, z, Yz, Yzz) + _z_merton(p, z, Yz, Yzz, rho2_inner=-1.0)
                + _hara_src(p, Yz))

    def pol(rj, t, l, h):
        z, Yz, Yzz = rj.v[0], rj.W_1, rj.W_11
        return Policy(_pi_z(p, h, z, Yz, Yzz), h * (1.0 - g) * _pw(Yz, -1.0 / (1.0 - g)))

    return ReductionCase("HARA_RES_H11_ODE", spec, cp, ("z",), ("h", "t"), coords, affine, base, printed, pol,
                         "V -> 0 as t -> inf for bounded Y", default_gauge=(1.0, 0.0), alt_gauge=(2.5, 0.7))


# --- log utility -------------------------------------------------------------------


def _log_gen_h1(spec, cp):
    p, S = spec.params, spec.survival
    beta = float(cp["beta"])
    tb = math.tan(beta)
    coords, base = _z_t()
    drift = 0.5 * p.eta**2 - p.mu + p.delta

    def affine(t, l, h):
        return 1.0 + 0.0 * l, _log(h) * (tb + S.antideriv(t))

    def printed(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        tt = rj.v[1]
        phi = S.value(tt)
        return (Wt + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz, rho2_inner=-1.0)
                - phi * _log(Wz) - drift * S.antideriv(tt) + phi * (S.log_value(tt) - 1.0) - drift * tb)

    def pol(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        return Policy(_pi_z(p, h, z, Wz, Wzz), h * S.value(rj.v[1]) / Wz)

    return ReductionCase("LOG_GEN_H1", spec, cp, ("z", "t"), ("h",), coords, affine, base, printed, pol,
                         "V -> 0 as t -> inf only for beta = 0", solver_enabled=(beta == 0.0),
                         default_gauge=(1.0,), alt_gauge=(2.5,))


def _log_exp_h2(spec, cp):
    p = spec.params
    k = p.kappa
    coords, base = _z_t()

    def affine(t, l, h):
        return k * _exp(k * t) + 0.0 * l, -_log(h) + 0.0 * t

    def printed(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        return (Wt - k * W + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz) - k * _log(Wz)
                - (0.5 * p.eta**2 - p.mu + p.delta) + k * (math.log(k) - 1.0))

    def pol(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        return Policy(_pi_z(p, h, z, Wz, Wzz), h * k / Wz)

    return ReductionCase("LOG_EXP_H2", spec, cp, ("z", "t"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as t -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _log_exp_h4_rk(spec, cp):
    p = spec.params
    k = p.kappa
    coords, base = _l_h()

    def affine(t, l, h):
        return _exp(k * t) + 0.0 * l, 0.0 * l

    def printed(rj, t, l, h):
        (l, hh), W, Wl, Wh, Wll, Wlh, Whh = rj.v, rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22
        return (-k * W + 0.5 * p.eta**2 * hh * hh * Whh + (p.r * l + p.delta * hh) * Wl + (p.mu - p.delta) * hh * Wh
                + _xy_merton(p, hh, Wl, Wlh, Wll) - (_log(Wl) + 1.0))

    def pol(rj, t, l, h):
        hh = rj.v[1]
        # the typeset consumption reads h*kappa/W_z with z undefined here; W_l is substituted
        return Policy(_pi_lh(p, hh, rj.W_1, rj.W_12, rj.W_11), hh * k / rj.W_1)

    return ReductionCase("LOG_EXP_H4_RK", spec, cp, ("l", "h"), ("t",), coords, affine, base, printed, pol,
                         "V = exp(-kappa t) W -> 0 for finite W", default_gauge=(0.0,), alt_gauge=(0.7,))


def _log_exp_h4_gen(spec, cp):
    p = spec.params
    k, r = p.kappa, p.r
    w = float(cp["omega"])
    if abs(w - r / k) < 1e-12:
        raise ParameterError("LOG_EXP_H4_GEN requires omega != r/kappa")
    a = r - k * w
    coords, base = _z_tau(a)

    def affine(t, l, h):
        return _exp(k * t) + 0.0 * l, (w - r / k) * t + 0.0 * l

    def printed(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        tau = rj.v[1]
        return (a * Wtau - k * W + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz)
                - _log(Wz) - tau - w + r / k - 1.0)

    def pol(rj, t, l, h):
        z, W, Wz, Wtau, Wzz, _, _ = _rj_z(rj)
        return Policy(_pi_z(p, h, z, Wz, Wzz), h * k / Wz)

    return ReductionCase("LOG_EXP_H4_GEN", spec, cp, ("z", "tau"), ("h",), coords, affine, base, printed, pol,
                         "W -> 0 as t -> inf", default_gauge=(1.0,), alt_gauge=(2.5,))


def _log_exp_h5(spec, cp):
    p = spec.params
    k, r = p.kappa, p.r
    s = cp["sign"]
    coords, base = _x_y(r, s * k)

    def affine(t, l, h):
        return _exp(k * t) + 0.0 * l, r / k * t + 0.0 * l

    def printed(rj, t, l, h):
        (x, y), W, Wx, Wy, Wxx, Wxy, Wyy = rj.v, rj.W, rj.W_1, rj.W_2, rj.W_11, rj.W_12, rj.W_22
        # the typeset diffusion coefficient reads tau^2; y^2 is the only variable available
        return (s * k * Wx - k * W + 0.5 * p.eta**2 * y * y * Wyy + p.delta * y * Wx + (p.mu - p.delta) * y * Wy
                + _xy_merton(p, y, Wx, Wxy, Wxx) - _log(Wx) + r / k - 1.0)

    def pol(rj, t, l, h):
        y = rj.v[1]
        return Policy(_pi_xy(p, h, y, rj.W_1, rj.W_12, rj.W_11), h / rj.W_1)

    return ReductionCase("LOG_EXP_H5", spec, cp, ("x", "y"), ("t",), coords, affine, base, printed, pol,
                         "W(x, 0) -> 0 as x -> -/+inf", default_gauge=(0.0,), alt_gauge=(0.7,))


def _log_exp_h7(spec, cp):
    p = spec.params
    k = p.kappa
    s = cp["sign"]
    coords, base = _z_t()

    def affine(t, l, h):
        return 1.0 + 0.0 * l, -(_exp(-k * t) / k - s) * _log(h)

    def printed(rj, t, l, h):
        z, W, Wz, Wt, Wzz, _, _ = _rj_z(rj)
        tt = rj.v[1]
        return (Wt + _z_linear(p, z, Wz, Wzz) + _z_merton(p, z, Wz, Wzz, rho2_inner=-1.0)
                - _exp(-k * tt) * (_log(Wz) - 0.5 * p.eta**2 - p.mu + p.delta))

    return ReductionCase("LOG_EXP_H7", spec, cp, ("z", "t"), ("h",), coords, affine, base, printed, None,
                         "violates V -> 0", solver_enabled=False, default_gauge=(1.0,), alt_gauge=(2.5,))


def _log_exp_h8(spec, cp):
    p = spec.params
    k = p.kappa
    coords, base = _z_ode()

    def affine(t, l, h):
        return k * _exp(k * t) + 0.0 * l, -_log(h) + 0.0 * t

    def printed(rj, t, l, h):
        z, Y, Yz, Yzz = rj.v[0], rj.W, rj.W_1, rj.W_11
        return (Y + _z_linear(p, z, Yz, Yzz) + _z_merton(p, z, Yz, Yzz, rho2_inner=-1.0)
                - _log(Yz) + math.log(k) - 1.0)

    def pol(rj, t, l, h):
        z, Yz, Yzz = rj.v[0], rj.W_1, rj.W_11
        return Policy(_pi_z(p, h, z, Yz, Yzz), h * k * k / Yz)

    return ReductionCase("LOG_EXP_H8_ODE", spec, cp, ("z",), ("h", "t"), coords, affine, base, printed, pol,
                         "V -> 0 as t -> inf for bounded Y", default_gauge=(1.0, 0.0), alt_gauge=(2.5, 0.7))


_BUILDERS = {
    "HARA_GEN_H3": _hara_gen_h3,
    "HARA_GEN_H4": _hara_gen_h4,
    "HARA_EXP_H2": _hara_exp_h2,
    "HARA_EXP_H4_RK": _hara_exp_h4_rk,
    "HARA_EXP_H4_IG": _hara_exp_h4_ig,
    "HARA_EXP_H4_GEN": _hara_exp_h4_gen,
    "HARA_EXP_H5": _hara_exp_h5,
    "HARA_EXP_H7": _hara_exp_h7,
    "HARA_EXP_H8_ODE": _hara_exp_h8,
    "HARA_RES_H3": _hara_res_h3,
    "HARA_RES_H4": _hara_res_h4,
    "HARA_RES_H5": _hara_res_h5,
    "HARA_RES_H6": _hara_res_h6,
    "HARA_RES_H7": _hara_res_h7,
    "HARA_RES_H11_ODE": _hara_res_h11,
    "LOG_GEN_H1": _log_gen_h1,
    "LOG_EXP_H2": _log_exp_h2,
    "LOG_EXP_H4_RK": _log_exp_h4_rk,
    "LOG_EXP_H4_GEN": _log_exp_h4_gen,
    "LOG_EXP_H5": _log_exp_h5,
    "LOG_EXP_H7": _log_exp_h7,
    "LOG_EXP_H8_ODE": _log_exp_h8,
}


# ---------------------------------------------------------------------------
# maps


def forward_map(case: ReductionCase, t, l, h, V) -> tuple:
    """Reduced point ``(v..., W)`` of the original point(s)."""
    if np.any(np.asarray(value_of(h)) <= 0):
        raise DomainError("h must be positive")
    v = case.coords(t, l, h)
    A, B = case.affine(t, l, h)
    return tuple(v) + (A * V + B,)


def inverse_map(case: ReductionCase, v, W, gauge=None) -> tuple:
    """Original ``(t, l, h, V)`` from a reduced point and gauge value(s)."""
    gauge = case.default_gauge if gauge is None else tuple(gauge)
    t, l, h = case.base(tuple(v), gauge)
    A, B = case.affine(t, l, h)
    return t, l, h, (W - B) / A


def _jet_basis(case: ReductionCase, t, l, h) -> np.ndarray:
    """Coefficients of the full jet as an affine function of the reduced jet.

    Returns an array ``K`` of shape ``(1 + ncomp, 10) + batch`` so that the
    jet entries ``(V, V_t, V_l, V_h, V_ll, V_lh, V_hh, V_tt, V_tl, V_th)``
    equal ``K[0] + sum_c comp_c * K[1 + c]``.
    """
    x = Dual.variables([t, l, h], order=2)
    v = case.coords(*x)
    v0 = [value_of(vi) for vi in v]
    A, B = case.affine(*x)
    if not isinstance(A, Dual):
        A = Dual.constant(A, x[0])
    if not isinstance(B, Dual):
        B = Dual.constant(B, x[0])
    if np.any(np.abs(A.val) == 0):
        raise DegenerateSubstitutionError("A = 0 in W = A V + B")
    d = [vi - v0i for vi, v0i in zip(v, v0)]
    for i, di in enumerate(d):
        if not isinstance(di, Dual):
            d[i] = Dual.constant(di, x[0])
    # Jacobian check: reduced coordinates must be independent
    J = np.stack([di.grad for di in d], axis=-2)  # (..., nv, 3)
    s = np.linalg.svd(J, compute_uv=False)
    if np.any(s[..., -1] < 1e-12):
        raise DegenerateSubstitutionError("reduced coordinates are not independent")
    invA = A.reciprocal()
    if len(d) == 1:
        funcs = [-(B * invA), invA, d[0] * invA, 0.5 * d[0] * d[0] * invA]
    else:
        d1, d2 = d
        funcs = [-(B * invA), invA, d1 * invA, d2 * invA, 0.5 * d1 * d1 * invA, d1 * d2 * invA,
                 0.5 * d2 * d2 * invA]
    out = []
    for f in funcs:
        g, H = f.grad, f.hess
        out.append([f.val, g[..., 0], g[..., 1], g[..., 2], H[..., 1, 1], H[..., 1, 2], H[..., 2, 2],
                    H[..., 0, 0], H[..., 0, 1], H[..., 0, 2]])
    return np.array(out)


def pushforward_jet(case: ReductionCase, rj: ReducedJet, gauge=None) -> JetPoint:
    """Full jet of ``V`` reconstructed from a reduced jet by the chain rule."""
    gauge = case.default_gauge if gauge is None else tuple(gauge)
    t, l, h = case.base(tuple(np.asarray(vi, float) for vi in rj.v), gauge)
    K = _jet_basis(case, t, l, h)
    comps = rj.components(case.is_ode)
    vals = []
    for k in range(10):
        acc = K[0, k]
        for c, comp in enumerate(comps):
            acc = comp * K[1 + c, k] + acc
        vals.append(acc)
    V, Vt, Vl, Vh, Vll, Vlh, Vhh, Vtt, Vtl, Vth = vals
    return JetPoint(t, l, h, V, Vt, Vl, Vh, Vll, Vlh, Vhh, Vtt, Vtl, Vth)


def reduced_residual(case: ReductionCase, rj: ReducedJet, which: str = "printed", gauge=None):
    """Printed or derived reduced residual.

    ``derived`` is ``residual(spec, pushforward_jet(rj, gauge)) / lambda``
    with ``lambda = 1/A`` at the base point.
    """
    gauge = case.default_gauge if gauge is None else tuple(gauge)
    t, l, h = case.base(tuple(np.asarray(vi, float) for vi in rj.v), gauge)
    if which == "printed":
        if case.printed is None:
            raise ParameterError(f"{case.id} has no printed reduced equation")
        W11 = np.asarray(value_of(rj.W_11))
        if np.any(W11 == 0):
            raise ZeroDivisionError("second derivative vanishes")
        return case.printed(rj, t, l, h)
    if which == "derived":
        j = pushforward_jet(case, rj, gauge)
        return residual(case.spec, j) / case.conformal_factor(t, l, h)
    raise ParameterError("which must be 'printed' or 'derived'")


def reduced_policy(case: ReductionCase, rj: ReducedJet, gauge=None, which: str = "printed") -> Policy:
    """Policy from the typeset reduced formulas (or via the pushforward)."""
    if np.any(np.asarray(value_of(rj.W_11)) >= 0):
        raise NonConcaveJetError("reduced jet must be concave in its first variable")
    gauge = case.default_gauge if gauge is None else tuple(gauge)
    t, l, h = case.base(tuple(np.asarray(vi, float) for vi in rj.v), gauge)
    if which == "derived":
        return policy(case.spec, pushforward_jet(case, rj, gauge))
    if case.printed_policy is None:
        raise ParameterError(f"{case.id}: policy path disabled")
    return case.printed_policy(rj, t, l, h)


# ---------------------------------------------------------------------------
# verification

_BOX = {"t": (0.0, 3.0), "l": (0.5, 5.0), "h": (0.5, 5.0)}


def _sample_reduced_points(case: ReductionCase, n: int, rng) -> tuple:
    """Reduced base points drawn from physical points on the default gauge."""
    t = rng.uniform(*_BOX["t"], n)
    l = rng.uniform(*_BOX["l"], n)
    h = rng.uniform(*_BOX["h"], n)
    g = case.default_gauge
    if case.gauge_names == ("h",):
        h = np.full(n, g[0])
    elif case.gauge_names == ("t",):
        t = np.full(n, g[0])
    elif case.gauge_names == ("h", "t"):
        h, t = np.full(n, g[0]), np.full(n, g[1])
    else:
        l = np.full(n, g[0])
    return tuple(np.asarray(value_of(c), float) for c in case.coords(t, l, h))


def _sample_reduced_jets(case: ReductionCase, v, rng) -> ReducedJet:
    n = np.size(v[0])
    W = rng.uniform(-1.0, 1.0, n)
    W1 = rng.uniform(0.05, 2.0, n)
    W11 = rng.uniform(-2.0, -0.05, n)
    if case.is_ode:
        return ReducedJet(v, W, W1, W11)
    return ReducedJet(v, W, W1, W11, rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(-1, 1, n))


@dataclass
class VerificationReport:
    """Outcome of :func:`verify_reduction`.

    Attributes
    ----------
    max_defect : float
        ``max |printed - lambda_fit * derived|`` over all sampled jets.
    lambda_model_defect : float
        Max relative deviation of the fitted ``lambda`` from ``1/A``.
    gauge_defect : float
        Max change of ``derived / lambda`` between two gauges.
    flags : list of str
        Reduced jet coordinates with printed-vs-derived coefficient gaps.
    term_diffs : dict
        Max absolute coefficient gap per reduced jet coordinate.
    policy_defect : dict
        Max relative gap of printed vs derived ``pi`` and ``c``.
    """

    case: str
    n: int
    max_defect: float
    lambda_fit: dict
    lambda_model_defect: float
    gauge_defect: float
    flags: list
    term_diffs: dict
    policy_defect: dict = field(default_factory=dict)
    policy_flags: list = field(default_factory=list)
    inconclusive: bool = False

    @property
    def passed(self) -> bool:
        return self.max_defect <= 1e-8 and not self.inconclusive

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "n": self.n,
            "max_defect": self.max_defect,
            "lambda_fit": self.lambda_fit,
            "lambda_model_defect": self.lambda_model_defect,
            "gauge_defect": self.gauge_defect,
            "flags": self.flags,
            "term_diffs": self.term_diffs,
            "policy_defect": self.policy_defect,
            "policy_flags": self.policy_flags,
            "inconclusive": self.inconclusive,
            "passed": self.passed,
        }


def verify_reduction(case: ReductionCase, n: int = 500, rng=None, jets_per_point: int = 3,
                     term_tol: float = 1e-6) -> VerificationReport:
    """Certify a printed reduced equation against the original PDE.

    For each of ``n`` base points, ``jets_per_point`` reduced jets are drawn;
    ``lambda`` is fitted by least squares (printed = lambda * derived) and the
    worst residual of the fit is the proportionality defect.  Coefficient
    gaps ``d(printed - derived/A)/d(jet coordinate)`` above ``term_tol`` are
    reported as flags.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if case.printed is None:
        raise ParameterError(f"{case.id} has no printed equation to verify")
    rng = np.random.default_rng(rng)
    v = _sample_reduced_points(case, n, rng)
    P, D = [], []
    for _ in range(jets_per_point):
        rj = _sample_reduced_jets(case, v, rng)
        P.append(np.asarray(reduced_residual(case, rj, "printed")))
        j = pushforward_jet(case, rj)
        D.append(np.asarray(residual(case.spec, j)))
    P, D = np.array(P), np.array(D)
    denom = np.sum(D * D, axis=0)
    inconclusive = bool(np.any(denom < 1e-24))
    lam = np.sum(P * D, axis=0) / np.where(denom > 0, denom, 1.0)
    defect = float(np.max(np.abs(P - lam * D)))
    t, l, h = case.base(v, case.default_gauge)
    lam_model = np.asarray(value_of(case.conformal_factor(t, l, h)), float) * np.ones(n)
    lam_dev = float(np.max(np.abs(1.0 / lam - lam_model) / np.abs(lam_model)))

    # gauge independence of derived / lambda
    rj = _sample_reduced_jets(case, v, rng)
    d1 = np.asarray(reduced_residual(case, rj, "derived", case.default_gauge))
    d2 = np.asarray(reduced_residual(case, rj, "derived", case.alt_gauge))
    gauge_defect = float(np.max(np.abs(d1 - d2)))

    # per-term coefficient gaps using the model conformal factor
    rjs = rj.seeded(case.is_ode)
    pr = reduced_residual(case, rjs, "printed")
    dr = reduced_residual(case, rjs, "derived")
    diff = pr - dr
    names = case.jet_names
    term_diffs = {nm: float(np.max(np.abs(diff.grad[..., i]))) for i, nm in enumerate(names)}
    flags = [nm for nm in names if term_diffs[nm] > term_tol]
    offset = float(np.max(np.abs(diff.val)))
    term_diffs["offset"] = offset
    if not flags and offset > term_tol:
        flags.append("offset")

    pol_def, pol_flags = {}, []
    if case.printed_policy is not None:
        rjp = _sample_reduced_jets(case, v, rng)
        for gauge in (case.default_gauge, case.alt_gauge):
            a = reduced_policy(case, rjp, gauge, "printed")
            b = reduced_policy(case, rjp, gauge, "derived")
            for key in ("pi", "c"):
                x, y = np.asarray(getattr(a, key)), np.asarray(getattr(b, key))
                rel = float(np.max(np.abs(x - y) / np.maximum(np.abs(y), 1e-12)))
                pol_def[key] = max(pol_def.get(key, 0.0), rel)
        pol_flags = [k for k, d in pol_def.items() if d > 1e-9]

    lam_summary = {
        "min": float(np.min(lam)),
        "max": float(np.max(lam)),
        "model": "1/A(t,l,h) at the base point",
    }
    return VerificationReport(case.label, n, defect, lam_summary, lam_dev, gauge_defect, flags, term_diffs,
                              pol_def, pol_flags, inconclusive)


class ReducedOperator:
    """Derived reduced residual at fixed base points, with the chain-rule basis cached.

    Calling the operator with reduced jet components (plain arrays or
    first-order duals) returns ``residual(spec, pushforward) / lambda``.
    Used by the solvers, where the base points stay fixed across Newton
    iterations.
    """

    def __init__(self, case: ReductionCase, v, gauge=None):
        self.case = case
        self.v = tuple(np.asarray(vi, float) for vi in v)
        self.gauge = case.default_gauge if gauge is None else tuple(gauge)
        self.t, self.l, self.h = case.base(self.v, self.gauge)
        self.K = _jet_basis(case, self.t, self.l, self.h)
        self.lam = np.asarray(value_of(case.conformal_factor(self.t, self.l, self.h)), float)

    def jet(self, comps) -> JetPoint:
        vals = []
        for k in range(10):
            acc = self.K[0, k]
            for c, comp in enumerate(comps):
                acc = comp * self.K[1 + c, k] + acc
            vals.append(acc)
        return JetPoint(self.t, self.l, self.h, *vals)

    def __call__(self, comps):
        return residual(self.case.spec, self.jet(comps)) / self.lam

    def policy(self, comps) -> Policy:
        return policy(self.case.spec, self.jet(comps))
