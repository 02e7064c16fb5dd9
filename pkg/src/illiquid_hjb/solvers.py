"""Finite-difference solvers for the reduced equations.

The ODE and parabolic solvers discretize the *derived* reduced residual
(the original equation pushed through the invariant map), so they solve the
correct reduced problem whatever typos the typeset forms contain.

Grids are uniform in ``s = log z``; with ``Y_z = Y_s / z`` and
``Y_zz = (Y_ss - Y_s) / z^2`` central differences are second order in
``ds``.  Boundary closures:

* right: Dirichlet from the Merton asymptote, ``Y = A_M (z + s)^gamma`` for
  HARA and ``Y = log(z + s) + C`` for log utility;
* left: income-shifted Robin condition ``(z0 + s) Y_z = gamma Y`` (HARA) or
  ``(z0 + s) Y_z = a`` (log), with ``s = delta / (r - mu + delta)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .duals import Dual
from .errors import ExtrapolationError, NonConvergenceError, ParameterError, UnsupportedExtensionError
from .model import ModelParams, SurvivalFn
from .pde import Policy
from .reductions import ReducedJet, ReducedOperator, ReductionCase, get_case

__all__ = [
    "Grid1D",
    "Grid2D",
    "merton_constant",
    "merton_constant_closed_form",
    "log_merton_constant",
    "merton_time_factor",
    "log_general_asymptote",
    "merton_value",
    "solve_ode",
    "solve_pde2d",
    "reconstruct_value",
    "write_csv",
    "ODE_CASES",
    "PDE_CASES",
]

ODE_CASES = ("HARA_EXP_H8_ODE", "HARA_RES_H11_ODE", "LOG_EXP_H8_ODE")
PDE_CASES = ("HARA_EXP_H2", "HARA_RES_H3", "HARA_GEN_H3", "LOG_EXP_H2", "LOG_GEN_H1")


# ---------------------------------------------------------------------------
# Merton oracles


def _effective_discount(p: ModelParams) -> float:
    g = p.gamma
    return p.kappa - p.r * g - g * (p.alpha - p.r) ** 2 / (2.0 * p.sigma**2 * (1.0 - g))


def merton_constant_closed_form(p: ModelParams) -> float:
    """``A_M = (1-g)^(2(1-g)) / (g K^(1-g))`` with ``K`` the effective discount."""
    K = _effective_discount(p)
    if K <= 0:
        raise ParameterError("no finite value: kappa <= r*gamma + gamma (alpha-r)^2 / (2 sigma^2 (1-gamma))")
    g = p.gamma
    return (1.0 - g) ** (2.0 * (1.0 - g)) / (g * K ** (1.0 - g))


def merton_constant(p: ModelParams) -> float:
    """Classical Merton constant by bracketed root finding.

    Solves ``A K = ((1-g)^2/g) (g A)^(-g/(1-g))`` for ``A > 0``, which makes
    ``V = exp(-kappa t) (A l^g - (1-g)/(g kappa))`` solve the frictionless
    equation.
    """
    K = _effective_discount(p)
    if K <= 0:
        raise ParameterError("no finite value: kappa <= r*gamma + gamma (alpha-r)^2 / (2 sigma^2 (1-gamma))")
    g = p.gamma
    q = g / (1.0 - g)

    # log form is monotone in log A
    def f(x):
        return math.log(K) + x - math.log((1.0 - g) ** 2 / g) + q * (math.log(g) + x)

    x = optimize.brentq(f, -200.0, 200.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(x)


def log_merton_constant(p: ModelParams) -> float:
    """``C`` in ``V = exp(-kappa t) (log(l + s h) + C) / kappa`` for log utility."""
    return (p.r + (p.alpha - p.r) ** 2 / (2.0 * p.sigma**2)) / p.kappa + math.log(p.kappa) - 1.0


def merton_time_factor(p: ModelParams, survival: SurvivalFn, t) -> np.ndarray:
    """``g(t)`` with ``V = g(t) (l + s h)^gamma + (1-gamma)/gamma F(t)`` for general survival.

    ``g = u^(1-g)``, ``u(t) = K0/(1-g) int_t^inf Phi(s)^(1/(1-g)) e^{nu (s-t)/(1-g)} ds``.
    """
    g = p.gamma
    nu = p.r * g + g * (p.alpha - p.r) ** 2 / (2.0 * p.sigma**2 * (1.0 - g))
    K0 = (1.0 - g) ** 2 / g * g ** (-g / (1.0 - g))
    out = []
    for ti in np.atleast_1d(np.asarray(t, float)):
        # Phi(t) factored out so the quadrature is relative to O(1) values
        lt = survival.log_value(ti)
        f = lambda s: math.exp((survival.log_value(s) - lt + nu * (s - ti)) / (1.0 - g))  # noqa: E731
        val, _ = integrate.quad(f, ti, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
        out.append((K0 / (1.0 - g) * val) ** (1.0 - g) * math.exp(lt))
    out = np.array(out)
    return out if np.ndim(t) else float(out[0])


def log_general_asymptote(p: ModelParams, survival: SurvivalFn, t) -> tuple:
    """``(A(t), B(t))`` with ``V = A log(l + s h) + B`` for log utility and general survival."""
    m = p.r + (p.alpha - p.r) ** 2 / (2.0 * p.sigma**2)

    def integrand(s):
        # with a = -F = ratio * Phi the integrand is Phi (m ratio - log ratio - 1)
        q = float(survival.tail_ratio(s))
        return math.exp(survival.log_value(s)) * (m * q - math.log(q) - 1.0)

    A, B = [], []
    for ti in np.atleast_1d(np.asarray(t, float)):
        A.append(-float(survival.antideriv(ti)))
        val, _ = integrate.quad(integrand, ti, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
        B.append(val)
    A, B = np.array(A), np.array(B)
    if np.ndim(t):
        return A, B
    return float(A[0]), float(B[0])


def merton_value(p: ModelParams, t, l, h, log: bool = False):
    """Frictionless benchmark value with the illiquid holding capitalized at ``s h``."""
    s = p.income_shift
    w = l + s * h
    if log:
        return np.exp(-p.kappa * t) * (np.log(w) + log_merton_constant(p)) / p.kappa
    A = merton_constant(p)
    return np.exp(-p.kappa * t) * (A * w**p.gamma - (1.0 - p.gamma) / (p.gamma * p.kappa))


# ---------------------------------------------------------------------------
# grid containers


@dataclass
class Grid1D:
    """Converged (or last) iterate of an ODE solve.

    Attributes
    ----------
    z, Y, Y_z, Y_zz : ndarray
        Nodes and nodal values with finite-difference derivatives.
    iterations : int
    residual_norm : float
        Infinity norm of the discrete residual; convergence means every row
        is below ``max(tol, rounding floor)`` where the row floor is
        ``16 eps`` times that row of ``|J| |Y|``.
    """

    case_id: str
    z: np.ndarray
    Y: np.ndarray
    Y_z: np.ndarray
    Y_zz: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    params: ModelParams
    meta: dict = field(default_factory=dict)

    def interior(self) -> slice:
        return slice(1, len(self.z) - 1)

    def is_concave(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.Y_zz[self.interior()] < -tol))

    def interpolate(self, z) -> tuple:
        """``(Y, Y_z, Y_zz)`` by cubic interpolation in ``log z``."""
        z = np.asarray(z, float)
        if np.any(z < self.z[0] * (1 - 1e-12)) or np.any(z > self.z[-1] * (1 + 1e-12)):
            raise ExtrapolationError(f"z outside solved domain [{self.z[0]}, {self.z[-1]}]")
        s = np.log(self.z)
        x = np.log(z)
        return tuple(CubicSpline(s, a)(x) for a in (self.Y, self.Y_z, self.Y_zz))

    def to_rows(self) -> tuple[list, list]:
        return ["z", "Y", "Y_z", "Y_zz"], list(zip(self.z, self.Y, self.Y_z, self.Y_zz))

    def metadata(self) -> dict:
        return {
            "case": self.case_id,
            "n": int(len(self.z)),
            "z0": float(self.z[0]),
            "z1": float(self.z[-1]),
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "params": self.params.to_dict(),
            **self.meta,
        }


@dataclass
class Grid2D:
    """Marched solution on a ``(y, z)`` tensor grid, ``y`` being ``t`` or ``tau``."""

    case_id: str
    z: np.ndarray
    y: np.ndarray
    W: np.ndarray  # shape (len(y), len(z))
    y_name: str
    steps: int
    max_step_residual: float
    params: ModelParams
    meta: dict = field(default_factory=dict)

    def derivatives(self, j: int) -> tuple:
        return _fd_derivs(self.z, self.W[j])

    def is_concave(self, tol: float = 0.0) -> bool:
        return all(bool(np.all(self.derivatives(j)[1][1:-1] < -tol)) for j in range(len(self.y)))

    def interpolate(self, z, y) -> tuple:
        """``(W, W_z, W_y, W_zz)``: cubic in ``log z``, linear in ``y``."""
        z = np.atleast_1d(np.asarray(z, float))
        y = np.atleast_1d(np.asarray(y, float))
        ylo, yhi = self.y.min(), self.y.max()
        if (np.any(z < self.z[0] * (1 - 1e-12)) or np.any(z > self.z[-1] * (1 + 1e-12))
                or np.any(y < ylo - 1e-12) or np.any(y > yhi + 1e-12)):
            raise ExtrapolationError("point outside solved domain")
        order = np.argsort(self.y)
        ys = self.y[order]
        s = np.log(self.z)
        x = np.log(z)
        vals = []
        for jj in order:
            Wz, Wzz = self.derivatives(jj)
            vals.append([CubicSpline(s, a)(x) for a in (self.W[jj], Wz, Wzz)])
        vals = np.array(vals)  # (m, 3, k)
        k = np.clip(np.searchsorted(ys, y) - 1, 0, len(ys) - 2)
        w = (y - ys[k]) / (ys[k + 1] - ys[k])
        idx = np.arange(len(z))
        lo, hi = vals[k, :, idx], vals[k + 1, :, idx]
        out = (1 - w)[:, None] * lo + w[:, None] * hi
        Wy = (hi[:, 0] - lo[:, 0]) / (ys[k + 1] - ys[k])
        return out[:, 0], out[:, 1], Wy, out[:, 2]

    def to_rows(self) -> tuple[list, list]:
        rows = []
        for j, yj in enumerate(self.y):
            Wz, Wzz = self.derivatives(j)
            rows.extend(zip(self.z, np.full_like(self.z, yj), self.W[j], Wz, Wzz))
        return ["z", self.y_name, "W", "W_z", "W_zz"], rows

    def metadata(self) -> dict:
        return {
            "case": self.case_id,
            "n": int(len(self.z)),
            "m": int(len(self.y) - 1),
            "y_name": self.y_name,
            "steps": self.steps,
            "max_step_residual": self.max_step_residual,
            "params": self.params.to_dict(),
            **self.meta,
        }


def write_csv(path, header: list, rows) -> None:
    """CSV with one header row and 17-significant-digit round-trip floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(x):.17g}" for x in row])


def write_json(path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# discretization


def _log_grid(z0: float, z1: float, n: int) -> tuple[np.ndarray, float]:
    if not (z0 > 0 and z1 > z0):
        raise ParameterError("need 0 < z0 < z1")
    s = np.linspace(math.log(z0), math.log(z1), n)
    return np.exp(s), s[1] - s[0]


def _fd_derivs(z: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal ``Y_z`` and ``Y_zz`` on a uniform ``log z`` grid (one-sided at the ends)."""
    s = np.log(z)
    ds = s[1] - s[0]
    Ys = np.empty_like(Y)
    Yss = np.empty_like(Y)
    Ys[1:-1] = (Y[2:] - Y[:-2]) / (2 * ds)
    Yss[1:-1] = (Y[2:] - 2 * Y[1:-1] + Y[:-2]) / ds**2
    Ys[0] = (-3 * Y[0] + 4 * Y[1] - Y[2]) / (2 * ds)
    Ys[-1] = (3 * Y[-1] - 4 * Y[-2] + Y[-3]) / (2 * ds)
    Yss[0] = (2 * Y[0] - 5 * Y[1] + 4 * Y[2] - Y[3]) / ds**2
    Yss[-1] = (2 * Y[-1] - 5 * Y[-2] + 4 * Y[-3] - Y[-4]) / ds**2
    return Ys / z, (Yss - Ys) / z**2


def _interior_jet(z, ds, Y):
    """Interior ``(Y, Y_z, Y_zz)`` from central differences."""
    zi = z[1:-1]
    Ys = (Y[2:] - Y[:-2]) / (2 * ds)
    Yss = (Y[2:] - 2 * Y[1:-1] + Y[:-2]) / ds**2
    return Y[1:-1], Ys / zi, (Yss - Ys) / zi**2


def _stencil(z, ds):
    """Coefficients of ``Y_z`` and ``Y_zz`` on ``(i-1, i, i+1)`` for interior nodes."""
    zi = z[1:-1]
    cz = np.stack([-1 / (2 * ds) / zi, 0 * zi, 1 / (2 * ds) / zi])
    czz = np.stack([(1 / ds**2 + 1 / (2 * ds)) / zi**2, -2 / ds**2 / zi**2, (1 / ds**2 - 1 / (2 * ds)) / zi**2])
    return cz, czz


def _is_log(case: ReductionCase) -> bool:
    return case.spec.is_log


class _Closure:
    """Asymptotic Dirichlet data and Robin data ``(z0 + s) W_z = a W + b`` for a case."""

    def __init__(self, case: ReductionCase, survival=None):
        p = case.spec.params
        self.case = case
        self.p = p
        self.s = p.income_shift
        cid = case.id
        self.gamma = p.gamma
        if cid in ("HARA_RES_H11_ODE", "HARA_RES_H3"):
            merton_constant(p)  # raises: kappa = r*gamma leaves no finite value
        if cid in ("HARA_EXP_H8_ODE", "HARA_EXP_H2"):
            self.A = merton_constant(p)
        elif cid in ("LOG_EXP_H8_ODE", "LOG_EXP_H2"):
            self.C = log_merton_constant(p)
        elif cid == "HARA_GEN_H3":
            self.surv = case.spec.survival
        elif cid == "LOG_GEN_H1":
            self.surv = case.spec.survival
        else:
            raise ParameterError(f"no solver closure for {cid}")

    def dirichlet(self, z, y=None):
        cid, s, g = self.case.id, self.s, self.gamma
        if cid == "HARA_EXP_H8_ODE":
            return self.A * (z + s) ** g
        if cid == "HARA_EXP_H2":
            return math.exp(-g * y) * self.A * (z + s) ** g
        if cid in ("LOG_EXP_H8_ODE", "LOG_EXP_H2"):
            return np.log(z + s) + self.C
        if cid == "HARA_GEN_H3":
            return merton_time_factor(self.p, self.surv, y) * (z + s) ** g
        A, B = log_general_asymptote(self.p, self.surv, y)
        return A * np.log(z + s) + B

    def robin(self, y=None) -> tuple[float, float]:
        cid = self.case.id
        if not _is_log(self.case):
            return self.gamma, 0.0
        if cid == "LOG_GEN_H1":
            return 0.0, -float(self.surv.antideriv(y))
        return 0.0, 1.0


def _newton(F, J, x0, tol, max_iter, accept, label):
    """Damped Newton with Armijo backtracking on ``||F||_2``.

    ``J(x)`` returns the banded Jacobian ``(ab, (l, u))``; ``accept(x)``
    rejects iterates that leave the admissible (concave, increasing) set.
    """
    x = x0.copy()
    r = F(x)
    history = [float(np.max(np.abs(r)))]
    it = 0
    floor = 0.0
    while True:
        ab, lu = J(x)
        floor = _rounding_floor(ab, lu, x)
        if np.all(np.abs(r) <= np.maximum(tol, floor)):
            break
        if it >= max_iter:
            raise NonConvergenceError(f"{label}: Newton stagnated after {it} damped iterations",
                                      last_iterate=x, history=history)
        try:
            dx = solve_banded(lu, ab, -r)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonConvergenceError(f"{label}: singular Jacobian ({exc})", last_iterate=x, history=history)
        f0 = float(np.sum(r * r))
        lam = 1.0
        while True:
            xn = x + lam * dx
            ok = accept(xn)
            if ok:
                try:
                    rn = F(xn)
                    ok = np.all(np.isfinite(rn))
                except (ArithmeticError, ValueError):
                    ok = False
            if ok and float(np.sum(rn * rn)) <= (1.0 - 1e-4 * lam) * f0:
                break
            lam *= 0.5
            if lam < 1e-10:
                raise NonConvergenceError(f"{label}: line search failed", last_iterate=x, history=history)
        x, r = xn, rn
        history.append(float(np.max(np.abs(r))))
        it += 1
    return x, r, it, history, float(np.max(floor))


def _rounding_floor(ab, lu, x) -> np.ndarray:
    """Per-row smallest residual resolvable in double precision, ``16 eps sum_k |J_ik x_k|``."""
    lo, up = lu
    n = len(x)
    acc = np.zeros(n)
    for row in range(ab.shape[0]):
        off = up - row  # column offset k - i
        i0, i1 = max(0, -off), min(n, n - off)
        acc[i0:i1] += np.abs(ab[row, i0 + off:i1 + off]) * np.abs(x[i0 + off:i1 + off])
    return 16 * np.finfo(float).eps * acc


# ---------------------------------------------------------------------------
# ODE


def _income_condition(case: ReductionCase, z0: float) -> tuple[float, float, float]:
    """Coefficients of ``V_l = Phi U'(delta)`` at ``(t, l, h) = (0, z0, 1)`` in ``(Y, Y_z)``."""
    p = case.spec.params
    if p.delta <= 0:
        raise ParameterError("the income closure needs delta > 0")
    op = ReducedOperator(case, (np.array([z0]),), case.default_gauge)
    # V_l is affine in the reduced jet; read off its coefficients
    f = [float(np.asarray(op.jet([np.array([y]), np.array([yz]), np.array([-1.0])]).V_l)[0])
         for y, yz in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))]
    phi = float(case.spec.survival.value(0.0))
    target = phi / p.delta if _is_log(case) else phi * (p.delta / (1.0 - p.gamma)) ** (p.gamma - 1.0)
    return f[1] - f[0], f[2] - f[0], f[0] - target


def _check_d(p: ModelParams) -> None:
    if p.d != 1.0:
        raise ParameterError("the reduced equations assume unit survival scale d = 1")


def solve_ode(case_id: str, params: ModelParams | None = None, z0: float = 0.1, z1: float = 10.0,
              n: int = 512, tol: float = 1e-10, max_iter: int = 200, shift_scale: float = 1.0,
              left_bc: str = "robin") -> Grid1D:
    """Solve a reduced ODE on ``[z0, z1]`` with ``n`` log-spaced nodes.

    Parameters
    ----------
    case_id : one of :data:`ODE_CASES`
    shift_scale : float
        Multiplies the income shift in the left Robin condition (robustness
        studies only).
    left_bc : {"robin", "income"}
        ``"robin"`` is the income-shifted Merton closure. ``"income"`` is the
        state-constraint alternative: at ``z0`` consumption equals the
        dividend, ``c = delta h``, so liquid wealth cannot be run down.

    Raises
    ------
    ParameterError
        Resonant case (no finite Merton value) or invalid domain.
    NonConvergenceError
        Newton stagnation; the last iterate is attached.
    """
    if case_id not in ODE_CASES:
        raise ParameterError(f"{case_id} is not an ODE case")
    if n < 64:
        raise ParameterError("n must be at least 64")
    params = params or ModelParams()
    _check_d(params)
    case = get_case(case_id, params)
    clo = _Closure(case)
    z, ds = _log_grid(z0, z1, n)
    op = ReducedOperator(case, (z[1:-1],), case.default_gauge)
    cz, czz = _stencil(z, ds)
    sl = clo.s * shift_scale
    yR = float(clo.dirichlet(z1))
    # left condition cy Y + cz Y_z + c0 = 0, Y_z from the one-sided stencil
    if left_bc == "robin":
        a, b = clo.robin()
        cy, cz0, c0 = -a, z[0] + sl, -b
    elif left_bc == "income":
        cy, cz0, c0 = _income_condition(case, z[0])
        sl = 0.0
    else:
        raise ParameterError("left_bc must be 'robin' or 'income'")

    def F(Y):
        Yi, Yz, Yzz = _interior_jet(z, ds, Y)
        out = np.empty(n)
        out[1:-1] = op([Yi, Yz, Yzz])
        Yz0 = (-3 * Y[0] + 4 * Y[1] - Y[2]) / (2 * ds) / z[0]
        out[0] = cz0 * Yz0 + cy * Y[0] + c0
        out[-1] = Y[-1] - yR
        return out

    def J(Y):
        Yi, Yz, Yzz = _interior_jet(z, ds, Y)
        d = op(Dual.variables([Yi, Yz, Yzz], order=1))
        gY, gZ, gZZ = d.grad[..., 0], d.grad[..., 1], d.grad[..., 2]
        lower = gZ * cz[0] + gZZ * czz[0]
        diag = gY + gZ * cz[1] + gZZ * czz[1]
        upper = gZ * cz[2] + gZZ * czz[2]
        # banded storage with (l, u) = (1, 2)
        ab = np.zeros((4, n))
        k0 = cz0 / (2 * ds * z[0])
        ab[2, 0] = -3 * k0 + cy  # (0,0)
        ab[1, 1] = 4 * k0  # (0,1)
        ab[0, 2] = -k0  # (0,2)
        ab[2, 1:-1] = diag
        ab[1, 2:] = upper
        ab[3, :-2] = lower
        ab[2, -1] = 1.0
        return ab, (1, 2)

    def accept(Y):
        _, Yz, Yzz = _interior_jet(z, ds, Y)
        return bool(np.all(Yz > 0) and np.all(Yzz < 0))

    Y0 = clo.dirichlet(z)
    Y, r, it, hist, floor = _newton(F, J, Y0, tol, max_iter, accept, case_id)
    Yz, Yzz = _fd_derivs(z, Y)
    return Grid1D(case_id, z, Y, Yz, Yzz, it, float(np.max(np.abs(r))), True, params,
                  {"tol": tol, "rounding_floor": floor, "shift": sl, "left_bc": left_bc, "history": hist})


# ---------------------------------------------------------------------------
# 2D marching


def solve_pde2d(case_id: str, params: ModelParams | None = None, survival: SurvivalFn | None = None,
                z0: float = 0.1, z1: float = 10.0, n: int = 128, y_min: float = 0.0, y_max: float = 10.0,
                m: int = 128, seed=None, theta: float = 0.5, tol: float = 1e-9, max_iter: int = 50,
                min_step: float = 1e-8, **case_params) -> Grid2D:
    """March a reduced parabolic equation backward from ``y_max`` to ``y_min``.

    ``y`` is ``t`` for the ``(z, t)`` cases and ``tau`` for the ``(z, tau)``
    cases.  Each step solves the theta-scheme (Crank-Nicolson by default)

        theta R(W_j, D) + (1 - theta) R(W_{j+1}, D) = 0,  D = (W_{j+1} - W_j)/dy

    by damped Newton; failing steps are halved down to ``min_step``.  The
    per-step residual is measured relative to ``max |W|`` of the previous
    level, since ``W`` decays with the survival function.

    Parameters
    ----------
    seed : ndarray, optional
        ``W(., y_max)``; defaults to the asymptotic profile.

    Raises
    ------
    UnsupportedExtensionError
        When the derived equation is not first order in ``y`` (``tau``
        cases with ``eta > 0``).
    """
    if case_id not in PDE_CASES:
        raise ParameterError(f"{case_id} is not a marching case")
    params = params or ModelParams()
    _check_d(params)
    case = get_case(case_id, params, survival, **case_params)
    if not case.solver_enabled:
        raise ParameterError(f"{case.label}: solver disabled for this case")
    clo = _Closure(case)
    z, ds = _log_grid(z0, z1, n)
    cz, czz = _stencil(z, ds)
    y = np.linspace(y_min, y_max, m + 1)
    y_name = case.var_names[1]
    a_r, _ = clo.robin(y_max)
    sl = clo.s

    W = np.empty((m + 1, n))
    W[m] = clo.dirichlet(z, y_max) if seed is None else np.asarray(seed, float)
    ops: dict = {}

    def op_at(yv):
        key = float(yv)
        if key not in ops:
            ops[key] = ReducedOperator(case, (z[1:-1], np.full(n - 2, key)), case.default_gauge)
        return ops[key]

    # the scheme needs R to be free of W_zy and W_yy
    probe = op_at(y_max)
    Wi, Wz, Wzz = _interior_jet(z, ds, W[m])
    zeros = 0 * Wi
    d = probe(Dual.variables([Wi, Wz, zeros, Wzz, zeros, zeros], order=1))
    if np.max(np.abs(d.grad[..., 4])) > 1e-14 or np.max(np.abs(d.grad[..., 5])) > 1e-14:
        raise UnsupportedExtensionError(
            f"{case.label}: reduced equation contains W_z{y_name}/W_{y_name}{y_name} (eta > 0); "
            "only first order in the marching variable is supported")

    def step(Wn, yn, yc):
        """Solve for W at yc given Wn at yn (yc < yn)."""
        dy = yn - yc
        opn, opc = op_at(yn), op_at(yc)
        Wi_n, Wz_n, Wzz_n = _interior_jet(z, ds, Wn)
        a, b = clo.robin(yc)
        yR = float(clo.dirichlet(z1, yc))

        def F(Wc):
            Wi, Wz, Wzz = _interior_jet(z, ds, Wc)
            D = (Wn[1:-1] - Wc[1:-1]) / dy
            out = np.empty(n)
            out[1:-1] = theta * opc([Wi, Wz, D, Wzz, zeros, zeros])
            if theta < 1.0:
                out[1:-1] += (1 - theta) * opn([Wi_n, Wz_n, D, Wzz_n, zeros, zeros])
            Wz0 = (-3 * Wc[0] + 4 * Wc[1] - Wc[2]) / (2 * ds) / z[0]
            out[0] = (z[0] + sl) * Wz0 - a * Wc[0] - b
            out[-1] = Wc[-1] - yR
            return out

        def J(Wc):
            Wi, Wz, Wzz = _interior_jet(z, ds, Wc)
            D = (Wn[1:-1] - Wc[1:-1]) / dy
            dc = opc(Dual.variables([Wi, Wz, D, Wzz, zeros, zeros], order=1))
            gY, gZ, gD, gZZ = (dc.grad[..., k] * theta for k in (0, 1, 2, 3))
            if theta < 1.0:
                dn = opn(Dual.variables([Wi_n, Wz_n, D, Wzz_n, zeros, zeros], order=1))
                gD = gD + (1 - theta) * dn.grad[..., 2]
            lower = gZ * cz[0] + gZZ * czz[0]
            diag = gY + gZ * cz[1] + gZZ * czz[1] - gD / dy
            upper = gZ * cz[2] + gZZ * czz[2]
            ab = np.zeros((4, n))
            c0 = (z[0] + sl) / (2 * ds * z[0])
            ab[2, 0] = -3 * c0 - a
            ab[1, 1] = 4 * c0
            ab[0, 2] = -c0
            ab[2, 1:-1] = diag
            ab[1, 2:] = upper
            ab[3, :-2] = lower
            ab[2, -1] = 1.0
            return ab, (1, 2)

        def accept(Wc):
            _, Wz, Wzz = _interior_jet(z, ds, Wc)
            return bool(np.all(Wz > 0) and np.all(Wzz < 0))

        # residual relative to the solution scale: W decays like Phi in the far field
        scale = max(float(np.max(np.abs(Wn))), 1e-300)

        def Fs(Wc):
            return F(Wc) / scale

        def Js(Wc):
            ab, lu = J(Wc)
            return ab / scale, lu

        Wc, r, it, _, _ = _newton(Fs, Js, Wn.copy(), tol, max_iter, accept,
                                  f"{case_id} step at {y_name}={yc:.6g}")
        return Wc, float(np.max(np.abs(r)))

    def advance(Wn, yn, yc):
        try:
            return step(Wn, yn, yc)
        except NonConvergenceError:
            if yn - yc < 2 * min_step:
                raise
            ym = 0.5 * (yn + yc)
            Wm, _ = advance(Wn, yn, ym)
            return advance(Wm, ym, yc)

    worst = 0.0
    for j in range(m - 1, -1, -1):
        W[j], res = advance(W[j + 1], y[j + 1], y[j])
        worst = max(worst, res)
    ops.clear()
    return Grid2D(case.label, z, y, W, y_name, m, worst, params,
                  {"theta": theta, "tol": tol, "survival": case.spec.survival.to_dict(),
                   "robin_coefficient": a_r})


# ---------------------------------------------------------------------------
# reconstruction


def reconstruct_value(case: ReductionCase, solution, t, l, h) -> tuple:
    """``V`` and the optimal policy at original point(s) from a reduced solution.

    The reduced point is found with the forward invariant map and the reduced
    jet is interpolated from the grid; ``V`` follows from ``W = A V + B`` and
    the policy from the pushforward of the interpolated jet.
    """
    t, l, h = (np.atleast_1d(np.asarray(x, float)) for x in (t, l, h))
    t, l, h = np.broadcast_arrays(t, l, h)
    v = tuple(np.asarray(c, float) for c in case.coords(t, l, h))
    if case.is_ode:
        Y, Yz, Yzz = solution.interpolate(v[0])
        rj = ReducedJet(v, Y, Yz, Yzz)
        gauge = (h, t)
    else:
        Wv, Wz, Wy, Wzz = solution.interpolate(v[0], v[1])
        zeros = 0 * Wv
        rj = ReducedJet(v, Wv, Wz, Wzz, Wy, zeros, zeros)
        gauge = (h,) if case.gauge_names == ("h",) else (t,)
    op = ReducedOperator(case, v, gauge)
    A, B = case.affine(t, l, h)
    V = (rj.W - B) / A
    pol = op.policy(rj.components(case.is_ode))
    return V, Policy(np.asarray(pol.pi), np.asarray(pol.c))
