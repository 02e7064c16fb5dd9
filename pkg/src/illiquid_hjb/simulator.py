"""Monte Carlo estimate of the survival-weighted utility of a policy.

Wealth ``L`` and the illiquid paper value ``H`` follow

    dL = (r L + delta H + pi (alpha - r) - c) dt + pi sigma dB1
    dH = H ((mu - delta) dt + eta (rho dB1 + sqrt(1 - rho^2) dB2))

discretized by Euler-Maruyama.  The estimator accumulates
``sum_k Phi(t_k) U(c_k) dt`` per path, the deterministic-time form of the
expected utility up to the liquidation time.

Policies are homogeneous of degree one in ``(l, h)`` and are tabulated as
``pi = h p(z)``, ``c = h q(z)`` on a uniform grid in ``log z``.  Normals
come from a counter-based generator keyed by ``(seed, path, step)``, so
results do not depend on execution order.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import DomainError, ParameterError
from .model import Exponential, ModelParams, SurvivalFn
from .reductions import get_case
from .solvers import Grid1D, merton_constant

__all__ = [
    "PathConfig",
    "UtilityEstimate",
    "TabulatedPolicy",
    "policy_from_grid",
    "merton_policy",
    "simulate_utility",
    "perturbation_sweep",
    "SweepResult",
    "illiquid_moment",
]

C_MIN = 1e-8


@dataclass(frozen=True)
class PathConfig:
    """Discretization and sampling settings.

    ``t_max=None`` selects ``10 / kappa`` of the survival law.
    """

    dt: float = 1e-3
    t_max: float | None = None
    n_paths: int = 100_000
    rng_seed: int = 0
    antithetic: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if self.n_paths < 1:
            raise ParameterError("n_paths must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise ParameterError("antithetic sampling needs an even n_paths")

    def horizon(self, survival: SurvivalFn) -> float:
        t_max = 10.0 / survival.kappa if self.t_max is None else self.t_max
        if t_max < 10.0 / survival.kappa * (1 - 1e-12):
            raise ParameterError("t_max must be at least 10/kappa")
        return t_max

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class UtilityEstimate:
    """Sample mean and standard error of the utility functional.

    ``stderr`` is computed over independent units: antithetic pairs when
    ``antithetic`` is set, single paths otherwise.
    """

    mean: float
    stderr: float
    n_paths: int
    truncation_bound: float
    flagged: int = 0
    runtime: float = 0.0

    @property
    def unreliable(self) -> bool:
        return self.flagged > 1e-3 * self.n_paths

    def to_dict(self) -> dict:
        d = asdict(self)
        d["unreliable"] = self.unreliable
        return d


@dataclass(frozen=True)
class TabulatedPolicy:
    """``pi = h p(z)`` and ``c = h q(z)`` sampled on a uniform grid in ``log z``.

    Linear interpolation in ``z`` between nodes. Outside the grid the end
    values are scaled by ``(z + shift) / (z_end + shift)``, the Merton form
    also imposed by the solver's boundary conditions (``shift`` is the
    capitalized income ``s``).
    """

    s0: float
    ds: float
    p: np.ndarray
    q: np.ndarray
    shift: float = 0.0

    @property
    def z(self) -> np.ndarray:
        return np.exp(self.s0 + self.ds * np.arange(len(self.p)))

    def __call__(self, l, h):
        z = np.asarray(l, float) / np.asarray(h, float)
        zz = self.z
        i = np.clip(np.searchsorted(zz, z) - 1, 0, len(zz) - 2)
        w = (z - zz[i]) / (zz[i + 1] - zz[i])
        p = self.p[i] + w * (self.p[i + 1] - self.p[i])
        q = self.q[i] + w * (self.q[i + 1] - self.q[i])
        lo, hi = z < zz[0], z > zz[-1]
        f_lo = (z + self.shift) / (zz[0] + self.shift)
        f_hi = (z + self.shift) / (zz[-1] + self.shift)
        p = np.where(lo, self.p[0] * f_lo, np.where(hi, self.p[-1] * f_hi, p))
        q = np.where(lo, self.q[0] * f_lo, np.where(hi, self.q[-1] * f_hi, q))
        return h * p, h * q


def policy_from_grid(grid: Grid1D) -> TabulatedPolicy:
    """Tabulate the policy of an ODE-backed solution (``t``-independent in ``z``)."""
    case = get_case(grid.case_id, grid.params)
    from .reductions import ReducedOperator

    # boundary nodes carry one-sided derivatives; tabulate the interior only
    k = grid.interior()
    z = grid.z[k]
    op = ReducedOperator(case, (z,), (np.ones_like(z), np.zeros_like(z)))
    pol = op.policy([grid.Y[k], grid.Y_z[k], grid.Y_zz[k]])
    s = np.log(z)
    return TabulatedPolicy(float(s[0]), float(s[1] - s[0]), np.asarray(pol.pi, float), np.asarray(pol.c, float),
                           float(grid.meta.get("shift", 0.0)))


def merton_policy(params: ModelParams, z0: float = 1e-3, z1: float = 1e3, n: int = 513) -> TabulatedPolicy:
    """Frictionless HARA policy ``pi = m (l + s h)``, ``c = k (l + s h)`` as a table."""
    A = merton_constant(params)
    g = params.gamma
    k = (1.0 - g) * (g * A) ** (-1.0 / (1.0 - g))
    s = np.linspace(math.log(z0), math.log(z1), n)
    w = np.exp(s) + params.income_shift
    return TabulatedPolicy(float(s[0]), float(s[1] - s[0]), params.merton_ratio * w, k * w,
                           float(params.income_shift))


# ---------------------------------------------------------------------------
# numba kernel


@numba.njit(cache=True, inline="always")
def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _normals(seed, path, step):
    k = _splitmix(np.uint64(seed) * np.uint64(0xD1B54A32D192ED03) ^ _splitmix(np.uint64(path)))
    k = _splitmix(k ^ (np.uint64(step) * np.uint64(0x9E3779B97F4A7C15)))
    u1 = ((k >> np.uint64(11)) + np.float64(0.5)) * (1.0 / 9007199254740992.0)
    k2 = _splitmix(k)
    u2 = ((k2 >> np.uint64(11)) + np.float64(0.5)) * (1.0 / 9007199254740992.0)
    r = math.sqrt(-2.0 * math.log(u1))
    a = 2.0 * math.pi * u2
    return r * math.cos(a), r * math.sin(a)


@numba.njit(cache=True)
def _lookup(z, s0, ds, zs, p_tab, q_tab, shift):
    """Interpolate ``(p, q)`` linearly in ``z``; outside the grid scale the end value by ``(z+shift)``."""
    n = zs.shape[0]
    if z <= zs[0]:
        f = (z + shift) / (zs[0] + shift)
        return p_tab[0] * f, q_tab[0] * f
    if z >= zs[n - 1]:
        f = (z + shift) / (zs[n - 1] + shift)
        return p_tab[n - 1] * f, q_tab[n - 1] * f
    i = int((math.log(z) - s0) / ds)
    if i > n - 2:
        i = n - 2
    w = (z - zs[i]) / (zs[i + 1] - zs[i])
    return p_tab[i] + w * (p_tab[i + 1] - p_tab[i]), q_tab[i] + w * (q_tab[i + 1] - q_tab[i])


@numba.njit(cache=True)
def _utility_core(c, gamma, is_log):
    # HARA utility without its constant; the constant is added deterministically
    if is_log:
        return math.log(c)
    if gamma == 0.5:
        return math.sqrt(c / (1.0 - gamma))
    return (1.0 - gamma) / gamma * math.exp(gamma * math.log(c / (1.0 - gamma)))


@numba.njit(cache=True)
def _kernel(seed, n_units, antithetic, n_steps, dt, weights, T_mode, kappa_T, l0, h0,
            r, alpha, sigma, mu, delta, eta, rho, gamma, is_log, s0, ds, zs, p_tab, q_tab,
            pi_scales, c_scales, shift):
    """Per-unit utility sums for every (pi, c) scale pair; units are pairs when antithetic."""
    n_combo = pi_scales.shape[0]
    n_sides = 2 if antithetic else 1
    out = np.zeros((n_combo, n_units))
    flags = np.zeros((n_combo, n_units), dtype=np.int64)
    last_u = np.zeros(n_combo)
    sq = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - rho * rho)
    L = np.empty((n_sides, n_combo))
    H = np.empty(n_sides)
    T = np.empty(n_sides)
    bank = np.zeros((n_sides, n_combo), dtype=np.int64)
    acc = np.zeros((n_sides, n_combo))
    for unit in range(n_units):
        for side in range(n_sides):
            H[side] = h0
            T[side] = 1e300
            for j in range(n_combo):
                L[side, j] = l0
                bank[side, j] = 0
                acc[side, j] = 0.0
        if T_mode:
            # liquidation time for the cross-check mode; the antithetic partner uses 1-u
            k = _splitmix(np.uint64(seed) ^ _splitmix(np.uint64(unit) + np.uint64(0x5851F42D4C957F2D)))
            u = ((k >> np.uint64(11)) + np.float64(0.5)) * (1.0 / 9007199254740992.0)
            T[0] = -math.log(u) / kappa_T
            if n_sides == 2:
                T[1] = -math.log(1.0 - u) / kappa_T
        for k_step in range(n_steps):
            t = k_step * dt
            if T_mode and t >= T[0] and (n_sides == 1 or t >= T[n_sides - 1]):
                break
            e1, e2 = _normals(seed, unit, k_step)
            for side in range(n_sides):
                if T_mode:
                    if t >= T[side]:
                        continue
                    w = dt
                else:
                    w = weights[k_step]
                sign = 1.0 if side == 0 else -1.0
                dB1 = sign * e1 * sq
                dB2 = sign * e2 * sq
                Hs = H[side]
                for j in range(n_combo):
                    Lj = L[side, j]
                    if Lj <= 0.0:
                        bank[side, j] = 1
                        pi = 0.0
                        c = C_MIN
                    else:
                        pz, qz = _lookup(Lj / Hs, s0, ds, zs, p_tab, q_tab, shift)
                        pi = pi_scales[j] * Hs * pz
                        c = c_scales[j] * Hs * qz
                        if c <= 0.0:
                            c = C_MIN
                    uc = _utility_core(c, gamma, is_log)
                    acc[side, j] += w * uc
                    if k_step == n_steps - 1:
                        last_u[j] = max(last_u[j], abs(uc))
                    L[side, j] = Lj + (r * Lj + delta * Hs + pi * (alpha - r) - c) * dt + pi * sigma * dB1
                H[side] = Hs + Hs * ((mu - delta) * dt + eta * (rho * dB1 + rho_c * dB2))
        for side in range(n_sides):
            for j in range(n_combo):
                out[j, unit] += acc[side, j] / n_sides
                flags[j, unit] += bank[side, j]
    return out, flags, last_u


def _weights(survival: SurvivalFn, n_steps: int, dt: float) -> np.ndarray:
    t = dt * np.arange(n_steps)
    return np.asarray(survival.value(t), float) * dt


def _run(params, survival, policy: TabulatedPolicy, l0, h0, cfg: PathConfig, pi_scales, c_scales,
         sample_T: bool = False):
    if not (l0 > 0 and h0 > 0):
        raise DomainError("l0 and h0 must be positive")
    if sample_T and not survival.is_exponential:
        raise ParameterError("sampling T is provided for exponential survival only")
    t_max = cfg.horizon(survival)
    n_steps = int(math.ceil(t_max / cfg.dt - 1e-9))
    w = _weights(survival, n_steps, cfg.dt)
    n_units = cfg.n_paths // 2 if cfg.antithetic else cfg.n_paths
    is_log = params.gamma == 0.0
    g = params.gamma if not is_log else 0.5
    t0 = time.perf_counter()
    out, flags, last_u = _kernel(
        int(cfg.rng_seed), n_units, cfg.antithetic, n_steps, cfg.dt, w, sample_T,
        float(survival.kappa), float(l0), float(h0), params.r, params.alpha, params.sigma, params.mu,
        params.delta, params.eta, params.rho, g, is_log, policy.s0, policy.ds,
        np.ascontiguousarray(policy.z), np.ascontiguousarray(policy.p), np.ascontiguousarray(policy.q),
        np.asarray(pi_scales, float), np.asarray(c_scales, float), float(policy.shift))
    runtime = time.perf_counter() - t0
    # deterministic part of the HARA utility and truncation tail
    tail = -float(survival.antideriv(n_steps * cfg.dt))
    const = 0.0
    if not is_log:
        const = -(1.0 - g) / g * (float(np.sum(w)) if not sample_T else _expected_T_weight(survival, n_steps, cfg.dt))
    flagged = flags.sum(axis=1)
    return out, const, tail, last_u, flagged, runtime


def _expected_T_weight(survival: SurvivalFn, n_steps: int, dt: float) -> float:
    # E[number of grid steps before T] * dt, the analogue of sum Phi(t_k) dt
    return float(np.sum(_weights(survival, n_steps, dt)))


def _estimate(x: np.ndarray, const: float, n_paths: int, trunc: float, flagged: int, runtime: float) -> UtilityEstimate:
    n = x.shape[0]
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return UtilityEstimate(float(np.mean(x)) + const, se, n_paths, trunc, int(flagged), runtime)


def simulate_utility(params: ModelParams, survival: SurvivalFn | None, policy: TabulatedPolicy,
                     l0: float, h0: float, cfg: PathConfig = PathConfig(),
                     sample_T: bool = False, utility: str = "hara") -> UtilityEstimate:
    """Estimate ``E sum_k Phi(t_k) U(c_k) dt`` under a tabulated policy.

    Parameters
    ----------
    utility : {"hara", "log"}
    sample_T : bool
        Cross-check mode: draw ``T ~ Exp(kappa)`` per path and accumulate
        ``U(c) dt`` while ``t < T`` (exponential survival with ``d = 1`` only).
    """
    survival = survival or Exponential(1.0, params.kappa)
    if sample_T and getattr(survival, "d", 1.0) != 1.0:
        raise ParameterError("sampling T needs d = 1")
    kp = _with_log(params, utility)
    out, const, tail, last_u, flagged, runtime = _run(kp, survival, policy, l0, h0, cfg, [1.0], [1.0], sample_T)
    # sup|U| over the final step times the neglected survival mass
    trunc = tail * (float(last_u[0]) + _const_abs(params, utility))
    return _estimate(out[0], const, cfg.n_paths, trunc, flagged[0], runtime)


def _with_log(p: ModelParams, utility: str):
    if utility == "log":
        return _LogParams(p)
    if utility != "hara":
        raise ParameterError("utility must be 'hara' or 'log'")
    return p


class _LogParams:
    """Parameter view with ``gamma = 0`` selecting log utility in the kernel."""

    def __init__(self, p: ModelParams):
        self._p = p
        self.gamma = 0.0

    def __getattr__(self, name):
        return getattr(self._p, name)


def _const_abs(params: ModelParams, utility: str) -> float:
    return (1.0 - params.gamma) / params.gamma if utility == "hara" else 0.0


@dataclass
class SweepResult:
    """Common-random-numbers estimates over a grid of policy scales."""

    pi_scales: list
    c_scales: list
    means: np.ndarray
    stderrs: np.ndarray
    diff_stderrs: np.ndarray  # stderr of (center - cell) under CRN
    flagged: np.ndarray
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    def center(self) -> tuple[int, int]:
        return self.pi_scales.index(1.0), self.c_scales.index(1.0)

    def peaks_at_center(self, k: float = 2.0) -> bool:
        """Center exceeds every other cell by more than ``k`` CRN standard errors."""
        ci, cj = self.center()
        m0 = self.means[ci, cj]
        for i in range(len(self.pi_scales)):
            for j in range(len(self.c_scales)):
                if (i, j) != (ci, cj) and not m0 - self.means[i, j] > k * self.diff_stderrs[i, j]:
                    return False
        return True

    def center_not_beaten(self, k: float = 2.0) -> bool:
        """``center >= cell - k * stderr`` for every cell (weaker predicate)."""
        ci, cj = self.center()
        m0 = self.means[ci, cj]
        return bool(np.all(m0 >= self.means - k * self.stderrs))

    def rows(self) -> tuple[list, list]:
        rows = []
        for i, a in enumerate(self.pi_scales):
            for j, b in enumerate(self.c_scales):
                rows.append((a, b, self.means[i, j], self.stderrs[i, j], self.diff_stderrs[i, j], self.flagged[i, j]))
        return ["pi_scale", "c_scale", "mean", "stderr", "diff_stderr", "flagged"], rows


def perturbation_sweep(params: ModelParams, survival: SurvivalFn | None, policy: TabulatedPolicy,
                       l0: float, h0: float, cfg: PathConfig = PathConfig(),
                       pi_scales=(0.8, 1.0, 1.2), c_scales=(0.8, 1.0, 1.2)) -> SweepResult:
    """Scale ``pi`` and ``c`` by each grid pair using common random numbers."""
    pi_scales, c_scales = list(map(float, pi_scales)), list(map(float, c_scales))
    if 1.0 not in pi_scales or 1.0 not in c_scales:
        raise ParameterError("scale grids must contain 1.0")
    survival = survival or Exponential(1.0, params.kappa)
    A, B = np.meshgrid(pi_scales, c_scales, indexing="ij")
    out, const, tail, last_u, flagged, runtime = _run(params, survival, policy, l0, h0, cfg, A.ravel(), B.ravel())
    shape = A.shape
    n = out.shape[1]
    means = out.mean(axis=1) + const
    ses = out.std(axis=1, ddof=1) / math.sqrt(n)
    ci = pi_scales.index(1.0) * len(c_scales) + c_scales.index(1.0)
    dses = (out[ci] - out).std(axis=1, ddof=1) / math.sqrt(n)
    return SweepResult(pi_scales, c_scales, means.reshape(shape), ses.reshape(shape), dses.reshape(shape),
                       flagged.reshape(shape), runtime, {"config": cfg.to_dict(), "l0": l0, "h0": h0})


# ---------------------------------------------------------------------------
# illiquid moment check


@numba.njit(cache=True)
def _h_kernel(seed, n_paths, n_steps, dt, h0, mu, delta, eta, rho, record):
    sq = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - rho * rho)
    out = np.zeros((record.shape[0], n_paths))
    for path in range(n_paths):
        H = h0
        ri = 0
        for k in range(n_steps + 1):
            while ri < record.shape[0] and record[ri] == k:
                out[ri, path] = H
                ri += 1
            if k == n_steps:
                break
            e1, e2 = _normals(seed, path, k)
            H = H + H * ((mu - delta) * dt + eta * (rho * e1 * sq + rho_c * e2 * sq))
    return out


def illiquid_moment(params: ModelParams, h0: float, times, dt: float = 1e-2, n_paths: int = 20_000,
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and stderr of ``H_t`` at the given times (same generator as the utility kernel)."""
    times = np.asarray(times, float)
    steps = np.rint(times / dt).astype(np.int64)
    order = np.argsort(steps)
    out = _h_kernel(int(seed), int(n_paths), int(steps.max()), dt, float(h0), params.mu, params.delta,
                    params.eta, params.rho, steps[order])
    m = np.empty(len(times))
    s = np.empty(len(times))
    m[order] = out.mean(axis=1)
    s[order] = out.std(axis=1, ddof=1) / math.sqrt(n_paths)
    return m, s
