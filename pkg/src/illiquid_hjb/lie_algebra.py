"""Symmetry generators of the maximized HJB equations and their algebra.

Catalog per spec id (``F`` is the antiderivative gauge of the survival law):

* ``U1 = d/dV``
* ``U2 = exp(r t) d/dl``
* ``U3 = l d/dl + h d/dh + (gamma V - (1-gamma) F) d/dV`` (HARA) or
  ``l d/dl + h d/dh - F d/dV`` (log)
* ``U4 = d/dt - kappa V d/dV`` (exponential survival only)

plus the infinite family ``psi(h, t) d/dV`` with ``psi`` solving the linear
PDE ``psi_t + 1/2 eta^2 h^2 psi_hh + (mu - delta) h psi_h = 0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import duals
from .duals import Dual
from .errors import ClosureFailure, ParameterError, UnsupportedExtensionError
from .jet_engine import Combination, FieldGenerator, Generator, lie_bracket, prolong2, sample_jets
from .pde import PDESpec, residual_partials, solve_for_vt

__all__ = [
    "AlgebraCatalog",
    "LInfSample",
    "Subalgebra",
    "StructureReport",
    "catalog",
    "base_generators",
    "time_generator",
    "symmetry_defect",
    "symmetry_defects",
    "verify_structure",
    "structure_tensor",
    "classify",
    "linf_sample",
    "subalgebra_table",
    "LABELS",
]

LABELS = ("A^γ_{3,5}", "2A₂", "A^γ_{3,5}⊕A₁", "A₁⊕A₂")


def time_generator(kappa: float) -> FieldGenerator:
    """``U4 = d/dt - kappa V d/dV``; a symmetry only for exponential survival."""
    return FieldGenerator("U4", lambda t, l, h, V: (1.0, 0.0, 0.0, -kappa * V))


def base_generators(spec: PDESpec) -> dict[str, FieldGenerator]:
    """The finite-dimensional generators ``U1..U3`` (``U4`` when exponential)."""
    p = spec.params
    surv = spec.survival
    r, g = p.r, p.gamma
    gens = {
        "U1": FieldGenerator("U1", lambda t, l, h, V: (0.0, 0.0, 0.0, 1.0)),
        "U2": FieldGenerator("U2", lambda t, l, h, V: (0.0, duals.exp(r * t), 0.0, 0.0)),
    }
    if spec.is_log:
        gens["U3"] = FieldGenerator("U3", lambda t, l, h, V: (0.0, l, h, -surv.antideriv(t)))
    else:
        gens["U3"] = FieldGenerator(
            "U3", lambda t, l, h, V: (0.0, l, h, g * V - (1.0 - g) * surv.antideriv(t)))
    if spec.is_exponential:
        gens["U4"] = time_generator(surv.kappa)
    return gens


# ---------------------------------------------------------------------------
# optimal systems of subalgebras (coefficient symbols: 1, "±", "ω", "cosβ", "sinβ")


@dataclass(frozen=True)
class Subalgebra:
    """Entry of an optimal system.

    ``elements`` is a tuple of generators, each a tuple of
    ``(coefficient symbol, basis index)`` pairs, e.g. ``e1 + ωe3`` is
    ``((1, 1), ("ω", 3))``.
    """

    name: str
    elements: tuple

    @property
    def dim(self) -> int:
        return len(self.elements)

    @property
    def parameters(self) -> set:
        return {c for el in self.elements for c, _ in el if c != 1}

    def label(self) -> str:
        parts = []
        for el in self.elements:
            s = ""
            for c, i in el:
                if c == 1:
                    s += ("+" if s else "") + f"e{i}"
                elif c == "±":
                    s += f"±e{i}"
                elif c in ("cosβ", "sinβ"):
                    s += ("+" if s else "") + f"e{i}{c}"
                else:
                    s += ("+" if s else "") + f"{c}e{i}"
            parts.append(s)
        return f"{self.name}<{', '.join(parts)}>"

    def coefficient_rows(self, dim: int, omega: float = 0.5, sign: int = 1, beta: float = 0.3) -> np.ndarray:
        value = {1: 1.0, "±": float(sign), "ω": omega, "cosβ": math.cos(beta), "sinβ": math.sin(beta)}
        rows = np.zeros((self.dim, dim))
        for a, el in enumerate(self.elements):
            for c, i in el:
                rows[a, i - 1] += value[c]
        return rows


def _sub(name, *elements):
    return Subalgebra(name, tuple(tuple(e) for e in elements))


def _e(i, c=1):
    return (c, i)


_TABLE_HARA_GEN = (
    _sub("h1", [_e(1)]),
    _sub("h2", [_e(2)]),
    _sub("h3", [_e(3)]),
    _sub("h4", [_e(1), _e(2, "±")]),
    _sub("h5", [_e(1)], [_e(2)]),
    _sub("h6", [_e(3)], [_e(1)]),
    _sub("h7", [_e(3)], [_e(2)]),
)

_TABLE_2A2 = (
    _sub("h1", [_e(2)]),
    _sub("h2", [_e(3)]),
    _sub("h3", [_e(4)]),
    _sub("h4", [_e(1), _e(3, "ω")]),
    _sub("h5", [_e(1), _e(4, "±")]),
    _sub("h6", [_e(2), _e(4, "±")]),
    _sub("h7", [_e(2), _e(3, "±")]),
    _sub("h8", [_e(1)], [_e(3)]),
    _sub("h9", [_e(1)], [_e(4)]),
    _sub("h10", [_e(2)], [_e(3)]),
    _sub("h11", [_e(2)], [_e(4)]),
    _sub("h12", [_e(1), _e(3, "ω")], [_e(2)]),
    _sub("h13", [_e(3), _e(1, "ω")], [_e(4)]),
    _sub("h14", [_e(1), _e(4, "±")], [_e(2)]),
    _sub("h15", [_e(3), _e(2, "±")], [_e(4)]),
    _sub("h16", [_e(1), _e(3)], [_e(2), _e(4, "±")]),
    _sub("h17", [_e(1)], [_e(3)], [_e(2)]),
    _sub("h18", [_e(1)], [_e(4)], [_e(2)]),
    _sub("h19", [_e(1)], [_e(3)], [_e(4)]),
    _sub("h20", [_e(2)], [_e(3)], [_e(4)]),
    _sub("h21", [_e(1), _e(3, "±")], [_e(2)], [_e(4)]),
    _sub("h22", [_e(1), _e(3, "ω")], [_e(2)], [_e(4)]),
)

_TABLE_HARA_RES = (
    _sub("h1", [_e(1)]),
    _sub("h2", [_e(2)]),
    _sub("h3", [_e(4)]),
    _sub("h4", [_e(1), _e(4, "±")]),
    _sub("h5", [_e(2), _e(4, "±")]),
    _sub("h6", [_e(3), _e(4, "ω")]),
    _sub("h7", [_e(1), _e(2, "±"), _e(4, "ω")]),
    _sub("h8", [_e(1)], [_e(2)]),
    _sub("h9", [_e(1)], [_e(4)]),
    _sub("h10", [_e(2)], [_e(4)]),
    _sub("h11", [_e(3)], [_e(4)]),
    _sub("h12", [_e(1), _e(2, "±")], [_e(4)]),
    _sub("h13", [_e(1)], [_e(2), _e(4, "±")]),
    _sub("h14", [_e(1), _e(4, "±")], [_e(2), _e(4, "ω")]),
    _sub("h15", [_e(3), _e(4, "ω")], [_e(1)]),
    _sub("h16", [_e(3), _e(4, "ω")], [_e(2)]),
    _sub("h17", [_e(1)], [_e(2)], [_e(4)]),
    _sub("h18", [_e(3)], [_e(4)], [_e(1)]),
    _sub("h19", [_e(3)], [_e(4)], [_e(2)]),
    _sub("h20", [_e(3), _e(4, "ω")], [_e(1)], [_e(2)]),
)

_TABLE_LOG_GEN = (
    _sub("h1", [_e(1, "cosβ"), _e(3, "sinβ")]),
    _sub("h2", [_e(2), _e(3, "±")]),
    _sub("h3", [_e(2)]),
    _sub("h4", [_e(1)], [_e(3)]),
    _sub("h5", [_e(2)], [_e(3)]),
    _sub("h6", [_e(1), _e(3, "ω")], [_e(2)]),
)


def subalgebra_table(spec_id: str) -> tuple[Subalgebra, ...]:
    """Optimal system of subalgebras for a spec id."""
    return {
        "HARA_GENERAL": _TABLE_HARA_GEN,
        "HARA_EXP": _TABLE_2A2,
        "HARA_EXP_RESONANT": _TABLE_HARA_RES,
        "LOG_GENERAL": _TABLE_LOG_GEN,
        "LOG_EXP": _TABLE_2A2,
    }[spec_id]


# ---------------------------------------------------------------------------
# catalog


@dataclass
class AlgebraCatalog:
    """Generators, basis change, structure constants and label of one spec.

    Attributes
    ----------
    basis_change : ndarray
        Row ``i`` expresses ``e_{i+1}`` in the generators ``U1..Un``.
    structure_constants : dict
        ``{(i, j): {k: c}}`` with 1-based indices and ``i < j``; missing
        pairs commute.
    """

    spec: PDESpec
    generators: dict
    basis_change: np.ndarray
    structure_constants: dict
    classification: str
    subalgebras: tuple = field(default_factory=tuple)

    @property
    def spec_id(self) -> str:
        return self.spec.id

    @property
    def dim(self) -> int:
        return self.basis_change.shape[0]

    def basis(self) -> list[Combination]:
        names = list(self.generators)
        out = []
        for i, row in enumerate(self.basis_change):
            terms = [(c, self.generators[n]) for c, n in zip(row, names) if c != 0.0]
            out.append(Combination(terms, name=f"e{i + 1}"))
        return out

    def structure_array(self) -> np.ndarray:
        return structure_tensor(self.structure_constants, self.dim)

    def subalgebra_generators(self, sub: Subalgebra, **params) -> list[Combination]:
        rows = sub.coefficient_rows(self.dim, **params)
        E = self.basis()
        return [Combination([(c, e) for c, e in zip(row, E) if c != 0.0]) for row in rows]


def structure_tensor(table: dict, dim: int) -> np.ndarray:
    """Dense antisymmetric ``C[i, j, k]`` from a sparse 1-based table."""
    C = np.zeros((dim, dim, dim))
    for (i, j), coeffs in table.items():
        for k, c in coeffs.items():
            C[i - 1, j - 1, k - 1] = c
            C[j - 1, i - 1, k - 1] = -c
    return C


def catalog(spec: PDESpec) -> AlgebraCatalog:
    """Generator catalog with the basis change used by the optimal systems."""
    p = spec.params
    gens = base_generators(spec)
    g, r = p.gamma, p.r
    if spec.id == "HARA_GENERAL":
        M = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], float)
        C = {(1, 3): {1: 1.0}, (2, 3): {2: g}}
        label = LABELS[0]
    elif spec.id == "HARA_EXP":
        k = spec.kappa
        den = k - r * g
        if abs(den) < 1e-14:
            raise ParameterError("kappa = r*gamma: use HARA_EXP_RESONANT")
        M = np.array([
            [0, 0, r / den, 1 / den],
            [1, 0, 0, 0],
            [0, 0, -k / den, -g / den],
            [0, 1, 0, 0],
        ], float)
        C = {(1, 2): {2: 1.0}, (3, 4): {4: 1.0}}
        label = LABELS[1]
    elif spec.id == "HARA_EXP_RESONANT":
        M = np.array([
            [0, 1, 0, 0],
            [1, 0, 0, 0],
            [0, 0, 0, -1 / r],
            [0, 0, 1, 1 / r],
        ], float)
        C = {(1, 3): {1: 1.0}, (2, 3): {2: g}}
        label = LABELS[2]
    elif spec.id == "LOG_GENERAL":
        M = np.array([[0, 0, -1], [0, 1, 0], [-1, 0, 0]], float)
        C = {(1, 2): {2: 1.0}}
        label = LABELS[3]
    else:  # LOG_EXP
        k = spec.kappa
        M = np.array([
            [0, 0, r / k, 1 / k],
            [1, 0, 0, 0],
            [0, 0, -1, 0],
            [0, 1, 0, 0],
        ], float)
        C = {(1, 2): {2: 1.0}, (3, 4): {4: 1.0}}
        label = LABELS[1]
    return AlgebraCatalog(spec, gens, M, C, label, subalgebra_table(spec.id))


# ---------------------------------------------------------------------------
# symmetry defect


def symmetry_defects(spec: PDESpec, g: Generator, n: int = 1000, rng=None) -> np.ndarray:
    """Pointwise ``|pr^(2) g (Delta)|`` over ``n`` on-manifold jets."""
    rng = np.random.default_rng(rng)
    j = sample_jets(n, rng)
    j = j.replace(V_t=solve_for_vt(spec, j))
    _, grad = residual_partials(spec, j)
    pr = prolong2(g, j)
    keys = ("xi_t", "xi_l", "xi_h", "eta_V", "eta_t", "eta_l", "eta_h", "eta_ll", "eta_lh", "eta_hh")
    total = sum(pr[k] * grad[..., a] for a, k in enumerate(keys))
    return np.abs(total)


def symmetry_defect(spec: PDESpec, g: Generator, n: int = 1000, rng=None) -> float:
    """Max on-manifold defect of the prolonged generator applied to the residual."""
    return float(np.max(symmetry_defects(spec, g, n, rng)))


# ---------------------------------------------------------------------------
# structure constants


@dataclass
class StructureReport:
    """Outcome of :func:`verify_structure`."""

    max_deviation: float
    max_closure_residual: float
    computed: np.ndarray
    pairs: dict
    closure_failures: list

    @property
    def ok(self) -> bool:
        return not self.closure_failures and self.max_deviation <= 1e-10


def _sample_base(npts: int, rng) -> tuple:
    return (rng.uniform(0.0, 3.0, npts), rng.uniform(0.5, 5.0, npts),
            rng.uniform(0.5, 5.0, npts), rng.uniform(-1.0, 1.0, npts))


def verify_structure(cat: AlgebraCatalog, npts: int = 12, rng=None, table: dict | None = None,
                     raise_on_failure: bool = False) -> StructureReport:
    """Express every ``[e_i, e_j]`` in the basis by least squares and compare.

    Parameters
    ----------
    table : dict, optional
        Structure constants to test against (defaults to the catalog's).
    """
    if npts < 8:
        raise ValueError("need at least 8 sample points")
    rng = np.random.default_rng(rng)
    pts = _sample_base(npts, rng)
    E = cat.basis()
    dim = len(E)
    basis_vals = np.stack([e.values(*pts).ravel() for e in E], axis=1)
    expected = structure_tensor(table if table is not None else cat.structure_constants, dim)
    computed = np.zeros((dim, dim, dim))
    pairs, failures = {}, []
    worst_dev = worst_res = 0.0
    scale = max(1.0, float(np.max(np.abs(basis_vals))))
    for i, j in itertools.combinations(range(dim), 2):
        b = lie_bracket(E[i], E[j]).values(*pts).ravel()
        coef, *_ = np.linalg.lstsq(basis_vals, b, rcond=None)
        res = float(np.max(np.abs(basis_vals @ coef - b))) / scale
        coef[np.abs(coef) < 1e-13] = 0.0
        computed[i, j], computed[j, i] = coef, -coef
        dev = float(np.max(np.abs(coef - expected[i, j])))
        pairs[(i + 1, j + 1)] = {"coefficients": coef.tolist(), "deviation": dev, "closure_residual": res}
        worst_dev, worst_res = max(worst_dev, dev), max(worst_res, res)
        if res > 1e-6:
            failures.append((i + 1, j + 1))
    if failures and raise_on_failure:
        raise ClosureFailure(f"brackets not in span: {failures}")
    return StructureReport(worst_dev, worst_res, computed, pairs, failures)


def classify(C: np.ndarray, tol: float = 1e-9) -> str:
    """Label a low-dimensional solvable algebra from its structure tensor.

    Uses the dimension, the derived-algebra dimension, the centre dimension
    and, for ``A^γ_{3,5}``, the eigenvalue ratio of ``ad`` on the derived
    algebra.
    """
    dim = C.shape[0]
    derived = np.array([C[i, j] for i in range(dim) for j in range(dim)])
    d_dim = int(np.linalg.matrix_rank(derived, tol)) if derived.size else 0
    # centre: x with sum_i x_i C[i, j, :] = 0 for every j
    A = np.concatenate([C[:, j, :].T for j in range(dim)], axis=0)
    c_dim = dim - int(np.linalg.matrix_rank(A, tol))
    if dim == 3 and d_dim == 1 and c_dim == 1:
        return "A₁⊕A₂"
    if dim == 4 and d_dim == 2 and c_dim == 0:
        return "2A₂"
    if d_dim == 2 and ((dim == 3 and c_dim == 0) or (dim == 4 and c_dim == 1)):
        # ad of an element outside the derived algebra restricted to it
        basis_d = np.linalg.svd(derived)[2][:2]
        for x in np.eye(dim):
            ad = np.einsum("i,ijk->jk", x, C).T  # ad_x e_j = sum_k x_i C[i, j, k] e_k
            restricted = basis_d @ ad @ np.linalg.pinv(basis_d)
            ev = np.linalg.eigvals(restricted)
            if np.all(np.abs(ev) > tol):
                ratio = np.sort(np.abs(ev.real))
                if np.all(np.abs(ev.imag) < tol) and 0 < ratio[0] / ratio[1] < 1:
                    return "A^γ_{3,5}" if dim == 3 else "A^γ_{3,5}⊕A₁"
        return "unclassified"
    return "unclassified"


# ---------------------------------------------------------------------------
# infinite-dimensional part


@dataclass(frozen=True)
class LInfSample:
    """Solution ``psi(h, t)`` of the linear PDE defining ``psi d/dV`` symmetries."""

    kind: str
    psi: Callable
    eta: float
    drift: float  # mu - delta

    def defect(self, h, t) -> np.ndarray:
        """``psi_t + 1/2 eta^2 h^2 psi_hh + (mu - delta) h psi_h`` at points."""
        hd, td = Dual.variables([h, t], order=2)
        v = self.psi(hd, td)
        if not isinstance(v, Dual):
            return np.zeros(np.broadcast(np.asarray(h), np.asarray(t)).shape)
        return v.grad[..., 1] + 0.5 * self.eta**2 * hd.val**2 * v.hess[..., 0, 0] + self.drift * hd.val * v.grad[..., 0]

    def generator(self) -> FieldGenerator:
        return FieldGenerator(f"psi_{self.kind}", lambda t, l, h, V: (0.0, 0.0, 0.0, self.psi(h, t)))


def linf_sample(params, kind: str) -> LInfSample:
    """A closed-form member of the infinite-dimensional symmetry family."""
    drift = params.mu - params.delta
    eta = params.eta
    if kind == "const":
        return LInfSample(kind, lambda h, t: 1.0, eta, drift)
    if kind == "power":
        if eta == 0:
            raise ParameterError("power solution needs eta > 0 (degenerate coefficient)")
        beta = 1.0 - 2.0 * drift / eta**2
        if abs(beta) < 1e-14:
            raise ParameterError("roots coincide: beta = 0 duplicates the constant solution")
        return LInfSample(kind, lambda h, t: h**beta, eta, drift)
    if kind == "exp_h":
        return LInfSample(kind, lambda h, t: h * duals.exp(-drift * t), eta, drift)
    raise ParameterError(f"unknown L_inf kind {kind!r}")


def _unsupported(spec: PDESpec) -> None:
    raise UnsupportedExtensionError(f"U4 requires exponential survival, got {spec.survival.kind}")


def require_u4(spec: PDESpec) -> FieldGenerator:
    """Return ``U4`` or raise if the survival law is not exponential."""
    if not spec.survival.is_exponential:
        _unsupported(spec)
    return time_generator(spec.survival.kappa)
