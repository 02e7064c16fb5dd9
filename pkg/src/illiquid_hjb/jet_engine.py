"""Second-order jets, point-symmetry generators and their prolongation.

Base coordinates are ordered ``(t, l, h, V)``.  A :class:`Generator`
is the vector field ``xi_t d/dt + xi_l d/dl + xi_h d/dh + eta_V d/dV``; its
coefficient fields are evaluated through :class:`~illiquid_hjb.duals.Dual`
arithmetic so their partial derivatives are exact.

The second prolongation follows the total-derivative recursion

    phi^j  = D_j eta - sum_i u_i D_j xi^i
    phi^jk = D_j D_k eta - sum_i (u_ik D_j xi^i + u_ij D_k xi^i + u_i D_j D_k xi^i)

which needs only second derivatives of the coefficient fields.  An
independent check, :func:`flow_transport_check`, moves a test surface along
the flow and differentiates the moved surface through the inverse function
theorem.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable, Sequence

import numpy as np

from .duals import Dual

__all__ = [
    "BASE",
    "JET",
    "JetPoint",
    "ScalarField",
    "Generator",
    "FieldGenerator",
    "Combination",
    "Bracket",
    "zero_generator",
    "lie_bracket",
    "prolong2",
    "flow_transport_check",
    "sample_jets",
    "SAMPLER_RANGES",
]

BASE = ("t", "l", "h", "V")
JET = ("t", "l", "h", "V", "V_t", "V_l", "V_h", "V_ll", "V_lh", "V_hh")


@dataclass(frozen=True)
class JetPoint:
    """Point of the second jet space over ``(t, l, h)``.

    Fields may be floats, arrays (a batch of jets) or duals.  The mixed
    time derivatives ``V_tt, V_tl, V_th`` do not enter the HJB equation and
    default to zero; they are used only when a generator's ``xi_t`` depends
    on ``l``, ``h`` or ``V``.
    """

    t: object
    l: object
    h: object
    V: object
    V_t: object
    V_l: object
    V_h: object
    V_ll: object
    V_lh: object
    V_hh: object
    V_tt: object = 0.0
    V_tl: object = 0.0
    V_th: object = 0.0

    def replace(self, **changes) -> "JetPoint":
        return replace(self, **changes)

    def coords(self) -> list:
        """The ten coordinates in :data:`JET` order."""
        return [getattr(self, k) for k in JET]

    def as_array(self) -> np.ndarray:
        """Stack the ten coordinates as a ``(10, n)`` array."""
        return np.array(np.broadcast_arrays(*[np.asarray(c, float) for c in self.coords()]))

    @classmethod
    def from_array(cls, arr) -> "JetPoint":
        return cls(*[np.asarray(a, float) for a in arr])

    def seeded(self, order: int = 1) -> "JetPoint":
        """Copy whose ten coordinates are independent dual variables."""
        dv = Dual.variables(self.coords(), order=order)
        return JetPoint(*dv, V_tt=self.V_tt, V_tl=self.V_tl, V_th=self.V_th)

    def __len__(self) -> int:
        return int(np.size(np.asarray(self.t)))

    def __getitem__(self, idx) -> "JetPoint":
        vals = {}
        for f in fields(self):
            v = np.asarray(getattr(self, f.name), float)
            vals[f.name] = v[idx] if v.ndim else v
        return JetPoint(**vals)


# ---------------------------------------------------------------------------
# generators


def _as_dual_list(vals, seeds: Sequence[Dual]) -> list[Dual]:
    like = seeds[0]
    return [v if isinstance(v, Dual) else Dual.constant(v, like) for v in vals]


def _truncate(d: Dual, order: int):
    if order == 0:
        return d.val
    if order == 1:
        return Dual(d.val, d.grad, None)
    return d


def _partial(d: Dual, nu: int, order: int):
    """Partial derivative in base variable ``nu`` as a dual of ``order``."""
    if order == 0:
        return d.grad[..., nu]
    return Dual(d.grad[..., nu], d.hess[..., nu, :], None)


class Generator:
    """Point-symmetry vector field on ``(t, l, h, V)``.

    Subclasses implement :meth:`evaluate`.  ``max_order`` is the highest
    derivative order of the coefficient fields that can be produced.
    """

    name: str = "X"
    max_order: int = 2

    def evaluate(self, t, l, h, V, order: int = 2):
        """Coefficient fields ``(xi_t, xi_l, xi_h, eta_V)`` at points.

        Returns plain arrays for ``order=0`` and duals in the four base
        variables otherwise.
        """
        raise NotImplementedError

    def apply(self, t, l, h, V):
        """Evaluate the fields at (possibly dual) arguments by composition."""
        raise NotImplementedError(f"{type(self).__name__} cannot be composed")

    def values(self, t, l, h, V) -> np.ndarray:
        """Field values stacked as ``(4, n)``."""
        return np.array(np.broadcast_arrays(*self.evaluate(t, l, h, V, order=0)))

    def field(self, name: str) -> "ScalarField":
        key = {"xi_t": 0, "xi_l": 1, "xi_h": 2, "eta_V": 3}[name]
        return ScalarField(lambda t, l, h, V, o=2: self.evaluate(t, l, h, V, o)[key], f"{self.name}.{name}")

    @property
    def xi_t(self):
        return self.field("xi_t")

    @property
    def xi_l(self):
        return self.field("xi_l")

    @property
    def xi_h(self):
        return self.field("xi_h")

    @property
    def eta_V(self):
        return self.field("eta_V")

    # algebra
    def __add__(self, other: "Generator") -> "Combination":
        return Combination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Generator") -> "Combination":
        return Combination([(1.0, self), (-1.0, other)])

    def __rmul__(self, c: float) -> "Combination":
        return Combination([(float(c), self)])

    def __neg__(self) -> "Combination":
        return Combination([(-1.0, self)])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class ScalarField:
    """A coefficient field with exact first and second partials."""

    def __init__(self, fn: Callable, name: str = "f"):
        self._fn = fn
        self.name = name

    def __call__(self, t, l, h, V):
        return self._fn(t, l, h, V, 0)

    def jet(self, t, l, h, V):
        """Value, gradient ``(..., 4)`` and Hessian ``(..., 4, 4)``."""
        d = self._fn(t, l, h, V, 2)
        return d.val, d.grad, d.hess


class FieldGenerator(Generator):
    """Generator defined by a dual-compatible function of ``(t, l, h, V)``.

    Parameters
    ----------
    name : str
        Label used in reports.
    fn : callable
        ``fn(t, l, h, V) -> (xi_t, xi_l, xi_h, eta_V)``; entries may be
        constants.
    """

    def __init__(self, name: str, fn: Callable):
        self.name = name
        self._fn = fn

    def apply(self, t, l, h, V):
        return tuple(self._fn(t, l, h, V))

    def evaluate(self, t, l, h, V, order: int = 2):
        if order == 0:
            shape = np.broadcast(*[np.asarray(a, float) for a in (t, l, h, V)]).shape
            return [np.broadcast_to(np.asarray(c, float), shape) for c in self._fn(t, l, h, V)]
        seeds = Dual.variables([t, l, h, V], order=order)
        return _as_dual_list(self._fn(*seeds), seeds)


class Combination(Generator):
    """Constant-coefficient linear combination of generators."""

    def __init__(self, terms: Sequence[tuple[float, Generator]], name: str | None = None):
        flat: list[tuple[float, Generator]] = []
        for c, g in terms:
            if isinstance(g, Combination) and g.name is None:
                flat.extend((c * c2, g2) for c2, g2 in g.terms)
            else:
                flat.append((float(c), g))
        self.terms = flat
        self.name = name
        self.max_order = min(g.max_order for _, g in flat)

    def __repr__(self) -> str:
        return f"<Combination {self.label()}>"

    def label(self) -> str:
        if self.name:
            return self.name
        return " + ".join(f"{c:g}*{g.name}" for c, g in self.terms)

    def apply(self, t, l, h, V):
        out = [0.0, 0.0, 0.0, 0.0]
        for c, g in self.terms:
            vals = g.apply(t, l, h, V)
            out = [o + c * v for o, v in zip(out, vals)]
        return tuple(out)

    def evaluate(self, t, l, h, V, order: int = 2):
        acc = None
        for c, g in self.terms:
            vals = g.evaluate(t, l, h, V, order)
            vals = [c * v for v in vals]
            acc = vals if acc is None else [a + v for a, v in zip(acc, vals)]
        return acc


class Bracket(Generator):
    """Lie bracket ``[a, b]`` with fields ``a(b^mu) - b(a^mu)``."""

    def __init__(self, a: Generator, b: Generator):
        self.a, self.b = a, b
        self.name = f"[{a.name},{b.name}]"
        self.max_order = min(a.max_order, b.max_order) - 1
        if self.max_order < 0:
            raise ValueError("bracket nesting exceeds available derivative order")

    def evaluate(self, t, l, h, V, order: int = 2):
        if order > self.max_order:
            raise ValueError(f"{self.name} supports derivative order ≤ {self.max_order}")
        A = self.a.evaluate(t, l, h, V, order + 1)
        B = self.b.evaluate(t, l, h, V, order + 1)
        out = []
        for mu in range(4):
            acc = 0.0
            for nu in range(4):
                acc = acc + _truncate(A[nu], order) * _partial(B[mu], nu, order)
                acc = acc - _truncate(B[nu], order) * _partial(A[mu], nu, order)
            out.append(acc)
        if order == 0:
            shape = np.broadcast(*[np.asarray(a, float) for a in (t, l, h, V)]).shape
            out = [np.broadcast_to(np.asarray(o, float), shape) for o in out]
        return out


def zero_generator() -> FieldGenerator:
    return FieldGenerator("0", lambda t, l, h, V: (0.0, 0.0, 0.0, 0.0))


def lie_bracket(a: Generator, b: Generator) -> Bracket:
    """The commutator ``[a, b]``."""
    return Bracket(a, b)


# ---------------------------------------------------------------------------
# prolongation


def _hessian_u(j: JetPoint) -> list[list]:
    return [
        [j.V_tt, j.V_tl, j.V_th],
        [j.V_tl, j.V_ll, j.V_lh],
        [j.V_th, j.V_lh, j.V_hh],
    ]


def prolong2(g: Generator, j: JetPoint) -> dict:
    """Second-prolongation coefficients of ``g`` at the jet(s) ``j``.

    Returns
    -------
    dict
        Keys ``eta_t, eta_l, eta_h, eta_ll, eta_lh, eta_hh`` plus the base
        fields ``xi_t, xi_l, xi_h, eta_V``.
    """
    F = g.evaluate(j.t, j.l, j.h, j.V, order=2)
    u1 = [j.V_t, j.V_l, j.V_h]
    u2 = _hessian_u(j)

    def D(f: Dual, a: int):
        return f.grad[..., a] + f.grad[..., 3] * u1[a]

    def DD(f: Dual, a: int, b: int):
        H = f.hess
        return (
            H[..., a, b]
            + H[..., a, 3] * u1[b]
            + H[..., b, 3] * u1[a]
            + H[..., 3, 3] * u1[a] * u1[b]
            + f.grad[..., 3] * u2[a][b]
        )

    xi, eta = F[:3], F[3]
    phi1 = [D(eta, a) - sum(u1[i] * D(xi[i], a) for i in range(3)) for a in range(3)]

    def phi2(a, b):
        out = DD(eta, a, b)
        for i in range(3):
            out = out - u2[i][b] * D(xi[i], a) - u2[i][a] * D(xi[i], b) - u1[i] * DD(xi[i], a, b)
        return out

    return {
        "xi_t": F[0].val,
        "xi_l": F[1].val,
        "xi_h": F[2].val,
        "eta_V": F[3].val,
        "eta_t": phi1[0],
        "eta_l": phi1[1],
        "eta_h": phi1[2],
        "eta_ll": phi2(1, 1),
        "eta_lh": phi2(1, 2),
        "eta_hh": phi2(2, 2),
    }


def _surface_jet(surface: Callable, t, l, h):
    """Value, gradient and Hessian in ``(t, l, h)`` of a dual-capable surface."""
    x = Dual.variables([t, l, h], order=2)
    P = surface(*x)
    if not isinstance(P, Dual):
        P = Dual.constant(P, x[0])
    return x, P


def flow_transport_check(g: Generator, surface: Callable, eps: float, point=(1.0, 2.0, 1.5),
                         return_parts: bool = False):
    """Compare one Euler step of the flow with the prolonged action.

    The graph ``V = P(t, l, h)`` is moved by ``(x, V) -> (x, V) + eps*(xi, eta)``.
    The moved surface is differentiated at the image of ``point`` using the
    inverse function theorem and compared with the original jet shifted by
    ``eps`` times the prolongation coefficients.

    Returns
    -------
    float
        Max absolute discrepancy over base and jet coordinates, ``O(eps^2)``.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError("eps must lie in [1e-6, 1e-2]")
    x, P = _surface_jet(surface, *point)
    xi_t, xi_l, xi_h, eta = g.apply(x[0], x[1], x[2], P)
    comps = [Dual.constant(c, x[0]) if not isinstance(c, Dual) else c for c in (xi_t, xi_l, xi_h, eta)]
    y = [x[i] + eps * comps[i] for i in range(3)]
    w = P + eps * comps[3]
    # inverse function theorem: derivatives of w with respect to y
    J = np.array([yi.grad for yi in y])  # J[m, a] = dy_m/dx_a
    Jinv = np.linalg.inv(J)
    gw = w.grad @ Jinv  # dw/dy
    Hx = w.hess - sum(gw[m] * y[m].hess for m in range(3))
    Hy = Jinv.T @ Hx @ Jinv
    moved = {
        "t": y[0].val, "l": y[1].val, "h": y[2].val, "V": w.val,
        "V_t": gw[0], "V_l": gw[1], "V_h": gw[2],
        "V_ll": Hy[1, 1], "V_lh": Hy[1, 2], "V_hh": Hy[2, 2],
    }
    base = JetPoint(
        t=P.val * 0 + point[0], l=point[1], h=point[2], V=P.val,
        V_t=P.grad[0], V_l=P.grad[1], V_h=P.grad[2],
        V_ll=P.hess[1, 1], V_lh=P.hess[1, 2], V_hh=P.hess[2, 2],
        V_tt=P.hess[0, 0], V_tl=P.hess[0, 1], V_th=P.hess[0, 2],
    )
    pr = prolong2(g, base)
    predicted = {
        "t": base.t + eps * pr["xi_t"], "l": base.l + eps * pr["xi_l"],
        "h": base.h + eps * pr["xi_h"], "V": base.V + eps * pr["eta_V"],
        "V_t": base.V_t + eps * pr["eta_t"], "V_l": base.V_l + eps * pr["eta_l"],
        "V_h": base.V_h + eps * pr["eta_h"], "V_ll": base.V_ll + eps * pr["eta_ll"],
        "V_lh": base.V_lh + eps * pr["eta_lh"], "V_hh": base.V_hh + eps * pr["eta_hh"],
    }
    defect = max(float(np.max(np.abs(moved[k] - predicted[k]))) for k in moved)
    if return_parts:
        return defect, moved, base
    return defect


# ---------------------------------------------------------------------------
# sampling

SAMPLER_RANGES = {
    "t": (0.0, 3.0),
    "l": (0.5, 5.0),
    "h": (0.5, 5.0),
    "V": (-1.0, 1.0),
    "V_t": (0.05, 2.0),
    "V_l": (0.05, 2.0),
    "V_h": (0.05, 2.0),
    "V_ll": (-2.0, -0.05),
    "V_lh": (-1.0, 1.0),
    "V_hh": (-1.0, 1.0),
}


def sample_jets(n: int, rng: np.random.Generator | int | None = None, ranges: dict | None = None) -> JetPoint:
    """Draw ``n`` jets uniformly from the admissible box.

    ``V_l > 0`` and ``V_ll < 0`` hold by construction.
    """
    rng = np.random.default_rng(rng)
    box = dict(SAMPLER_RANGES)
    if ranges:
        box.update(ranges)
    return JetPoint(**{k: rng.uniform(*box[k], size=n) for k in JET})
