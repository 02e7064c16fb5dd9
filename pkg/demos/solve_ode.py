"""Solve the stationary reduced ODE with both left closures and print the policy at (l, h) = (1, 1)."""

import numpy as np

from illiquid_hjb.model import ModelParams
from illiquid_hjb.reductions import get_case
from illiquid_hjb.solvers import merton_value, reconstruct_value, solve_ode

p = ModelParams()
case = get_case("HARA_EXP_H8_ODE", p)
print(f"frictionless value with capitalized income: {float(merton_value(p, 0.0, 1.0, 1.0)):.6f}")
for bc in ("robin", "income"):
    g = solve_ode("HARA_EXP_H8_ODE", p, z0=1e-3, z1=1e3, n=2048, left_bc=bc)
    V, pol = reconstruct_value(case, g, 0.0, 1.0, 1.0)
    print(f"{bc:6s}: {g.iterations} Newton steps, residual {g.residual_norm:.1e}, concave {g.is_concave()}, "
          f"V {V[0]:.6f}, pi {pol.pi[0]:.4f}, c {pol.c[0]:.4f}")

# policy ratios as the illiquid holding shrinks
g = solve_ode("HARA_EXP_H8_ODE", p, z0=1e-3, z1=1e4, n=2048, left_bc="income")
for h in (1e-1, 1e-2, 1e-3):
    _, pol = reconstruct_value(case, g, 0.0, 1.0, h)
    print(f"h = {h:.0e}: pi / l = {pol.pi[0]:.5f} (frictionless {p.merton_ratio:.5f})")
