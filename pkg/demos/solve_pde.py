"""March the time-dependent reduced equation for a super-exponential liquidation law."""

import numpy as np

from illiquid_hjb.model import ModelParams, SuperExponential
from illiquid_hjb.solvers import solve_pde2d

p = ModelParams()
surv = SuperExponential(0.3, 0.05)
sol = solve_pde2d("HARA_GEN_H3", p, surv, n=96, m=60, y_max=10.0)
print(f"{sol.steps} steps, max step residual {sol.max_step_residual:.1e}, concave {sol.is_concave()}")
for t in (0.0, 2.0, 5.0):
    W, Wz, Wt, Wzz = sol.interpolate(np.array([0.5, 1.0, 2.0]), t)
    print(f"t = {t:.1f}: W(z = 0.5, 1, 2) =", np.array2string(W, precision=5))
