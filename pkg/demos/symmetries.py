"""Check the point symmetries of the HJB variants and their Lie algebra labels."""

from illiquid_hjb.lie_algebra import base_generators, catalog, linf_sample, symmetry_defect, verify_structure
from illiquid_hjb.model import ModelParams, SuperExponential
from illiquid_hjb.pde import SPEC_IDS, make_spec

p = ModelParams()
for sid in SPEC_IDS:
    surv = SuperExponential(0.3, 0.5) if "GENERAL" in sid else None
    spec = make_spec(sid, p, surv)
    gens = base_generators(spec)
    defects = {name: symmetry_defect(spec, g, n=500, rng=0) for name, g in gens.items()}
    rep = verify_structure(catalog(spec), rng=0)
    print(f"{sid:18s} {catalog(spec).classification:14s} structure dev {rep.max_deviation:.1e}  "
          + "  ".join(f"{k} {v:.1e}" for k, v in defects.items()))

psi = linf_sample(p, "power")
print("psi(h) = h^beta symmetry defect:", f"{symmetry_defect(make_spec('HARA_EXP', p), psi.generator(), rng=1):.1e}")
