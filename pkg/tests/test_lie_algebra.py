import numpy as np
import pytest

from illiquid_hjb.errors import ClosureFailure, ParameterError, UnsupportedExtensionError
from illiquid_hjb.lie_algebra import (base_generators, catalog, classify, linf_sample, require_u4,
                                      structure_tensor, symmetry_defect, verify_structure)
from illiquid_hjb.model import ModelParams, SuperExponential
from illiquid_hjb.pde import SPEC_IDS, make_spec

LABELS = {"HARA_GENERAL": "A^γ_{3,5}", "HARA_EXP": "2A₂", "HARA_EXP_RESONANT": "A^γ_{3,5}⊕A₁",
          "LOG_GENERAL": "A₁⊕A₂", "LOG_EXP": "2A₂"}


def _spec(spec_id, params=None):
    surv = SuperExponential(0.1, 0.01) if "GENERAL" in spec_id else None
    return make_spec(spec_id, params or ModelParams(), surv)


@pytest.mark.parametrize("spec_id", SPEC_IDS)
def test_catalog_verifies_and_classifies(spec_id):
    cat = catalog(_spec(spec_id))
    rep = verify_structure(cat, rng=0)
    assert rep.ok and rep.max_deviation <= 1e-10
    assert cat.classification == LABELS[spec_id] == classify(cat.structure_array())


@pytest.mark.parametrize("spec_id", SPEC_IDS)
def test_generators_are_symmetries(spec_id):
    spec = _spec(spec_id)
    for g in base_generators(spec).values():
        assert symmetry_defect(spec, g, n=300, rng=1) <= 1e-9


def test_corrupted_table_detected():
    cat = catalog(_spec("HARA_EXP"))
    bad = {(1, 2): {2: 1.1}, (3, 4): {4: 1.0}}
    assert verify_structure(cat, rng=0, table=bad).max_deviation == pytest.approx(0.1, abs=1e-9)


def test_non_symmetry_fails_and_closure_flag():
    spec = _spec("HARA_EXP")
    from illiquid_hjb.jet_engine import FieldGenerator
    bogus = FieldGenerator("bogus", lambda t, l, h, V: (0.0, l * l, 0.0, 0.0))
    assert symmetry_defect(spec, bogus, n=200, rng=2) > 1e-3


def test_structure_tensor_antisymmetric():
    C = structure_tensor({(1, 3): {1: 1.0}, (2, 3): {2: 0.5}}, 3)
    assert np.allclose(C, -C.transpose(1, 0, 2))


def test_classify_rejects_equal_eigenvalues():
    C = structure_tensor({(1, 3): {1: 1.0}, (2, 3): {2: 1.0}}, 3)
    assert classify(C) != "A^γ_{3,5}"


@pytest.mark.parametrize("kind", ["const", "power", "exp_h"])
def test_linf_samples_solve_linear_pde(kind):
    s = linf_sample(ModelParams(), kind)
    h = np.linspace(0.2, 4.0, 25)
    t = np.linspace(0.0, 3.0, 25)
    assert np.max(np.abs(s.defect(h, t))) <= 1e-12
    spec = _spec("HARA_EXP")
    assert symmetry_defect(spec, s.generator(), n=200, rng=3) <= 1e-9


def test_linf_power_degenerate_cases():
    with pytest.raises(ParameterError):
        linf_sample(ModelParams(eta=0.0), "power")
    p = ModelParams()
    # beta = 1 - 2 (mu - delta)/eta^2 = 0
    with pytest.raises(ParameterError):
        linf_sample(p.with_(mu=p.delta + 0.5 * p.eta**2), "power")
    with pytest.raises(ParameterError):
        linf_sample(p, "cubic")


def test_u4_requires_exponential_survival():
    with pytest.raises(UnsupportedExtensionError):
        require_u4(_spec("HARA_GENERAL"))
    assert require_u4(_spec("LOG_EXP")) is not None


def test_resonance_guard():
    p = ModelParams()
    with pytest.raises(ParameterError):
        catalog(make_spec("HARA_EXP", p.with_(kappa=p.r * p.gamma)))


def test_verify_structure_rejects_few_points():
    with pytest.raises(ValueError):
        verify_structure(catalog(_spec("LOG_EXP")), npts=4)


def test_closure_failure_raises_when_requested():
    cat = catalog(_spec("LOG_GENERAL"))
    from illiquid_hjb.jet_engine import FieldGenerator
    from illiquid_hjb.lie_algebra import AlgebraCatalog
    extra = dict(cat.generators)
    extra["X"] = FieldGenerator("X", lambda t, l, h, V: (0.0, l * l, 0.0, 0.0))
    change = np.zeros((4, 4))
    change[:3, :3] = cat.basis_change
    change[3, 3] = 1.0
    weird = AlgebraCatalog(cat.spec, extra, change, cat.structure_constants, cat.classification)
    with pytest.raises(ClosureFailure):
        verify_structure(weird, rng=0, raise_on_failure=True)
