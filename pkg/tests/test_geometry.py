import numpy as np
import pytest

from bihermitian import forms, hopf, verify
from bihermitian import pointwise as pw
from bihermitian.grid import ConfigError, EquivariantField, FlatBundle, FundamentalGrid, HopfParams


def test_backend_rejects_distinct_multipliers():
    with pytest.raises(ConfigError, match="a1 = a2"):
        HopfParams(0.4, 0.5)


def test_bundle_factor_and_dual(params):
    L = FlatBundle(-1, 0)
    assert np.isclose(L.real_factor(params), 2.0)
    assert np.isclose(L.dual().real_factor(params) * L.real_factor(params), 1.0)


def test_refined_shape(small_grid):
    assert small_grid.refined().shape == (16, 17, 16, 16)


def test_map_comp_roundtrip(rng):
    a = rng.standard_normal((5, 4, 4))
    a = a - pw.T(a)
    assert np.allclose(forms.map_from_comp(forms.comp_from_map(a)), a)


def test_wedge_of_one_form_with_itself_vanishes(rng):
    th = rng.standard_normal((3, 4))
    assert forms.sup_norm(forms.wedge1(th, th, 1)) < 1e-14


def test_vaisman_metric_is_hermitian_and_positive(small_grid):
    g, F, lee = hopf.vaisman_family(small_grid, 0.5)
    J = pw.STANDARD_J
    assert np.max(pw.orthogonality_defect(g.values, np.broadcast_to(J, g.values.shape))) < 1e-12
    assert np.all(np.linalg.eigvalsh(g.values)[..., 0] > 0)


def test_seam_residual_converges(params):
    # the seam check extrapolates across s = 1 at 4th order
    r = [hopf.vaisman_family(FundamentalGrid(params, n, 9, 8, 8), 0.5)[0].seam_residual() for n in (8, 16)]
    assert r[0] / r[1] > 8


def test_sigma_zero_curves():
    assert hopf.sigma_zero_curves(FlatBundle(-1, 0)) == ["E2"]
    assert hopf.sigma_zero_curves(FlatBundle(-1, -1)) == []


def test_geometry_suite_passes():
    checks = verify.geometry_suite()
    bad = [c.to_dict() for c in checks if not c.passed]
    assert not bad


def test_corrupted_stencil_fails_geometry_suite():
    with verify.corrupted_stencil():
        checks = verify.geometry_suite()
    assert not all(c.passed for c in checks)
    # restored afterwards
    assert all(c.passed for c in verify.geometry_suite())
