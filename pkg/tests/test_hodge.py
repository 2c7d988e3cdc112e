import numpy as np
import pytest

from bihermitian import hopf, verify
from bihermitian.grid import ConfigError
from bihermitian.hodge import (DolbeaultComplex, SolverConfig, SolverError, Twisted02Scalar, anti_form_from_02,
                               omega02_component)


@pytest.fixture(scope="module")
def metric(small_grid):
    return hopf.vaisman_family(small_grid, 0.5)[0]


def rand(rng, grid, *extra):
    return rng.standard_normal(grid.shape + extra) + 1j * rng.standard_normal(grid.shape + extra)


@pytest.mark.parametrize("mode", ["transpose", "pole-corrected"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adjoint_identity(small_grid, metric, mode, seed):
    rng = np.random.default_rng(seed)
    dc = DolbeaultComplex(small_grid, metric, 0.5, adjoint=mode)
    b, u = (rand(rng, small_grid), rand(rng, small_grid)), rand(rng, small_grid)
    lhs = dc.inner02(dc.dbar_dual(b), u)
    rhs = dc.inner01(b, dc.dbar_adjoint(u))
    assert abs(lhs - rhs) / abs(lhs) < 1e-12


def test_transpose_mode_is_hermitian_and_pole_mode_is_not(small_grid, metric):
    assert DolbeaultComplex(small_grid, metric, 0.5, adjoint="transpose").hermitian
    assert not DolbeaultComplex(small_grid, metric, 0.5).hermitian


def test_laplacian_positive_in_transpose_mode(small_grid, metric, rng):
    dc = DolbeaultComplex(small_grid, metric, 0.5, adjoint="transpose")
    u = Twisted02Scalar(rand(rng, small_grid), 0.5)
    assert dc.inner02(dc.laplacian_apply(u).values, u.values).real > 0


@pytest.mark.parametrize("mode", ["transpose", "pole-corrected"])
def test_apply_then_solve(small_grid, metric, rng, mode):
    dc = DolbeaultComplex(small_grid, metric, 0.5, adjoint=mode)
    x0 = rand(rng, small_grid)
    alpha = dc.laplacian_apply(Twisted02Scalar(x0, 0.5))
    x, stats = dc.green(alpha, SolverConfig(rel_tol=1e-12, max_iter=20000))
    assert np.linalg.norm(x.values - x0) / np.linalg.norm(x0) < 1e-8
    assert stats.rel_residual < 1e-11


def test_solver_failure_reports_ritz(small_grid, metric, rng):
    dc = DolbeaultComplex(small_grid, metric, 0.5, adjoint="transpose")
    alpha = Twisted02Scalar(rand(rng, small_grid), 0.5)
    with pytest.raises(SolverError, match="Ritz"):
        dc.green(alpha, SolverConfig(max_iter=2))


def test_bad_modes_are_config_errors(small_grid, metric):
    with pytest.raises(ConfigError):
        DolbeaultComplex(small_grid, metric, 0.5, adjoint="magic")
    with pytest.raises(ConfigError):
        DolbeaultComplex(small_grid, metric, 0.5, stencil="nope")


def test_02_roundtrip(rng):
    u = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    assert np.allclose(omega02_component(anti_form_from_02(u)), u)


def test_hodge_suite_passes():
    bad = [c.to_dict() for c in verify.hodge_suite() if not c.passed]
    assert not bad
