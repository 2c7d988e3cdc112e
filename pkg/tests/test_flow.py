import numpy as np
import pytest

from bihermitian import deform, flow, hopf
from bihermitian import pointwise as pw
from bihermitian.grid import ConfigError, FlatBundle


@pytest.fixture(scope="module")
def pot(params):
    return flow.calibrated_potential(params, FlatBundle(-1, 0))


def test_potential_reproduces_twisted_vaisman_form(small_grid, pot, params):
    L = FlatBundle(-1, 0)
    F = flow.lck_from_potential(small_grid, pot, L)
    _, Fv, lee = hopf.vaisman_family(small_grid, hopf.select_t_for_bundle(params, L))
    Ft = hopf.twisted_representative(Fv, lee)
    assert np.max(pw.norm(F.values - Ft.values)) < 1e-12 * np.max(pw.norm(Ft.values))
    assert np.isclose(F.factor, Ft.factor)


def test_seam_check(pot):
    assert flow.seam_check(pot, FlatBundle(-1, 0)) < 1e-12
    assert flow.seam_check(pot, FlatBundle(-1, -1)) > 1e-3


def test_trivial_bundle_rejected(params):
    with pytest.raises(ConfigError):
        flow.calibrated_potential(params, FlatBundle(0, 0))


def test_hamiltonian_vector_jacobian_matches_finite_differences(pot, rng):
    L = FlatBundle(-1, 0)
    x = rng.standard_normal((5, 4))
    X, DX = flow.hamiltonian_vector(x, pot, L)
    h = 1e-6
    for c in range(4):
        e = np.zeros(4)
        e[c] = h
        fd = (flow.hamiltonian_vector(x + e, pot, L, False)[0] - flow.hamiltonian_vector(x - e, pot, L, False)[0])
        assert np.allclose(fd / (2 * h), DX[..., :, c], atol=1e-7)


def test_hamiltonian_field_commutes_with_contraction(small_grid, pot):
    flow.hamiltonian_field(small_grid, pot, FlatBundle(-1, 0))


def test_flow_preserves_fixed_points_at_t_zero(small_grid, pot):
    om = flow.omega_flow(small_grid, pot, FlatBundle(-1, 0), flow.FlowConfig(0.0, 4))
    assert not np.any(om)


def test_zero_bivector_gives_t_times_f(small_grid, pot, monkeypatch):
    def zero_q(x, bundle, with_derivative=True):
        z = np.zeros(x.shape[:-1] + (4, 4))
        return (z, np.zeros(x.shape[:-1] + (4, 4, 4))) if with_derivative else (z, None)

    monkeypatch.setattr(flow, "bivector_at", zero_q)
    t = 0.05
    om = flow.omega_flow(small_grid, pot, FlatBundle(-1, 0), flow.FlowConfig(t, 8))
    assert np.allclose(om, t * pot.ddc(small_grid.x), atol=1e-15)


def test_pushforward_matches_direct_jminus_at_integrator_order(small_grid, pot):
    L = FlatBundle(-1, 0)
    devs = []
    for n in (4, 8):
        rep = flow.flow_report(small_grid, pot, L, flow.FlowConfig(0.1, n))
        devs.append(rep["pushforward_dev"])
    assert np.log2(devs[0] / devs[1]) > 3.5


def test_flow_structure_satisfies_gualtieri(small_grid, pot):
    rep = flow.flow_report(small_grid, pot, FlatBundle(-1, 0), flow.FlowConfig(0.1, 16))
    assert rep["gualtieri"] < 1e-8
    Jm = rep["jminus"]
    assert np.max(pw.norm(Jm @ Jm + np.eye(4))) < 1e-10


def test_flow_agrees_with_series_to_second_order(small_grid, pot, params):
    L = FlatBundle(-1, 0)
    res = deform.run(params, L, small_grid.shape, deform.DeformConfig(N=3))
    cv = flow.cross_validate(res["series"], small_grid, pot, L, [0.02, 0.01], 16)
    assert cv["slope"] >= 1.8
    assert cv["ratio_over_t"][1] < cv["ratio_over_t"][0]


def test_trace_rows(tmp_path, small_grid, pot):
    tr = flow.Trace([0, 5])
    flow.omega_flow(small_grid, pot, FlatBundle(-1, 0), flow.FlowConfig(0.05, 4), tr)
    tr.write(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "node,s,x1,y1,x2,y2,jac_det"
    assert len(lines) == 1 + 2 * 5


def test_flow_config_checks():
    with pytest.raises(ConfigError):
        flow.FlowConfig(0.1, 5)
    with pytest.raises(ConfigError):
        flow.FlowConfig(-0.1, 4)
