import numpy as np
import pytest

from bihermitian import deform
from bihermitian import pointwise as pw
from bihermitian.grid import ConfigError, FlatBundle
from bihermitian.hodge import DolbeaultComplex, SolverConfig

SHAPE = (8, 9, 8, 8)


@pytest.fixture(scope="module")
def small_run(params):
    return deform.run(params, FlatBundle(-1, 0), SHAPE, deform.DeformConfig(N=4))


def _series(params, q_scale, N=4):
    st = deform.setup(params, FlatBundle(-1, 0), SHAPE)
    hodge = DolbeaultComplex(st.grid, st.g_base, st.F.factor, bundle=FlatBundle(-1, 0).dual())
    return deform.build_series(st.grid, st.F.values, q_scale * st.Q.values, st.J, st.F.factor, N, hodge,
                               deform.Tolerances(), SolverConfig())


def test_small_run_is_valid_class_ii(small_run):
    rep = small_run["structure"].report
    assert rep["valid"], rep
    assert rep["class"] == "ii"
    assert rep["positive"]
    assert rep["overlay_E2_dev"] < 1e-8
    assert -1 < rep["p_min"] <= rep["p_max"] < 1


def test_lemma_certificate_and_term_residuals(small_run):
    for entry in small_run["series"].log[1:]:
        assert entry["lemma_cert"] < 1e-12
        assert entry["term_residual"] < 1e-12


def test_series_first_term_is_the_lck_form(small_run):
    st = small_run["setup"]
    assert np.array_equal(small_run["series"].terms[0], st.F.values)


def test_assemble_is_the_partial_sum(small_run):
    s = small_run["series"]
    t = 0.37
    direct = sum(t ** (n + 1) * w for n, w in enumerate(s.terms))
    assert np.allclose(deform.assemble(s, t), direct, rtol=0, atol=1e-14)


def test_truncated_gualtieri_residual_is_order_n_plus_one(small_run):
    s = small_run["series"]
    J, Q = s.J, s.Q
    r = [deform.relative_gualtieri(deform.assemble(s, t), Q, J) for t in (0.2, 0.1)]
    # N = 4: the residual starts at t^5 relative to |omega| ~ t, so it falls like t^4
    assert np.log2(r[0] / r[1]) > 3.5


def test_zero_bivector_gives_omega_t_f(params):
    s = _series(params, 0.0, N=3)
    assert all(np.max(np.abs(w)) == 0 for w in s.terms[1:])
    assert deform.ratio_monitor(s)["rate"] is None


def test_monitor_rate_scales_with_q(params):
    b1 = deform.ratio_monitor(_series(params, 1.0))["rate"]
    b2 = deform.ratio_monitor(_series(params, 0.5))["rate"]
    assert np.isclose(b2 / b1, 0.5, rtol=0.1)


def test_roundtrip_invariant_part(small_run):
    assert small_run["roundtrip"]["invariant_dev"] < 1e-12


def test_lemma_violation_is_detected(params):
    st = deform.setup(params, FlatBundle(-1, 0), SHAPE)
    rng = np.random.default_rng(0)
    junk = rng.standard_normal(st.F.values.shape)
    junk = pw.anti_project(junk - pw.T(junk), st.J)  # omega_1 with a (2,0)+(0,2) part breaks the lemma
    series = deform.DeformationSeries(st.grid, [st.F.values + junk], st.F.factor, st.J, st.Q.values)
    hodge = DolbeaultComplex(st.grid, st.g_base, st.F.factor)
    with pytest.raises(deform.LemmaViolation):
        deform.recursion_step(2, series, hodge, deform.Tolerances())


def test_stage_tags(params):
    stages = []
    with pytest.raises(ConfigError):
        deform.run(params, FlatBundle(-1, 0), SHAPE, deform.DeformConfig(N=2, t_scan=(50.0, 60.0, 2)),
                   stages=stages)
    assert stages[-1] == "scan"


def test_config_checks():
    with pytest.raises(ConfigError):
        deform.DeformConfig(N=0)
    with pytest.raises(ConfigError):
        deform.DeformConfig(t_scan=(1.0, 0.5, 10))
