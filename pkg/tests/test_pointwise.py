import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bihermitian import pointwise as pw
from bihermitian.verify import random_pointwise_data

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def data(seed, n=64, q_scale=0.3):
    return random_pointwise_data(np.random.default_rng(seed), n, q_scale)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_type_split_is_a_partition(seed):
    J, F, Q = data(seed)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(J.shape)
    w = w - pw.T(w)
    inv, anti = pw.invariant_project(w, J), pw.anti_project(w, J)
    assert np.allclose(inv + anti, w, atol=1e-10)
    # invariant part commutes with J*, anti-invariant part anticommutes
    Js = pw.jstar(J)
    assert np.max(pw.norm(inv @ J - Js @ inv)) < 1e-9 * np.max(pw.norm(w)) * 10
    assert np.max(pw.norm(anti @ J + Js @ anti)) < 1e-9 * np.max(pw.norm(w)) * 10


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_jstar_squares_to_minus_one(seed):
    J, _, _ = data(seed)
    Js = pw.jstar(J)
    assert np.max(pw.norm(Js @ Js + np.eye(4))) < 1e-10


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_lemma_quadratic_term_has_no_invariant_part(seed):
    J, F, Q = data(seed)
    rng = np.random.default_rng(seed + 1)
    a = rng.standard_normal(J.shape)
    b = pw.invariant_project(a - pw.T(a), J)
    S = F @ Q @ b + b @ Q @ F
    scale = 2 * pw.norm(F) * pw.norm(Q) * pw.norm(b)
    assert np.max(pw.norm(pw.invariant_project(S, J)) / scale) < 1e-10


def test_gualtieri_trivial_cases():
    J, F, Q = data(7)
    assert np.max(pw.norm(pw.gualtieri_residual(F, 0 * Q, J))) < 1e-12 * np.max(pw.norm(F))
    assert np.max(pw.norm(pw.gualtieri_residual(0 * F, Q, J))) == 0.0


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_fixed_point_gives_bihermitian_pair(seed):
    J, F, Q = data(seed)
    omega, _ = pw.fixed_point_solve(F, Q, J, tol=1e-11)
    assert np.max(pw.norm(pw.gualtieri_residual(omega, Q, J))) < 1e-9
    Jm = pw.build_jminus(omega, Q, J)
    assert np.max(pw.norm(Jm @ Jm + np.eye(4))) < 1e-10
    g, positive = pw.build_metric(omega, J, Jm)
    assert positive.all()
    gn = pw.norm(g)
    assert np.max(pw.orthogonality_defect(g, J) / gn) < 1e-10
    assert np.max(pw.orthogonality_defect(g, Jm) / gn) < 1e-10
    p = pw.angle_p(J, Jm)
    assert np.all(np.abs(p) <= 1 + 1e-12)


def test_q_zero_gives_j_minus_equal_to_minus_j_plus():
    J, F, Q = data(3)
    Jm = pw.build_jminus(F, 0 * Q, J)
    assert np.allclose(Jm, -J)
    assert np.allclose(pw.angle_p(J, Jm), -1.0)


def test_extract_omega_recovers_invariant_part():
    J, F, Q = data(11)
    omega, _ = pw.fixed_point_solve(F, Q, J, tol=1e-11)
    Jm = pw.build_jminus(omega, Q, J)
    g, _ = pw.build_metric(omega, J, Jm)
    rec = pw.extract_omega(g, J, Jm)
    assert np.max(pw.norm(pw.invariant_project(rec, J) - g @ J) / pw.norm(g)) < 1e-10


def test_holomorphic_bivector_is_type_20_02():
    phi = np.array([1.0, 2.0 - 1.0j, 0.3j])
    re, im = pw.holomorphic_bivector(phi)
    J = np.broadcast_to(pw.STANDARD_J, re.shape)
    assert np.max(pw.anticommutes(re, J)) < 1e-14
    assert np.max(pw.anticommutes(im, J)) < 1e-14
    assert np.allclose(re, -pw.T(re))


def test_classify_labels():
    P = pw.PointClass
    assert pw.classify_labels([P.GENERIC]) == "i"
    assert pw.classify_labels([P.GENERIC, P.J_PLUS_EQ_NEG_J_MINUS]) == "ii"
    assert pw.classify_labels([P.J_PLUS_EQ_J_MINUS, P.J_PLUS_EQ_NEG_J_MINUS]) == "iii"
    assert pw.classify_point(-1.0) is P.J_PLUS_EQ_NEG_J_MINUS
    with pytest.raises(pw.AlgebraError):
        pw.classify_point(1.5)


def test_rejects_non_complex_structure():
    with pytest.raises(pw.AlgebraError):
        pw.check_complex_structure(np.eye(4))
