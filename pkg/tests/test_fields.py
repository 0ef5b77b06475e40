import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitron.errors import PoleSingularity
from orbitron.fields import (
    MU0,
    FieldModel,
    LinearFieldParams,
    OrbitronParams,
    eval_field,
    eval_linear,
    eval_orbitron,
    eval_total,
    field_and_jacobian,
    maxwell_residual,
    midplane_derivatives,
    midplane_hessian,
    midplane_jacobian,
    orbitron_midplane_bz,
)

MODEL = FieldModel.from_values(kappa=351.5625, h=0.05, b0=2.985, b_prime=0.35723477320570427127)


def rotz(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def off_pole_points(rng, n, model, r0=0.1):
    h = model.orbitron.h
    pts = []
    while len(pts) < n:
        x = rng.uniform(-2 * r0, 2 * r0, 3)
        if min(np.linalg.norm(x - [0, 0, h]), np.linalg.norm(x + [0, 0, h])) > 0.1 * h:
            pts.append(x)
    return np.array(pts)


def central_jacobian(f, x, rel=np.cbrt(np.finfo(float).eps)):
    out = []
    for k in range(3):
        step = rel * max(abs(x[k]), 1e-3)
        e = np.zeros(3)
        e[k] = step
        out.append((f(x + e) - f(x - e)) / (2 * step))
    return np.stack(out, axis=-1)


# values ---------------------------------------------------------------------


def test_orbitron_at_origin_closed_form():
    b = eval_orbitron(MODEL.orbitron, np.zeros(3))
    assert b[0] == 0 and b[1] == 0
    assert b[2] == pytest.approx(MU0 / (2 * np.pi) * 351.5625 / 0.05**2, rel=1e-14)


def test_orbitron_origin_value_reference_config():
    # 2e-7 * kappa / h^2 with kappa = 351.5625 A m and L = 2h = 0.1 m
    b = eval_orbitron(MODEL.orbitron, np.zeros(3))
    assert b[2] == pytest.approx(0.028125, rel=1e-12)


def test_linear_field_reference_point():
    lin = LinearFieldParams(b0=2.985, b_prime=0.35723477320570427127)
    assert np.array_equal(eval_linear(lin, np.zeros(3)), [0.0, 0.0, 2.985])
    b = eval_linear(lin, np.array([1.0, 0.0, 0.0]))
    assert b[0] == pytest.approx(-0.17861738660285213564, rel=1e-15)
    assert b[1] == 0.0 and b[2] == 2.985


def test_midplane_in_plane_components_vanish():
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.2, 0.2, (50, 3))
    x[:, 2] = 0.0
    b = eval_orbitron(MODEL.orbitron, x)
    assert np.all(b[:, :2] == 0.0)


def test_midplane_bz_closed_form():
    for r in (0.01, 0.1, 1.5):
        bz = eval_orbitron(MODEL.orbitron, np.array([r, 0, 0]))[2]
        assert bz == pytest.approx(orbitron_midplane_bz(MODEL.orbitron, r), rel=1e-13)


def test_frozen_total_sample():
    # frozen; cross-checked by summing the two pole terms by hand
    s = eval_total(MODEL, np.array([0.1, 0.02, 0.01]))
    np.testing.assert_allclose(s.b, [-0.018413847048617735, -0.0036827694097235474, 2.9909155092493758], rtol=1e-13)
    assert s.jac[2, 0] == pytest.approx(-0.05403121330014059, rel=1e-12)


# derivatives -----------------------------------------------------------------


def test_jacobian_and_hessian_against_finite_differences():
    rng = np.random.default_rng(2)
    pts = off_pole_points(rng, 200, MODEL)
    for x in pts:
        s = eval_total(MODEL, x)
        jac_fd = central_jacobian(lambda y: eval_field(MODEL, y), x)
        hess_fd = central_jacobian(lambda y: eval_total(MODEL, y).jac, x)
        assert np.abs(jac_fd - s.jac).max() / np.abs(s.jac).max() < 1e-6
        assert np.abs(hess_fd - s.hess).max() / np.abs(s.hess).max() < 1e-6


def test_field_and_jacobian_matches_full_sample():
    rng = np.random.default_rng(3)
    pts = off_pole_points(rng, 100, MODEL)
    b, jac = field_and_jacobian(MODEL, pts)
    s = eval_total(MODEL, pts)
    np.testing.assert_allclose(b, s.b, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(jac, s.jac, rtol=1e-12, atol=1e-13)


def test_maxwell_linear_only_exact():
    lin = FieldModel.from_values(0.0, 0.05, 1.3, 0.7)
    div, curl = maxwell_residual(lin, np.array([0.3, -0.2, 0.1]))
    assert div == 0.0 and curl == 0.0


def test_maxwell_full_model():
    rng = np.random.default_rng(4)
    div, curl = maxwell_residual(MODEL, off_pole_points(rng, 200, MODEL))
    assert div.max() < 1e-12 and curl.max() < 1e-12


def test_hessian_symmetric_in_derivative_indices():
    rng = np.random.default_rng(5)
    hess = eval_total(MODEL, off_pole_points(rng, 50, MODEL)).hess
    np.testing.assert_allclose(hess, np.swapaxes(hess, -1, -2), atol=1e-12 * np.abs(hess).max())


# midplane patterns -------------------------------------------------------------


@pytest.mark.parametrize("r0", [0.05, 0.1, 1.5])
def test_midplane_patterns_equal_general_evaluation(r0):
    s = eval_total(MODEL, np.array([r0, 0, 0]))
    np.testing.assert_allclose(midplane_jacobian(MODEL, r0), s.jac, rtol=0, atol=1e-15 * np.abs(s.jac).max())
    np.testing.assert_allclose(midplane_hessian(MODEL, r0), s.hess, rtol=0, atol=1e-15 * np.abs(s.hess).max())


def test_cylindrical_identity():
    # B_{r,r} + B_{z,z} = -B_r / r in the midplane (zero divergence)
    for r0 in (0.05, 0.1, 1.5):
        s = eval_total(MODEL, np.array([r0, 0, 0]))
        lhs = s.jac[0, 0] + s.jac[2, 2]
        assert lhs == pytest.approx(-s.b[0] / r0, rel=1e-12)


def test_no_poles_linear_patterns():
    m = FieldModel.from_values(0.0, 0.05, 1.0, 0.4)
    np.testing.assert_array_equal(midplane_jacobian(m, 0.1), np.diag([-0.2, -0.2, 0.4]))
    assert not midplane_hessian(m, 0.1).any()
    assert midplane_derivatives(m, 0.1).bz_r == 0.0


def test_pole_guard():
    with pytest.raises(PoleSingularity):
        eval_total(MODEL, np.array([0.0, 0.0, 0.05]))
    with pytest.raises(PoleSingularity):
        field_and_jacobian(MODEL, np.array([[0.1, 0, 0], [0.0, 0.0, -0.05]]))
    eval_total(MODEL, np.array([0.0, 0.0, 0.05 + 1e-9]))


def test_parameter_validation():
    with pytest.raises(ValueError):
        OrbitronParams(kappa=1.0, h=0.0)
    with pytest.raises(ValueError):
        OrbitronParams(kappa=float("nan"), h=0.1)


# properties --------------------------------------------------------------------

coords = st.floats(-0.2, 0.2, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(phi=st.floats(0, 2 * np.pi), x=st.tuples(coords, coords, coords))
def test_axial_symmetry(phi, x):
    x = np.array(x)
    if min(np.linalg.norm(x - [0, 0, 0.05]), np.linalg.norm(x + [0, 0, 0.05])) < 5e-3:
        return
    R = rotz(phi)
    b = eval_field(MODEL, x)
    np.testing.assert_allclose(eval_field(MODEL, R @ x), R @ b, rtol=0, atol=1e-12 * np.linalg.norm(b))


@settings(max_examples=100, deadline=None)
@given(x=st.tuples(coords, coords, coords),
       kappa=st.floats(-1e4, 1e4), h=st.floats(0.01, 0.2))
def test_jacobian_symmetric_traceless(x, kappa, h):
    m = FieldModel.from_values(kappa, h, 1.0, 0.5)
    x = np.array(x)
    if min(np.linalg.norm(x - [0, 0, h]), np.linalg.norm(x + [0, 0, h])) < 0.1 * h:
        return
    jac = eval_total(m, x).jac
    scale = np.abs(jac).max()
    assert abs(np.trace(jac)) <= 1e-12 * scale
    assert np.abs(jac - jac.T).max() <= 1e-12 * scale


@settings(max_examples=50, deadline=None)
@given(x=st.tuples(coords, coords, coords))
def test_mirror_antisymmetry(x):
    # reflecting z flips the in-plane pole field and keeps B_z
    x = np.array(x)
    if min(np.linalg.norm(x - [0, 0, 0.05]), np.linalg.norm(x + [0, 0, 0.05])) < 5e-3:
        return
    b = eval_orbitron(MODEL.orbitron, x)
    bm = eval_orbitron(MODEL.orbitron, x * [1, 1, -1])
    scale = np.linalg.norm(b)
    np.testing.assert_allclose(bm, b * [-1, -1, 1], rtol=0, atol=1e-13 * scale)
