import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orbitron.equilibrium import BodyParams, EquilibriumProblem, solve_equilibrium
from orbitron.errors import BlockStructureViolation, DegenerateAttitude, NotACriticalPoint
from orbitron.fields import FieldModel, midplane_derivatives
from orbitron.stability import (
    A,
    P,
    PI,
    X,
    ReducedForm,
    SecondVariation,
    admissible_basis,
    analytic_conditions,
    assess,
    closed_form_q1,
    closed_form_q2,
    constraint_set,
    eigen_verdict,
    fd_second_derivative,
    identity_check,
    leading_minors,
    natural_scales,
    reduce,
    reduced_form,
    second_variation,
    second_variation_matrix,
    sylvester,
    sylvester_verdict,
)

from .conftest import sample_equilibria

SAMPLES = sample_equilibria(200, seed=21)


def quiet(fn, *a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotACriticalPoint)
        return fn(*a)


# full form --------------------------------------------------------------------


def test_zero_field_leaves_only_kinetic_terms():
    prob = EquilibriumProblem(FieldModel.from_values(0.0, 0.05, 0.0, 0.0), BodyParams(0.02, 0.1, 1e-4, 1e-4), 0.1)
    S = second_variation_matrix(prob, np.array([0.1, 0, 0]), np.array([0, 0, 1.0]), np.zeros(3), 0.0, 0.0)
    expected = np.zeros((12, 12))
    expected[P, P] = np.eye(3) / 0.02
    expected[PI, PI] = np.eye(3) * 1e4
    np.testing.assert_array_equal(S, expected)


def test_full_form_symmetric_with_exact_kinetic_block(acceptance):
    prob, eq = acceptance
    S = second_variation(eq, prob).matrix
    assert np.abs(S - S.T).max() <= 1e-12 * np.abs(S).max()
    np.testing.assert_array_equal(np.diag(S)[6:], [1 / prob.body.mass] * 3 + [prob.body.alpha] * 3)


def test_warns_away_from_critical_point(acceptance):
    prob, eq = acceptance
    off = dataclasses.replace(eq, residuals=(np.ones(3),))
    with pytest.warns(NotACriticalPoint):
        second_variation(off, prob)


def test_finite_difference_oracle_on_admissible_directions():
    # the assembled form is the exact second derivative of the augmented Hamiltonian
    rng = np.random.default_rng(3)
    worst = 0.0
    for prob, eq in SAMPLES[:50]:
        S = second_variation(eq, prob).matrix
        basis, scale = admissible_basis(eq), natural_scales(eq)
        for _ in range(2):
            v = basis @ rng.normal(size=8)
            v /= np.abs(v / scale).max()
            exact = v @ S @ v
            size = np.abs(v) @ np.abs(S) @ np.abs(v)
            worst = max(worst, abs(fd_second_derivative(eq, prob, v) - exact) / size)
    assert worst < 1e-5


def test_finite_difference_oracle_on_reduced_form(acceptance):
    prob, eq = acceptance
    form = reduced_form(eq, prob)
    basis, scale = admissible_basis(eq), natural_scales(eq)
    rng = np.random.default_rng(4)
    for _ in range(100):
        w = rng.normal(size=8)
        v = basis @ w
        k = np.abs(v / scale).max()
        v, w = v / k, w / k
        exact = w @ form.full @ w
        size = np.abs(w) @ np.abs(form.full) @ np.abs(w)
        assert abs(fd_second_derivative(eq, prob, v) - exact) <= 1e-5 * size


# admissible subspace --------------------------------------------------------------


def test_basis_annihilates_constraints():
    for prob, eq in SAMPLES[:50]:
        C = constraint_set(eq).all
        B = admissible_basis(eq)
        assert np.linalg.matrix_rank(C) == 4
        scale = np.abs(C).max(axis=1, keepdims=True) * np.abs(B).max(axis=0, keepdims=True)
        assert np.all(np.abs(C @ B) <= 1e-12 * scale)


def test_basis_dependent_entries(acceptance):
    _, eq = acceptance
    B = admissible_basis(eq)
    assert B[6, 1] == pytest.approx(eq.p0 / eq.r0)  # dp1 from dx2
    assert B[5, 2] == pytest.approx(-eq.nu1 / eq.nu3)  # dA3 from dA1


def test_basis_requires_tilted_axis(acceptance):
    _, eq = acceptance
    with pytest.raises(DegenerateAttitude):
        admissible_basis(dataclasses.replace(eq, nu1=1.0, nu3=0.0))


# reduced form -------------------------------------------------------------------


def test_reduced_entries(acceptance):
    prob, eq = acceptance
    form = reduced_form(eq, prob)
    d = midplane_derivatives(prob.field, eq.r0)
    m = prob.body.moment
    assert form.q1[0, 0] == pytest.approx(prob.body.alpha, rel=1e-14)
    assert form.q2[1, 1] == pytest.approx(m * eq.nu3 * (d.bz_rr + d.bz_r / eq.r0), rel=1e-10)
    assert form.dp3_coeff == pytest.approx(1 / prob.body.mass, rel=1e-14)
    # Q1[2,2] carries -m nu3 B_{z,r}/r0; the opposite sign is rejected by the oracle
    q22 = 3 * prob.body.mass * eq.xi1**2 - m * eq.nu3 * d.bz_r / eq.r0
    assert form.q1[1, 1] == pytest.approx(q22, rel=1e-12)
    assert closed_form_q1(eq, prob, alt_sign=True)[1, 1] != pytest.approx(form.q1[1, 1], rel=1e-3)


def test_closed_forms_match_reduction_everywhere():
    for prob, eq in SAMPLES:
        form = reduced_form(eq, prob)
        assert form.cross_block_ratio < 1e-10
        for closed, got in ((closed_form_q1(eq, prob), form.q1), (closed_form_q2(eq, prob), form.q2)):
            assert np.abs(closed - got).max() <= 1e-10 * np.abs(got).max()
            assert np.abs(got - got.T).max() <= 1e-12 * np.abs(got).max()


def test_q77_coupling_term_is_needed(acceptance):
    prob, eq = acceptance
    form = reduced_form(eq, prob)
    dropped = closed_form_q2(eq, prob, drop_coupling=True)
    missing = -2 * eq.xi1 * eq.xi2_tilde * eq.nu1**2 / (prob.body.alpha * eq.nu3)
    assert form.q2[3, 3] - dropped[3, 3] == pytest.approx(missing, rel=1e-8)


def test_blocks_decouple_by_mirror_symmetry_alone(acceptance):
    # the split follows from y -> -y parity, so it survives a wrong spin rate
    prob, eq = acceptance
    off = dataclasses.replace(eq, xi1=eq.xi1 * 1.2, residuals=())
    assert reduced_form(off, prob).cross_block_ratio < 1e-12


def test_block_structure_violation(acceptance):
    _, eq = acceptance
    G = np.random.default_rng(0).normal(size=(12, 12))
    with pytest.raises(BlockStructureViolation):
        reduce(SecondVariation(G + G.T), admissible_basis(eq))


# Sylvester and eigenvalue oracles ---------------------------------------------------


def test_identity_is_stable():
    form = ReducedForm(np.eye(3), np.eye(4), 1.0, np.eye(8))
    rep = sylvester(form)
    assert rep.verdict == "stable"
    assert rep.q1_minors == [1, 1, 1] and rep.q2_minors == [1, 1, 1, 1]


def test_negative_second_minor():
    verdict, minors = sylvester_verdict(np.diag([1.0, -1.0, 1.0]))
    assert verdict == "unstable" and minors[1] < 0


def test_singular_is_indeterminate():
    assert sylvester_verdict(np.diag([1.0, 0.0, 1.0]))[0] == "indeterminate"
    assert eigen_verdict(np.diag([1.0, 0.0, 1.0])) == "indeterminate"


def test_random_symmetric_matrices_agree_with_eigenvalues():
    rng = np.random.default_rng(5)
    for k in range(1000):
        n = 3 + k % 2
        G = rng.normal(size=(n, n))
        Q = G @ G.T if k % 2 else G + G.T
        Q = Q + rng.uniform(-0.5, 2.0) * np.eye(n)
        v, _ = sylvester_verdict(Q)
        lam = np.linalg.eigvalsh(Q)[0]
        assert v == eigen_verdict(Q)
        assert v == ("stable" if lam > 0 else "unstable")


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)))
def test_verdicts_agree_property(G):
    Q = G + G.T
    v, _ = sylvester_verdict(Q)
    ev = eigen_verdict(Q)
    if "indeterminate" not in (v, ev):
        assert v == ev


def test_reduced_forms_agree_with_eigenvalues():
    for prob, eq in SAMPLES:
        rep = sylvester(reduced_form(eq, prob))
        assert rep.verdict == rep.eigen_verdict


# analytic conditions ----------------------------------------------------------------


def test_identity_holds_with_effective_multiplier():
    distinct = 0
    for prob, eq in SAMPLES:
        ident = identity_check(eq, prob)
        assert ident.residual_tilde < 1e-10
        if ident.residual_bare > 1e-6:
            distinct += 1
    assert distinct > 20  # the bare multiplier fails wherever beta <pi, nu> matters


def test_conditions_agree_with_minors():
    for prob, eq in SAMPLES:
        conds = analytic_conditions(eq, prob)
        for name in ("radial_stiffness", "attitude_alignment", "q1_determinant", "vertical_stiffness",
                     "radial_schur"):
            assert conds[name].agrees, name


def test_q1_verdict_is_alignment_and_determinant():
    for prob, eq in SAMPLES:
        form = reduced_form(eq, prob)
        conds = analytic_conditions(eq, prob, form)
        both = conds["attitude_alignment"].status == "holds" and conds["q1_determinant"].status == "holds"
        assert both == (sylvester_verdict(form.q1)[0] == "stable")


def test_q1_determinant_condition_reduces_to_orbital_term():
    # radial force balance turns the left side into 4 M xi1^2 r0
    for prob, eq in SAMPLES[:50]:
        c = analytic_conditions(eq, prob)["q1_determinant"]
        assert c.value == pytest.approx(4 * prob.body.mass * eq.xi1**2 * eq.r0, rel=1e-9)


def test_misaligned_moment_fails_third_minor():
    hits = 0
    for prob, eq in SAMPLES:
        b1 = -0.5 * prob.field.linear.b_prime * eq.r0
        if eq.nu1 * b1 <= 0:
            hits += 1
            form = reduced_form(eq, prob)
            assert analytic_conditions(eq, prob, form)["attitude_alignment"].status == "fails"
            assert leading_minors(form.q1)[2] <= 0
    assert hits > 10


def test_schur_condition_needs_domain_sign():
    flipped = 0
    for prob, eq in SAMPLES:
        conds = analytic_conditions(eq, prob)
        eps = eq.nu1**2 / (prob.body.alpha * prob.body.mass * eq.r0**2)
        if eps > 3:
            flipped += 1
            assert conds["radial_schur_alt"].value == -conds["radial_schur"].value
    assert flipped > 0


def test_scaling_xi1_raises_q1_terms(acceptance):
    prob, eq = acceptance
    lo = analytic_conditions(eq, prob)
    faster = dataclasses.replace(eq, xi1=eq.xi1 * 1.1)
    q_lo, q_hi = closed_form_q1(eq, prob), closed_form_q1(faster, prob)
    assert q_hi[1, 1] > q_lo[1, 1]
    hi = quiet(analytic_conditions, faster, prob, reduced_form(eq, prob))
    assert hi["q1_determinant"].value > lo["q1_determinant"].value


def test_pure_linear_field_vertical_stiffness_is_boundary():
    # kappa = 0: B_{z,zz} = 0 identically
    prob = EquilibriumProblem(FieldModel.from_values(0.0, 0.05, 1.0, 1.0), BodyParams(0.01, 0.1, 1e-5, 1e-5), 0.1)
    eq = solve_equilibrium(prob)
    rep = assess(eq, prob)
    ac = rep.analytic_conditions
    assert ac["vertical_stiffness"]["status"] == "boundary"
    # the tilted moment also points against B1 here, so the overall verdict is not stable
    assert ac["attitude_alignment"]["status"] == "fails"
    assert rep.verdict != "stable" and ac["verdict"] != "stable"


def test_acceptance_set_is_stable(acceptance):
    prob, eq = acceptance
    rep = assess(eq, prob)
    assert rep.verdict == "stable" and rep.eigen_verdict == "stable"
    assert all(m > 0 for m in rep.q1_minors + rep.q2_minors)
    assert rep.analytic_conditions["verdict"] == "stable"
    assert rep.oracle_agreement["closed_form_q1"] and rep.oracle_agreement["closed_form_q2"]


def test_negative_control_is_unstable(negative):
    prob, eq = negative
    rep = assess(eq, prob)
    assert rep.verdict == "unstable"
    ac = rep.analytic_conditions
    assert all(m > 0 for m in rep.q1_minors) and rep.q2_minors[1] < 0
    failing = {k for k, v in ac.items() if isinstance(v, dict) and v.get("status") == "fails"}
    assert failing == {"vertical_stiffness"}
    assert ac["verdict"] == "unstable"


def test_reduce_requires_matching_shapes(acceptance):
    prob, eq = acceptance
    sv = second_variation(eq, prob)
    form = reduce(sv, admissible_basis(eq))
    assert form.full.shape == (8, 8)
    assert np.abs(form.full[7, :7]).max() <= 1e-10 * form.dp3_coeff
