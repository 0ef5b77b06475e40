"""Energy-momentum stability test for a relative equilibrium.

Pipeline: assemble the 12x12 matrix of the second variation of the augmented
Hamiltonian, restrict it to the 8-dimensional subspace of admissible
variations, split off the trivial ``dp3`` direction, and test the remaining
3x3 and 4x4 blocks for positive definiteness with leading principal minors.

Variation ordering of the full form is ``(dx1..3, dA1..3, dp1..3, dpi1..3)``,
where ``dA`` is the right-trivialised (inertial frame) rotation of the
attitude, so ``d nu = dA x nu``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import E3, EquilibriumProblem, RelativeEquilibrium
from .errors import BlockStructureViolation, DegenerateAttitude, NotACriticalPoint
from .fields import eval_total, midplane_derivatives

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0

X, A, P, PI = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)

FREE_VARIATIONS = ("dpi2", "dx2", "dA1", "dpi1", "dx3", "dx1", "dA2", "dp3")
Q1_ORDER = FREE_VARIATIONS[:3]
Q2_ORDER = FREE_VARIATIONS[3:7]

BLOCK_TOL = 1e-10
MINOR_GUARD = 1e-8
CRITICAL_TOL = 1e-9


@dataclass(frozen=True)
class SecondVariation:
    matrix: np.ndarray


@dataclass(frozen=True)
class ConstraintSet:
    """Linear functionals on 12-vectors; each row annihilates admissible variations."""

    first_type: np.ndarray
    second_type: np.ndarray

    @property
    def all(self) -> np.ndarray:
        return np.vstack([self.first_type, self.second_type])


@dataclass(frozen=True)
class ReducedForm:
    q1: np.ndarray
    q2: np.ndarray
    dp3_coeff: float
    full: np.ndarray = field(repr=False, default=None)

    @property
    def cross_block_ratio(self) -> float:
        coupled = self.full[:7, :7]
        off = np.concatenate([coupled[:3, 3:].ravel(), self.full[7, :7]])
        diag_scale = max(np.abs(self.q1).max(), np.abs(self.q2).max())
        return float(np.abs(off).max() / diag_scale)


@dataclass
class StabilityReport:
    q1_minors: list
    q2_minors: list
    verdict: str
    diagonal_positive: bool
    eigen_verdict: str
    analytic_conditions: dict = field(default_factory=dict)
    oracle_agreement: dict = field(default_factory=dict)

    @property
    def stable(self) -> bool:
        return self.verdict == "stable"


def _cross_matrix(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def second_variation_matrix(prob: EquilibriumProblem, x, nu, pi, xi1, xi2_tilde, sample=None) -> np.ndarray:
    """Symmetric 12x12 matrix of the second variation at an arbitrary phase point.

    ``xi2_tilde`` is held fixed (valid on variations tangent to the momentum
    level set), so the ``beta <pi, nu>^2`` contribution is absorbed into it.
    """
    nu, pi = np.asarray(nu, float), np.asarray(pi, float)
    body = prob.body
    m = body.moment
    s = sample if sample is not None else eval_total(prob.field, x)
    b, jac, hess = s.b, s.jac, s.hess

    S = np.zeros((12, 12))
    S[P, P] = np.eye(3) / body.mass
    S[PI, PI] = body.alpha * np.eye(3)

    S[X, X] = -m * np.einsum("i,ikl->kl", nu, hess)
    # -2m nu_i eps_iks B_k,r dx_r dA_s
    cxa = -2 * m * np.einsum("i,iks,kr->rs", nu, LEVI_CIVITA, jac)
    S[X, A] = cxa / 2
    S[A, X] = cxa.T / 2
    S[A, A] = -m * (0.5 * (np.outer(b, nu) + np.outer(nu, b)) - (nu @ b) * np.eye(3))
    S[A, A] += xi2_tilde * (0.5 * (np.outer(nu, pi) + np.outer(pi, nu)) - (pi @ nu) * np.eye(3))
    # -2 xi1 <e3, dx x dp>
    cxp = -2 * xi1 * LEVI_CIVITA[2]
    S[X, P] = cxp / 2
    S[P, X] = cxp.T / 2
    # 2 xi2_tilde <nu, dpi x dA>
    cpa = 2 * xi2_tilde * np.einsum("i,irs->rs", nu, LEVI_CIVITA)
    S[PI, A] = cpa / 2
    S[A, PI] = cpa.T / 2
    return S


def second_variation(eq: RelativeEquilibrium, prob: EquilibriumProblem) -> SecondVariation:
    if eq.residuals and eq.residual_norm > CRITICAL_TOL:
        warnings.warn(
            f"equilibrium residual {eq.residual_norm:.3g} exceeds {CRITICAL_TOL}; "
            "the second variation is only meaningful at a critical point",
            NotACriticalPoint,
            stacklevel=2,
        )
    return SecondVariation(second_variation_matrix(prob, eq.x, eq.nu, eq.pi, eq.xi1, eq.xi2_tilde))


def constraint_set(eq: RelativeEquilibrium) -> ConstraintSet:
    """Tangency to the momentum level set (first type) and transversality to the torus orbit."""
    x, p, nu, pi = eq.x, eq.p, eq.nu, eq.pi
    c1 = np.zeros(12)
    c1[PI] = E3
    c1[X] = np.cross(p, E3)
    c1[P] = -np.cross(x, E3)
    c2 = np.zeros(12)
    c2[PI] = nu
    c2[A] = np.cross(nu, pi)
    c3 = np.zeros(12)
    c3[6] = 1.0
    c3[1] = -eq.p0 / eq.r0
    c4 = np.zeros(12)
    c4[A] = nu
    return ConstraintSet(np.vstack([c1, c2]), np.vstack([c3, c4]))


def admissible_basis(eq: RelativeEquilibrium) -> np.ndarray:
    """12x8 matrix whose columns span the admissible variations.

    Column ``j`` is the variation with free coordinate ``FREE_VARIATIONS[j]``
    set to one; the dependent ``dp1, dA3, dpi3, dp2`` follow from the
    constraints.
    """
    nu1, nu3, pi1, pi3, p0, r0 = eq.nu1, eq.nu3, eq.pi1, eq.pi3, eq.p0, eq.r0
    if abs(nu3) < 1e-9:
        raise DegenerateAttitude("nu3 = 0: admissible variations cannot be parameterised")
    w = nu3 * pi1 - nu1 * pi3
    index = {"dx1": 0, "dx2": 1, "dx3": 2, "dA1": 3, "dA2": 4, "dA3": 5,
             "dp1": 6, "dp2": 7, "dp3": 8, "dpi1": 9, "dpi2": 10, "dpi3": 11}
    B = np.zeros((12, 8))
    for j, name in enumerate(FREE_VARIATIONS):
        B[index[name], j] = 1.0
    col = {n: j for j, n in enumerate(FREE_VARIATIONS)}
    B[index["dp1"], col["dx2"]] = p0 / r0
    B[index["dA3"], col["dA1"]] = -nu1 / nu3
    B[index["dpi3"], col["dpi1"]] = -nu1 / nu3
    B[index["dpi3"], col["dA2"]] = -w / nu3
    B[index["dp2"], col["dpi1"]] = nu1 / (r0 * nu3)
    B[index["dp2"], col["dA2"]] = w / (r0 * nu3)
    B[index["dp2"], col["dx1"]] = -p0 / r0
    return B


def reduce(sv: SecondVariation, basis: np.ndarray, check: bool = True) -> ReducedForm:
    R = basis.T @ sv.matrix @ basis
    R = 0.5 * (R + R.T)
    form = ReducedForm(q1=R[:3, :3].copy(), q2=R[3:7, 3:7].copy(), dp3_coeff=float(R[7, 7]), full=R)
    if check and form.cross_block_ratio > BLOCK_TOL:
        raise BlockStructureViolation(f"cross-block ratio {form.cross_block_ratio:.3g} > {BLOCK_TOL}")
    return form


def leading_minors(q: np.ndarray) -> list[float]:
    # singular input is a legitimate answer (zero), not a numerical fault
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return [float(np.linalg.det(q[:k, :k])) for k in range(1, q.shape[0] + 1)]


def _minor_guards(q: np.ndarray) -> list[float]:
    # Hadamard bound |det Q_k| <= prod ||row_i(Q_k)|| sets the scale of each minor
    return [MINOR_GUARD * float(np.prod(np.linalg.norm(q[:k, :k], axis=1))) for k in range(1, q.shape[0] + 1)]


def _equilibrated(q: np.ndarray) -> np.ndarray:
    """``D Q D`` with ``D`` scaling the diagonal to unit size.

    A positive diagonal congruence keeps the sign of every leading minor and
    every eigenvalue, and removes the spread of units between variations.
    """
    top = np.abs(q).max()
    q = q / top if top > 0 else q
    s = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(q)), 1e-12))
    return q * np.outer(s, s)


def sylvester_verdict(q: np.ndarray) -> tuple[str, list[float]]:
    """Verdict from the leading minors; the returned minors are those of ``q`` itself."""
    minors = leading_minors(q)
    qe = _equilibrated(q)
    guards = _minor_guards(qe)
    signs = leading_minors(qe)
    if any(d < -g for d, g in zip(signs, guards)):
        return "unstable", minors
    if any(abs(d) <= g for d, g in zip(signs, guards)):
        return "indeterminate", minors
    return "stable", minors


def eigen_verdict(q: np.ndarray) -> str:
    """Sign of the smallest eigenvalue of the equilibrated matrix."""
    qe = _equilibrated(q)
    lam = np.linalg.eigvalsh(0.5 * (qe + qe.T))
    guard = MINOR_GUARD * np.abs(lam).max()
    if lam[0] > guard:
        return "stable"
    if lam[0] < -guard:
        return "unstable"
    return "indeterminate"


def _combine(*verdicts):
    if "unstable" in verdicts:
        return "unstable"
    if "indeterminate" in verdicts:
        return "indeterminate"
    return "stable"


def sylvester(form: ReducedForm) -> StabilityReport:
    v1, m1 = sylvester_verdict(form.q1)
    v2, m2 = sylvester_verdict(form.q2)
    verdict = _combine(v1, v2, "stable" if form.dp3_coeff > 0 else "unstable")
    ev = _combine(eigen_verdict(form.q1), eigen_verdict(form.q2))
    diag = bool(np.all(np.diag(form.q1) > 0) and np.all(np.diag(form.q2) > 0))
    return StabilityReport(
        q1_minors=m1,
        q2_minors=m2,
        verdict=verdict,
        diagonal_positive=diag,
        eigen_verdict=ev,
        oracle_agreement={"eigenvalue": (verdict == "stable") == (ev == "stable")},
    )


def reduced_form(eq: RelativeEquilibrium, prob: EquilibriumProblem, check: bool = True) -> ReducedForm:
    return reduce(second_variation(eq, prob), admissible_basis(eq), check=check)


# Closed-form blocks --------------------------------------------------------


def closed_form_q1(eq: RelativeEquilibrium, prob: EquilibriumProblem, alt_sign: bool = False) -> np.ndarray:
    """Q1 in the order ``(dpi2, dx2, dA1)`` written through field derivatives.

    ``alt_sign=True`` flips the sign of the ``B_{z,r}/r0`` term in the ``(2, 2)``
    entry; it is kept for comparison and does not follow from the full form.
    """
    body, m = prob.body, prob.body.moment
    d = midplane_derivatives(prob.field, eq.r0)
    nu1, nu3, xi1, xi2t = eq.nu1, eq.nu3, eq.xi1, eq.xi2_tilde
    sign = 1.0 if alt_sign else -1.0
    q22 = 3 * body.mass * xi1**2 + sign * m * nu3 * d.bz_r / eq.r0
    q23 = -m * d.b_prime / (2 * nu3)
    q33 = _aligned_energy(eq, prob) / nu3**2
    return np.array([
        [body.alpha, 0.0, -xi2t / nu3],
        [0.0, q22, q23],
        [-xi2t / nu3, q23, q33],
    ])


def _aligned_energy(eq, prob):
    """``<nu, m B - xi2_tilde pi>`` at the equilibrium point."""
    b = eval_total(prob.field, eq.x).b
    return float(eq.nu @ (prob.body.moment * b - eq.xi2_tilde * eq.pi))


def closed_form_q2(eq: RelativeEquilibrium, prob: EquilibriumProblem, drop_coupling: bool = False) -> np.ndarray:
    """Q2 in the order ``(dpi1, dx3, dx1, dA2)``.

    ``drop_coupling=True`` omits the ``-2 xi1 xi2_tilde nu1^2 / (alpha nu3)`` part of
    ``Q77`` that comes from the ``dpi3``/``dA2`` coupling.
    """
    body, m = prob.body, prob.body.moment
    M, alpha, r0 = body.mass, body.alpha, eq.r0
    d = midplane_derivatives(prob.field, r0)
    nu1, nu3, xi1, xi2t = eq.nu1, eq.nu3, eq.xi1, eq.xi2_tilde
    bzz = d.b_prime
    q = np.zeros((4, 4))
    q[0, 0] = (alpha + nu1**2 / (M * r0**2)) / nu3**2
    q[0, 2] = -2 * xi1 * nu1 / (r0 * nu3)
    q[1, 1] = m * nu3 * (d.bz_rr + d.bz_r / r0)
    q[1, 2] = -m * nu1 * d.bz_rr
    q[2, 2] = 3 * M * xi1**2 - m * nu3 * d.bz_rr
    k = 1 + 1 / (alpha * M * r0**2)
    ratio = nu1**2 / nu3**2
    q[0, 3] = xi2t / nu3 - xi1 * k * ratio
    q[1, 3] = m * (-nu3 * d.bz_r + nu1 * bzz)
    q[2, 3] = m * (nu1 * d.bz_r + 0.5 * nu3 * bzz) + 2 * xi1**2 / (r0 * alpha) * nu1 / nu3
    q[3, 3] = xi1**2 / alpha * k * ratio + _aligned_energy(eq, prob)
    if not drop_coupling:
        q[3, 3] -= 2 * xi1 * xi2t * nu1**2 / (alpha * nu3)
    return q + np.triu(q, 1).T


# Analytic conditions -------------------------------------------------------

CONDITION_TOL = 1e-10


@dataclass(frozen=True)
class Condition:
    """One closed-form inequality ``value > 0``.

    ``status`` is ``holds``, ``fails`` or ``boundary`` (``|value|`` within
    ``CONDITION_TOL`` of the scale of its terms).  ``minor_expr`` is the
    quantity built from the assembled minors whose sign the condition claims to
    predict; ``agrees`` compares the two signs.
    """

    name: str
    value: float
    scale: float
    minor_expr: float | None = None
    note: str = ""

    @property
    def status(self) -> str:
        if abs(self.value) <= CONDITION_TOL * self.scale:
            return "boundary"
        return "holds" if self.value > 0 else "fails"

    @property
    def agrees(self) -> bool | None:
        if self.minor_expr is None:
            return None
        return bool(np.sign(self.value) == np.sign(self.minor_expr)) or self.status == "boundary"

    def as_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "minor_expr": self.minor_expr,
                "agrees": self.agrees, "note": self.note}


@dataclass(frozen=True)
class IdentityCheck:
    """Both readings of ``<nu, mB - s pi> - s^2/alpha = m B1 / nu1``, with ``s`` = ``xi2_tilde`` or ``xi2``."""

    rhs: float
    residual_tilde: float
    residual_bare: float

    @property
    def holds_with(self) -> str:
        ok = [n for n, r in (("xi2_tilde", self.residual_tilde), ("xi2", self.residual_bare)) if r < CONDITION_TOL]
        return "+".join(ok) if ok else "neither"

    def as_dict(self) -> dict:
        return {"rhs": self.rhs, "relative_residual_xi2_tilde": self.residual_tilde,
                "relative_residual_xi2": self.residual_bare, "holds_with": self.holds_with}


def identity_check(eq: RelativeEquilibrium, prob: EquilibriumProblem) -> IdentityCheck:
    m, alpha = prob.body.moment, prob.body.alpha
    b = eval_total(prob.field, eq.x).b
    rhs = m * b[0] / eq.nu1

    def rel(s):
        lhs = float(eq.nu @ (m * b - s * eq.pi)) - s * s / alpha
        return abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300)

    return IdentityCheck(rhs, rel(eq.xi2_tilde), rel(eq.xi2(prob.body)))


def analytic_conditions(eq: RelativeEquilibrium, prob: EquilibriumProblem, form: ReducedForm | None = None) -> dict:
    """Evaluate the closed-form stability conditions next to the minors they summarise.

    Keys ending in ``_alt`` are sign variants kept for comparison; the
    unsuffixed keys follow the reduction of the full form.
    """
    form = form if form is not None else reduced_form(eq, prob, check=False)
    m1, m2 = leading_minors(form.q1), leading_minors(form.q2)
    body, m = prob.body, prob.body.moment
    M, alpha, r0 = body.mass, body.alpha, eq.r0
    d = midplane_derivatives(prob.field, r0)
    nu1, nu3, xi1 = eq.nu1, eq.nu3, eq.xi1
    b1 = float(eval_total(prob.field, eq.x).b[0])
    bzzz = float(eval_total(prob.field, eq.x).hess[2, 2, 2])

    orb = 3 * M * xi1**2
    tilt = m * nu3 * d.bz_r / r0
    c = {}
    c["radial_stiffness"] = Condition("radial_stiffness", orb - tilt, orb + abs(tilt), m1[1] / m1[0])
    c["radial_stiffness_alt"] = Condition("radial_stiffness_alt", orb + tilt, orb + abs(tilt), m1[1] / m1[0],
                                "opposite sign of the B_{z,r} term")
    # det Q1 = (alpha m / nu3^2) (B1/nu1) (Q1[2,2] + m nu1 B' / (2 r0))
    lead = orb * r0 - m * nu3 * d.bz_r + 0.5 * m * nu1 * d.b_prime
    lead_scale = orb * r0 + abs(m * nu3 * d.bz_r) + abs(0.5 * m * nu1 * d.b_prime)
    c["attitude_alignment"] = Condition("attitude_alignment", b1 / nu1, abs(b1 / nu1), m1[2] * np.sign(lead))
    c["q1_determinant"] = Condition("q1_determinant", lead, lead_scale, m1[2] * np.sign(b1 / nu1))
    c["q1_determinant_alt"] = Condition("q1_determinant_alt", orb * r0 + m * nu3 * d.bz_r + 0.5 * m * nu1 * d.b_prime,
                                lead_scale, m1[2] * np.sign(b1 / nu1), "opposite sign of the B_{z,r} term")
    # Q2 has no (dpi1, dx3) coupling, so its second minor carries the sign of -m nu3 B_{z,zz}
    c["vertical_stiffness"] = Condition("vertical_stiffness", -m * nu3 * bzzz, m * abs(nu3) * (abs(d.bz_rr) + abs(d.bz_r) / r0), m2[1] / m2[0])
    # the closed form is the Schur complement of the (dpi1, dx3) block divided by
    # (1 - eps/3)/(1 + eps); past eps = 3 that divisor is negative and the
    # inequality reverses
    eps = nu1**2 / (alpha * M * r0**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = (1 + eps) / (1 - eps / 3) / nu3**2 * (1 + nu1**2 * d.bz_r / (r0 * bzzz))
        v67 = float(orb - factor * m * nu3 * d.bz_rr)
    s67 = orb + abs(float(factor * m * nu3 * d.bz_rr))
    ratio = m2[2] / m2[1] if m2[1] != 0 else None
    c["radial_schur"] = Condition("radial_schur", v67 * float(np.sign(1 - eps / 3)), s67, ratio,
                        "sign reversed when nu1^2 > 3 alpha M r0^2")
    c["radial_schur_alt"] = Condition("radial_schur_alt", v67, s67, ratio, "without the domain sign")
    return c


def analytic_verdict(conditions: dict, q2_det: float, guard: float = 0.0) -> str:
    """Conjunction of the conditions; ``det Q2`` has no closed form and enters numerically."""
    keys = ("attitude_alignment", "q1_determinant", "vertical_stiffness", "radial_schur")
    statuses = [conditions[k].status for k in keys]
    if "fails" in statuses or q2_det < -guard:
        return "unstable"
    if "boundary" in statuses or abs(q2_det) <= guard:
        return "indeterminate"
    return "stable"


def assess(eq: RelativeEquilibrium, prob: EquilibriumProblem) -> StabilityReport:
    """Full stability report: minors, eigenvalue oracle, analytic conditions and closed-form checks."""
    form = reduced_form(eq, prob)
    rep = sylvester(form)
    conds = analytic_conditions(eq, prob, form)
    ident = identity_check(eq, prob)
    q2e = _equilibrated(form.q2)  # same sign of det Q2, comparable guard
    av = analytic_verdict(conds, leading_minors(q2e)[-1], _minor_guards(q2e)[-1])

    def rel_err(a, b):
        return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))

    rep.analytic_conditions = {k: v.as_dict() for k, v in conds.items()}
    rep.analytic_conditions["aligned_energy_identity"] = ident.as_dict()
    rep.analytic_conditions["verdict"] = av
    q1_err, q2_err = rel_err(closed_form_q1(eq, prob), form.q1), rel_err(closed_form_q2(eq, prob), form.q2)
    rep.oracle_agreement.update({
        "analytic": av == rep.verdict,
        "closed_form_q1": q1_err < BLOCK_TOL,
        "closed_form_q2": q2_err < BLOCK_TOL,
        "closed_form_q1_rel_err": q1_err,
        "closed_form_q2_rel_err": q2_err,
        "cross_block_ratio": form.cross_block_ratio,
        "conditions": {k: v.agrees for k, v in conds.items() if not k.endswith("_alt")},
    })
    return rep


# Finite-difference oracle --------------------------------------------------


def augmented_hamiltonian(eq: RelativeEquilibrium, prob: EquilibriumProblem, x, p, nu, pi) -> float:
    """``h - xi1 J1 - xi2 J2`` with the multipliers frozen at their equilibrium values."""
    body = prob.body
    b = eval_total(prob.field, x).b
    pn = float(pi @ nu)
    h = (p @ p / (2 * body.mass) + 0.5 * body.alpha * (pi @ pi) + 0.5 * body.beta * pn**2
         - body.moment * float(b @ nu) + body.mass * prob.g * x[2])
    j1 = pi[2] + x[0] * p[1] - x[1] * p[0]
    return float(h - eq.xi1 * j1 + eq.xi2(body) * pn)


def natural_scales(eq: RelativeEquilibrium) -> np.ndarray:
    """Size of each of the 12 variations at which the form is naturally O(energy)."""
    spin = max(abs(eq.pi1), abs(eq.pi3), 1e-300)
    return np.repeat([eq.r0, 1.0, max(abs(eq.p0), 1e-300), spin], 3)


def fd_second_derivative(eq: RelativeEquilibrium, prob: EquilibriumProblem, v, step: float = 1e-2) -> float:
    """Second derivative of the augmented Hamiltonian along the curve through ``v``.

    ``x``, ``p`` and ``pi`` move linearly; the attitude is rotated by
    ``exp(eps dA)`` so that the curve's tangent is ``dA x nu``.  Uses a
    fourth-order central stencil.
    """
    from scipy.spatial.transform import Rotation

    v = np.asarray(v, dtype=float)

    def f(eps):
        nu = Rotation.from_rotvec(eps * v[A]).apply(eq.nu)
        return augmented_hamiltonian(eq, prob, eq.x + eps * v[X], eq.p + eps * v[P], nu, eq.pi + eps * v[PI])

    e = step
    return (-f(2 * e) + 16 * f(e) - 30 * f(0.0) + 16 * f(-e) - f(-2 * e)) / (12 * e * e)
