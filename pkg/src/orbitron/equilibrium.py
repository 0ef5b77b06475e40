"""Relative equilibria of the spinning dipole on a circular orbit in the plane z = 0.

The steady state is pinned to the ``zx`` plane: position ``x0 = r0*e1``,
momentum ``p0*e2``, attitude ``nu = (nu1, 0, nu3)`` and spin
``pi = (pi1, 0, pi3)``.  The two Lagrange multipliers are the orbital
frequency ``xi1`` and the effective spin multiplier ``xi2_tilde``.

The solve goes through three dimensionless groups::

    zeta^2 = r0 xi1^2 / g,   lambda = m B' / (M g),   sigma = -B_{z,r} / B'

Force balance is linear in ``nu`` for fixed ``zeta^2``; the unit-length
condition on ``nu`` then gives a quadratic in ``zeta^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateAttitude, DegenerateField, NoAdmissibleRoot, NoRealEquilibrium
from .fields import FieldModel, eval_field, eval_total, midplane_jacobian

E3 = np.array([0.0, 0.0, 1.0])

STATIC_ZETA_SQ = 1e-14
NU1_TOL = 1e-12


@dataclass(frozen=True)
class BodyParams:
    """Axially symmetric magnetised body.

    ``alpha = 1/I_perp`` and ``beta = 1/I_axial - 1/I_perp`` are the inverse-inertia
    combinations that enter the Hamiltonian.
    """

    mass: float
    moment: float
    i_perp: float
    i_axial: float

    def __post_init__(self):
        for name in ("mass", "moment", "i_perp", "i_axial"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if self.i_axial > 2 * self.i_perp * (1 + 1e-12):
            raise ValueError("i_axial > 2*i_perp is not realisable by a rigid body")

    @property
    def alpha(self) -> float:
        return 1.0 / self.i_perp

    @property
    def beta(self) -> float:
        return 1.0 / self.i_axial - 1.0 / self.i_perp


@dataclass(frozen=True)
class EquilibriumProblem:
    field: FieldModel
    body: BodyParams
    r0: float
    g: float = 9.81

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not self.g > 0:
            raise ValueError("g must be positive")

    @property
    def x0(self) -> np.ndarray:
        return np.array([self.r0, 0.0, 0.0])


@dataclass(frozen=True)
class DimensionlessParams:
    lambda_: float
    sigma: float
    zeta_sq: float | None = None


@dataclass(frozen=True)
class RelativeEquilibrium:
    """Solved steady state plus the diagnostics of the solve.

    ``kind`` is ``"orbital"`` for a genuine circular orbit and ``"static"``
    for the degenerate hover branch ``zeta^2 = 0`` (no orbital motion; the spin
    solution does not apply there and ``pi``/``xi2_tilde`` are left at zero).
    Off the symmetry axis the static state keeps a torque residual ``m B1``:
    it is only a true equilibrium at ``r0 = 0``.
    """

    r0: float
    xi1: float
    xi2_tilde: float
    nu1: float
    nu3: float
    pi1: float
    pi3: float
    p0: float
    kind: str = "orbital"
    zeta_sq: float = 0.0
    roots: tuple = ()
    dimensionless: DimensionlessParams | None = None
    residuals: tuple = field(default=(), repr=False)

    @property
    def residual_norm(self) -> float:
        return max((float(np.max(np.abs(r))) for r in self.residuals), default=0.0)

    @property
    def x(self) -> np.ndarray:
        return np.array([self.r0, 0.0, 0.0])

    @property
    def p(self) -> np.ndarray:
        return np.array([0.0, self.p0, 0.0])

    @property
    def nu(self) -> np.ndarray:
        return np.array([self.nu1, 0.0, self.nu3])

    @property
    def pi(self) -> np.ndarray:
        return np.array([self.pi1, 0.0, self.pi3])

    @property
    def period(self) -> float:
        return 2 * math.pi / self.xi1 if self.xi1 else math.inf

    def xi2(self, body: BodyParams) -> float:
        """Bare spin multiplier, ``xi2_tilde - beta*<pi, nu>``."""
        return self.xi2_tilde - body.beta * float(self.pi @ self.nu)


def dimensionless_params(prob: EquilibriumProblem) -> DimensionlessParams:
    bp = prob.field.linear.b_prime
    if bp == 0:
        raise DegenerateField("B' = 0: lambda and sigma are undefined")
    b = prob.body
    lam = (b.moment * bp) / (b.mass * prob.g)
    bz_r = midplane_jacobian(prob.field, prob.r0)[2, 0]
    return DimensionlessParams(lambda_=lam, sigma=-bz_r / bp)


def zeta_sq_quadratic(lam: float, sigma: float):
    """Coefficients ``(a, b, c)`` of ``a u^2 + b u + c = 0`` with ``u = zeta^2``."""
    s2 = sigma * sigma
    return 1.0 + s2, -sigma, s2 + 0.25 - lam * lam * (s2 + 0.5) ** 2


def solve_zeta_squared(dp: DimensionlessParams) -> list[float]:
    """Non-negative roots of the constraint quadratic, largest first.

    The first entry is the ``+`` branch whenever it is admissible; this is the
    root used by default.
    """
    lam, sigma = dp.lambda_, dp.sigma
    s2 = sigma * sigma
    reality = lam * lam * (1.0 + s2) - 1.0
    if reality < 0:
        if reality > -1e-14:
            reality = 0.0
        else:
            raise NoRealEquilibrium(
                f"lambda^2 (1 + sigma^2) - 1 = {reality:.6g} < 0 (lambda={lam:.6g}, sigma={sigma:.6g})"
            )
    # the discriminant factorises as (2 sigma^2 + 1)^2 (lambda^2 (1 + sigma^2) - 1)
    root = (2 * s2 + 1) * math.sqrt(reality)
    denom = 2 * (1 + s2)
    roots = sorted(((sigma + root) / denom, (sigma - root) / denom), reverse=True)
    admissible = [u for u in roots if u >= 0]
    if not admissible:
        raise NoAdmissibleRoot(f"both roots negative: {roots}")
    return admissible


def zeta_sq_closed_form(dp: DimensionlessParams, rho: float = -0.5) -> float:
    """Closed-form ``+`` root written with a free parameter ``rho``.

    It coincides with the largest root of the quadratic exactly when
    ``rho = -1/2``; kept as a cross-check of the quadratic.
    """
    lam, sigma = dp.lambda_, dp.sigma
    s2 = sigma * sigma
    return (sigma * (1 + rho) + (s2 - rho) * math.sqrt(lam * lam * (1 + s2) - 1)) / (1 + s2)


def solve_attitude(dp: DimensionlessParams, zeta_sq: float):
    lam, sigma = dp.lambda_, dp.sigma
    if lam == 0:
        raise DegenerateField("lambda = 0")
    d = lam * (sigma * sigma + 0.5)
    return (zeta_sq - sigma) / d, (sigma * zeta_sq + 0.5) / d


def solve_spin(prob: EquilibriumProblem, xi1: float, nu1: float, nu3: float):
    """Spin components and effective spin multiplier ``(pi1, pi3, xi2_tilde)``."""
    if abs(nu1) < NU1_TOL:
        raise DegenerateAttitude("nu1 = 0: hover attitude, spin is aligned with e3 and not determined here")
    if xi1 == 0:
        raise DegenerateAttitude("xi1 = 0: no orbital motion")
    b = eval_field(prob.field, prob.x0)
    m = prob.body.moment
    torque = m * (nu3 * b[0] - nu1 * b[2])
    pi1 = torque / xi1
    pi3 = xi1 / prob.body.alpha + (nu3 / nu1) * torque / xi1
    xi2_tilde = -prob.body.alpha * torque / (xi1 * nu1)
    return pi1, pi3, xi2_tilde


def residual_necessary_conditions(prob: EquilibriumProblem, x, p, nu, pi, xi1, xi2_tilde):
    """Left-hand sides of the four first-order conditions (momentum, force, spin, torque)."""
    x, p, nu, pi = (np.asarray(v, dtype=float) for v in (x, p, nu, pi))
    body = prob.body
    s = eval_total(prob.field, x)
    r_p = p / body.mass - xi1 * np.cross(E3, x)
    r_x = xi1 * np.cross(E3, p) - body.moment * s.jac.T @ nu + body.mass * prob.g * E3
    r_pi = body.alpha * pi - xi1 * E3 + xi2_tilde * nu
    r_a = np.cross(nu, xi2_tilde * pi - body.moment * s.b)
    return r_p, r_x, r_pi, r_a


def solve_equilibrium(prob: EquilibriumProblem, branch: str = "+") -> RelativeEquilibrium:
    """Assemble the full steady state for ``prob``.

    ``branch`` selects the root of the zeta^2 quadratic: ``"+"`` (default) takes
    the largest admissible root, ``"-"`` the smallest.
    """
    dp = dimensionless_params(prob)
    roots = solve_zeta_squared(dp)
    u = roots[0] if branch == "+" else roots[-1]
    nu1, nu3 = solve_attitude(dp, u)
    dp = DimensionlessParams(dp.lambda_, dp.sigma, u)
    if u <= STATIC_ZETA_SQ:
        eq = RelativeEquilibrium(
            r0=prob.r0, xi1=0.0, xi2_tilde=0.0, nu1=nu1, nu3=nu3, pi1=0.0, pi3=0.0, p0=0.0,
            kind="static", zeta_sq=u, roots=tuple(roots), dimensionless=dp,
        )
    else:
        xi1 = math.sqrt(u * prob.g / prob.r0)
        pi1, pi3, xi2t = solve_spin(prob, xi1, nu1, nu3)
        eq = RelativeEquilibrium(
            r0=prob.r0, xi1=xi1, xi2_tilde=xi2t, nu1=nu1, nu3=nu3, pi1=pi1, pi3=pi3,
            p0=prob.body.mass * xi1 * prob.r0, zeta_sq=u, roots=tuple(roots), dimensionless=dp,
        )
    res = residual_necessary_conditions(prob, eq.x, eq.p, eq.nu, eq.pi, eq.xi1, eq.xi2_tilde)
    return replace(eq, residuals=tuple(res))
