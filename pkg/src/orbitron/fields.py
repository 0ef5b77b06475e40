"""Analytic magnetostatic field of the two-pole trap plus the linear compensation field.

All evaluators accept positions with shape ``(..., 3)`` and broadcast over the
leading axes, so a batch of trajectories can be pushed through one call.

Index conventions: ``jac[..., i, k] = dB_i/dx_k`` and
``hess[..., i, k, l] = d^2 B_i / dx_k dx_l``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PoleSingularity

MU0 = 4e-7 * np.pi
"""Vacuum permeability, T*m/A. Fixed on purpose: not a configuration knob."""

POLE_GUARD = 1e-12


@dataclass(frozen=True)
class OrbitronParams:
    """Two unlike poles ``-/+kappa`` placed at ``z = +/-h`` (see ``eval_orbitron``)."""

    kappa: float
    h: float

    def __post_init__(self):
        # kappa = 0 (linear field only) and kappa < 0 (reversed poles) are legal test configurations
        if not np.isfinite(self.kappa):
            raise ValueError(f"kappa must be finite, got {self.kappa}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise ValueError(f"h must be finite and > 0, got {self.h}")


@dataclass(frozen=True)
class LinearFieldParams:
    b0: float
    b_prime: float

    def __post_init__(self):
        if not (np.isfinite(self.b0) and np.isfinite(self.b_prime)):
            raise ValueError("b0 and b_prime must be finite")


@dataclass(frozen=True)
class FieldModel:
    orbitron: OrbitronParams
    linear: LinearFieldParams

    @property
    def mu0(self) -> float:
        return MU0

    @classmethod
    def from_values(cls, kappa, h, b0, b_prime) -> "FieldModel":
        return cls(OrbitronParams(kappa, h), LinearFieldParams(b0, b_prime))


@dataclass(frozen=True)
class FieldSample:
    b: np.ndarray
    jac: np.ndarray
    hess: np.ndarray = field(repr=False)


def _pole_offsets(p: OrbitronParams, x):
    """Yield (strength prefactor, offset vector) for each pole."""
    x = np.asarray(x, dtype=float)
    for eps in (1.0, -1.0):
        c = -MU0 / (4 * np.pi) * eps * p.kappa
        d = x.copy()
        d[..., 2] -= eps * p.h
        r = np.linalg.norm(d, axis=-1)
        if np.any(r < POLE_GUARD):
            raise PoleSingularity(f"evaluation point within {POLE_GUARD} m of the pole at z={eps * p.h}")
        yield c, d, r


def eval_orbitron(p: OrbitronParams, x) -> np.ndarray:
    """Field of the two poles at ``x`` (T)."""
    b = np.zeros(np.shape(x))
    for c, d, r in _pole_offsets(p, x):
        b += (c / r**3)[..., None] * d
    return b


def _orbitron_derivatives(p: OrbitronParams, x):
    shape = np.shape(x)[:-1]
    b = np.zeros(shape + (3,))
    jac = np.zeros(shape + (3, 3))
    hess = np.zeros(shape + (3, 3, 3))
    eye = np.eye(3)
    for c, d, r in _pole_offsets(p, x):
        r3 = (c / r**3)[..., None, None]
        r5 = (c / r**5)[..., None, None, None]
        r7 = (c / r**7)[..., None, None, None]
        dd = d[..., :, None] * d[..., None, :]
        b += r3[..., 0] * d
        jac += r3 * eye - 3 * r5[..., 0] * dd
        ddd = dd[..., :, :, None] * d[..., None, None, :]
        sym = (
            eye[:, :, None] * d[..., None, None, :]
            + eye[:, None, :] * d[..., None, :, None]
            + eye[None, :, :] * d[..., :, None, None]
        )
        hess += -3 * r5 * sym + 15 * r7 * ddd
    return b, jac, hess


def eval_linear(p: LinearFieldParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    b = np.empty(x.shape)
    b[..., 0] = -0.5 * p.b_prime * x[..., 0]
    b[..., 1] = -0.5 * p.b_prime * x[..., 1]
    b[..., 2] = p.b0 + p.b_prime * x[..., 2]
    return b


def linear_jacobian(p: LinearFieldParams) -> np.ndarray:
    return np.diag([-0.5 * p.b_prime, -0.5 * p.b_prime, p.b_prime])


def eval_field(m: FieldModel, x) -> np.ndarray:
    """Total field value only; cheaper than ``eval_total`` when derivatives are not needed."""
    return eval_orbitron(m.orbitron, x) + eval_linear(m.linear, x)


def eval_total(m: FieldModel, x) -> FieldSample:
    """Value, Jacobian and Hessian of the total field at ``x``."""
    x = np.asarray(x, dtype=float)
    b, jac, hess = _orbitron_derivatives(m.orbitron, x)
    return FieldSample(b + eval_linear(m.linear, x), jac + linear_jacobian(m.linear), hess)


def field_and_jacobian(m: FieldModel, x):
    """``(B, DB)`` without the Hessian; the hot path of the equations of motion."""
    x = np.asarray(x, dtype=float)
    o, lin = m.orbitron, m.linear
    # both poles on one extra axis: d[..., e, :] = x - z_e e3
    d = np.repeat(x[..., None, :], 2, axis=-2)
    d[..., 0, 2] -= o.h
    d[..., 1, 2] += o.h
    r2 = np.einsum("...j,...j->...", d, d)
    if np.any(r2 < POLE_GUARD**2):
        raise PoleSingularity(f"evaluation point within {POLE_GUARD} m of a pole")
    c = -MU0 / (4 * np.pi) * o.kappa * np.array([1.0, -1.0])
    r3 = c / (r2 * np.sqrt(r2))
    r5 = r3 / r2
    b = np.einsum("...e,...ej->...j", r3, d)
    jac = -3 * np.einsum("...e,...ej,...ek->...jk", r5, d, d)
    diag = r3.sum(axis=-1)
    jac[..., 0, 0] += diag - 0.5 * lin.b_prime
    jac[..., 1, 1] += diag - 0.5 * lin.b_prime
    jac[..., 2, 2] += diag + lin.b_prime
    b[..., 0] -= 0.5 * lin.b_prime * x[..., 0]
    b[..., 1] -= 0.5 * lin.b_prime * x[..., 1]
    b[..., 2] += lin.b0 + lin.b_prime * x[..., 2]
    return b, jac


@dataclass(frozen=True)
class MidplaneDerivatives:
    """Cylindrical quantities at ``x0 = r0*e1`` (where cylindrical r is Cartesian x)."""

    r0: float
    b1: float
    b3: float
    b_prime: float
    bz_r: float
    bz_rr: float
    bz_zz: float


def midplane_derivatives(m: FieldModel, r0: float) -> MidplaneDerivatives:
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    s = eval_total(m, [r0, 0.0, 0.0])
    return MidplaneDerivatives(
        r0=r0,
        b1=float(s.b[0]),
        b3=float(s.b[2]),
        b_prime=m.linear.b_prime,
        bz_r=float(s.jac[2, 0]),
        bz_rr=float(s.hess[2, 0, 0]),
        bz_zz=float(s.hess[2, 2, 2]),
    )


def midplane_jacobian(m: FieldModel, r0: float) -> np.ndarray:
    d = midplane_derivatives(m, r0)
    bp = d.b_prime
    return np.array([
        [-0.5 * bp, 0.0, d.bz_r],
        [0.0, -0.5 * bp, 0.0],
        [d.bz_r, 0.0, bp],
    ])


def midplane_hessian(m: FieldModel, r0: float) -> np.ndarray:
    """The three matrices ``D^2 B_1, D^2 B_2, D^2 B_3`` stacked as shape (3, 3, 3)."""
    d = midplane_derivatives(m, r0)
    rr, r_over = d.bz_rr, d.bz_r / r0
    h = np.zeros((3, 3, 3))
    h[0, 0, 2] = h[0, 2, 0] = rr
    h[1, 1, 2] = h[1, 2, 1] = r_over
    h[2, 0, 0] = rr
    h[2, 1, 1] = r_over
    h[2, 2, 2] = -(rr + r_over)
    return h


def maxwell_residual(m: FieldModel, x):
    """Relative divergence and curl of the analytic Jacobian at ``x``."""
    jac = eval_total(m, x).jac
    scale = np.linalg.norm(jac, axis=(-2, -1))
    scale = np.where(scale > 0, scale, 1.0)
    div = np.trace(jac, axis1=-2, axis2=-1)
    curl = np.linalg.norm(jac - np.swapaxes(jac, -1, -2), axis=(-2, -1)) / np.sqrt(2)
    return np.abs(div) / scale, curl / scale


def orbitron_midplane_bz(p: OrbitronParams, r):
    """Closed form of the pole field's axial component on ``z = 0``."""
    return MU0 / (4 * np.pi) * 2 * p.kappa * p.h / (np.asarray(r) ** 2 + p.h**2) ** 1.5
