"""Direct integration of the dipole equations of motion and Monte Carlo sheaves.

The state is the 12-vector ``(x, p, mu, pi)``::

    x'  = p / M
    p'  = grad(mu . B) - M g e3
    mu' = alpha * pi x mu
    pi' = mu x B

Arrays of states with shape ``(n, 12)`` are integrated in one batch; every
row evolves independently.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import E3, EquilibriumProblem, RelativeEquilibrium
from .errors import PoleSingularity, StepFailure
from .fields import POLE_GUARD, eval_field, field_and_jacobian

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    "t", "x1", "x2", "x3", "p1", "p2", "p3", "mu1", "mu2", "mu3", "pi1", "pi2", "pi3", "h", "J1", "J2",
)


@dataclass
class PhaseState:
    x: np.ndarray
    p: np.ndarray
    mu: np.ndarray
    pi: np.ndarray
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.p, self.mu, self.pi]).astype(float)

    @classmethod
    def from_array(cls, y, t=0.0) -> "PhaseState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:3].copy(), y[3:6].copy(), y[6:9].copy(), y[9:12].copy(), t)

    @classmethod
    def from_equilibrium(cls, eq: RelativeEquilibrium, prob: EquilibriumProblem) -> "PhaseState":
        return cls(eq.x, eq.p, prob.body.moment * eq.nu, eq.pi)


@dataclass(frozen=True)
class IntegratorConfig:
    """``method`` is ``"rk4"`` (fixed step ``dt``) or ``"adaptive"`` (embedded Dormand-Prince pair)."""

    method: str = "rk4"
    dt: float | None = None
    steps_per_turn: int = 2000
    rtol: float = 1e-10
    atol: float = 1e-12
    renormalize_mu: bool = False
    stride: int = 1
    max_time: float = math.inf
    pole_clearance: float = 1e-3  # in units of h; closer than this counts as a collision

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps_per_turn < 1 or self.stride < 1:
            raise ValueError("steps_per_turn and stride must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.pole_clearance < 0:
            raise ValueError("pole_clearance must be >= 0")

    def step_for(self, period: float) -> float:
        return self.dt if self.dt is not None else period / self.steps_per_turn


@dataclass
class InvariantTrace:
    t: np.ndarray
    h: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    mu_norm: np.ndarray

    def drift(self) -> dict:
        """Largest excursion of each invariant from its initial value, relative to that value."""
        out = {}
        for name in ("h", "J1", "J2", "mu_norm"):
            v = getattr(self, name)
            ref = abs(v[0]) if v[0] != 0 else 1.0
            out[name] = float(np.max(np.abs(v - v[0])) / ref)
        return out


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    trace: InvariantTrace
    status: str = "completed"
    mu_corrections: float = 0.0

    def rows(self):
        """Rows in ``TRAJECTORY_COLUMNS`` order."""
        return np.column_stack([self.t, self.y, self.trace.h, self.trace.J1, self.trace.J2])


def derivative(y, prob: EquilibriumProblem) -> np.ndarray:
    """Time derivative of one state ``(12,)`` or a batch ``(n, 12)``."""
    y = np.asarray(y, dtype=float)
    body = prob.body
    x, p, mu, pi = y[..., 0:3], y[..., 3:6], y[..., 6:9], y[..., 9:12]
    b, jac = field_and_jacobian(prob.field, x)
    out = np.empty_like(y)
    out[..., 0:3] = p / body.mass
    # curl-free field: grad(mu . B) = DB^T mu
    out[..., 3:6] = np.einsum("...ki,...k->...i", jac, mu)
    out[..., 5] -= body.mass * prob.g
    _cross(pi, mu, out[..., 6:9])
    out[..., 6:9] *= body.alpha
    _cross(mu, b, out[..., 9:12])
    return out


def _cross(a, b, out):
    # np.cross carries enough overhead to dominate single-state steps
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def invariants(y, prob: EquilibriumProblem) -> dict:
    """Energy, the two momentum-map components, ``|mu|`` and ``<pi, nu>``."""
    y = np.asarray(y, dtype=float)
    body = prob.body
    x, p, mu, pi = y[..., 0:3], y[..., 3:6], y[..., 6:9], y[..., 9:12]
    nu = mu / body.moment
    pn = np.sum(pi * nu, axis=-1)
    b = eval_field(prob.field, x)
    h = (
        np.sum(p * p, axis=-1) / (2 * body.mass)
        + 0.5 * body.alpha * np.sum(pi * pi, axis=-1)
        + 0.5 * body.beta * pn**2
        - np.sum(b * mu, axis=-1)
        + body.mass * prob.g * x[..., 2]
    )
    j1 = pi[..., 2] + x[..., 0] * p[..., 1] - x[..., 1] * p[..., 0]
    return {"h": h, "J1": j1, "J2": -pn, "mu_norm": np.linalg.norm(mu, axis=-1), "pi_dot_nu": pn}


def pole_distance(y, prob: EquilibriumProblem):
    """Distance from the dipole to the nearer pole, for one state or a batch."""
    y = np.asarray(y, dtype=float)
    h = prob.field.orbitron.h
    rho = np.hypot(y[..., 0], y[..., 1])
    return np.minimum(np.hypot(rho, y[..., 2] - h), np.hypot(rho, y[..., 2] + h))


def chord_pole_distance(a, b, prob: EquilibriumProblem) -> float:
    """Closest approach to either pole along the straight chord between positions ``a`` and ``b``.

    A fixed step can jump across a pole; the chord catches that where the endpoints alone would not.
    """
    d = b - a
    dd = float(d @ d)
    best = math.inf
    for pole in (prob.field.orbitron.h, -prob.field.orbitron.h):
        c = np.array([0.0, 0.0, pole])
        s = 0.0 if dd == 0 else min(1.0, max(0.0, float((c - a) @ d) / dd))
        best = min(best, float(np.linalg.norm(a + s * d - c)))
    return best


def rk4_step(y, dt, prob):
    k1 = derivative(y, prob)
    k2 = derivative(y + 0.5 * dt * k1, prob)
    k3 = derivative(y + 0.5 * dt * k2, prob)
    k4 = derivative(y + dt * k3, prob)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _renormalize(y, m):
    mu = y[..., 6:9]
    norm = np.linalg.norm(mu, axis=-1, keepdims=True)
    y[..., 6:9] = mu * (m / norm)
    return float(np.max(np.abs(norm - m)))


def _trace(t, ys, prob) -> InvariantTrace:
    inv = invariants(ys, prob)
    return InvariantTrace(t, inv["h"], inv["J1"], inv["J2"], inv["mu_norm"])


def integrate(s0, prob: EquilibriumProblem, cfg: IntegratorConfig, duration: float, period: float | None = None) -> Trajectory:
    """Integrate one trajectory for ``duration`` seconds.

    For ``rk4`` the step is ``cfg.dt`` or ``period / cfg.steps_per_turn``.
    A pole hit ends the trajectory early with ``status="pole_collision"``.
    """
    y0 = s0.as_array() if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    t0 = s0.t if isinstance(s0, PhaseState) else 0.0
    duration = min(duration, cfg.max_time)
    if cfg.method == "adaptive":
        return _integrate_adaptive(y0, t0, prob, cfg, duration)
    if cfg.dt is None and period is None:
        raise ValueError("rk4 needs either cfg.dt or an orbital period")
    dt = cfg.step_for(period)
    n = max(1, int(round(duration / dt)))
    dt = duration / n
    y = y0.copy()
    ts, ys = [t0], [y.copy()]
    status, correction = "completed", 0.0
    clearance = max(cfg.pole_clearance * prob.field.orbitron.h, POLE_GUARD)
    for k in range(1, n + 1):
        prev = y[:3].copy()
        try:
            y = rk4_step(y, dt, prob)
        except PoleSingularity:
            status = "pole_collision"
            break
        if chord_pole_distance(prev, y[:3], prob) < clearance:
            status = "pole_collision"
            ts.append(t0 + k * dt)
            ys.append(y.copy())
            break
        if cfg.renormalize_mu:
            correction += _renormalize(y, prob.body.moment)
        if k % cfg.stride == 0 or k == n:
            ts.append(t0 + k * dt)
            ys.append(y.copy())
    if correction:
        log.info("cumulative |mu| renormalisation %.3e", correction)
    t, ys = np.array(ts), np.array(ys)
    return Trajectory(t, ys, _trace(t, ys, prob), status, correction)


def _integrate_adaptive(y0, t0, prob, cfg, duration) -> Trajectory:
    from scipy.integrate import solve_ivp

    def rhs(_t, y):
        return derivative(y, prob)

    clearance = max(cfg.pole_clearance * prob.field.orbitron.h, 1e3 * POLE_GUARD)

    def near_pole(_t, y):
        return pole_distance(y, prob) - clearance

    near_pole.terminal = True
    try:
        sol = solve_ivp(rhs, (t0, t0 + duration), y0, method="DOP853", rtol=cfg.rtol, atol=cfg.atol,
                        events=near_pole, dense_output=False)
    except PoleSingularity:
        return Trajectory(np.array([t0]), y0[None], _trace(np.array([t0]), y0[None], prob), "pole_collision")
    if sol.status == -1:
        raise StepFailure(sol.message)
    status = "pole_collision" if sol.status == 1 else "completed"
    t, ys = sol.t[:: cfg.stride], sol.y.T[:: cfg.stride]
    if t[-1] != sol.t[-1]:
        t, ys = np.append(t, sol.t[-1]), np.vstack([ys, sol.y.T[-1]])
    if cfg.renormalize_mu:
        ys = ys.copy()
        _renormalize(ys, prob.body.moment)
    return Trajectory(t, ys, _trace(t, ys, prob), status)


def rotate_about_e3(y, angle):
    """Rotate every 3-vector block of the state(s) ``y`` by ``angle`` about ``e3``."""
    y = np.asarray(y, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = y.copy()
    for k in range(0, 12, 3):
        a, b = y[..., k], y[..., k + 1]
        out[..., k] = c * a - s * b
        out[..., k + 1] = s * a + c * b
    return out


def write_trajectory(traj: Trajectory, path, delimiter=","):
    np.savetxt(path, traj.rows(), delimiter=delimiter, header=delimiter.join(TRAJECTORY_COLUMNS), comments="")


def read_trajectory(path, delimiter=","):
    data = np.loadtxt(path, delimiter=delimiter, skiprows=1, ndmin=2)
    return dict(zip(TRAJECTORY_COLUMNS, data.T))


# Monte Carlo sheaf ----------------------------------------------------------


@dataclass(frozen=True)
class SheafConfig:
    n_samples: int = 100
    rel_perturbation: float = 0.01
    n_turns: float = 10
    seed: int = 0
    max_radial_frac: float = 0.2
    max_z_frac: float = 0.2
    pole_clearance: float = 1.0  # in units of h
    steps_per_turn: int = 2000

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0 <= self.rel_perturbation < 1:
            raise ValueError("rel_perturbation must be in [0, 1)")
        if not self.n_turns > 0:
            raise ValueError("n_turns must be positive")


@dataclass
class TrajectoryOutcome:
    index: int
    classification: str
    turns_completed: float
    max_deviation: dict
    final_state: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "classification": self.classification,
            "turns_completed": self.turns_completed,
            "max_deviation": self.max_deviation,
            "final_state": [float(v) for v in self.final_state],
        }


@dataclass
class SheafResult:
    outcomes: list
    config: SheafConfig

    @property
    def summary(self) -> dict:
        counts = {"bounded": 0, "escaped": 0, "pole_collision": 0}
        for o in self.outcomes:
            counts[o.classification] += 1
        worst = {k: max(o.max_deviation[k] for o in self.outcomes) for k in ("x", "p", "mu", "pi")}
        return {
            "n_samples": len(self.outcomes),
            **counts,
            "bounded_fraction": counts["bounded"] / len(self.outcomes),
            "max_deviation": worst,
            "seed": self.config.seed,
            "rel_perturbation": self.config.rel_perturbation,
            "n_turns": self.config.n_turns,
        }

    def to_dict(self) -> dict:
        return {"summary": self.summary, "outcomes": [o.to_dict() for o in self.outcomes]}


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for sample ``index``; does not depend on evaluation order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def perturb_state(y_eq, rel, rng, moment) -> np.ndarray:
    """Componentwise uniform relative noise around ``y_eq``.

    Zero components get noise relative to the largest component of the same
    vector.  ``mu`` is rescaled back to ``|mu| = moment`` afterwards since the
    body's moment is a material constant.
    """
    y = np.array(y_eq, dtype=float)
    u = rng.uniform(-1.0, 1.0, size=12)
    for k in range(0, 12, 3):
        v = y[k:k + 3]
        scale = np.max(np.abs(v))
        zero = np.abs(v) <= 1e-12 * scale
        y[k:k + 3] = np.where(zero, rel * scale * u[k:k + 3], v * (1 + rel * u[k:k + 3]))
    y[6:9] *= moment / np.linalg.norm(y[6:9])
    return y


def _deviation(y, y_eq):
    """Per-block distance to the equilibrium after undoing the orbital phase."""
    phase = np.arctan2(y[..., 1], y[..., 0])
    back = rotate_about_e3(y, -phase)
    dev = {}
    for name, k in (("x", 0), ("p", 3), ("mu", 6), ("pi", 9)):
        ref = np.linalg.norm(y_eq[k:k + 3])
        dev[name] = np.linalg.norm(back[..., k:k + 3] - y_eq[k:k + 3], axis=-1) / ref
    return dev


def monte_carlo_sheaf(eq: RelativeEquilibrium, prob: EquilibriumProblem, cfg: SheafConfig) -> SheafResult:
    """Integrate ``cfg.n_samples`` perturbed copies of the equilibrium and classify each."""
    y_eq = PhaseState.from_equilibrium(eq, prob).as_array()
    y0 = np.array([
        perturb_state(y_eq, cfg.rel_perturbation, sample_rng(cfg.seed, i), prob.body.moment)
        for i in range(cfg.n_samples)
    ])
    return run_sheaf(y0, y_eq, eq.period, prob, cfg)


def run_sheaf(y0, y_eq, period, prob: EquilibriumProblem, cfg: SheafConfig) -> SheafResult:
    n = len(y0)
    r0, h = prob.r0, prob.field.orbitron.h
    dt = period / cfg.steps_per_turn
    n_steps = int(round(cfg.n_turns * cfg.steps_per_turn))

    y = y0.copy()
    active = np.ones(n, dtype=bool)
    label = np.array(["bounded"] * n, dtype=object)
    turns = np.full(n, float(cfg.n_turns))
    worst = {k: np.zeros(n) for k in ("x", "p", "mu", "pi")}

    def check(k):
        idx = np.flatnonzero(active)
        ya = y[idx]
        for name, d in _deviation(ya, y_eq).items():
            worst[name][idx] = np.maximum(worst[name][idx], d)
        rho = np.hypot(ya[:, 0], ya[:, 1])
        z = ya[:, 2]
        hit = pole_distance(ya, prob) < cfg.pole_clearance * h
        out = (np.abs(rho - r0) >= cfg.max_radial_frac * r0) | (np.abs(z) >= cfg.max_z_frac * r0)
        for j, is_hit, is_out in zip(idx, hit, out):
            if is_hit or is_out:
                active[j] = False
                label[j] = "pole_collision" if is_hit else "escaped"
                turns[j] = k / cfg.steps_per_turn

    check(0)
    for k in range(1, n_steps + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        try:
            y[idx] = rk4_step(y[idx], dt, prob)
        except PoleSingularity:
            for j in idx:
                try:
                    y[j] = rk4_step(y[j], dt, prob)
                except PoleSingularity:
                    active[j] = False
                    label[j] = "pole_collision"
                    turns[j] = k / cfg.steps_per_turn
        check(k)

    outcomes = [
        TrajectoryOutcome(i, str(label[i]), float(turns[i]), {k: float(worst[k][i]) for k in worst}, y[i].copy())
        for i in range(n)
    ]
    return SheafResult(outcomes, cfg)
