"""Command line front end.

Configuration is TOML with dotted keys, numbers in SI units::

    seed = 42
    field.kappa = 351.5625
    field.h = 0.075
    ...

Commands print a JSON report to stdout; ``simulate`` also writes a CSV
trajectory and ``sheaf``/``full-report`` write their JSON to the output
directory.  Exit status: 0 success, 1 error, 2 no equilibrium, 3 equilibrium
found but not stable.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import (
    IntegratorConfig,
    PhaseState,
    SheafConfig,
    integrate,
    monte_carlo_sheaf,
    perturb_state,
    sample_rng,
    write_trajectory,
)
from .equilibrium import BodyParams, EquilibriumProblem, RelativeEquilibrium, dimensionless_params, solve_equilibrium
from .errors import ConfigError, NoAdmissibleRoot, NoRealEquilibrium, OrbitronError
from .fields import MU0, FieldModel, eval_total, maxwell_residual
from .stability import assess

log = logging.getLogger("orbitron")

EXIT_OK, EXIT_ERROR, EXIT_NO_EQUILIBRIUM, EXIT_UNSTABLE = 0, 1, 2, 3

# key -> (type, default); None default means required (or part of an either/or group)
SCHEMA = {
    "seed": (int, 0),
    "field.kappa": (float, None),
    "field.h": (float, None),
    "field.b0": (float, None),
    "field.b_prime": (float, None),
    "body.mass": (float, None),
    "body.moment": (float, None),
    "body.i_perp": (float, None),
    "body.i_axial": (float, None),
    "disk.density": (float, None),
    "disk.diameter": (float, None),
    "disk.height": (float, None),
    "disk.residual_induction": (float, None),
    "orbit.r0": (float, None),
    "orbit.g": (float, 9.81),
    "orbit.branch": (str, "+"),
    "integrator.method": (str, "rk4"),
    "integrator.steps_per_turn": (int, 2000),
    "integrator.dt": (float, None),
    "integrator.rtol": (float, 1e-10),
    "integrator.atol": (float, 1e-12),
    "integrator.renormalize_mu": (bool, False),
    "integrator.stride": (int, 1),
    "integrator.turns": (float, 10.0),
    "integrator.perturbation": (float, 0.0),
    "integrator.pole_clearance": (float, 1e-3),
    "sheaf.n_samples": (int, 100),
    "sheaf.rel_perturbation": (float, 0.01),
    "sheaf.n_turns": (float, 10.0),
    "sheaf.max_radial_frac": (float, 0.2),
    "sheaf.max_z_frac": (float, 0.2),
    "sheaf.pole_clearance": (float, 1.0),
    "sheaf.steps_per_turn": (int, 2000),
    "output.dir": (str, "."),
    "probe.points": (list, None),
    "reference.mass": (float, None),
    "reference.moment": (float, None),
    "reference.alpha": (float, None),
    "reference.b1": (float, None),
    "reference.b3": (float, None),
    "reference.xi1": (float, None),
    "reference.xi2_tilde": (float, None),
    "reference.nu1": (float, None),
    "reference.nu3": (float, None),
    "reference.pi1": (float, None),
    "reference.pi3": (float, None),
}
BODY_KEYS = ("body.mass", "body.moment", "body.i_perp", "body.i_axial")
DISK_KEYS = ("disk.density", "disk.diameter", "disk.height", "disk.residual_induction")


# Config ---------------------------------------------------------------------


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _line_of(text: str, key: str) -> int | None:
    leaf = re.escape(key.split(".")[-1])
    for n, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*([\w.]*\.)?{leaf}\s*=", line):
            return n
    return None


def _coerce(key, value, text=""):
    typ = SCHEMA[key][0]
    where = f" (line {_line_of(text, key)})" if text and _line_of(text, key) else ""
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}{where}: expected a number, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}{where}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, typ):
        raise ConfigError(f"{key}{where}: expected {typ.__name__}, got {value!r}")
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse TOML text into a flat ``{dotted.key: value}`` dict, checking keys and types."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    flat = _flatten(raw)
    for key, value in flat.items():
        if key not in SCHEMA:
            line = _line_of(text, key)
            raise ConfigError(f"{source}" + (f":{line}" if line else "") + f": unknown key {key!r}")
        flat[key] = _coerce(key, value, text)
    return flat


def parse_override(item: str) -> tuple[str, object]:
    """``key=value`` from the command line; the value is read as a TOML scalar."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = (s.strip() for s in item.split("=", 1))
    if key not in SCHEMA:
        raise ConfigError(f"override: unknown key {key!r}")
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    return key, _coerce(key, parsed)


def derive_body_from_disk(density: float, diameter: float, height: float, residual_induction: float) -> BodyParams:
    """Uniformly magnetised solid disk."""
    for name, v in (("density", density), ("diameter", diameter), ("height", height),
                    ("residual_induction", residual_induction)):
        if not v > 0:
            raise ConfigError(f"disk.{name} must be positive, got {v}")
    r = diameter / 2
    volume = math.pi * r * r * height
    mass = density * volume
    return BodyParams(
        mass=mass,
        moment=residual_induction / MU0 * volume,
        i_perp=mass * (3 * r * r + height * height) / 12,
        i_axial=mass * r * r / 2,
    )


@dataclass
class RunConfig:
    field: FieldModel
    body: BodyParams
    body_source: str
    r0: float
    g: float = 9.81
    branch: str = "+"
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    sim_turns: float = 10.0
    sim_perturbation: float = 0.0
    sheaf: SheafConfig = field(default_factory=SheafConfig)
    out_dir: Path = Path(".")
    seed: int = 0
    probe_points: list = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict, repr=False)

    @property
    def problem(self) -> EquilibriumProblem:
        return EquilibriumProblem(self.field, self.body, self.r0, self.g)


def build_config(values: dict) -> RunConfig:
    """Validate a flat key dict (file values with overrides applied) into a ``RunConfig``."""
    v = {k: d for k, (_, d) in SCHEMA.items() if d is not None}
    v.update(values)
    for key in ("field.kappa", "field.h", "field.b0", "field.b_prime", "orbit.r0"):
        if key not in v:
            raise ConfigError(f"missing required key {key!r}")
    has_body = [k in v for k in BODY_KEYS]
    has_disk = [k in v for k in DISK_KEYS]
    if any(has_body) and any(has_disk):
        raise ConfigError("give either body.* or disk.* parameters, not both")
    if any(has_body) and not all(has_body):
        raise ConfigError("incomplete body: need " + ", ".join(BODY_KEYS))
    if any(has_disk) and not all(has_disk):
        raise ConfigError("incomplete disk: need " + ", ".join(DISK_KEYS))
    if not (any(has_body) or any(has_disk)):
        raise ConfigError("no body: give body.* or disk.* parameters")
    try:
        fm = FieldModel.from_values(v["field.kappa"], v["field.h"], v["field.b0"], v["field.b_prime"])
        if all(has_body):
            body = BodyParams(*(v[k] for k in BODY_KEYS))
            source = "explicit"
        else:
            body = derive_body_from_disk(*(v[k] for k in DISK_KEYS))
            source = "disk"
        if v["orbit.branch"] not in ("+", "-"):
            raise ConfigError("orbit.branch must be '+' or '-'")
        integ = IntegratorConfig(
            method=v["integrator.method"], dt=v.get("integrator.dt"), steps_per_turn=v["integrator.steps_per_turn"],
            rtol=v["integrator.rtol"], atol=v["integrator.atol"], renormalize_mu=v["integrator.renormalize_mu"],
            stride=v["integrator.stride"], pole_clearance=v["integrator.pole_clearance"],
        )
        sheaf = SheafConfig(
            n_samples=v["sheaf.n_samples"], rel_perturbation=v["sheaf.rel_perturbation"], n_turns=v["sheaf.n_turns"],
            seed=v["seed"], max_radial_frac=v["sheaf.max_radial_frac"], max_z_frac=v["sheaf.max_z_frac"],
            pole_clearance=v["sheaf.pole_clearance"], steps_per_turn=v["sheaf.steps_per_turn"],
        )
        cfg = RunConfig(
            field=fm, body=body, body_source=source, r0=v["orbit.r0"], g=v["orbit.g"], branch=v["orbit.branch"],
            integrator=integ, sim_turns=v["integrator.turns"], sim_perturbation=v["integrator.perturbation"],
            sheaf=sheaf, out_dir=Path(v["output.dir"]), seed=v["seed"],
            probe_points=[list(map(float, p)) for p in v.get("probe.points", [])],
            reference={k.split(".", 1)[1]: x for k, x in v.items() if k.startswith("reference.")},
            values=v,
        )
        cfg.problem  # positivity of r0 and g
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path, overrides=()) -> RunConfig:
    """Read ``path``, apply ``key=value`` overrides on top, validate."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text, str(path))
    values.update(dict(parse_override(o) for o in overrides))
    return build_config(values)


# Reports --------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, default=_jsonable)


def _setup(cfg: RunConfig) -> dict:
    f = cfg.field
    return {
        "field": {"kappa": f.orbitron.kappa, "h": f.orbitron.h, "b0": f.linear.b0, "b_prime": f.linear.b_prime},
        "body": {**asdict(cfg.body), "source": cfg.body_source, "alpha": cfg.body.alpha},
        "orbit": {"r0": cfg.r0, "g": cfg.g, "branch": cfg.branch},
        "seed": cfg.seed,
    }


def equilibrium_dict(eq: RelativeEquilibrium) -> dict:
    d = {k: getattr(eq, k) for k in ("kind", "r0", "xi1", "xi2_tilde", "nu1", "nu3", "pi1", "pi3", "p0", "zeta_sq")}
    d["roots"] = list(eq.roots)
    d["period"] = eq.period if math.isfinite(eq.period) else None
    names = ("momentum", "force", "spin", "torque")
    d["residuals"] = {n: np.asarray(r).tolist() for n, r in zip(names, eq.residuals)}
    d["residual_norm"] = eq.residual_norm
    return d


def discrepancy_report(cfg: RunConfig, eq: RelativeEquilibrium | None = None) -> dict:
    """Compare what the inputs imply with any ``reference.*`` values given in the config."""
    prob = cfg.problem
    dp = dimensionless_params(prob)
    reality = dp.lambda_**2 * (1 + dp.sigma**2) - 1
    b = eval_total(cfg.field, prob.x0).b
    b_unit = eval_total(cfg.field, np.array([1.0, 0.0, 0.0])).b
    out = {
        "lambda": dp.lambda_,
        "sigma": dp.sigma,
        "real_root_condition": {"value": reality, "satisfied": reality >= 0,
                                "expression": "lambda^2 (1 + sigma^2) - 1 >= 0"},
        "field_at_orbit": {"b1": b[0], "b3": b[2]},
        "field_at_unit_radius": {"b1": b_unit[0], "b3": b_unit[2]},
        "comparisons": {},
    }
    derived = {"mass": cfg.body.mass, "moment": cfg.body.moment, "alpha": cfg.body.alpha, "b1": b[0], "b3": b[2]}
    if eq is not None and eq.kind == "orbital":
        derived.update({k: getattr(eq, k) for k in ("xi1", "xi2_tilde", "nu1", "nu3", "pi1", "pi3")})
    for key, ref in cfg.reference.items():
        if key not in derived:
            out["comparisons"][key] = {"reference": ref, "computed": None, "note": "no equilibrium to compare with"}
            continue
        val = float(derived[key])
        rel = abs(val - ref) / abs(ref) if ref else abs(val)
        out["comparisons"][key] = {"reference": ref, "computed": val, "relative_difference": rel,
                                   "consistent": rel < 1e-3}
    bad = [k for k, c in out["comparisons"].items() if c.get("consistent") is False]
    for k in bad:
        c = out["comparisons"][k]
        log.warning("%s: computed %.6g, reference %.6g", k, c["computed"], c["reference"])
    out["inconsistent"] = bad
    return out


def rebuild_from_report(report: dict):
    """Reconstruct and re-validate the objects a report describes.

    Returns ``(problem, equilibrium_or_None)``; constructors re-check every
    positivity invariant and the equilibrium residuals are recomputed.
    """
    s = report["setup"]
    f, b, o = s["field"], s["body"], s["orbit"]
    prob = EquilibriumProblem(
        FieldModel.from_values(f["kappa"], f["h"], f["b0"], f["b_prime"]),
        BodyParams(b["mass"], b["moment"], b["i_perp"], b["i_axial"]),
        o["r0"], o["g"],
    )
    e = report.get("equilibrium")
    if not e:
        return prob, None
    eq = RelativeEquilibrium(
        r0=e["r0"], xi1=e["xi1"], xi2_tilde=e["xi2_tilde"], nu1=e["nu1"], nu3=e["nu3"], pi1=e["pi1"],
        pi3=e["pi3"], p0=e["p0"], kind=e["kind"], zeta_sq=e["zeta_sq"], roots=tuple(e["roots"]),
    )
    if abs(math.hypot(eq.nu1, eq.nu3) - 1) > 1e-12:
        raise ValueError("attitude in report is not a unit vector")
    from .equilibrium import residual_necessary_conditions

    res = residual_necessary_conditions(prob, eq.x, eq.p, eq.nu, eq.pi, eq.xi1, eq.xi2_tilde)
    return prob, replace(eq, residuals=tuple(res))


# Commands -------------------------------------------------------------------


def cmd_field_probe(cfg: RunConfig, args) -> tuple[int, dict]:
    points = [list(map(float, p.split(","))) for p in (args.point or [])] or cfg.probe_points or [list(cfg.problem.x0)]
    samples = []
    for x in points:
        s = eval_total(cfg.field, np.asarray(x, dtype=float))
        div, curl = maxwell_residual(cfg.field, np.asarray(x, dtype=float))
        samples.append({"x": x, "b": s.b, "jac": s.jac, "hess": s.hess,
                        "maxwell": {"divergence": float(div), "curl": float(curl)}})
    return EXIT_OK, {"command": "field-probe", "setup": _setup(cfg), "samples": samples}


def _solve(cfg: RunConfig, report: dict):
    try:
        eq = solve_equilibrium(cfg.problem, cfg.branch)
    except (NoRealEquilibrium, NoAdmissibleRoot) as exc:
        report["equilibrium"] = None
        report["no_equilibrium"] = {"reason": type(exc).__name__, "message": str(exc)}
        report["discrepancies"] = discrepancy_report(cfg)
        return None
    report["equilibrium"] = equilibrium_dict(eq)
    report["dimensionless"] = {"lambda": eq.dimensionless.lambda_, "sigma": eq.dimensionless.sigma}
    report["discrepancies"] = discrepancy_report(cfg, eq)
    return eq


def cmd_equilibrium(cfg: RunConfig, args) -> tuple[int, dict]:
    report = {"command": "equilibrium", "setup": _setup(cfg)}
    eq = _solve(cfg, report)
    return (EXIT_NO_EQUILIBRIUM if eq is None else EXIT_OK), report


def _stability(cfg, eq, report):
    if eq.kind == "static":
        report["stability"] = {"verdict": "indeterminate",
                               "reason": "static hover: the orbital reduction does not apply"}
        return "indeterminate"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = assess(eq, cfg.problem)
    report["stability"] = {
        "verdict": rep.verdict,
        "q1_minors": rep.q1_minors,
        "q2_minors": rep.q2_minors,
        "diagonal_positive": rep.diagonal_positive,
        "eigen_verdict": rep.eigen_verdict,
        "analytic_conditions": rep.analytic_conditions,
        "oracle_agreement": rep.oracle_agreement,
    }
    return rep.verdict


def cmd_stability(cfg: RunConfig, args) -> tuple[int, dict]:
    report = {"command": "stability", "setup": _setup(cfg)}
    eq = _solve(cfg, report)
    if eq is None:
        return EXIT_NO_EQUILIBRIUM, report
    verdict = _stability(cfg, eq, report)
    return (EXIT_OK if verdict == "stable" else EXIT_UNSTABLE), report


def _simulate(cfg, eq, path):
    prob = cfg.problem
    y = PhaseState.from_equilibrium(eq, prob).as_array()
    if cfg.sim_perturbation > 0:
        y = perturb_state(y, cfg.sim_perturbation, sample_rng(cfg.seed, 0), prob.body.moment)
    traj = integrate(y, prob, cfg.integrator, cfg.sim_turns * eq.period, eq.period)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory(traj, path)
    return {"trajectory": str(path), "status": traj.status, "turns": cfg.sim_turns, "n_rows": len(traj.t),
            "drift": traj.trace.drift(), "mu_corrections": traj.mu_corrections}


def cmd_simulate(cfg: RunConfig, args) -> tuple[int, dict]:
    report = {"command": "simulate", "setup": _setup(cfg)}
    eq = _solve(cfg, report)
    if eq is None:
        return EXIT_NO_EQUILIBRIUM, report
    if eq.kind == "static":
        raise OrbitronError("static hover has no orbital period to integrate over")
    path = Path(args.out) if args.out else cfg.out_dir / "trajectory.csv"
    report["simulation"] = _simulate(cfg, eq, path)
    return EXIT_OK, report


def _sheaf(cfg, eq):
    res = monte_carlo_sheaf(eq, cfg.problem, cfg.sheaf)
    return res.to_dict()


def cmd_sheaf(cfg: RunConfig, args) -> tuple[int, dict]:
    report = {"command": "sheaf", "setup": _setup(cfg)}
    eq = _solve(cfg, report)
    if eq is None:
        return EXIT_NO_EQUILIBRIUM, report
    if eq.kind == "static":
        raise OrbitronError("static hover has no orbital period for a sheaf")
    report["sheaf"] = _sheaf(cfg, eq)
    path = Path(args.out) if args.out else cfg.out_dir / "sheaf.json"
    _write(path, report)
    report = {**report, "sheaf": {"summary": report["sheaf"]["summary"], "file": str(path)}}
    return EXIT_OK, report


def cmd_full_report(cfg: RunConfig, args) -> tuple[int, dict]:
    report = {"command": "full-report", "setup": _setup(cfg)}
    out_dir = Path(args.out) if args.out else cfg.out_dir
    eq = _solve(cfg, report)
    code = EXIT_NO_EQUILIBRIUM
    if eq is not None:
        verdict = _stability(cfg, eq, report)
        code = EXIT_OK if verdict == "stable" else EXIT_UNSTABLE
        if eq.kind == "orbital":
            report["simulation"] = _simulate(cfg, eq, out_dir / "trajectory.csv")
            report["sheaf"] = _sheaf(cfg, eq)
    report["exit_code"] = code
    _write(out_dir / "report.json", report)
    if "sheaf" in report:
        report = {**report, "sheaf": {"summary": report["sheaf"]["summary"]}}
    return code, report


def _write(path: Path, report: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(report) + "\n")


COMMANDS = {
    "field-probe": cmd_field_probe,
    "equilibrium": cmd_equilibrium,
    "stability": cmd_stability,
    "simulate": cmd_simulate,
    "sheaf": cmd_sheaf,
    "full-report": cmd_full_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbitron", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML config file")
    ap.add_argument("--seed", type=int, help="overrides seed")
    ap.add_argument("--out", help="output file (simulate, sheaf) or directory (full-report)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    ap.add_argument("--turns", type=float, help="overrides sheaf.n_turns and integrator.turns")
    ap.add_argument("--samples", type=int, help="overrides sheaf.n_samples")
    ap.add_argument("--point", action="append", metavar="X,Y,Z", help="field-probe point (repeatable)")
    ap.add_argument("--report", help="also write the printed report to this file")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.turns is not None:
        overrides += [f"sheaf.n_turns={args.turns}", f"integrator.turns={args.turns}"]
    if args.samples is not None:
        overrides.append(f"sheaf.n_samples={args.samples}")
    try:
        cfg = load_config(args.config, overrides)
        code, report = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OrbitronError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report["exit_code"] = code
    text = dumps(report)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
