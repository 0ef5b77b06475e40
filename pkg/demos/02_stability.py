"""Is the orbit stable?  Second variation, Sylvester minors, and the closed-form conditions.

Compares the acceptance set with its negative control, which differs only in
having the poles moved further apart.
"""
import warnings
from pathlib import Path

from orbitron import assess, solve_equilibrium
from orbitron.cli import load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
NAMES = ("radial_stiffness", "attitude_alignment", "q1_determinant", "vertical_stiffness", "radial_schur")

for name in ("acceptance", "negative_control"):
    prob = load_config(CONFIGS / f"{name}.toml").problem
    eq = solve_equilibrium(prob)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = assess(eq, prob)
    print(f"== {name}: h = {prob.field.orbitron.h:.4f} m, r0 = {prob.r0} m")
    print("  Q1 minors:", ", ".join(f"{m:.3g}" for m in rep.q1_minors))
    print("  Q2 minors:", ", ".join(f"{m:.3g}" for m in rep.q2_minors))
    for n in NAMES:
        c = rep.analytic_conditions[n]
        print(f"  {n:20s} {c['status']:8s} (value {c['value']:+.3g})")
    agree = rep.oracle_agreement
    print(f"  verdict: {rep.verdict}  (eigenvalue oracle: {rep.eigen_verdict}, "
          f"closed forms match: {agree['closed_form_q1'] and agree['closed_form_q2']})\n")
