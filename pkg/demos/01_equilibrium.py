"""Where does a spinning dipole orbit, and how is it tilted?

Loads the acceptance configuration, probes the field on the orbit, and solves
for the relative equilibrium: orbital rate, attitude, spin.
"""
from pathlib import Path

import numpy as np

from orbitron import eval_total, solve_equilibrium
from orbitron.cli import load_config
from orbitron.equilibrium import dimensionless_params

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

cfg = load_config(CONFIGS / "acceptance.toml")
prob = cfg.problem

s = eval_total(prob.field, prob.x0)
print(f"field at the orbit point x0 = ({prob.r0}, 0, 0):  B = {np.round(s.b, 6)}")
print(f"  dB_z/dr = {s.jac[2, 0]:.4f} T/m,  d2B_z/dz2 = {s.hess[2, 2, 2]:.2f} T/m^2")

dp = dimensionless_params(prob)
print(f"\nlambda = m B'/(M g) = {dp.lambda_:.4f},  sigma = -B_zr/B' = {dp.sigma:.4f}")

eq = solve_equilibrium(prob)
print(f"\n{eq.kind} equilibrium")
print(f"  orbital rate xi1       = {eq.xi1:.4f} rad/s  (period {eq.period * 1e3:.1f} ms)")
print(f"  tilt of the dipole     = {np.degrees(np.arctan2(eq.nu1, eq.nu3)):.3f} deg from vertical")
print(f"  spin multiplier        = {eq.xi2_tilde:.4f}")
print(f"  largest residual       = {eq.residual_norm:.1e}")

# uniform orbital motion: one period later every vector is back where it started
print(f"\nphase-space point: x = {eq.x}, p = {eq.p}, nu = {np.round(eq.nu, 6)}")
