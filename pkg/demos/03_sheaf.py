"""Does the verdict survive direct simulation?

Throws a small sheaf of 1%-perturbed trajectories at each configuration and
writes one trajectory of the stable case to CSV for plotting.
"""
import sys
import time
from pathlib import Path

from orbitron import solve_equilibrium
from orbitron.cli import load_config
from orbitron.dynamics import IntegratorConfig, PhaseState, SheafConfig, integrate, monte_carlo_sheaf, perturb_state, sample_rng, write_trajectory

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
n = int(sys.argv[1]) if len(sys.argv) > 1 else 20

for name, turns in (("acceptance", 10), ("negative_control", 3)):
    prob = load_config(CONFIGS / f"{name}.toml").problem
    eq = solve_equilibrium(prob)
    t0 = time.perf_counter()
    s = monte_carlo_sheaf(eq, prob, SheafConfig(n_samples=n, n_turns=turns, seed=42)).summary
    print(f"{name:17s} {turns:2d} turns: {s['bounded']}/{n} bounded, {s['escaped']} escaped, "
          f"{s['pole_collision']} hit a pole  ({time.perf_counter() - t0:.1f}s)")

prob = load_config(CONFIGS / "acceptance.toml").problem
eq = solve_equilibrium(prob)
y0 = perturb_state(PhaseState.from_equilibrium(eq, prob).as_array(), 0.01, sample_rng(42, 0), prob.body.moment)
traj = integrate(y0, prob, IntegratorConfig(stride=20), 10 * eq.period, eq.period)
out = Path("demo_trajectory.csv")
write_trajectory(traj, out)
d = traj.trace.drift()
print(f"\nwrote {out} ({len(traj.t)} rows); relative drift h {d['h']:.1e}, J1 {d['J1']:.1e}, J2 {d['J2']:.1e}")
