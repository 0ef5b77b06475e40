"""What happens with the reference inputs for the Nd-Fe-B disk experiment?

They do not fit together: the disk geometry gives an inverse inertia near 1e7
rather than ~1, the reference field components do not follow from the field
parameters, and lambda, sigma fail the real-root condition.  The CLI reports
all of this and exits with code 2 instead of picking one set of numbers.
"""
import json
import subprocess
import sys
from pathlib import Path

config = Path(__file__).resolve().parents[1] / "configs" / "literal_inputs.toml"
run = subprocess.run([sys.executable, "-m", "orbitron.cli", "equilibrium", "--config", str(config)],
                     capture_output=True, text=True)
report = json.loads(run.stdout)
d = report["discrepancies"]
print(f"exit code {run.returncode}: {report['no_equilibrium']['reason']}")
print(f"lambda = {d['lambda']:.4f}, sigma = {d['sigma']:.3g}")
print(f"real-root condition lambda^2 (1 + sigma^2) - 1 = {d['real_root_condition']['value']:.4f}")
for key, c in d["comparisons"].items():
    if c.get("computed") is not None:
        mark = "ok " if c["consistent"] else "MISMATCH"
        print(f"  {mark:8s} {key:6s} computed {c['computed']:.6g}  reference {c['reference']:.6g}")
