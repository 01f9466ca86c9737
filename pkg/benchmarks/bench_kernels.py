"""Time the numba kernels against their pure-numpy twins.

The backend is fixed at import, so each mode runs in its own interpreter:

    python benchmarks/bench_kernels.py            # both modes, side by side
    python benchmarks/bench_kernels.py --repeat 5

Results agree to round-off; only the wall time differs.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, math, sys, time
import numpy as np
from dissent_sim import _kernels
from dissent_sim import collective_rates as cr
from dissent_sim.model_core import squeezing_from_z
from dissent_sim.two_level_dynamics import rates_with_pump, steady_moments

repeat = int(sys.argv[1])

def best(fn):
    fn()  # warm-up, includes jit compilation or cache load
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - t0)
    return min(times), value

def moments():
    out = 0.0
    for z in np.linspace(1.2, 6.0, 20):
        p = squeezing_from_z(z)
        out += steady_moments(30.0, p, rates_with_pump(p, 1.0, 5.0)).xi
    return out

def single_rate():
    return cr.averaged_rate_single(300.0, cr.DipoleKernelParams(1.0)).real_part

def inter_rate():
    return cr.averaged_rate_inter(1e-2, 1.0, cr.DipoleKernelParams(1e6)).real_part

res = {"numba": _kernels.USE_NUMBA}
for name, fn in (("moment ODE, 20 steady states", moments),
                 ("single-ensemble rate, kL=300", single_rate),
                 ("inter-ensemble rate, k=1e6", inter_rate)):
    t, v = best(fn)
    res[name] = [t, v]
print(json.dumps(res))
"""


def run_mode(flag: str, repeat: int) -> dict:
    env = dict(os.environ, DISSENT_SIM_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run_mode("1", args.repeat)
    slow = run_mode("0", args.repeat)
    print(f"{'workload':32s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s} {'rel. diff':>10s}")
    for key in fast:
        if key == "numba":
            continue
        tf, vf = fast[key]
        ts, vs = slow[key]
        diff = abs(vf - vs) / max(abs(vs), 1e-300)
        print(f"{key:32s} {tf:10.4f} {ts:10.4f} {ts / tf:9.1f} {diff:10.1e}")
    if not fast["numba"]:
        print("note: numba unavailable, both columns ran the numpy path")
    return 0


if __name__ == "__main__":
    sys.exit(main())
