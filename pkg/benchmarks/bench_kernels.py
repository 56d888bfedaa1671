"""Compare the compiled and pure-numpy integration kernels on the nominal scenario.

    python3 benchmarks/bench_kernels.py [--sim-seconds 1.0] [--repeat 3]
"""

import argparse
import time

import numpy as np

from vesselkeep import kernels as kn
from vesselkeep.config import load_bundled
from vesselkeep.sim import CONTROLLER_KINDS, assemble, initial_state, pack_params


def bench(integrate, scn, repeat):
    asm = assemble(scn)
    params = pack_params(scn, asm)
    y0 = initial_state(scn, asm)
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = integrate(y0, scn.n_steps, scn.dt, scn.stride, *params)
        best = min(best, time.perf_counter() - t0)
    return best, out[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sim-seconds", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kn.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    base = load_bundled().with_(t_final=args.sim_seconds)
    # compile outside the timed region
    warm = base.with_(t_final=base.dt * 2)
    bench(kn.integrate_numba, warm, 1)
    print(f"{'kind':<20}{'steps':>8}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'max rel diff':>14}")
    for kind in CONTROLLER_KINDS:
        scn = base.with_(controller_kind=kind)
        t_np, s_np = bench(kn.integrate_numpy, scn, args.repeat)
        t_nb, s_nb = bench(kn.integrate_numba, scn, args.repeat)
        diff = np.max(np.abs(s_np - s_nb) / (1.0 + np.abs(s_np)))
        print(f"{kind:<20}{scn.n_steps:>8}{t_np:>10.3f}{t_nb:>10.4f}{t_np / t_nb:>8.0f}x{diff:>14.1e}")


if __name__ == "__main__":
    main()
