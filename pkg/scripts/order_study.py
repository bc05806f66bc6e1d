"""Observed convergence order of the RK4 integrator by step halving.

    python3 scripts/order_study.py [--scenario fig2_inventory] [--T 10]
"""

import argparse

import numpy as np

from outagree.scenario_io import parse_scenario, resolve_scenario
from outagree.simulation import integrate


def final_state(sys, s0, dt, T):
    tr = integrate(sys, s0, dt, T, stride=int(round(T / dt)))
    return np.concatenate([tr.w[-1], tr.x[-1], tr.eta[-1]])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="fig2_inventory")
    ap.add_argument("--T", type=float, default=10.0)
    ap.add_argument("--dt", type=float, default=0.2, help="coarsest step")
    ap.add_argument("--levels", type=int, default=5)
    args = ap.parse_args()

    sc = parse_scenario(resolve_scenario(args.scenario))
    sys = sc.system()
    s0 = sc.initial_state(sys)
    steps = [args.dt / 2**k for k in range(args.levels)]
    finals = [final_state(sys, s0, h, args.T) for h in steps]
    diffs = [np.linalg.norm(a - b) for a, b in zip(finals, finals[1:])]
    print(f"{'dt':>9} {'|x_h - x_h/2|':>14} {'order':>7}")
    for h, d0, d1 in zip(steps, diffs, diffs[1:]):
        print(f"{h:9.4g} {d0:14.3e} {np.log2(d0 / d1):7.3f}")


if __name__ == "__main__":
    main()
