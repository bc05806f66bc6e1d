"""Random acyclic droop networks: frequency synchronisation and the capacity test.

Draws feasible cases with a sine ratio margin, starts within 0.1 rad of the
synchronous angles and reports the final frequency error at T.

    python3 scripts/droop_batch.py [--cases 50] [--T 200] [--dt 0.01]
"""

import argparse

import numpy as np

from outagree.controllers import DroopEdgeController
from outagree.exosystem import Exosystem, StaticBlock
from outagree.feasibility import droop_design_check
from outagree.graph import NetworkGraph
from outagree.nodes import DroopNode
from outagree.simulation import assemble, integrate


def random_tree(rng, n):
    return NetworkGraph(n, [(int(rng.integers(0, i)), i) for i in range(1, n)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=50)
    ap.add_argument("--T", type=float, default=200.0)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--margin", type=float, default=0.7, help="largest allowed sine ratio")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    done, rejected, worst = 0, 0, 0.0
    while done < args.cases:
        n = int(rng.integers(2, 9))
        g = random_tree(rng, n)
        D, a, Ps = rng.uniform(0.5, 2.0, n), rng.uniform(1.0, 3.0, g.m), rng.uniform(-1.0, 1.0, n)
        des = droop_design_check(g, a, D, Ps)
        if not des.feasible or np.abs(des.sine_ratio).max() >= args.margin:
            rejected += 1
            continue
        sys = assemble([DroopNode(d, p) for d, p in zip(D, Ps)], DroopEdgeController(a), Exosystem([StaticBlock(0)] * n), g)
        theta_w = np.linalg.lstsq(-g.incidence.T, des.eta_w, rcond=None)[0]
        theta0 = theta_w + rng.uniform(-0.1, 0.1, n)
        tr = integrate(sys, sys.initial_state([], theta0), args.dt, args.T, stride=int(round(args.T / args.dt)))
        err = float(np.abs(tr.y[-1] - Ps.sum() / D.sum()).max())
        worst = max(worst, err)
        done += 1
        print(f"case {done:3d}: n={n} max sine ratio {np.abs(des.sine_ratio).max():.3f} frequency error {err:.2e}")
    print(f"{done} cases, {rejected} draws outside the margin, worst frequency error {worst:.3e}")

    over = droop_design_check(NetworkGraph(2, [(0, 1)]), [1.0], [1.0, 1.0], [3.0, 0.0])
    print(f"two-node overload, sine ratio {abs(over.sine_ratio[0]):.2f}: feasible={over.feasible}")


if __name__ == "__main__":
    main()
