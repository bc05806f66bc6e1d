"""Command line interface: ``outagree {check,design,simulate,metrics} SCENARIO``.

Exit codes: 0 success (and, for ``check``, no obstruction), 1 usage or I/O
error, 2 obstruction found by ``check``. Reports go to standard output as
``key: value`` lines, diagnostics to standard error. Output files land in
``--out-dir``, else ``$OUTAGREE_OUTPUT_DIR``, else ``./outagree_out``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .exosystem import check_incremental_monotonicity
from .feasibility import (
    droop_design_check,
    imbalance_boundedness,
    obstruction_check,
    rank_condition,
    solve_sylvester_regulator,
    spr_check,
)
from .graph import cycle_space_dim
from .controllers import feedforward_residual
from .scenario_io import (
    Scenario,
    ScenarioError,
    emit_report,
    emit_trace,
    format_report,
    gamma_series,
    parse_scenario,
    read_trace,
    resolve_scenario,
)
from .simulation import (
    agreement_error,
    agreement_error_from_outputs,
    controller_sync_error,
    integrate,
    steady_state_reference,
    storage_monotonicity,
)

log = logging.getLogger("outagree")

OUTPUT_ENV = "OUTAGREE_OUTPUT_DIR"
EXIT_OK, EXIT_ERROR, EXIT_OBSTRUCTION = 0, 1, 2


# workflows ------------------------------------------------------------------------


def check_scenario(sc: Scenario) -> tuple[dict, bool]:
    """Feasibility report for the scenario and whether an obstruction was found."""
    g, exo, nodes = sc.graph(), sc.exosystem(), sc.nodes()
    fams = {nd["family"] for nd in sc.data["node"]}
    rep: dict = {"scenario": sc.name, "n": g.n, "m": g.m, "node_family": sc.node_family, "cycle_space_dim": cycle_space_dim(g)}
    mono = check_incremental_monotonicity(exo, sample_count=1000, seed=sc.seed)
    rep["exosystem_monotone"] = bool(mono["passed"])
    blocked = not mono["passed"]
    if fams == {"linear"}:
        rk = rank_condition(nodes, exo, g)
        ob = obstruction_check(nodes, exo, g)
        rep["exosystem_eigenvalues"] = [r.s for r in rk.rank]
        rep["rank_condition"] = "pass" if rk.rank_passed else "fail"
        if rk.rank:
            rep["rank_margin_min"] = min(r.sigma_min_rel for r in rk.rank)
        for r in rk.rank:
            if not r.passed:
                rep[f"rank_deficient_at"] = r.s
                rep["witness_x0_norm"] = float(np.linalg.norm(r.witness_x))
                rep["witness_lambda0"] = [complex(v) for v in r.witness_lambda]
                break
        rep["nonresonance_violations"] = len(ob.nonresonance_violations)
        rep["obstruction_cycle"] = ob.cycle_obstruction and bool(rk.rank)
        rep["obstruction_range_intersection"] = ob.range_obstruction
        if ob.intersections:
            rep["smallest_principal_angle"] = min(i.smallest_angle for i in ob.intersections)
        if ob.skipped_frequencies:
            rep["range_test_skipped_at_poles"] = ob.skipped_frequencies
        sol = solve_sylvester_regulator(nodes, exo, g)
        rep["regulator_equations"] = "solvable" if sol.feasible else "unsolvable"
        if g.is_acyclic() and rk.rank:
            try:
                spr = spr_check(nodes, exo)
                rep["positive_real_at_exosystem_frequencies"] = spr.passed
            except ValueError as exc:
                rep["positive_real_at_exosystem_frequencies"] = f"not applicable ({exc})"
        blocked |= not rk.rank_passed or rep["obstruction_range_intersection"]
    elif fams == {"inventory"}:
        peak, verdict = imbalance_boundedness(sc.P(), exo, sc.data["initial"]["w0"], sc.T, sc.dt)
        rep["accumulated_imbalance_peak"] = peak
        rep["accumulated_imbalance"] = verdict
        rep["spanning_tree_flow"] = "feasible"
        blocked |= verdict.startswith("unbounded")
        if "feedforward" in sc.data["controller"]:
            res = feedforward_residual(g, sc.feedforward(), sc.P())
            rep["feedforward_residual"] = res
            blocked |= res > 1e-10
    elif fams == {"droop"}:
        des = droop_design_check(g, sc.data["controller"]["a"], [nd.D for nd in nodes], [nd.P_star for nd in nodes])
        rep["synchronous_frequency"] = des.y_w
        rep["max_required_sine"] = float(np.abs(des.sine_ratio).max()) if des.sine_ratio.size else 0.0
        rep["line_capacity"] = "feasible" if des.feasible else "infeasible"
        if not des.feasible:
            rep["offending_edge"] = des.offending_edge
        blocked |= not des.feasible
    else:
        rep["structural_checks"] = "none available for this node family"
    rep["verdict"] = "obstruction" if blocked else "pass"
    return rep, blocked


def design_scenario(sc: Scenario, method: str | None = None) -> tuple[np.ndarray, dict]:
    H = sc.feedforward(method)
    rep = {"scenario": sc.name, "method": method or sc.data["controller"].get("feedforward"), "rows": H.shape[0], "cols": H.shape[1]}
    if {nd["family"] for nd in sc.data["node"]} == {"inventory"}:
        rep["feedforward_residual"] = feedforward_residual(sc.graph(), H, sc.P())
    return H, rep


def simulate_scenario(sc: Scenario, stride: int | None = None, storage_check: bool = True):
    """Run the scenario; returns the trace, the gamma series and a metrics report."""
    sys_ = sc.system()
    t0 = time.perf_counter()
    trace = integrate(sys_, sc.initial_state(sys_), sc.dt, sc.T, stride=stride or sc.stride, meta={"scenario": sc.name})
    elapsed = time.perf_counter() - t0
    gamma = gamma_series(sc, trace)
    agree = agreement_error(trace)
    rep = {"scenario": sc.name, "dt": sc.dt, "T": sc.T, "steps": int(round(sc.T / sc.dt)), "runtime_s": round(elapsed, 3)}
    rep["agreement_error_final"] = float(agree[-1])
    if not np.all(np.isnan(gamma)):
        rep["gamma_distance_final"] = float(gamma[-1])
    if trace.meta["controller"] == "comm_augmented":
        rep["controller_sync_error_final"] = float(controller_sync_error(trace)[-1])
    if storage_check and (stride or sc.stride) == 1:
        ref = steady_state_reference(sys_, trace)
        if ref is not None:
            st = storage_monotonicity(sys_, trace, ref)
            rep["storage_steps"] = st.steps
            rep["storage_violations"] = st.violations
            rep["storage_fraction_ok"] = st.fraction_ok
    for key, tol in sc.tolerances.items():
        val = {"agreement": rep["agreement_error_final"], "gamma": rep.get("gamma_distance_final"), "sync": rep.get("controller_sync_error_final"), "storage_fraction": rep.get("storage_fraction_ok")}[key]
        if val is not None:
            ok = val >= tol if key == "storage_fraction" else val < tol
            rep[f"within_tolerance_{key}"] = bool(ok)
    return trace, gamma, rep


def metrics_from_trace(sc: Scenario, path) -> dict:
    st = read_trace(path)
    agree = agreement_error_from_outputs(sc.graph(), st.y, sc.p)
    F = sc.flow_map()
    rep = {"scenario": sc.name, "rows": st.t.size}
    if st.t.size == 0:
        return rep
    rep["t_final"] = float(st.t[-1])
    rep["agreement_error_final"] = float(agree[-1])
    rep["agreement_error_max_mismatch"] = float(np.abs(agree - st.agreement_error).max())
    if F is not None:
        gamma = np.linalg.norm(st.lam - st.w @ F.T, axis=1)
        rep["gamma_distance_final"] = float(gamma[-1])
        rep["gamma_distance_max_mismatch"] = float(np.abs(gamma - st.gamma_distance).max())
    if sc.controller_family == "comm_augmented":
        E = st.eta.reshape(st.t.size, sc.m, -1)
        sync = np.linalg.norm(E[:, :, None] - E[:, None], axis=3).max(axis=(1, 2))
        rep["controller_sync_error_final"] = float(sync[-1])
    return rep


# command line ---------------------------------------------------------------------


def _out_dir(arg) -> Path:
    d = Path(arg or os.environ.get(OUTPUT_ENV) or "outagree_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="outagree", description="Output agreement in networks of passive systems.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("check", "run the feasibility checks and print the report"),
        ("design", "compute the feedforward matrix H and write it as CSV"),
        ("simulate", "integrate the closed loop and write the trace CSV"),
        ("metrics", "recompute metric series from a stored trace"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("scenario", help="scenario file or the name of a shipped scenario")
        sp.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or ./outagree_out)")
        if name == "design":
            sp.add_argument("--method", choices=["optimal", "tree", "regulator", "identical"])
        if name == "simulate":
            sp.add_argument("--stride", type=int, help="record every k-th step")
            sp.add_argument("--no-storage-check", action="store_true")
        if name == "metrics":
            sp.add_argument("trace", help="trace CSV written by 'simulate'")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = parse_scenario(resolve_scenario(args.scenario))
        if args.command == "check":
            rep, blocked = check_scenario(sc)
            sys.stdout.write(format_report(rep))
            return EXIT_OBSTRUCTION if blocked else EXIT_OK
        out = _out_dir(args.out_dir)
        if args.command == "design":
            H, rep = design_scenario(sc, args.method)
            path = out / f"{sc.name}_H.csv"
            np.savetxt(path, H, delimiter=",", fmt="%.17g")
            rep["output"] = str(path)
            sys.stdout.write(format_report(rep))
            return EXIT_OK
        if args.command == "simulate":
            trace, gamma, rep = simulate_scenario(sc, args.stride, storage_check=not args.no_storage_check)
            path = out / f"{sc.name}_trace.csv"
            emit_trace(trace, path, gamma)
            rep["output"] = str(path)
            emit_report(rep, out / f"{sc.name}_report.txt")
            sys.stdout.write(format_report(rep))
            return EXIT_OK
        rep = metrics_from_trace(sc, args.trace)
        emit_report(rep, out / f"{sc.name}_metrics.txt")
        sys.stdout.write(format_report(rep))
        return EXIT_OK
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"outagree: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
