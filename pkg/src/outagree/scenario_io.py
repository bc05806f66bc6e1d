"""Scenario files, trace/report serialisation and the objects they describe.

Scenarios are TOML documents (format documented in ``docs/scenario_format.md``).
Parsing validates everything up front and reports every problem it finds,
not just the first. ``emit_scenario`` writes the normalised document back out
in canonical form, so ``parse(emit(s))`` reproduces ``s`` exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .controllers import (
    CommAugmentedController,
    DroopEdgeController,
    MonotoneIntegratorController,
    OptimalDistributionController,
    StaticCoupling,
    design_identical_feedforward,
    design_optimal_feedforward,
    design_tree_feedforward,
    per_edge_internal_model,
)
from .exosystem import Exosystem, LinearSkewBlock, StaticBlock, rotation_block
from .feasibility import optimal_flow_map, solve_sylvester_regulator
from .graph import NetworkGraph, comm_laplacian, cycle_space_dim
from .nodes import DroopNode, GradientFlowNode, InventoryNode, LinearNode
from .simulation import ClosedLoopSystem, Trace, agreement_error, assemble

NODE_FAMILIES = ("inventory", "linear", "gradient", "droop")
CONTROLLER_FAMILIES = (
    "internal_model",
    "comm_augmented",
    "optimal_distribution",
    "static",
    "monotone_integrator",
    "droop_edge",
)
FEEDFORWARD_DIRECTIVES = ("optimal", "tree", "regulator", "identical")
EXO_KINDS = ("static", "rotation", "skew")

_TOP_KEYS = {"name", "description", "expect", "graph", "exosystem", "node", "controller", "initial", "run", "tolerances"}
_GRAPH_KEYS = {"n", "edges", "weights"}
_EXO_KEYS = {"static": {"kind", "dim"}, "rotation": {"kind", "frequency"}, "skew": {"kind", "S"}}
_NODE_KEYS = {
    "inventory": {"family", "P"},
    "linear": {"family", "A", "G", "C", "P", "passive"},
    "gradient": {"family", "damping", "gain", "K", "G", "P"},
    "droop": {"family", "D", "P_star"},
}
_CTRL_KEYS = {
    "internal_model": {"family", "feedforward", "feedthrough"},
    "comm_augmented": {"family", "feedforward", "feedthrough"},
    "optimal_distribution": {"family", "feedforward", "feedthrough"},
    "static": {"family"},
    "monotone_integrator": {"family", "c", "feedthrough"},
    "droop_edge": {"family", "a"},
}
_INITIAL_KEYS = {"w0", "x0", "eta0"}
_RUN_KEYS = {"dt", "T", "stride", "seed"}
_TOL_KEYS = {"agreement", "gamma", "sync", "storage_fraction"}


class ScenarioError(ValueError):
    """Raised with the complete list of problems found in a scenario."""

    def __init__(self, errors: list[str], source: str = "<scenario>"):
        self.errors = list(errors)
        self.source = source
        super().__init__(f"{source}: {len(errors)} error(s)\n" + "\n".join(f"  - {e}" for e in errors))


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, key, msg):
        self.errors.append(f"{key}: {msg}")

    def unknown(self, key, table, allowed):
        if not isinstance(table, dict):
            self.add(key, "expected a table")
            return
        for k in sorted(set(table) - set(allowed)):
            self.add(f"{key}.{k}" if key else k, f"unknown key (allowed: {', '.join(sorted(allowed))})")

    def number(self, key, v, positive=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.add(key, f"expected a finite number, got {v!r}")
            return None
        if positive and not v > 0:
            self.add(key, f"must be positive, got {v!r}")
            return None
        return float(v)

    def integer(self, key, v, minimum=None):
        if isinstance(v, bool) or not isinstance(v, int):
            self.add(key, f"expected an integer, got {v!r}")
            return None
        if minimum is not None and v < minimum:
            self.add(key, f"must be >= {minimum}, got {v}")
            return None
        return v

    def vector(self, key, v, length=None):
        if not isinstance(v, list) or any(isinstance(a, (list, bool)) or not isinstance(a, (int, float)) for a in v):
            self.add(key, "expected a list of numbers")
            return None
        if not all(math.isfinite(a) for a in v):
            self.add(key, "entries must be finite")
            return None
        if length is not None and len(v) != length:
            self.add(key, f"expected {length} entries, got {len(v)}")
            return None
        return [float(a) for a in v]

    def matrix(self, key, v, shape=None):
        if not isinstance(v, list) or not v or not all(isinstance(row, list) for row in v):
            self.add(key, "expected a non-empty list of rows")
            return None
        rows = [self.vector(f"{key}[{i}]", row) for i, row in enumerate(v)]
        if any(r is None for r in rows):
            return None
        if len({len(r) for r in rows}) != 1:
            self.add(key, "rows have different lengths")
            return None
        if shape is not None and (len(rows), len(rows[0])) != shape:
            self.add(key, f"expected shape {shape}, got {(len(rows), len(rows[0]))}")
            return None
        return rows


@dataclass(eq=False)
class Scenario:
    """A validated scenario. ``data`` is the normalised document (defaults filled in)."""

    data: dict
    source: str = "<scenario>"
    _cache: dict = field(default_factory=dict, repr=False)

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.data == other.data

    name = property(lambda self: self.data["name"])
    n = property(lambda self: self.data["graph"]["n"])
    m = property(lambda self: len(self.data["graph"]["edges"]))
    weights = property(lambda self: np.array(self.data["graph"]["weights"]))
    node_family = property(lambda self: self.data["node"][0]["family"] if len(self._families) == 1 else "mixed")
    controller_family = property(lambda self: self.data["controller"]["family"])
    dt = property(lambda self: self.data["run"]["dt"])
    T = property(lambda self: self.data["run"]["T"])
    stride = property(lambda self: self.data["run"]["stride"])
    seed = property(lambda self: self.data["run"]["seed"])
    tolerances = property(lambda self: dict(self.data.get("tolerances", {})))
    expect_feasible = property(lambda self: self.data["expect"] == "feasible")

    @property
    def _families(self):
        return {nd["family"] for nd in self.data["node"]}

    @property
    def frequencies(self) -> list[float]:
        return [b["frequency"] for b in self.data["exosystem"] if b["kind"] == "rotation"]

    def graph(self) -> NetworkGraph:
        if "graph" not in self._cache:
            g = self.data["graph"]
            self._cache["graph"] = NetworkGraph(g["n"], [tuple(e) for e in g["edges"]])
        return self._cache["graph"]

    def exosystem(self) -> Exosystem:
        blocks = []
        for b in self.data["exosystem"]:
            if b["kind"] == "static":
                blocks.append(StaticBlock(b["dim"]))
            elif b["kind"] == "rotation":
                blocks.append(rotation_block(b["frequency"]))
            else:
                blocks.append(LinearSkewBlock(np.array(b["S"])))
        return Exosystem(blocks)

    def nodes(self) -> list:
        if "nodes" not in self._cache:
            self._cache["nodes"] = [_build_node(nd, self.seed) for nd in self.data["node"]]
        return self._cache["nodes"]

    def P(self) -> np.ndarray:
        """Block-diagonal disturbance matrix of the whole network."""
        from scipy.linalg import block_diag

        return block_diag(*[nd.P for nd in self.nodes()])

    @property
    def p(self) -> int:
        return self.nodes()[0].p

    def feedforward(self, method: str | None = None) -> np.ndarray:
        """``H`` from the directive in the file, or from ``method`` when given."""
        ff = method or self.data["controller"].get("feedforward")
        if ff is None:
            raise ValueError(f"controller family {self.controller_family!r} has no feedforward")
        if isinstance(ff, list):
            return np.array(ff, dtype=float)
        g, P = self.graph(), self.P()
        if ff == "optimal":
            return design_optimal_feedforward(g, self.weights, P)
        if ff == "tree":
            return design_tree_feedforward(g, P)
        if ff == "identical":
            return design_identical_feedforward(g, self.nodes()[0].G, P)
        sol = solve_sylvester_regulator(self.nodes(), self.exosystem(), g)
        if not sol.feasible:
            raise ValueError("regulator equations have no solution; no feedforward exists")
        return sol.Gamma

    def controller(self):
        c, g = self.data["controller"], self.graph()
        fam = c["family"]
        if fam == "static":
            return StaticCoupling(g.m, self.p)
        if fam == "monotone_integrator":
            return MonotoneIntegratorController(g.m, self.p, c=c["c"], feedthrough=c["feedthrough"])
        if fam == "droop_edge":
            return DroopEdgeController(np.array(c["a"]))
        H = self.feedforward()
        exo = self.exosystem()
        if fam == "optimal_distribution":
            return OptimalDistributionController(H, exo, feedthrough=c["feedthrough"])
        if fam == "internal_model":
            return per_edge_internal_model(H, exo, self.p, feedthrough=c["feedthrough"])
        base = per_edge_internal_model(H, exo, self.p, feedthrough=False)
        return CommAugmentedController(base, comm_laplacian(g), feedthrough=c["feedthrough"])

    def system(self) -> ClosedLoopSystem:
        return assemble(self.nodes(), self.controller(), self.exosystem(), self.graph(), p=self.p)

    def initial_state(self, sys: ClosedLoopSystem | None = None) -> np.ndarray:
        sys = sys or self.system()
        ini = self.data["initial"]
        eta0 = ini.get("eta0")
        return sys.initial_state(ini["w0"], ini["x0"], None if eta0 is None else np.array(eta0))

    def flow_map(self) -> np.ndarray | None:
        """Optimal-flow map ``w -> lambda*`` for inventory networks, else ``None``."""
        if self._families != {"inventory"}:
            return None
        if "flow_map" not in self._cache:
            self._cache["flow_map"] = optimal_flow_map(self.weights, self.graph(), self.P())
        return self._cache["flow_map"]


def _build_node(nd: dict, seed: int):
    fam = nd["family"]
    if fam == "inventory":
        return InventoryNode(np.array([nd["P"]]))
    if fam == "linear":
        return LinearNode(np.array(nd["A"]), np.array(nd["G"]), _as_P(nd["P"], len(nd["A"])), np.array(nd["C"]), passive=nd["passive"])
    if fam == "droop":
        return DroopNode(nd["D"], nd["P_star"])
    G = np.array(nd["G"])
    if nd["damping"] == "linear":
        K = np.array(nd["K"])
        grad = lambda x, K=K: -K @ x  # noqa: E731
    else:
        gain = nd["gain"]
        grad = lambda x, gain=gain: -gain * np.tanh(x)  # noqa: E731
    return GradientFlowNode(grad, G, _as_P(nd["P"], G.shape[0]), seed=seed)


def _as_P(P, r):
    return np.zeros((r, 0)) if P == [] else np.array(P)


# parsing --------------------------------------------------------------------------


def _validate(doc: dict) -> tuple[dict, list[str]]:
    ck = _Collector()
    ck.unknown("", doc, _TOP_KEYS)
    out: dict = {}
    for key in ("graph", "exosystem", "node", "controller", "initial", "run"):
        if key not in doc:
            ck.add(key, "missing required section")
    name = doc.get("name", "")
    if not isinstance(name, str) or not name:
        ck.add("name", "expected a non-empty string")
    out["name"] = name
    out["description"] = doc.get("description", "")
    if not isinstance(out["description"], str):
        ck.add("description", "expected a string")
    out["expect"] = doc.get("expect", "feasible")
    if out["expect"] not in ("feasible", "infeasible"):
        ck.add("expect", "must be 'feasible' or 'infeasible'")

    # graph
    g = doc.get("graph", {})
    ck.unknown("graph", g, _GRAPH_KEYS)
    n = ck.integer("graph.n", g.get("n"), minimum=1) if isinstance(g, dict) else None
    edges = []
    raw_edges = g.get("edges", []) if isinstance(g, dict) else []
    if not isinstance(raw_edges, list):
        ck.add("graph.edges", "expected a list of [tail, head] pairs")
        raw_edges = []
    for k, e in enumerate(raw_edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(a, int) and not isinstance(a, bool) for a in e)):
            ck.add(f"graph.edges[{k}]", f"expected [tail, head] integers, got {e!r}")
            continue
        edges.append(list(e))
    m = len(raw_edges)
    graph = None
    if n is not None and len(edges) == m:
        try:
            graph = NetworkGraph(n, [tuple(e) for e in edges])
        except ValueError as exc:
            ck.add("graph", str(exc))
    weights = g.get("weights", [1.0] * m) if isinstance(g, dict) else []
    wv = ck.vector("graph.weights", weights, m)
    if wv is not None:
        for k, q in enumerate(wv):
            if not q > 0:
                ck.add(f"graph.weights[{k}]", f"edge weight q_k must be positive (cost matrix Q positive definite), got {q!r}")
    out["graph"] = {"n": n, "edges": edges, "weights": wv}

    # exosystem blocks, one per node
    exo = doc.get("exosystem", [])
    if not isinstance(exo, list):
        ck.add("exosystem", "expected an array of tables [[exosystem]]")
        exo = []
    blocks, exo_dims = [], []
    for i, b in enumerate(exo):
        key = f"exosystem[{i}]"
        kind = b.get("kind") if isinstance(b, dict) else None
        if kind not in EXO_KINDS:
            ck.add(f"{key}.kind", f"must be one of {', '.join(EXO_KINDS)}, got {kind!r}")
            exo_dims.append(None)
            continue
        ck.unknown(key, b, _EXO_KEYS[kind])
        if kind == "static":
            d = ck.integer(f"{key}.dim", b.get("dim"), minimum=0)
            blocks.append({"kind": kind, "dim": d})
            exo_dims.append(d)
        elif kind == "rotation":
            f = ck.number(f"{key}.frequency", b.get("frequency"))
            blocks.append({"kind": kind, "frequency": f})
            exo_dims.append(2)
        else:
            S = ck.matrix(f"{key}.S", b.get("S"))
            if S is not None:
                Sa = np.array(S)
                if Sa.shape[0] != Sa.shape[1] or np.linalg.norm(Sa + Sa.T) >= 1e-12:
                    ck.add(f"{key}.S", "generator must be square and skew-symmetric")
            blocks.append({"kind": kind, "S": S})
            exo_dims.append(None if S is None else len(S))
    out["exosystem"] = blocks
    if n is not None and exo and len(exo) != n:
        ck.add("exosystem", f"expected one block per node ({n}), got {len(exo)}")

    # nodes
    nodes = doc.get("node", [])
    if not isinstance(nodes, list):
        ck.add("node", "expected an array of tables [[node]]")
        nodes = []
    if n is not None and len(nodes) != n:
        ck.add("node", f"expected {n} [[node]] tables, got {len(nodes)}")
    out_nodes, xdims, pdims = [], [], []
    for i, nd in enumerate(nodes):
        key = f"node[{i}]"
        fam = nd.get("family") if isinstance(nd, dict) else None
        if fam not in NODE_FAMILIES:
            ck.add(f"{key}.family", f"must be one of {', '.join(NODE_FAMILIES)}, got {fam!r}")
            xdims.append(None)
            pdims.append(None)
            continue
        ck.unknown(key, nd, _NODE_KEYS[fam])
        q_i = exo_dims[i] if i < len(exo_dims) else None
        rec = {"family": fam}
        if fam == "inventory":
            rec["P"] = ck.vector(f"{key}.P", nd.get("P", [0.0] * (q_i or 0)), q_i)
            xdims.append(1)
            pdims.append(1)
        elif fam == "droop":
            rec["D"] = ck.number(f"{key}.D", nd.get("D"), positive=True)
            rec["P_star"] = ck.number(f"{key}.P_star", nd.get("P_star"))
            if q_i not in (None, 0):
                ck.add(key, "droop nodes take no disturbance; use a static block with dim = 0")
            xdims.append(1)
            pdims.append(1)
        elif fam == "linear":
            A = ck.matrix(f"{key}.A", nd.get("A"))
            r = None if A is None else len(A)
            if A is not None and len(A[0]) != r:
                ck.add(f"{key}.A", "must be square")
                r = None
            G = ck.matrix(f"{key}.G", nd.get("G"))
            C = ck.matrix(f"{key}.C", nd.get("C"))
            P = nd.get("P", [])
            P = [] if P == [] else ck.matrix(f"{key}.P", P, None if r is None or q_i is None else (r, q_i))
            if r is not None and G is not None and len(G) != r:
                ck.add(f"{key}.G", f"expected {r} rows")
            if G is not None and C is not None and (len(C) != len(G[0]) or (r is not None and len(C[0]) != r)):
                ck.add(f"{key}.C", f"expected shape ({len(G[0])}, {r})")
            if P == [] and q_i:
                ck.add(f"{key}.P", f"missing; the exosystem block has dimension {q_i}")
            passive = nd.get("passive", False)
            if not isinstance(passive, bool):
                ck.add(f"{key}.passive", "expected true or false")
            rec.update(A=A, G=G, C=C, P=P, passive=passive)
            xdims.append(r)
            pdims.append(None if G is None else len(G[0]))
        else:
            G = ck.matrix(f"{key}.G", nd.get("G"))
            r = None if G is None else len(G)
            damping = nd.get("damping", "linear")
            if damping not in ("linear", "tanh"):
                ck.add(f"{key}.damping", "must be 'linear' or 'tanh'")
            rec.update(family=fam, damping=damping, G=G)
            if damping == "linear":
                K = ck.matrix(f"{key}.K", nd.get("K"), None if r is None else (r, r))
                if K is not None and np.linalg.eigvalsh(0.5 * (np.array(K) + np.array(K).T)).min() < -1e-12:
                    ck.add(f"{key}.K", "damping matrix must be positive semidefinite (concave potential)")
                rec["K"] = K
            else:
                rec["gain"] = ck.number(f"{key}.gain", nd.get("gain", 1.0))
                if rec["gain"] is not None and rec["gain"] < 0:
                    ck.add(f"{key}.gain", "must be nonnegative (concave potential)")
            P = nd.get("P", [])
            rec["P"] = [] if P == [] else ck.matrix(f"{key}.P", P, None if r is None or q_i is None else (r, q_i))
            xdims.append(r)
            pdims.append(None if G is None else len(G[0]))
        out_nodes.append(rec)
    out["node"] = out_nodes
    families = {nd["family"] for nd in out_nodes}
    p_set = {p for p in pdims if p is not None}
    if len(p_set) > 1:
        ck.add("node", f"all nodes must share the output dimension, got {sorted(p_set)}")
    p = p_set.pop() if len(p_set) == 1 else 1

    # controller
    c = doc.get("controller", {})
    fam = c.get("family") if isinstance(c, dict) else None
    ctrl: dict = {"family": fam}
    if fam not in CONTROLLER_FAMILIES:
        ck.add("controller.family", f"must be one of {', '.join(CONTROLLER_FAMILIES)}, got {fam!r}")
    else:
        ck.unknown("controller", c, _CTRL_KEYS[fam])
        if "feedthrough" in _CTRL_KEYS[fam]:
            ft = c.get("feedthrough", fam != "comm_augmented")
            if not isinstance(ft, bool):
                ck.add("controller.feedthrough", "expected true or false")
            ctrl["feedthrough"] = ft
        if "feedforward" in _CTRL_KEYS[fam]:
            ff = c.get("feedforward", "optimal")
            if isinstance(ff, list):
                q_tot = sum(d for d in exo_dims if d is not None)
                ff = ck.matrix("controller.feedforward", ff, (m * p, q_tot))
            elif ff not in FEEDFORWARD_DIRECTIVES:
                ck.add("controller.feedforward", f"must be a matrix or one of {', '.join(FEEDFORWARD_DIRECTIVES)}, got {ff!r}")
            elif ff in ("optimal", "tree") and families != {"inventory"}:
                ck.add("controller.feedforward", f"{ff!r} design needs inventory nodes")
            elif ff == "identical" and families != {"gradient"}:
                ck.add("controller.feedforward", "'identical' design needs gradient-flow nodes")
            elif ff == "regulator" and families != {"linear"}:
                ck.add("controller.feedforward", "'regulator' design needs linear nodes")
            ctrl["feedforward"] = ff
        if fam == "monotone_integrator":
            ctrl["c"] = ck.number("controller.c", c.get("c", 1.0), positive=True)
        if fam == "droop_edge":
            a = ck.vector("controller.a", c.get("a"), m)
            if a is not None and any(not v > 0 for v in a):
                ck.add("controller.a", "line coefficients must be positive")
            ctrl["a"] = a
    out["controller"] = ctrl
    if (families == {"droop"}) != (fam == "droop_edge") and families and fam in CONTROLLER_FAMILIES:
        ck.add("controller.family", "droop nodes go with the droop_edge controller and only with it")
    if "droop" in families and graph is not None and not graph.is_acyclic():
        ck.add("graph", f"droop networks are restricted to acyclic graphs; this graph has {cycle_space_dim(graph)} independent cycle(s)")

    # initial conditions
    ini = doc.get("initial", {})
    ck.unknown("initial", ini, _INITIAL_KEYS)
    q_tot = sum(d for d in exo_dims if d is not None) if None not in exo_dims else None
    r_tot = sum(xdims) if None not in xdims else None
    init = {}
    if isinstance(ini, dict):
        init["w0"] = ck.vector("initial.w0", ini.get("w0", [0.0] * (q_tot or 0)), q_tot)
        init["x0"] = ck.vector("initial.x0", ini.get("x0", [0.0] * (r_tot or 0)), r_tot)
        if "eta0" in ini:
            init["eta0"] = ck.vector("initial.eta0", ini["eta0"])
    out["initial"] = init

    # run
    run = doc.get("run", {})
    ck.unknown("run", run, _RUN_KEYS)
    if isinstance(run, dict):
        dt = ck.number("run.dt", run.get("dt", 1e-3), positive=True)
        T = ck.number("run.T", run.get("T", 100.0), positive=True)
        if dt is not None and T is not None:
            steps = round(T / dt)
            if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
                ck.add("run.T", f"must be a positive integer multiple of dt={dt}")
        out["run"] = {
            "dt": dt,
            "T": T,
            "stride": ck.integer("run.stride", run.get("stride", 1), minimum=1),
            "seed": ck.integer("run.seed", run.get("seed", 0), minimum=0),
        }

    tol = doc.get("tolerances", {})
    ck.unknown("tolerances", tol, _TOL_KEYS)
    if isinstance(tol, dict) and tol:
        out["tolerances"] = {k: ck.number(f"tolerances.{k}", v, positive=True) for k, v in sorted(tol.items()) if k in _TOL_KEYS}
    return out, ck.errors


def _semantic_checks(sc: Scenario) -> list[str]:
    """Errors only detectable by building the model objects."""
    errors = []
    try:
        sys = sc.system()
        sc.initial_state(sys)
    except (ValueError, TypeError, np.linalg.LinAlgError) as exc:
        errors.append(f"model: {exc}")
    return errors


def loads_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError([f"parse error: {exc}"], source) from exc
    data, errors = _validate(doc)
    if errors:
        raise ScenarioError(errors, source)
    sc = Scenario(data, source)
    errors = _semantic_checks(sc)
    if errors:
        raise ScenarioError(errors, source)
    return sc


def parse_scenario(path) -> Scenario:
    """Load and fully validate a scenario file; raises ``ScenarioError`` listing every problem."""
    path = Path(path)
    return loads_scenario(path.read_text(), str(path))


def dumps_scenario(sc: Scenario) -> str:
    """Canonical TOML: fixed section order, defaults written out, shortest exact float repr."""
    d = sc.data
    doc = {"name": d["name"], "description": d["description"], "expect": d["expect"]}
    for key in ("graph", "run", "controller", "initial"):
        doc[key] = d[key]
    if "tolerances" in d:
        doc["tolerances"] = d["tolerances"]
    doc["exosystem"] = d["exosystem"]
    doc["node"] = d["node"]
    return tomli_w.dumps(doc)


def emit_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc))


def shipped_scenarios() -> dict[str, Path]:
    """Scenario files bundled with the package, keyed by stem."""
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.toml"))}


def resolve_scenario(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = shipped_scenarios()
    if str(name_or_path) in shipped:
        return shipped[str(name_or_path)]
    raise FileNotFoundError(f"no scenario file or shipped scenario named {name_or_path!r}")


# traces and reports -----------------------------------------------------------------


def gamma_series(sc: Scenario, trace: Trace) -> np.ndarray:
    """Distance of the flows to the optimal flow at each step; NaN outside inventory networks."""
    F = sc.flow_map()
    if F is None:
        return np.full(len(trace), np.nan)
    return np.linalg.norm(trace.lam - trace.w @ F.T, axis=1)


def trace_header(q, r, n_eta, n_y, n_lam) -> list[str]:
    cols = ["t"]
    for prefix, k in (("w", q), ("x", r), ("eta", n_eta), ("y", n_y), ("lambda", n_lam)):
        cols += [f"{prefix}_{i}" for i in range(k)]
    return cols + ["agreement_error", "gamma_distance"]


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_trace(trace: Trace, path, gamma: np.ndarray | None = None, dims: tuple | None = None) -> None:
    """Write ``trace`` as CSV; ``gamma`` defaults to NaN when not supplied.

    ``dims`` gives ``(q, r, dim_eta, n*p, m*p)`` for empty traces whose arrays
    carry no shape information.
    """
    N = len(trace)
    if dims is None:
        dims = tuple(a.shape[1] for a in (trace.w, trace.x, trace.eta, trace.y, trace.lam))
    agree = agreement_error(trace) if N else np.zeros(0)
    gamma = np.full(N, np.nan) if gamma is None else np.asarray(gamma)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(trace_header(*dims))
        for k in range(N):
            row = [trace.t[k], *trace.w[k], *trace.x[k], *trace.eta[k], *trace.y[k], *trace.lam[k], agree[k], gamma[k]]
            wr.writerow([_fmt(v) for v in row])


@dataclass
class StoredTrace:
    """Columns of a trace CSV grouped by prefix."""

    t: np.ndarray
    w: np.ndarray
    x: np.ndarray
    eta: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    agreement_error: np.ndarray
    gamma_distance: np.ndarray


def read_trace(path) -> StoredTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = rows[0]
    if header[0] != "t" or header[-2:] != ["agreement_error", "gamma_distance"]:
        raise ValueError(f"{path}: not a trace file (unexpected header)")
    data = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(header))

    def cols(prefix):
        idx = [i for i, h in enumerate(header) if h.rsplit("_", 1)[0] == prefix and h.rsplit("_", 1)[-1].isdigit()]
        return data[:, idx]

    return StoredTrace(
        t=data[:, 0],
        w=cols("w"),
        x=cols("x"),
        eta=cols("eta"),
        y=cols("y"),
        lam=cols("lambda"),
        agreement_error=data[:, -2],
        gamma_distance=data[:, -1],
    )


def format_report(report: dict, title: str | None = None) -> str:
    """``key: value`` lines; floats in shortest exact form, lists comma separated."""
    buf = io.StringIO()
    if title:
        buf.write(f"# {title}\n")
    for k, v in report.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = ", ".join(_fmt_value(a) for a in v)
        else:
            v = _fmt_value(v)
        buf.write(f"{k}: {v}\n")
    return buf.getvalue()


def _fmt_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, complex):
        return f"{_fmt(v.real)}{'+' if v.imag >= 0 else '-'}{_fmt(abs(v.imag))}j"
    return str(v)


def emit_report(report: dict, path, title: str | None = None) -> None:
    Path(path).write_text(format_report(report, title))


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition(": ")
        out[k] = v
    return out
